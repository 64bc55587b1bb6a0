"""Pipeline driver: train-toy, extract-concepts, rank-concepts, explain,
fidelity, align, report, serve.

Every stage reads and writes conventional artifact names inside a work
directory, so commands chain without wiring flags between them:

    model/                 concept base (W.mat, U.mat, meta.json)
    excerpts.jsonl         concept-building excerpts
    run_meta.json          configuration and per-stage seed fan-out
    importance.json/.svg   concept ranking
    bundles.json           per-excerpt occlusion attributions
    fidelity.json/.csv/.svg  deletion/insertion curves
    alignment.csv          annotation alignment summary
    report.html            everything assembled

All randomness flows from one master seed, fanned out per stage by a
recorded hash derivation; reruns with identical inputs and seeds are
byte-identical. Exit codes: 0 success, 2 configuration error, 3 data
error, 4 provider error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import alignment as alignment_mod
from . import fidelity as fidelity_mod
from . import nmf
from . import occlusion as occlusion_mod
from . import provider as provider_mod
from . import report as report_mod
from . import sobol as sobol_mod
from .errors import (
    ConceptLensError,
    ConfigurationError,
    DataError,
    NonNegativityViolation,
    PreconditionError,
    ProviderError,
)
from .excerpts import GranularitySpec, compatible, extract, to_jsonl

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4

EMBED_BATCH = 64


def derive_seed(master: int, stage: str) -> int:
    """Per-stage seed: stable hash of the master seed and the stage name."""
    digest = hashlib.sha256(f"{master}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def load_corpus(path) -> list[dict]:
    """Corpus JSONL: {"id": ..., "text": ..., "label": optional}."""
    if not os.path.exists(path):
        raise DataError(f"corpus file not found: {path}")
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = {"id": str(rec["id"]), "text": str(rec["text"])}
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from exc
            if "label" in rec:
                doc["label"] = str(rec["label"])
            docs.append(doc)
    if not docs:
        raise DataError(f"corpus file is empty: {path}")
    return docs


def write_corpus(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


class RunConfig:
    """Defaults <- config file <- command-line flags."""

    DEFAULTS = {
        "provider": None,
        "class_id": 1,
        "tau1": {"mode": "sentence", "min_words": 6},
        "tau2": {"mode": "word", "min_words": 6},
        "r": 8,
        "nmf": {"max_iter": 500, "tol": 1e-5},
        "sobol": {
            "n_designs": 4096,
            "mask_law": "continuous_uniform",
            "sampler": "qmc_sobol_sequence",
        },
        "fidelity": {"num_random": 5, "subsets": 1},
        "seed": 0,
        "cache_dir": None,
        "workdir": "run",
    }

    def __init__(self, args):
        data = json.loads(json.dumps(self.DEFAULTS))  # deep copy
        config_path = getattr(args, "config", None)
        if config_path:
            if not os.path.exists(config_path):
                raise ConfigurationError(f"config file not found: {config_path}")
            with open(config_path, "r", encoding="utf-8") as fh:
                try:
                    file_cfg = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
            for key, value in file_cfg.items():
                if key not in data:
                    raise ConfigurationError(f"unknown config field {key!r}")
                if isinstance(data[key], dict) and isinstance(value, dict):
                    data[key].update(value)
                else:
                    data[key] = value

        overrides = {
            "provider": getattr(args, "provider", None),
            "class_id": getattr(args, "class_id", None),
            "r": getattr(args, "r", None),
            "seed": getattr(args, "seed", None),
            "workdir": getattr(args, "workdir", None),
            "cache_dir": getattr(args, "cache", None),
        }
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        if getattr(args, "tau1", None) is not None:
            data["tau1"]["mode"] = args.tau1
        if getattr(args, "tau2", None) is not None:
            data["tau2"]["mode"] = args.tau2
        if getattr(args, "min_words", None) is not None:
            data["tau1"]["min_words"] = args.min_words
        if getattr(args, "n_designs", None) is not None:
            data["sobol"]["n_designs"] = args.n_designs
        if getattr(args, "mask_law", None) is not None:
            data["sobol"]["mask_law"] = args.mask_law
        if getattr(args, "sampler", None) is not None:
            data["sobol"]["sampler"] = args.sampler
        if getattr(args, "num_random", None) is not None:
            data["fidelity"]["num_random"] = args.num_random
        if getattr(args, "subsets", None) is not None:
            data["fidelity"]["subsets"] = args.subsets

        self.data = data
        self.tau1 = GranularitySpec(data["tau1"]["mode"], data["tau1"].get("min_words", 6))
        self.tau2 = GranularitySpec(data["tau2"]["mode"], data["tau2"].get("min_words", 6))
        if not compatible(self.tau1, self.tau2):
            raise ConfigurationError(
                f"occlusion granularity {self.tau2.mode!r} is incompatible with "
                f"concept granularity {self.tau1.mode!r}"
            )
        if int(data["r"]) < 1:
            raise ConfigurationError(f"r must be >= 1, got {data['r']}")

    def __getitem__(self, key):
        return self.data[key]

    @property
    def workdir(self) -> str:
        return self.data["workdir"]

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    def open_provider(self):
        spec = self.data["provider"]
        if not spec:
            raise ConfigurationError("no provider configured (use --provider or the config file)")
        return provider_mod.open_provider(spec, cache_dir=self.data["cache_dir"])


def require_artifact(path: str, producing_command: str) -> None:
    if not os.path.exists(path):
        raise DataError(
            f"missing artifact {path}; run `conceptlens {producing_command}` first"
        )


def batched_embed(provider, texts, batch: int = EMBED_BATCH) -> np.ndarray:
    rows = []
    for lo in range(0, len(texts), batch):
        rows.append(provider.embed(texts[lo : lo + batch]))
    return np.vstack(rows) if rows else np.zeros((0, provider.describe().p))


def class_filtered_excerpts(cfg: RunConfig, provider, corpus_path):
    """Excerpts (under tau1) of the documents the model assigns to the class."""
    docs = load_corpus(corpus_path)
    # Cheap structural check before any provider call: r cannot exceed the
    # total excerpt count even before class filtering.
    all_excerpts = [
        ex
        for doc in docs
        for ex in extract(doc["text"], cfg.tau1, doc_id=doc["id"])
    ]
    if int(cfg["r"]) > len(all_excerpts):
        raise ConfigurationError(
            f"r={cfg['r']} exceeds the {len(all_excerpts)} extractable excerpts"
        )
    class_id = int(cfg["class_id"])
    texts = [doc["text"] for doc in docs]
    predictions = []
    for lo in range(0, len(texts), EMBED_BATCH):
        predictions.extend(provider.predict(texts[lo : lo + EMBED_BATCH]).tolist())
    kept = [doc for doc, pred in zip(docs, predictions) if pred == class_id]
    if not kept:
        raise DataError(
            f"no documents in {corpus_path} are assigned to class {class_id}; "
            "nothing to build concepts from"
        )
    excerpts = [ex for doc in kept for ex in extract(doc["text"], cfg.tau1, doc_id=doc["id"])]
    if not excerpts:
        raise DataError(
            f"class {class_id} documents produced no excerpts under "
            f"granularity {cfg.tau1.mode!r} (min_words={cfg.tau1.min_words})"
        )
    return excerpts


# --- subcommands ---------------------------------------------------------------


def cmd_train_toy(args) -> int:
    docs = load_corpus(args.corpus)
    missing = [d["id"] for d in docs if "label" not in d]
    if missing:
        raise DataError(f"corpus documents without labels: {missing[:5]}")
    corpus = [(d["text"], d["label"]) for d in docs]
    model = provider_mod.train_toy(
        corpus,
        d=args.d,
        p=args.p,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed if args.seed is not None else 0,
        corpus_id=os.path.basename(args.corpus),
    )
    model.save(args.out)
    print(f"trained toy model on {len(corpus)} docs: accuracy {model.train_accuracy:.3f}")
    print(f"classes: {list(model.class_names)}, p={model.describe().p}, saved to {args.out}")
    return 0


def cmd_extract_concepts(args) -> int:
    cfg = RunConfig(args)
    os.makedirs(cfg.workdir, exist_ok=True)
    with cfg.open_provider() as prov:
        desc = prov.describe()
        if not desc.nonneg_certified:
            raise NonNegativityViolation(
                "provider does not certify non-negative activations; unusable for factorization"
            )
        if int(cfg["r"]) > desc.p:
            raise ConfigurationError(f"r={cfg['r']} exceeds the activation dimension p={desc.p}")
        excerpts = class_filtered_excerpts(cfg, prov, args.corpus)
        A = batched_embed(prov, [ex.text for ex in excerpts])
    if A.size and A.min() < 0:
        raise NonNegativityViolation(f"provider returned negative activations (min={A.min():.3g})")

    nmf_seed = derive_seed(int(cfg["seed"]), "nmf")
    model = nmf.fit(
        A,
        int(cfg["r"]),
        max_iter=int(cfg["nmf"]["max_iter"]),
        tol=float(cfg["nmf"]["tol"]),
        seed=nmf_seed,
        class_id=int(cfg["class_id"]),
    )
    nmf.save_model(model, cfg.path("model"))
    with open(cfg.path("excerpts.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(to_jsonl(excerpts))
    # Output-placement fields would make logically identical runs differ.
    recorded = {k: v for k, v in cfg.data.items() if k not in ("workdir", "cache_dir")}
    meta = {
        "config": recorded,
        "derived_seeds": {stage: derive_seed(int(cfg["seed"]), stage) for stage in ("nmf", "sobol", "fidelity")},
        "n_excerpts": len(excerpts),
        "p": int(A.shape[1]),
    }
    with open(cfg.path("run_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")

    print(f"fit {model.r} concepts on {len(excerpts)} excerpts (p={A.shape[1]})")
    print(f"final objective: {model.objective_trace[-1]:.6g} after {len(model.objective_trace) - 1} iterations")
    print("presence thresholds:", np.array2string(model.presence_threshold, precision=4))
    print(f"model saved to {cfg.path('model')}")
    return 0


def cmd_rank_concepts(args) -> int:
    cfg = RunConfig(args)
    require_artifact(cfg.path("model"), "extract-concepts")
    model = nmf.load_model(cfg.path("model"))
    design = sobol_mod.generate_design(
        int(cfg["sobol"]["n_designs"]),
        model.r,
        sampler=cfg["sobol"]["sampler"],
        mask_law=cfg["sobol"]["mask_law"],
        seed=derive_seed(int(cfg["seed"]), "sobol"),
    )
    with cfg.open_provider() as prov:
        report = sobol_mod.estimate_total_indices(
            model, prov, int(cfg["class_id"]), design
        )
    with open(cfg.path("importance.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    svg = report_mod.svg_bar_chart(
        report.indices,
        labels=[f"c{i}" for i in range(model.r)],
        title=f"Total importance of concepts for class {report.class_id}",
    )
    with open(cfg.path("importance.svg"), "w", encoding="utf-8") as fh:
        fh.write(svg)
    order = ", ".join(f"c{i}" for i in report.ranking)
    print(f"concept ranking (most important first): {order}")
    if report.degenerate:
        print("warning: output variance is degenerate; indices reported as 0")
    print(f"wrote {cfg.path('importance.json')} and importance.svg")
    return 0


def cmd_explain(args) -> int:
    cfg = RunConfig(args)
    require_artifact(cfg.path("model"), "extract-concepts")
    model = nmf.load_model(cfg.path("model"))
    if args.texts:
        docs = load_corpus(args.texts)
    elif args.text:
        docs = [{"id": f"text{i}", "text": t} for i, t in enumerate(args.text)]
    else:
        raise ConfigurationError("explain needs --texts FILE or one or more --text strings")

    bundles = []
    with cfg.open_provider() as prov:
        for doc in docs:
            for ex in extract(doc["text"], cfg.tau1, doc_id=doc["id"]):
                attrs = occlusion_mod.attribute(ex, model, prov, cfg.tau2, tau1=cfg.tau1)
                bundles.append(occlusion_mod.bundle(attrs, excerpt=ex).to_dict())
    if not bundles:
        raise DataError(
            f"no excerpts extracted from the input texts under granularity "
            f"{cfg.tau1.mode!r} (min_words={cfg.tau1.min_words}); try --tau1 or --min-words"
        )
    with open(cfg.path("bundles.json"), "w", encoding="utf-8") as fh:
        json.dump(bundles, fh, sort_keys=True, indent=1)
        fh.write("\n")
    attributed = sum(1 for b in bundles if not b["unattributed"])
    print(f"attributed {attributed}/{len(bundles)} excerpts; wrote {cfg.path('bundles.json')}")
    return 0


def cmd_fidelity(args) -> int:
    cfg = RunConfig(args)
    require_artifact(cfg.path("model"), "extract-concepts")
    require_artifact(cfg.path("importance.json"), "rank-concepts")
    model = nmf.load_model(cfg.path("model"))
    with open(cfg.path("importance.json"), "r", encoding="utf-8") as fh:
        report = sobol_mod.ImportanceReport.from_json(fh.read())

    fid_seed = derive_seed(int(cfg["seed"]), "fidelity")
    with cfg.open_provider() as prov:
        eval_corpus = args.eval_corpus or args.corpus
        if eval_corpus:
            excerpts = class_filtered_excerpts(cfg, prov, eval_corpus)
            A_eval = batched_embed(prov, [ex.text for ex in excerpts])
            eval_U = nmf.transform(A_eval, model)
        else:
            eval_U = model.U
        summary = fidelity_mod.compare_orderings(
            model,
            prov,
            report,
            eval_U,
            num_random=int(cfg["fidelity"]["num_random"]),
            seed=fid_seed,
        )
        curves = [
            fidelity_mod.deletion_curve(model, prov, report, eval_U, "importance"),
            fidelity_mod.deletion_curve(model, prov, report, eval_U, "reverse"),
            fidelity_mod.insertion_curve(model, prov, report, eval_U, "importance"),
            fidelity_mod.insertion_curve(model, prov, report, eval_U, "reverse"),
        ]
        subsets = int(cfg["fidelity"]["subsets"])
        if subsets > 1:
            summary["subset_stats"] = [
                fidelity_mod.subset_curves(
                    model, prov, report, eval_U, "importance", kind, subsets, fid_seed
                )
                for kind in ("deletion", "insertion")
            ]

    with open(cfg.path("fidelity.json"), "w", encoding="utf-8") as fh:
        fh.write(fidelity_mod.curves_to_json(curves, summary=summary))
    with open(cfg.path("fidelity.csv"), "w", encoding="utf-8") as fh:
        fh.write(fidelity_mod.curves_to_csv(curves))
    series = {
        f"{c.kind} ({c.ordering})": ([t for t, _ in c.points], [y for _, y in c.points])
        for c in curves
    }
    svg = report_mod.svg_line_chart(
        series,
        title=f"Concept deletion / insertion, class {report.class_id}",
        x_label="concepts removed or added",
    )
    with open(cfg.path("fidelity.svg"), "w", encoding="utf-8") as fh:
        fh.write(svg)
    d = summary["curves"]["deletion"]
    print(
        "deletion AUC: importance "
        f"{d['importance_auc']:.4f} vs random {d['random_auc_mean']:.4f} "
        f"vs reverse {d['reverse_auc']:.4f}"
    )
    i = summary["curves"]["insertion"]
    print(
        "insertion AUC: importance "
        f"{i['importance_auc']:.4f} vs random {i['random_auc_mean']:.4f} "
        f"vs reverse {i['reverse_auc']:.4f}"
    )
    print(f"wrote {cfg.path('fidelity.json')}, fidelity.csv, fidelity.svg")
    return 0


def cmd_align(args) -> int:
    cfg = RunConfig(args)
    require_artifact(cfg.path("model"), "extract-concepts")
    model = nmf.load_model(cfg.path("model"))
    annotations = alignment_mod.load_annotations(args.annotations)
    docs = load_corpus(args.corpus)
    excerpts = [ex for doc in docs for ex in extract(doc["text"], cfg.tau1, doc_id=doc["id"])]
    if not excerpts:
        raise DataError("annotated corpus produced no excerpts under the configured granularity")
    flags = alignment_mod.label_excerpts(excerpts, annotations, overlap_frac=args.overlap_frac)
    with cfg.open_provider() as prov:
        A = batched_embed(prov, [ex.text for ex in excerpts])
    U_eval = nmf.transform(A, model)
    results = alignment_mod.score_concepts(model, U_eval, flags)
    csv_text = alignment_mod.results_to_csv(results)
    with open(cfg.path("alignment.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    for res in results:
        print(
            f"{res.aspect}: best concept c{res.best_concept} "
            f"P={res.precision:.3f} R={res.recall:.3f} F1={res.f1:.3f}"
        )
    print(f"wrote {cfg.path('alignment.csv')}")
    return 0


def cmd_report(args) -> int:
    cfg = RunConfig(args)

    def read_if_exists(name):
        path = cfg.path(name)
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return fh.read()
        return None

    importance_svg = read_if_exists("importance.svg")
    importance_json = read_if_exists("importance.json")
    fidelity_svg = read_if_exists("fidelity.svg")
    fidelity_json = read_if_exists("fidelity.json")
    bundles_json = read_if_exists("bundles.json")
    alignment_csv = read_if_exists("alignment.csv")
    meta_json = read_if_exists("run_meta.json")

    html_text = report_mod.render_report(
        title="Concept explanation report",
        importance_svg=importance_svg,
        importance_report=json.loads(importance_json) if importance_json else None,
        fidelity_svg=fidelity_svg,
        fidelity_summary=json.loads(fidelity_json).get("summary") if fidelity_json else None,
        bundles=json.loads(bundles_json) if bundles_json else None,
        alignment_csv=alignment_csv,
        footer_meta=json.loads(meta_json) if meta_json else None,
    )
    out = args.out or cfg.path("report.html")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(html_text)
    print(f"wrote {out}")
    return 0


def cmd_serve(args) -> int:
    prov = provider_mod.open_provider(args.provider)
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigurationError("--listen needs HOST:PORT")
        provider_mod.serve_tcp(prov, host, int(port))
    else:
        provider_mod.serve_stdio(prov)
    return 0


# --- argument parsing ------------------------------------------------------------


def _add_common(sub, include_sobol=False, include_fidelity=False):
    sub.add_argument("--config", default=None, help="JSON run-config file")
    sub.add_argument("--workdir", default=None, help="artifact directory (default: run)")
    sub.add_argument("--provider", default=None, help="builtin:<model.json> | cmd:<command> | tcp:<host>:<port>")
    sub.add_argument("--class", dest="class_id", type=int, default=None, help="class under explanation")
    sub.add_argument("--r", type=int, default=None, help="number of concepts")
    sub.add_argument("--seed", type=int, default=None, help="master seed")
    sub.add_argument("--tau1", default=None, choices=["full", "sentence", "clause", "word"])
    sub.add_argument("--tau2", default=None, choices=["word", "clause"])
    sub.add_argument("--min-words", type=int, default=None, help="minimum words per sentence excerpt")
    sub.add_argument("--cache", default=None, help="embedding cache directory")
    if include_sobol:
        sub.add_argument("--n-designs", type=int, default=None)
        sub.add_argument("--mask-law", default=None, choices=list(sobol_mod.MASK_LAWS))
        sub.add_argument("--sampler", default=None, choices=list(sobol_mod.SAMPLERS))
    if include_fidelity:
        sub.add_argument("--num-random", type=int, default=None)
        sub.add_argument("--subsets", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptlens",
        description="Concept-based explanations for text classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train-toy", help="train the builtin toy classifier")
    train.add_argument("--corpus", required=True, help="JSONL corpus with labels")
    train.add_argument("--out", required=True, help="output model JSON path")
    train.add_argument("--d", type=int, default=32, help="embedding dimension")
    train.add_argument("--p", type=int, default=32, help="activation dimension")
    train.add_argument("--epochs", type=int, default=50)
    train.add_argument("--lr", type=float, default=0.5)
    train.add_argument("--seed", type=int, default=0)
    train.set_defaults(func=cmd_train_toy)

    ec = sub.add_parser("extract-concepts", help="discover concepts from class excerpts")
    ec.add_argument("--corpus", required=True)
    _add_common(ec)
    ec.set_defaults(func=cmd_extract_concepts)

    rc = sub.add_parser("rank-concepts", help="rank concepts by total importance")
    _add_common(rc, include_sobol=True)
    rc.set_defaults(func=cmd_rank_concepts)

    ex = sub.add_parser("explain", help="occlusion attributions for input texts")
    ex.add_argument("--texts", default=None, help="JSONL file of texts to explain")
    ex.add_argument("--text", action="append", default=None, help="inline text (repeatable)")
    _add_common(ex)
    ex.set_defaults(func=cmd_explain)

    fi = sub.add_parser("fidelity", help="deletion/insertion faithfulness curves")
    fi.add_argument("--corpus", default=None, help="corpus for evaluation excerpts")
    fi.add_argument("--eval-corpus", default=None, help="held-out corpus (overrides --corpus)")
    _add_common(fi, include_fidelity=True)
    fi.set_defaults(func=cmd_fidelity)

    al = sub.add_parser("align", help="score concepts against span annotations")
    al.add_argument("--corpus", required=True, help="annotated documents (JSONL)")
    al.add_argument("--annotations", required=True, help="JSONL {doc_id, aspect, start, end}")
    al.add_argument("--overlap-frac", type=float, default=0.0)
    _add_common(al)
    al.set_defaults(func=cmd_align)

    rp = sub.add_parser("report", help="assemble the static HTML report")
    rp.add_argument("--out", default=None, help="output HTML path (default: workdir/report.html)")
    _add_common(rp)
    rp.set_defaults(func=cmd_report)

    serve = sub.add_parser("serve", help="serve a provider over stdio or TCP")
    serve.add_argument("--provider", required=True)
    serve.add_argument("--listen", default=None, metavar="HOST:PORT")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ProviderError, NonNegativityViolation) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ConceptLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
