import json
import os

import pytest

from conceptlens import cli, synthetic
from conceptlens.provider import ToyModel


def write_jsonl(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Trained toy model + corpus files shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = synthetic.planted_reviews(n_docs=120, seed=0)
    corpus_path = root / "corpus.jsonl"
    write_jsonl(corpus_path, data["docs"])

    rc = cli.main(
        [
            "train-toy",
            "--corpus", str(corpus_path),
            "--out", str(root / "model.json"),
            "--d", "16",
            "--p", "24",
            "--epochs", "120",
            "--lr", "1.0",
            "--seed", "0",
        ]
    )
    assert rc == 0
    model = ToyModel.load(root / "model.json")
    assert model.train_accuracy >= 0.95
    return {"root": root, "corpus": str(corpus_path), "model": str(root / "model.json")}


def run_pipeline(workspace, workdir, seed="0"):
    base = [
        "--provider", workspace["model"],
        "--workdir", str(workdir),
        "--class", "1",
        "--r", "6",
        "--seed", seed,
        "--tau1", "sentence",
        "--min-words", "1",
    ]
    assert cli.main(["extract-concepts", "--corpus", workspace["corpus"], *base]) == 0
    assert cli.main(["rank-concepts", "--n-designs", "256", *base]) == 0
    assert (
        cli.main(
            [
                "explain",
                "--text", "amber0 amber1 citrus2 amber3.",
                "--text", "citrus0 citrus1 amber0 citrus3.",
                "--tau2", "word",
                *base,
            ]
        )
        == 0
    )
    assert (
        cli.main(
            ["fidelity", "--corpus", workspace["corpus"], "--num-random", "3", *base]
        )
        == 0
    )
    assert cli.main(["report", *base]) == 0


class TestPipeline:
    def test_end_to_end_artifacts(self, workspace, tmp_path):
        workdir = tmp_path / "run"
        run_pipeline(workspace, workdir)
        for name in (
            "model/W.mat",
            "model/U.mat",
            "model/meta.json",
            "excerpts.jsonl",
            "run_meta.json",
            "importance.json",
            "importance.svg",
            "bundles.json",
            "fidelity.json",
            "fidelity.csv",
            "fidelity.svg",
            "report.html",
        ):
            assert (workdir / name).exists(), f"missing artifact {name}"
        report = (workdir / "report.html").read_text()
        assert "<svg" in report
        assert "Concept importance" in report

    def test_rerun_byte_identical(self, workspace, tmp_path):
        run1, run2 = tmp_path / "r1", tmp_path / "r2"
        run_pipeline(workspace, run1, seed="7")
        run_pipeline(workspace, run2, seed="7")
        for dirpath, _, filenames in os.walk(run1):
            rel = os.path.relpath(dirpath, run1)
            for fname in filenames:
                a = os.path.join(dirpath, fname)
                b = os.path.join(run2, rel, fname)
                assert open(a, "rb").read() == open(b, "rb").read(), f"{rel}/{fname} differs"

    def test_align_command(self, workspace, tmp_path):
        workdir = tmp_path / "run"
        run_pipeline(workspace, workdir)
        data = synthetic.planted_reviews(n_docs=40, seed=3)
        corpus_path = tmp_path / "annotated.jsonl"
        write_jsonl(corpus_path, data["docs"])
        # Annotate the first sentence of every positive doc as "Signal".
        annotations = []
        for doc in data["docs"]:
            if doc["label"] == "1":
                end = doc["text"].find(".") + 1
                annotations.append(
                    {"doc_id": doc["id"], "aspect": "Signal", "start": 0, "end": end}
                )
        ann_path = tmp_path / "annotations.jsonl"
        write_jsonl(ann_path, annotations)
        rc = cli.main(
            [
                "align",
                "--corpus", str(corpus_path),
                "--annotations", str(ann_path),
                "--provider", workspace["model"],
                "--workdir", str(workdir),
                "--tau1", "sentence",
                "--min-words", "1",
                "--class", "1",
                "--r", "6",
            ]
        )
        assert rc == 0
        csv_text = (workdir / "alignment.csv").read_text()
        assert csv_text.splitlines()[0] == "aspect,best_concept,accuracy,precision,recall,f1"
        assert "Signal" in csv_text

    def test_report_with_zero_inputs(self, tmp_path):
        workdir = tmp_path / "empty"
        workdir.mkdir()
        rc = cli.main(["report", "--workdir", str(workdir), "--provider", "unused"])
        assert rc == 0
        text = (workdir / "report.html").read_text()
        assert text.startswith("<!DOCTYPE html>")

    def test_downstream_commands_do_not_mutate_upstream(self, workspace, tmp_path):
        workdir = tmp_path / "run"
        base = [
            "--provider", workspace["model"],
            "--workdir", str(workdir),
            "--class", "1",
            "--r", "6",
            "--seed", "0",
            "--tau1", "sentence",
            "--min-words", "1",
        ]
        assert cli.main(["extract-concepts", "--corpus", workspace["corpus"], *base]) == 0
        model_bytes = {
            name: (workdir / "model" / name).read_bytes()
            for name in ("W.mat", "U.mat", "meta.json")
        }
        corpus_bytes = open(workspace["corpus"], "rb").read()
        assert cli.main(["rank-concepts", "--n-designs", "64", *base]) == 0
        assert cli.main(["fidelity", "--corpus", workspace["corpus"], "--num-random", "2", *base]) == 0
        for name, before in model_bytes.items():
            assert (workdir / "model" / name).read_bytes() == before, f"{name} mutated"
        assert open(workspace["corpus"], "rb").read() == corpus_bytes

    def test_explain_marks_unattributed_excerpts(self, workspace, tmp_path):
        workdir = tmp_path / "run"
        base = [
            "--provider", workspace["model"],
            "--workdir", str(workdir),
            "--class", "1",
            "--r", "6",
            "--seed", "0",
            "--tau1", "sentence",
            "--min-words", "1",
        ]
        assert cli.main(["extract-concepts", "--corpus", workspace["corpus"], *base]) == 0
        # A punctuation-only excerpt has no occludable elements, so its
        # bundle is marked unattributed in the output.
        rc = cli.main(["explain", "--text", "...", "--tau2", "word", *base])
        assert rc == 0
        bundles = json.loads((workdir / "bundles.json").read_text())
        assert len(bundles) == 1
        assert bundles[0]["unattributed"] is True

    def test_fidelity_subset_stats(self, workspace, tmp_path):
        workdir = tmp_path / "run"
        base = [
            "--provider", workspace["model"],
            "--workdir", str(workdir),
            "--class", "1",
            "--r", "6",
            "--seed", "0",
            "--tau1", "sentence",
            "--min-words", "1",
        ]
        assert cli.main(["extract-concepts", "--corpus", workspace["corpus"], *base]) == 0
        assert cli.main(["rank-concepts", "--n-designs", "64", *base]) == 0
        rc = cli.main(
            [
                "fidelity",
                "--corpus", workspace["corpus"],
                "--num-random", "2",
                "--subsets", "4",
                *base,
            ]
        )
        assert rc == 0
        payload = json.loads((workdir / "fidelity.json").read_text())
        stats = payload["summary"]["subset_stats"]
        assert len(stats) == 2  # deletion and insertion
        assert stats[0]["subsets"] == 4
        assert len(stats[0]["mean"]) == 7  # r + 1 points


class TestErrors:
    def test_missing_upstream_artifact_names_command(self, workspace, tmp_path, capsys):
        rc = cli.main(
            [
                "rank-concepts",
                "--provider", workspace["model"],
                "--workdir", str(tmp_path / "nothing"),
            ]
        )
        assert rc == cli.EXIT_DATA
        assert "extract-concepts" in capsys.readouterr().err

    def test_r_too_large_fails_before_provider_calls(self, workspace, tmp_path):
        class Explode(ToyModel):
            def embed(self, texts):
                raise AssertionError("provider must not be called")

        rc = cli.main(
            [
                "extract-concepts",
                "--corpus", workspace["corpus"],
                "--provider", workspace["model"],
                "--workdir", str(tmp_path / "w"),
                "--r", "100000",
            ]
        )
        assert rc == cli.EXIT_CONFIG

    def test_unknown_class_is_data_error(self, workspace, tmp_path):
        rc = cli.main(
            [
                "extract-concepts",
                "--corpus", workspace["corpus"],
                "--provider", workspace["model"],
                "--workdir", str(tmp_path / "w"),
                "--class", "17",
                "--r", "3",
                "--tau1", "sentence",
                "--min-words", "1",
            ]
        )
        assert rc == cli.EXIT_DATA

    def test_incompatible_granularities(self, workspace, tmp_path):
        rc = cli.main(
            [
                "explain",
                "--text", "whatever",
                "--provider", workspace["model"],
                "--workdir", str(tmp_path / "w"),
                "--tau1", "word",
                "--tau2", "clause",
            ]
        )
        assert rc == cli.EXIT_CONFIG

    def test_explain_with_no_extractable_excerpts(self, workspace, tmp_path):
        workdir = tmp_path / "run"
        base = [
            "--provider", workspace["model"],
            "--workdir", str(workdir),
            "--class", "1",
            "--r", "6",
            "--seed", "0",
            "--tau1", "sentence",
            "--min-words", "1",
        ]
        assert cli.main(["extract-concepts", "--corpus", workspace["corpus"], *base]) == 0
        # Default min_words=6 filters out this short text entirely.
        rc = cli.main(
            [
                "explain",
                "--text", "too short.",
                "--provider", workspace["model"],
                "--workdir", str(workdir),
            ]
        )
        assert rc == cli.EXIT_DATA

    def test_missing_provider_config(self, tmp_path):
        rc = cli.main(
            ["rank-concepts", "--workdir", str(tmp_path / "w")]
        )
        assert rc in (cli.EXIT_CONFIG, cli.EXIT_DATA)

    def test_bad_corpus_file(self, workspace, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not json\n")
        rc = cli.main(
            [
                "extract-concepts",
                "--corpus", str(bad),
                "--provider", workspace["model"],
                "--workdir", str(tmp_path / "w"),
            ]
        )
        assert rc == cli.EXIT_DATA

    def test_unreachable_tcp_provider(self, workspace, tmp_path):
        rc = cli.main(
            [
                "rank-concepts",
                "--provider", "tcp:127.0.0.1:1",
                "--workdir", str(tmp_path / "w"),
            ]
        )
        assert rc in (cli.EXIT_DATA, cli.EXIT_PROVIDER)


class TestConfigFile:
    def test_config_file_with_flag_overrides(self, workspace, tmp_path):
        config = {
            "provider": workspace["model"],
            "class_id": 1,
            "r": 4,
            "seed": 3,
            "tau1": {"mode": "sentence", "min_words": 1},
            "workdir": str(tmp_path / "from_config"),
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        rc = cli.main(
            ["extract-concepts", "--corpus", workspace["corpus"], "--config", str(cfg_path), "--r", "5"]
        )
        assert rc == 0
        meta = json.loads((tmp_path / "from_config" / "model" / "meta.json").read_text())
        assert meta["r"] == 5  # flag wins over config file

    def test_unknown_config_field_rejected(self, workspace, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"no_such_field": 1}))
        rc = cli.main(
            ["extract-concepts", "--corpus", workspace["corpus"], "--config", str(cfg_path)]
        )
        assert rc == cli.EXIT_CONFIG
