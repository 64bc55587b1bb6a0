"""Faithfulness diagnostics: concept deletion and insertion curves.

Deletion progressively zeroes concept columns of the evaluation
coefficients in a given order and tracks the mean class logit; if the
ranking is faithful, the score collapses quickly. Insertion starts
from all concepts removed and adds them back, so a faithful ranking
recovers the score quickly. Both are compared against random and
reversed orderings; areas under the curves summarize the comparison.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .nmf import ConceptModel
from .sobol import ImportanceReport


@dataclass
class FidelityCurve:
    ordering: str            # "importance" | "reverse" | "random:<seed>" | "explicit"
    kind: str                # "deletion" | "insertion"
    points: list[tuple[int, float]]
    auc: float


def _resolve_ordering(report: ImportanceReport, ordering, seed=None) -> tuple[np.ndarray, str]:
    r = len(report.indices)
    if isinstance(ordering, str):
        if ordering == "importance":
            return np.asarray(report.ranking, dtype=int), "importance"
        if ordering == "reverse":
            return np.asarray(report.ranking, dtype=int)[::-1], "reverse"
        if ordering == "random":
            if seed is None:
                raise ConfigurationError("random ordering needs a seed")
            perm = np.random.default_rng(seed).permutation(r)
            return perm, f"random:{seed}"
        raise ConfigurationError(f"unknown ordering {ordering!r}")
    order = np.asarray(list(ordering), dtype=int)
    if sorted(order.tolist()) != list(range(r)):
        raise ConfigurationError(f"ordering must be a permutation of 0..{r - 1}, got {order.tolist()}")
    return order, "explicit"


def _mean_class_logit(model: ConceptModel, provider, class_id: int, U_masked) -> float:
    logits = provider.classify(U_masked @ model.W.T)
    return float(logits[:, class_id].mean())


def _curve(model, provider, report, eval_U, order, label, kind) -> FidelityCurve:
    eval_U = np.asarray(eval_U, dtype=np.float64)
    r = model.r
    points = []
    for t in range(r + 1):
        mask = np.ones(r)
        if kind == "deletion":
            mask[order[:t]] = 0.0
        else:
            mask = np.zeros(r)
            mask[order[:t]] = 1.0
        points.append((t, _mean_class_logit(model, provider, report.class_id, eval_U * mask)))
    ys = np.array([y for _, y in points])
    xs = np.linspace(0.0, 1.0, r + 1)
    auc = float(np.trapezoid(ys, xs)) if hasattr(np, "trapezoid") else float(np.trapz(ys, xs))
    return FidelityCurve(ordering=label, kind=kind, points=points, auc=auc)


def deletion_curve(model, provider, report, eval_U, ordering="importance", seed=None) -> FidelityCurve:
    """Mean class logit as the t most important concepts are zeroed, t = 0..r."""
    order, label = _resolve_ordering(report, ordering, seed)
    if len(order) != model.r:
        raise ConfigurationError(f"ordering length {len(order)} != r={model.r}")
    return _curve(model, provider, report, eval_U, order, label, "deletion")


def insertion_curve(model, provider, report, eval_U, ordering="importance", seed=None) -> FidelityCurve:
    """Mean class logit as concepts are added back in order, t = 0..r."""
    order, label = _resolve_ordering(report, ordering, seed)
    if len(order) != model.r:
        raise ConfigurationError(f"ordering length {len(order)} != r={model.r}")
    return _curve(model, provider, report, eval_U, order, label, "insertion")


def compare_orderings(
    model, provider, report, eval_U, num_random: int = 5, seed: int = 0
) -> dict:
    """AUC summary for importance vs reverse vs random orderings, both curves."""
    if num_random < 1:
        raise ConfigurationError("num_random must be >= 1")
    rng = np.random.default_rng(seed)
    random_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=num_random)]
    summary: dict = {"class": report.class_id, "curves": {}}
    for kind, fn in (("deletion", deletion_curve), ("insertion", insertion_curve)):
        importance = fn(model, provider, report, eval_U, "importance")
        reverse = fn(model, provider, report, eval_U, "reverse")
        random_aucs = [
            fn(model, provider, report, eval_U, "random", seed=s).auc for s in random_seeds
        ]
        summary["curves"][kind] = {
            "importance_auc": importance.auc,
            "reverse_auc": reverse.auc,
            "random_auc_mean": float(np.mean(random_aucs)),
            "random_auc_std": float(np.std(random_aucs)),
            "importance_points": importance.points,
            "reverse_points": reverse.points,
        }
    return summary


def subset_curves(
    model, provider, report, eval_U, ordering="importance", kind="deletion",
    subsets: int = 1, seed: int = 0,
) -> dict:
    """Per-point mean and standard deviation over disjoint evaluation subsets."""
    eval_U = np.asarray(eval_U, dtype=np.float64)
    n = eval_U.shape[0]
    if subsets < 1 or subsets > n:
        raise ConfigurationError(f"subsets must be in [1, {n}], got {subsets}")
    fn = deletion_curve if kind == "deletion" else insertion_curve
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, subsets)
    values = np.array(
        [[y for _, y in fn(model, provider, report, eval_U[idx], ordering).points] for idx in parts]
    )
    return {
        "kind": kind,
        "ordering": ordering if isinstance(ordering, str) else "explicit",
        "subsets": subsets,
        "mean": values.mean(axis=0).tolist(),
        "std": values.std(axis=0).tolist(),
    }


def curves_to_csv(curves) -> str:
    """Serialize curves as CSV rows (kind, ordering, t, score)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "ordering", "t", "score"])
    for curve in curves:
        for t, score in curve.points:
            writer.writerow([curve.kind, curve.ordering, t, repr(score)])
    return buf.getvalue()


def curves_to_json(curves, summary=None) -> str:
    payload = {
        "curves": [
            {
                "kind": c.kind,
                "ordering": c.ordering,
                "points": [[t, y] for t, y in c.points],
                "auc": c.auc,
            }
            for c in curves
        ]
    }
    if summary is not None:
        payload["summary"] = summary
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"
