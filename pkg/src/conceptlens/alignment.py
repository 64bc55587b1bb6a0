"""Concept / human-annotation alignment scoring.

Documents come with per-aspect annotated character spans (e.g. the
Appearance or Aroma part of a beer review). Each excerpt is labeled
aspect-positive when it overlaps an annotated span, a concept predicts
an excerpt via its presence threshold, and precision / recall / F1 per
(aspect, concept) follow. The best concept per aspect maximizes F1
over the whole annotated set; this is a capability upper bound, not a
held-out generalization estimate.

The overlap unit is the excerpt: with ``overlap_frac`` = 0 any overlap
counts, otherwise at least that fraction of the excerpt's characters
must be covered by annotated spans of the aspect.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError
from .nmf import ConceptModel


@dataclass
class AspectAnnotation:
    doc_id: str
    aspect: str
    spans: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class AlignmentResult:
    aspect: str
    best_concept: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    per_concept: list[tuple[int, float, float, float]]  # (concept, P, R, F1)
    undefined_recall: bool = False


def load_annotations(path_or_text) -> list[AspectAnnotation]:
    """Ingest newline-delimited JSON records {doc_id, aspect, start, end}."""
    if hasattr(path_or_text, "read"):
        text = path_or_text.read()
    elif "\n" in str(path_or_text) or str(path_or_text).lstrip().startswith("{"):
        text = str(path_or_text)
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    grouped: dict[tuple[str, str], AspectAnnotation] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            doc_id, aspect = str(rec["doc_id"]), str(rec["aspect"])
            start, end = int(rec["start"]), int(rec["end"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"annotations line {lineno}: {exc}") from exc
        if end < start:
            raise DataError(f"annotations line {lineno}: end {end} before start {start}")
        key = (doc_id, aspect)
        grouped.setdefault(key, AspectAnnotation(doc_id, aspect)).spans.append((start, end))
    return list(grouped.values())


def _overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def label_excerpts(excerpts, annotations, overlap_frac: float = 0.0) -> dict[str, np.ndarray]:
    """Per-aspect boolean flags over the excerpt list.

    An excerpt is positive for an aspect when its span overlaps any
    annotated span of that aspect in the same document: any overlap
    when ``overlap_frac`` is 0, else at least that fraction of the
    excerpt's length.
    """
    if not 0.0 <= overlap_frac <= 1.0:
        raise ConfigurationError(f"overlap_frac must be in [0, 1], got {overlap_frac}")
    excerpts = list(excerpts)
    known_docs = {ex.doc_id for ex in excerpts}
    unknown = sorted({ann.doc_id for ann in annotations} - known_docs)
    if unknown:
        raise DataError(f"annotations reference unknown doc_ids: {unknown}")

    by_aspect: dict[str, list[AspectAnnotation]] = {}
    for ann in annotations:
        by_aspect.setdefault(ann.aspect, []).append(ann)

    flags: dict[str, np.ndarray] = {}
    for aspect, anns in sorted(by_aspect.items()):
        spans_by_doc: dict[str, list[tuple[int, int]]] = {}
        for ann in anns:
            spans_by_doc.setdefault(ann.doc_id, []).extend(ann.spans)
        col = np.zeros(len(excerpts), dtype=bool)
        for i, ex in enumerate(excerpts):
            spans = spans_by_doc.get(ex.doc_id, ())
            if not spans:
                continue
            total = sum(_overlap(ex.span, s) for s in spans)
            length = ex.span[1] - ex.span[0]
            if overlap_frac == 0.0:
                col[i] = total > 0
            else:
                col[i] = length > 0 and total / length >= overlap_frac
        flags[aspect] = col
    return flags


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def score_concepts(
    model: ConceptModel, U_eval, aspect_flags: dict[str, np.ndarray]
) -> list[AlignmentResult]:
    """Best-F1 concept per aspect, with the full per-concept score table."""
    U_eval = np.asarray(U_eval, dtype=np.float64)
    predictions = U_eval >= model.presence_threshold  # (n, r)
    results = []
    for aspect in sorted(aspect_flags):
        y = np.asarray(aspect_flags[aspect], dtype=bool)
        if y.size != U_eval.shape[0]:
            raise ConfigurationError(
                f"aspect {aspect!r} has {y.size} flags for {U_eval.shape[0]} excerpts"
            )
        table = []
        for k in range(model.r):
            pred = predictions[:, k]
            tp = int(np.sum(pred & y))
            fp = int(np.sum(pred & ~y))
            fn = int(np.sum(~pred & y))
            table.append((k, *_prf(tp, fp, fn)))
        best = max(table, key=lambda row: (row[3], -row[0]))
        k_best = best[0]
        accuracy = float(np.mean(predictions[:, k_best] == y)) if y.size else 0.0
        results.append(
            AlignmentResult(
                aspect=aspect,
                best_concept=k_best,
                precision=best[1],
                recall=best[2],
                f1=best[3],
                accuracy=accuracy,
                per_concept=table,
                undefined_recall=not bool(y.any()),
            )
        )
    return results


def results_to_csv(results) -> str:
    """Summary CSV: one row per aspect plus an average row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["aspect", "best_concept", "accuracy", "precision", "recall", "f1"])
    for res in results:
        writer.writerow(
            [
                res.aspect,
                res.best_concept,
                f"{res.accuracy:.4f}",
                f"{res.precision:.4f}",
                f"{res.recall:.4f}",
                f"{res.f1:.4f}",
            ]
        )
    if results:
        writer.writerow(
            [
                "Average",
                "",
                f"{np.mean([r.accuracy for r in results]):.4f}",
                f"{np.mean([r.precision for r in results]):.4f}",
                f"{np.mean([r.recall for r in results]):.4f}",
                f"{np.mean([r.f1 for r in results]):.4f}",
            ]
        )
    return buf.getvalue()
