"""Instance-level concept attribution by occlusion.

For each element of an excerpt (word or clause), the element is
replaced by the provider's mask token, the excerpt is re-embedded, and
the change in the single-concept coefficient measures the element's
influence on that concept:

    phi(k, i, j) = U_i^k - U~_{i-j}^k

where both coefficients are one-dimensional non-negative least squares
against concept column k alone, with the closed form
``max(0, <A_i, W_k> / ||W_k||^2)``. Only concepts passing the presence
threshold for the excerpt are attributed. Negative influences are kept
in the raw scores (an element can suppress a concept) but clamped out
of the display intensities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .excerpts import Excerpt, GranularitySpec, compatible, elements, occlude
from .nmf import ConceptModel, presence
from .matrixio import nnls_solve_batch


@dataclass(frozen=True)
class ElementAttribution:
    excerpt_id: str
    element_index: int
    element_text: str
    element_span: tuple[int, int]  # relative to the excerpt text
    concept_id: int
    phi: float
    granularity: str


@dataclass
class AttributionBundle:
    excerpt_id: str
    excerpt_text: str
    granularity: str
    elements: list[dict]  # {index, text, span, concept, phi, intensity}
    unattributed: bool

    def to_dict(self) -> dict:
        return {
            "excerpt": {"id": self.excerpt_id, "text": self.excerpt_text},
            "granularity": self.granularity,
            "unattributed": self.unattributed,
            "elements": self.elements,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "AttributionBundle":
        return cls(
            excerpt_id=rec["excerpt"]["id"],
            excerpt_text=rec["excerpt"]["text"],
            granularity=rec["granularity"],
            elements=[dict(e, span=tuple(e["span"])) for e in rec["elements"]],
            unattributed=rec["unattributed"],
        )


def single_concept_coefficient(a_row, W, k: int) -> float:
    """Closed-form 1-D NNLS coefficient of activation ``a_row`` on concept k."""
    w = W[:, k]
    denom = float(w @ w)
    if denom == 0.0:
        return 0.0
    return max(0.0, float(np.asarray(a_row, dtype=np.float64) @ w) / denom)


def concept_coefficient(excerpt: Excerpt | str, model: ConceptModel, k: int, provider) -> float:
    """Importance of one excerpt for concept k: 1-D NNLS of its activation."""
    if k < 0 or k >= model.r:
        raise PreconditionError(f"concept index {k} out of range for r={model.r}")
    text = excerpt.text if isinstance(excerpt, Excerpt) else excerpt
    a_row = provider.embed([text])[0]
    return single_concept_coefficient(a_row, model.W, k)


def attribute(
    excerpt: Excerpt,
    model: ConceptModel,
    provider,
    tau2: GranularitySpec,
    tau1: GranularitySpec | None = None,
) -> list[ElementAttribution]:
    """Occlusion scores for every element x present concept of one excerpt.

    Issues exactly one embed text per element beyond the base text (all
    occluded variants go out in a single batched call).
    """
    if tau1 is not None and not compatible(tau1, tau2):
        raise PreconditionError(
            f"occlusion granularity {tau2.mode!r} is incompatible with concept granularity {tau1.mode!r}"
        )
    elems = elements(excerpt, tau2)
    if not elems:
        return []
    mask_token = provider.describe().mask_token
    a_row = provider.embed([excerpt.text])[0]
    u_full = nnls_solve_batch(a_row[None, :], model.W)[0]
    present_ids = np.flatnonzero(presence(model, u_full))
    if present_ids.size == 0:
        return []

    occluded_texts = [occlude(excerpt, j, tau2, mask_token=mask_token) for j in range(len(elems))]
    occluded_rows = provider.embed(occluded_texts)

    base = {k: single_concept_coefficient(a_row, model.W, k) for k in present_ids}
    offset = excerpt.span[0]
    out = []
    for j, elem in enumerate(elems):
        for k in present_ids:
            dropped = single_concept_coefficient(occluded_rows[j], model.W, k)
            out.append(
                ElementAttribution(
                    excerpt_id=excerpt.excerpt_id,
                    element_index=j,
                    element_text=elem.text,
                    element_span=(elem.span[0] - offset, elem.span[1] - offset),
                    concept_id=int(k),
                    phi=base[k] - dropped,
                    granularity=tau2.mode,
                )
            )
    return out


def bundle(attributions, excerpt: Excerpt | None = None) -> AttributionBundle:
    """Reduce one excerpt's attributions to per-element winners and intensities.

    The winning concept per element maximizes phi (ties to the lower
    concept index); intensities are the winners' positive scores
    normalized so the strongest element equals 1. An excerpt whose
    scores are all non-positive is marked unattributed.
    """
    attributions = list(attributions)
    if not attributions:
        return AttributionBundle(
            excerpt_id=excerpt.excerpt_id if excerpt else "",
            excerpt_text=excerpt.text if excerpt else "",
            granularity="",
            elements=[],
            unattributed=True,
        )
    excerpt_ids = {a.excerpt_id for a in attributions}
    if len(excerpt_ids) != 1:
        raise PreconditionError(f"bundle mixes excerpts: {sorted(excerpt_ids)}")

    by_element: dict[int, list[ElementAttribution]] = {}
    for a in attributions:
        by_element.setdefault(a.element_index, []).append(a)

    winners = []
    for idx in sorted(by_element):
        rows = sorted(by_element[idx], key=lambda a: (-a.phi, a.concept_id))
        winners.append(rows[0])

    max_positive = max((w.phi for w in winners), default=0.0)
    unattributed = max_positive <= 0.0
    element_rows = []
    for w in winners:
        intensity = 0.0 if unattributed else max(0.0, w.phi) / max_positive
        element_rows.append(
            {
                "index": w.element_index,
                "text": w.element_text,
                "span": w.element_span,
                "concept": w.concept_id,
                "phi": w.phi,
                "intensity": intensity,
            }
        )
    first = attributions[0]
    return AttributionBundle(
        excerpt_id=first.excerpt_id,
        excerpt_text=excerpt.text if excerpt else "",
        granularity=first.granularity,
        elements=element_rows,
        unattributed=unattributed,
    )
