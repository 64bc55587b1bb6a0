"""Concept importance by total-variance (Sobol) indices under mask perturbations.

Concept coefficients are faded toward a baseline with stochastic masks
M in [0,1]^r via ``U * M + (1 - M) * mu`` (mu = 0 by default), the
perturbed activations ``(U . M) W^T`` are pushed through the classifier,
and each concept's total index is estimated with the pick-freeze
squared-difference (Jansen) estimator:

    S_Ti = mean_j (Y_B[j] - Y_ABi[j])^2 / (2 * Var(Y))

where the AB_i block equals B with column i swapped in from A, and
Var(Y) is the empirical variance over all 2N base evaluations. Mask
designs come from a scrambled low-discrepancy sequence by default;
plain pseudo-random sampling is available for comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError, PreconditionError
from .nmf import ConceptModel

SAMPLERS = ("qmc_sobol_sequence", "pseudo_random")
MASK_LAWS = ("continuous_uniform", "bernoulli")

DEGENERATE_VARIANCE = 1e-12
MAX_QMC_CONCEPTS = 64
DEFAULT_N_DESIGNS = 4096
CLASSIFY_BATCH_ROWS = 256


@dataclass(frozen=True)
class MaskDesign:
    """Pick-freeze pair of mask matrices plus the swapped-column blocks."""

    M_A: np.ndarray
    M_B: np.ndarray
    sampler: str
    mask_law: str
    seed: int

    @property
    def n_designs(self) -> int:
        return self.M_A.shape[0]

    @property
    def r(self) -> int:
        return self.M_A.shape[1]

    def ab_block(self, i: int) -> np.ndarray:
        """M_B with column i replaced by column i of M_A."""
        if i < 0 or i >= self.r:
            raise PreconditionError(f"concept index {i} out of range for r={self.r}")
        block = self.M_B.copy()
        block[:, i] = self.M_A[:, i]
        return block


@dataclass
class ImportanceReport:
    class_id: int
    indices: np.ndarray      # clipped at 0
    raw_indices: np.ndarray  # pre-clipping, for diagnostics
    output_variance: float
    n_designs: int
    mask_law: str
    degenerate: bool = False
    ranking: np.ndarray = field(default=None)  # concepts by descending importance

    def __post_init__(self):
        if self.ranking is None:
            self.ranking = np.argsort(-self.indices, kind="stable")

    def to_json(self) -> str:
        payload = {
            "class": self.class_id,
            "N": self.n_designs,
            "mask_law": self.mask_law,
            # the scalar under analysis is the class logit, never a
            # softmax probability (saturation would flatten the variance)
            "output": "logit",
            "indices": [
                {
                    "concept": int(i),
                    "s_total_raw": float(self.raw_indices[i]),
                    "s_total": float(self.indices[i]),
                }
                for i in range(len(self.indices))
            ],
            "variance": self.output_variance,
            "degenerate": self.degenerate,
            "ranking": [int(i) for i in self.ranking],
        }
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, payload: str) -> "ImportanceReport":
        rec = json.loads(payload)
        rows = sorted(rec["indices"], key=lambda row: row["concept"])
        return cls(
            class_id=rec["class"],
            indices=np.array([row["s_total"] for row in rows]),
            raw_indices=np.array([row["s_total_raw"] for row in rows]),
            output_variance=rec["variance"],
            n_designs=rec["N"],
            mask_law=rec["mask_law"],
            degenerate=rec.get("degenerate", False),
            ranking=np.array(rec["ranking"]),
        )


def generate_design(
    n_designs: int,
    r: int,
    sampler: str = "qmc_sobol_sequence",
    mask_law: str = "continuous_uniform",
    seed: int = 0,
    scramble: bool = True,
) -> MaskDesign:
    """Draw the pick-freeze mask pair: N points in [0,1]^{2r}, split into
    the first r coordinates (A block) and the last r (B block)."""
    if sampler not in SAMPLERS:
        raise ConfigurationError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")
    if mask_law not in MASK_LAWS:
        raise ConfigurationError(f"unknown mask law {mask_law!r}; expected one of {MASK_LAWS}")
    if r < 1:
        raise ConfigurationError("need at least one concept dimension")
    if n_designs < 2:
        raise ConfigurationError("need at least two designs per matrix")

    if sampler == "qmc_sobol_sequence":
        if r > MAX_QMC_CONCEPTS:
            raise ConfigurationError(
                f"low-discrepancy sampler supports at most {MAX_QMC_CONCEPTS} concepts, got {r}"
            )
        m = int(n_designs).bit_length() - 1
        if 2**m != n_designs:
            raise ConfigurationError(
                f"low-discrepancy designs need a power-of-two count, got {n_designs}"
            )
        engine = qmc.Sobol(d=2 * r, scramble=scramble, seed=seed)
        points = engine.random_base2(m)
    else:
        rng = np.random.default_rng(seed)
        points = rng.random((n_designs, 2 * r))

    if mask_law == "bernoulli":
        points = (points >= 0.5).astype(np.float64)
    return MaskDesign(
        M_A=points[:, :r].copy(),
        M_B=points[:, r:].copy(),
        sampler=sampler,
        mask_law=mask_law,
        seed=seed,
    )


def perturb(U, m_row, mu: float = 0.0) -> np.ndarray:
    """Fade concept coefficients toward the baseline: U * m + (1 - m) * mu."""
    U = np.asarray(U, dtype=np.float64)
    m = np.asarray(m_row, dtype=np.float64).reshape(-1)
    if m.size != U.shape[-1]:
        raise PreconditionError(f"mask has {m.size} entries, coefficients have {U.shape[-1]}")
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise PreconditionError("mask entries must lie in [0, 1]")
    return U * m + (1.0 - m) * mu


def jansen_total_indices(design: MaskDesign, output_fn) -> tuple[np.ndarray, float]:
    """Pick-freeze estimator core over an arbitrary scalar output function.

    ``output_fn`` maps an (n, r) mask matrix to n scalar outputs. Returns
    (raw per-concept indices, empirical output variance).
    """
    y_a = np.asarray(output_fn(design.M_A), dtype=np.float64).reshape(-1)
    y_b = np.asarray(output_fn(design.M_B), dtype=np.float64).reshape(-1)
    if y_a.size != design.n_designs or y_b.size != design.n_designs:
        raise PreconditionError("output_fn must return one scalar per mask row")
    variance = float(np.var(np.concatenate([y_a, y_b]), ddof=1))
    if variance < DEGENERATE_VARIANCE:
        return np.zeros(design.r), variance
    raw = np.empty(design.r)
    for i in range(design.r):
        y_ab = np.asarray(output_fn(design.ab_block(i)), dtype=np.float64).reshape(-1)
        raw[i] = float(np.mean((y_b - y_ab) ** 2)) / (2.0 * variance)
    return raw, variance


def masked_logit_output(
    model: ConceptModel,
    provider,
    class_id: int,
    U=None,
    mu: float = 0.0,
    batch_rows: int = CLASSIFY_BATCH_ROWS,
):
    """Build the scalar output function Y(M): mean class logit of the
    classifier on perturbed reconstructed activations (U . M) W^T."""
    U = model.U if U is None else np.asarray(U, dtype=np.float64)
    n = U.shape[0]
    if n == 0:
        raise ConfigurationError("cannot evaluate masks over zero excerpt rows")
    chunk = max(1, batch_rows // n)

    def output_fn(masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.float64)
        out = np.empty(masks.shape[0])
        for lo in range(0, masks.shape[0], chunk):
            batch = masks[lo : lo + chunk]
            # (k, n, r): every mask row applied to the whole coefficient table
            perturbed = U[None, :, :] * batch[:, None, :] + (1.0 - batch)[:, None, :] * mu
            stacked = (perturbed @ model.W.T).reshape(-1, model.p)
            logits = provider.classify(stacked)[:, class_id]
            out[lo : lo + chunk] = logits.reshape(len(batch), n).mean(axis=1)
        return out

    return output_fn


def estimate_total_indices(
    model: ConceptModel | None,
    provider,
    class_id: int,
    design: MaskDesign,
    mu: float = 0.0,
    batch_rows: int = CLASSIFY_BATCH_ROWS,
    output_fn=None,
) -> ImportanceReport:
    """Estimate per-concept total importance under the given mask design.

    ``output_fn`` may replace the provider-backed evaluation (model and
    provider may then be None); it must map mask matrices to scalars.
    """
    if model is not None and design.r != model.r:
        raise ConfigurationError(f"design has r={design.r}, model has r={model.r}")
    if output_fn is None:
        output_fn = masked_logit_output(
            model, provider, class_id, mu=mu, batch_rows=batch_rows
        )
    raw, variance = jansen_total_indices(design, output_fn)
    degenerate = variance < DEGENERATE_VARIANCE
    clipped = np.maximum(raw, 0.0)
    return ImportanceReport(
        class_id=class_id,
        indices=clipped,
        raw_indices=raw,
        output_variance=variance,
        n_designs=design.n_designs,
        mask_law=design.mask_law,
        degenerate=degenerate,
    )
