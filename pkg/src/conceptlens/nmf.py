"""Unsupervised concept discovery by non-negative matrix factorization.

Factorizes an n x p activation matrix A into non-negative U (n x r) and
W (p x r) minimizing 0.5 * ||A - U W^T||_F^2 with classical
multiplicative updates, which make the objective trace monotone
non-increasing -- a property the test suite checks on every fit.

After fitting, W columns are rescaled to unit L2 norm with U absorbing
the scale. The product U W^T is unchanged, but the gauge makes
coefficients comparable across concepts, which the per-concept
presence threshold (the 90th percentile of each U column) relies on.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import matrixio
from .errors import ConfigurationError, DataError, NonNegativityViolation

_EPS = 1e-12

DEFAULT_MAX_ITER = 500
DEFAULT_TOL = 1e-5
PRESENCE_QUANTILE = 0.9


@dataclass
class ConceptModel:
    W: np.ndarray  # (p, r) unit-norm concept columns
    U: np.ndarray  # (n, r) concept coefficients of the fitting excerpts
    r: int
    class_id: int
    objective_trace: np.ndarray
    presence_threshold: np.ndarray  # (r,) 90th-percentile cutoffs
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.W.shape[0]


def _objective(A, U, W) -> float:
    resid = A - U @ W.T
    return 0.5 * float(np.sum(resid * resid))


def _mu_sweep(A, U, W):
    """One multiplicative-update sweep (U then W), in place."""
    U *= (A @ W) / (U @ (W.T @ W) + _EPS)
    W *= (A.T @ U) / (W @ (U.T @ U) + _EPS)


def fit(
    A,
    r: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    class_id: int = 0,
) -> ConceptModel:
    """Factorize a non-negative activation matrix into r concepts."""
    A = matrixio.ensure_matrix(A, "A")
    if A.size and A.min() < 0:
        raise NonNegativityViolation(f"activation matrix has negative entries (min={A.min():.3g})")
    n, p = A.shape
    if r < 1 or r > min(n, p):
        raise ConfigurationError(f"r={r} out of range [1, min(n, p)={min(n, p)}]")

    rng = np.random.default_rng(seed)
    scale = np.sqrt(A.mean() / r) if A.size else 0.0
    # uniform on (0, 1]: keeps every entry strictly positive so no concept
    # is dead on arrival (multiplicative updates cannot revive exact zeros).
    U = (1.0 - rng.random((n, r))) * scale
    W = (1.0 - rng.random((p, r))) * scale

    trace = [_objective(A, U, W)]
    for _ in range(max_iter):
        _mu_sweep(A, U, W)
        trace.append(_objective(A, U, W))
        prev, cur = trace[-2], trace[-1]
        if prev == 0.0 or (prev - cur) < tol * prev:
            break

    # Unit-norm gauge on W columns; U absorbs the scale, U W^T is unchanged.
    norms = np.linalg.norm(W, axis=0)
    nonzero = norms > 0
    W[:, nonzero] /= norms[nonzero]
    U[:, nonzero] *= norms[nonzero]

    thresholds = (
        np.quantile(U, PRESENCE_QUANTILE, axis=0) if n else np.zeros(r)
    )
    return ConceptModel(
        W=W,
        U=U,
        r=r,
        class_id=class_id,
        objective_trace=np.asarray(trace),
        presence_threshold=np.asarray(thresholds, dtype=np.float64),
        seed=seed,
        config={
            "max_iter": max_iter,
            "tol": tol,
            "init": "seeded-uniform-scaled",
            "solver": "multiplicative-updates",
            "gauge": "unit-norm-W-columns",
            "presence_quantile": PRESENCE_QUANTILE,
        },
    )


def transform(A_new, model: ConceptModel) -> np.ndarray:
    """Project new activations onto the fixed concept base by row-wise NNLS."""
    A_new = matrixio.ensure_matrix(A_new, "A_new")
    if A_new.shape[1] != model.p:
        raise ConfigurationError(
            f"dimension mismatch: activations have {A_new.shape[1]} columns, base has {model.p}"
        )
    return matrixio.nnls_solve_batch(A_new, model.W)


def presence(model: ConceptModel, u_row) -> np.ndarray:
    """Concept-presence flags: coefficient at or above the per-concept cutoff."""
    u = np.asarray(u_row, dtype=np.float64).reshape(-1)
    if u.size != model.r:
        raise ConfigurationError(f"coefficient row has {u.size} entries, expected r={model.r}")
    return u >= model.presence_threshold


def save_model(model: ConceptModel, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    matrixio.write_matrix(model.W, os.path.join(dirpath, "W.mat"), name="W")
    matrixio.write_matrix(model.U, os.path.join(dirpath, "U.mat"), name="U")
    meta = {
        "r": model.r,
        "class_id": model.class_id,
        "seed": model.seed,
        "thresholds": model.presence_threshold.tolist(),
        "objective_trace": model.objective_trace.tolist(),
        "config": model.config,
    }
    with open(os.path.join(dirpath, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(dirpath) -> ConceptModel:
    meta_path = os.path.join(dirpath, "meta.json")
    if not os.path.exists(meta_path):
        raise DataError(f"not a concept model directory (missing meta.json): {dirpath}")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    W = matrixio.read_matrix(os.path.join(dirpath, "W.mat"))
    U = matrixio.read_matrix(os.path.join(dirpath, "U.mat"))
    return ConceptModel(
        W=W,
        U=U,
        r=meta["r"],
        class_id=meta["class_id"],
        objective_trace=np.asarray(meta["objective_trace"]),
        presence_threshold=np.asarray(meta["thresholds"]),
        seed=meta["seed"],
        config=meta.get("config", {}),
    )
