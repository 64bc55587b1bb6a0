"""Dense matrix storage and the shared non-negative least-squares kernel.

Matrices are plain 2-D float64 ``numpy.ndarray`` values. The on-disk
format is a single UTF-8 JSON header line followed by the raw row-major
little-endian float32 payload; it is the interchange format between all
pipeline stages.

The NNLS kernel solves ``min_{u >= 0} 0.5 * ||a - W u||^2`` by cyclic
coordinate descent with exact per-coordinate minimization clamped at
zero. It is used both for projecting new activations onto a fixed
concept base and (in its single-concept form) for occlusion scores.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import MatrixFormatError, PreconditionError

HEADER_FIELDS = ("name", "rows", "cols", "dtype", "byte_order")

NNLS_TOL = 1e-8
NNLS_MAX_SWEEPS = 500


def ensure_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array, raising on bad shape or values."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise PreconditionError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise PreconditionError(f"{name} contains non-finite entries")
    return m


def write_matrix(m, path, name: str = "matrix") -> None:
    """Write a matrix as a JSON header line plus raw little-endian f32 payload."""
    m = ensure_matrix(m, name)
    header = {
        "name": name,
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "dtype": "f32",
        "byte_order": "LE",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix` back as float64."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MatrixFormatError(f"header: not a JSON line ({exc})") from exc
    if not isinstance(header, dict):
        raise MatrixFormatError("header: expected a JSON object")
    for field in HEADER_FIELDS:
        if field not in header:
            raise MatrixFormatError(f"header.{field}: missing")
    rows, cols = header["rows"], header["cols"]
    if not isinstance(rows, int) or rows < 0:
        raise MatrixFormatError(f"header.rows: expected non-negative int, got {rows!r}")
    if not isinstance(cols, int) or cols < 0:
        raise MatrixFormatError(f"header.cols: expected non-negative int, got {cols!r}")
    if header["dtype"] != "f32":
        raise MatrixFormatError(f"header.dtype: unsupported {header['dtype']!r}")
    if header["byte_order"] != "LE":
        raise MatrixFormatError(f"header.byte_order: unsupported {header['byte_order']!r}")
    expected = rows * cols * 4
    if len(payload) != expected:
        raise MatrixFormatError(
            f"payload: expected {expected} bytes for {rows}x{cols} f32, got {len(payload)}"
        )
    m = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, cols)
    if m.size and not np.all(np.isfinite(m)):
        raise MatrixFormatError("payload: contains non-finite values")
    return m


def _nnls_sweeps(B, G, tol: float, max_sweeps: int) -> np.ndarray:
    """Run cyclic coordinate descent on ``min_{U >= 0} 0.5||A - U W^T||^2``.

    B is ``A @ W`` (n, r) and G is ``W^T @ W`` (r, r); rows of U are
    independent problems solved simultaneously. Starts at U = 0, so the
    objective never exceeds the zero solution.
    """
    n, r = B.shape
    U = np.zeros((n, r))
    diag = np.diag(G).copy()
    # Zero-norm concept columns cannot affect the residual; pin them at 0.
    free = diag > 0.0
    for _ in range(max_sweeps):
        max_step = 0.0
        for k in range(r):
            if not free[k]:
                continue
            # Exact minimizer along coordinate k, clamped to keep U >= 0.
            delta = np.maximum((B[:, k] - U @ G[:, k]) / diag[k], -U[:, k])
            U[:, k] += delta
            if delta.size:
                step = float(np.max(np.abs(delta)))
                if step > max_step:
                    max_step = step
        if max_step < tol:
            break
    return U


def nnls_solve_batch(A, W, tol: float = NNLS_TOL, max_sweeps: int = NNLS_MAX_SWEEPS) -> np.ndarray:
    """Row-wise NNLS of ``A`` (n, p) against the column base ``W`` (p, r)."""
    A = ensure_matrix(A, "A")
    W = ensure_matrix(W, "W")
    if np.any(W < 0):
        raise PreconditionError("W must be elementwise non-negative")
    if A.shape[1] != W.shape[0]:
        raise PreconditionError(
            f"dimension mismatch: A has {A.shape[1]} columns, W has {W.shape[0]} rows"
        )
    return _nnls_sweeps(A @ W, W.T @ W, tol, max_sweeps)


def nnls_solve(
    a_row,
    W,
    active=None,
    tol: float = NNLS_TOL,
    max_sweeps: int = NNLS_MAX_SWEEPS,
) -> np.ndarray:
    """Solve ``min_{u >= 0} 0.5 * ||a_row - u W^T||^2`` for one activation row.

    ``active`` optionally restricts the solution to a subset of concept
    indices; all other coordinates are fixed at zero.
    """
    a = np.asarray(a_row, dtype=np.float64).reshape(-1)
    if a.size and not np.all(np.isfinite(a)):
        raise PreconditionError("a_row contains non-finite entries")
    W = ensure_matrix(W, "W")
    if np.any(W < 0):
        raise PreconditionError("W must be elementwise non-negative")
    p, r = W.shape
    if a.size != p:
        raise PreconditionError(f"dimension mismatch: a_row has {a.size} entries, W has {p} rows")
    if active is None:
        return nnls_solve_batch(a[None, :], W, tol=tol, max_sweeps=max_sweeps)[0]
    idx = np.asarray(list(active), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= r):
        raise PreconditionError(f"active indices out of range for r={r}")
    u = np.zeros(r)
    if idx.size:
        sub = nnls_solve_batch(a[None, :], W[:, idx], tol=tol, max_sweeps=max_sweeps)[0]
        u[idx] = sub
    return u


def nnls_objective(a_row, W, u) -> float:
    """0.5 * squared residual norm of an NNLS candidate solution."""
    a = np.asarray(a_row, dtype=np.float64).reshape(-1)
    resid = a - np.asarray(W, dtype=np.float64) @ np.asarray(u, dtype=np.float64)
    return 0.5 * float(resid @ resid)
