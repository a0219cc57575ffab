"""Dense linear algebra used by the optimizers and by the verification oracle.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and ndim 2.
Nothing here mutates its inputs.

The symmetric eigensolver is a cyclic Jacobi method.  Rotations are applied in
round-robin (tournament) order so that each round is a set of disjoint plane
rotations that can be applied to whole rows/columns at once.
"""

from __future__ import annotations

import contextlib
import math
from collections import Counter
from contextvars import ContextVar
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import NumericError, ShapeError

DenseMatrix = np.ndarray

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SYMMETRY_TOL = 1e-9
DEFAULT_RIDGE = 1e-8

# ---------------------------------------------------------------------------
# op-count instrumentation

_active_counters: ContextVar[tuple[Counter, ...]] = ContextVar("_active_counters", default=())


def _record(op: str) -> None:
    for counter in _active_counters.get():
        counter[op] += 1


@contextlib.contextmanager
def count_ops() -> Iterator[Counter]:
    """Count calls to the expensive primitives made inside the block.

    Counters nest: an inner block sees only its own calls, an outer block sees
    everything.  Counting is per execution context, so concurrent threads do
    not pollute each other.
    """
    counter: Counter = Counter()
    token = _active_counters.set(_active_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


# ---------------------------------------------------------------------------
# construction / validation


def as_matrix(data, name: str = "matrix") -> DenseMatrix:
    """Return ``data`` as a finite float64 2-D array (copying only if needed)."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name}: expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: contains non-finite entries")
    return arr


def identity(n: int, scale: float = 1.0) -> DenseMatrix:
    return scale * np.eye(n)


def collapse_to_matrix(shape: Sequence[int], data) -> DenseMatrix:
    """Reshape a parameter tensor to ``(shape[0], prod(shape[1:]))``.

    One-dimensional tensors become a single row.  Element order is row-major.
    """
    shape = [int(s) for s in shape]
    if not shape or any(s < 1 for s in shape):
        raise ShapeError(f"shape must be a non-empty list of positive integers, got {shape}")
    flat = np.asarray(data, dtype=np.float64).reshape(-1)
    if flat.size != math.prod(shape):
        raise ShapeError(f"data has {flat.size} values but shape {shape} needs {math.prod(shape)}")
    if len(shape) == 1:
        return flat.reshape(1, shape[0]).copy()
    return flat.reshape(shape[0], -1).copy()


# ---------------------------------------------------------------------------
# basic ops


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius_norm(a: DenseMatrix) -> float:
    flat = np.asarray(a, dtype=np.float64).ravel()
    with np.errstate(over="ignore"):
        norm = math.sqrt(float(flat @ flat))
    if math.isinf(norm):
        # squares overflowed; rescale by the largest entry and retry
        scale = float(np.max(np.abs(flat)))
        if math.isfinite(scale):
            scaled = flat / scale
            norm = scale * math.sqrt(float(scaled @ scaled))
    return norm


def symmetry_error(a: DenseMatrix) -> float:
    """Relative asymmetry ``||A - A^T||_F / ||A||_F`` (0 for the zero matrix)."""
    norm = frobenius_norm(a)
    if norm == 0.0:
        return 0.0
    return frobenius_norm(a - a.T) / norm


# ---------------------------------------------------------------------------
# symmetric eigendecomposition


class SymEigResult(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: DenseMatrix  # orthogonal, one eigenvector per column

    def reconstruct(self) -> DenseMatrix:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index pairs covering every (p, q), p < q, once per sweep."""
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            p, q = players[i], players[size - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_diagonal_norm(a: DenseMatrix) -> float:
    return frobenius_norm(a - np.diag(np.diag(a)))


def sym_eig(
    a: DenseMatrix,
    name: str = "matrix",
    tol: float = JACOBI_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> SymEigResult:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius mass is at most ``tol * ||A||_F``.
    Raises :class:`NumericError` if that does not happen within ``max_sweeps``.
    """
    a = as_matrix(a, name)
    n, m = a.shape
    if n != m:
        raise ShapeError(f"{name}: sym_eig needs a square matrix, got {a.shape}")
    if symmetry_error(a) > SYMMETRY_TOL:
        raise ShapeError(f"{name}: matrix is not symmetric (relative asymmetry {symmetry_error(a):.3e})")
    _record("sym_eig")

    work = 0.5 * (a + a.T)
    vecs = np.eye(n)
    threshold = tol * frobenius_norm(work)
    rounds = _round_robin(n)

    for _ in range(max_sweeps + 1):
        if _off_diagonal_norm(work) <= threshold:
            break
        for p, q in rounds:
            apq = work[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = work[p, p], work[q, q]
            theta = (aqq - app) / (2.0 * apq)
            t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            c = 1.0 / np.hypot(t, 1.0)
            s = t * c
            c_col, s_col = c[:, None], s[:, None]
            # rows: work <- J^T work
            row_p, row_q = work[p, :], work[q, :]
            work[p, :] = c_col * row_p - s_col * row_q
            work[q, :] = s_col * row_p + c_col * row_q
            # columns: work <- work J, vecs <- vecs J
            col_p, col_q = work[:, p], work[:, q]
            work[:, p] = col_p * c - col_q * s
            work[:, q] = col_p * s + col_q * c
            work[p, q] = 0.0
            work[q, p] = 0.0
            vec_p, vec_q = vecs[:, p], vecs[:, q]
            vecs[:, p] = vec_p * c - vec_q * s
            vecs[:, q] = vec_p * s + vec_q * c
    else:
        raise NumericError(
            f"{name}: Jacobi eigensolver did not converge in {max_sweeps} sweeps "
            f"(off-diagonal mass {_off_diagonal_norm(work):.3e}, target {threshold:.3e})"
        )

    values = np.diag(work).copy()
    order = np.argsort(values, kind="stable")
    return SymEigResult(values[order], vecs[:, order])


def exact_inv_root(
    a: DenseMatrix,
    p: int = 4,
    ridge: float = DEFAULT_RIDGE,
    name: str = "matrix",
) -> DenseMatrix:
    """``(A + ridge*I)^(-1/p)`` for symmetric positive semi-definite ``A``."""
    if p < 1 or int(p) != p:
        raise ValueError(f"p must be a positive integer, got {p}")
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    _record("exact_inv_root")
    eig = sym_eig(a, name=name)
    shifted = eig.eigenvalues + ridge
    if np.any(shifted <= 0.0):
        raise NumericError(
            f"{name}: not positive definite after ridging (smallest eigenvalue + ridge = {shifted.min():.3e})"
        )
    q = eig.eigenvectors
    root = (q * shifted ** (-1.0 / p)) @ q.T
    return 0.5 * (root + root.T)
