"""Inverse-free Kronecker preconditioner state and its update rule.

Each parameter matrix ``G`` (m x n) owns a pair ``(L_hat, R_hat)`` that tracks
the inverse fourth roots of Shampoo's left/right statistics.  An update only
needs matrix products and additions:

    X      = L_hat^4 G G^T
    L_hat <- ((|X|+1)/|X|)^(1/4) L_hat (I - X/(4|X|) + 5 X^2 / (32 |X|^2))

where ``|.|`` is the Frobenius norm.  This corresponds to picking the EMA
coefficient ``beta2 = |X| / (|X| + 1)`` at every update, which puts the
binomial-series argument ``(1 - beta2)/beta2 * X`` at unit norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DomainError, NumericError, ShapeError
from .linalg import DenseMatrix, frobenius_norm

SKIP_THRESHOLD = 1e-30
DEFAULT_EPSILON = 1e-6
EXPANSION_ORDERS = (1, 2)

# binomial coefficients of (1 + a)^(-1/4): 1, -1/4, +5/32
_C1 = 0.25
_C2 = 5.0 / 32.0


@dataclass(frozen=True)
class PreconditionerPair:
    left: DenseMatrix
    right: DenseMatrix
    last_update_step: int = 0

    def __post_init__(self):
        for side, mat in (("left", self.left), ("right", self.right)):
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ShapeError(f"{side} preconditioner must be square, got {mat.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        """Shape (m, n) of the parameter matrix this pair preconditions."""
        return self.left.shape[0], self.right.shape[0]


@dataclass(frozen=True)
class PrecondUpdateReport:
    """What one call to :func:`maybe_update_pair` did.

    ``ratio_*`` is ``(1 - beta2)/beta2`` for the side, computed as ``1/|X|``
    rather than from ``beta2`` so it stays exact when ``beta2`` rounds to 1.
    ``radius_*`` is an estimate of the spectral radius of the scaled series
    argument, filled only when diagnostics are requested.
    """

    beta2_left: float = math.nan
    beta2_right: float = math.nan
    xl_norm: float = 0.0
    xr_norm: float = 0.0
    skipped: bool = True
    skipped_left: bool = True
    skipped_right: bool = True
    ratio_left: float = math.nan
    ratio_right: float = math.nan
    radius_left: Optional[float] = None
    radius_right: Optional[float] = None


class SideUpdate(NamedTuple):
    matrix: DenseMatrix
    beta2: float  # NaN when skipped
    x_norm: float
    skipped: bool
    radius: Optional[float] = None


def init_preconditioners(m: int, n: int, epsilon: float = DEFAULT_EPSILON) -> PreconditionerPair:
    """Fresh pair ``eps^(-1/4) I_m``, ``eps^(-1/4) I_n``."""
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ConfigError(f"epsilon must be a positive finite number, got {epsilon}")
    if m < 1 or n < 1:
        raise ShapeError(f"preconditioner dimensions must be positive, got {m}x{n}")
    scale = epsilon ** -0.25
    return PreconditionerPair(scale * np.eye(m), scale * np.eye(n), 0)


def dynamic_beta2(x_norm: float) -> float:
    """Smallest EMA coefficient keeping the series argument at unit norm."""
    if not x_norm > 0:
        raise DomainError(f"dynamic beta2 needs a positive norm, got {x_norm}")
    return x_norm / (x_norm + 1.0)


def _check_order(order: int) -> int:
    if order not in EXPANSION_ORDERS:
        raise ConfigError(f"expansion order must be one of {EXPANSION_ORDERS}, got {order}")
    return order


def _fourth_power(mat: DenseMatrix) -> DenseMatrix:
    sq = mat @ mat
    return sq @ sq


def _power_radius(a: DenseMatrix, iters: int = 30) -> float:
    # Eigenvalues of L^4 G G^T are real and non-negative (similar to L^2 G G^T L^2),
    # so plain power iteration is adequate for a diagnostic.
    v = np.ones(a.shape[0]) / math.sqrt(a.shape[0])
    estimate = 0.0
    for _ in range(iters):
        w = a @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        estimate = float(v @ w)
        v = w / norm
    return abs(estimate)


def _update_side(
    hat: DenseMatrix,
    stat: DenseMatrix,
    order: int,
    symmetrize: bool,
    diagnostics: bool,
    label: str,
) -> SideUpdate:
    x = _fourth_power(hat) @ stat
    x_norm = frobenius_norm(x)
    if not math.isfinite(x_norm):
        raise NumericError(f"{label}: non-finite norm of the curvature product X")
    if x_norm <= SKIP_THRESHOLD:
        return SideUpdate(hat, math.nan, x_norm, True)

    a = x / x_norm
    series = np.eye(hat.shape[0]) - _C1 * a
    if order == 2:
        series += _C2 * (a @ a)
    out = ((x_norm + 1.0) / x_norm) ** 0.25 * (hat @ series)
    if symmetrize:
        out = 0.5 * (out + out.T)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{label}: preconditioner update produced non-finite entries")
    radius = _power_radius(a) if diagnostics else None
    return SideUpdate(out, dynamic_beta2(x_norm), x_norm, False, radius)


def update_left(
    lhat: DenseMatrix,
    grad: DenseMatrix,
    order: int = 2,
    *,
    symmetrize: bool = False,
    diagnostics: bool = False,
    name: str = "layer",
) -> SideUpdate:
    """One update of the left factor from a gradient ``grad`` (m x n)."""
    _check_order(order)
    if lhat.shape[0] != lhat.shape[1] or lhat.shape[0] != grad.shape[0]:
        raise ShapeError(f"{name}: left factor {lhat.shape} does not match gradient {grad.shape}")
    return _update_side(lhat, grad @ grad.T, order, symmetrize, diagnostics, f"{name} (left)")


def update_right(
    rhat: DenseMatrix,
    grad: DenseMatrix,
    order: int = 2,
    *,
    symmetrize: bool = False,
    diagnostics: bool = False,
    name: str = "layer",
) -> SideUpdate:
    """One update of the right factor, using ``G^T G`` as the statistic."""
    _check_order(order)
    if rhat.shape[0] != rhat.shape[1] or rhat.shape[0] != grad.shape[1]:
        raise ShapeError(f"{name}: right factor {rhat.shape} does not match gradient {grad.shape}")
    return _update_side(rhat, grad.T @ grad, order, symmetrize, diagnostics, f"{name} (right)")


def is_update_step(step: int, freq: int) -> bool:
    """Updates fire on steps 1, 1 + freq, 1 + 2*freq, ..."""
    if freq < 1:
        raise ConfigError(f"update frequency must be >= 1, got {freq}")
    return (step - 1) % freq == 0


def maybe_update_pair(
    pair: PreconditionerPair,
    grad: DenseMatrix,
    step: int,
    freq: int = 1,
    order: int = 2,
    *,
    symmetrize: bool = False,
    diagnostics: bool = False,
    name: str = "layer",
) -> tuple[PreconditionerPair, PrecondUpdateReport]:
    """Refresh both factors on update steps; otherwise hand back the stale pair."""
    if grad.shape != pair.shape:
        raise ShapeError(f"{name}: gradient {grad.shape} does not match preconditioners for {pair.shape}")
    if not is_update_step(step, freq):
        return pair, PrecondUpdateReport()

    opts = dict(symmetrize=symmetrize, diagnostics=diagnostics, name=name)
    left = update_left(pair.left, grad, order, **opts)
    right = update_right(pair.right, grad, order, **opts)
    report = PrecondUpdateReport(
        beta2_left=left.beta2,
        beta2_right=right.beta2,
        xl_norm=left.x_norm,
        xr_norm=right.x_norm,
        skipped=left.skipped and right.skipped,
        skipped_left=left.skipped,
        skipped_right=right.skipped,
        ratio_left=math.nan if left.skipped else 1.0 / left.x_norm,
        ratio_right=math.nan if right.skipped else 1.0 / right.x_norm,
        radius_left=left.radius,
        radius_right=right.radius,
    )
    new_pair = replace(pair, left=left.matrix, right=right.matrix, last_update_step=step)
    return new_pair, report


def precondition(pair: PreconditionerPair, grad: DenseMatrix) -> DenseMatrix:
    """``L_hat @ G @ R_hat`` -- no inverse, no eigendecomposition."""
    if grad.shape != pair.shape:
        raise ShapeError(f"gradient {grad.shape} does not match preconditioners for {pair.shape}")
    return pair.left @ grad @ pair.right
