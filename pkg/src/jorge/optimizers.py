"""Per-layer step rules: Jorge, reference Shampoo, SGD (heavy ball) and AdamW.

Every step function mutates a :class:`LayerState` in place and returns a
:class:`StepReport`.  :class:`Optimizer` drives a list of layers from one
config and a learning-rate schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .linalg import DEFAULT_RIDGE, DenseMatrix, as_matrix, count_ops, exact_inv_root, frobenius_norm
from .preconditioner import (
    DEFAULT_EPSILON,
    EXPANSION_ORDERS,
    PreconditionerPair,
    PrecondUpdateReport,
    init_preconditioners,
    is_update_step,
    maybe_update_pair,
    precondition,
)
from .schedules import ScheduleSpec, lr_at

OPTIMIZER_KINDS = ("jorge", "shampoo_ref", "sgd", "adamw")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "jorge"
    lr_schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    beta1: float = 0.9
    weight_decay: float = 0.0
    # None resolves to coupled L2 for SGD and decoupled decay for everything else.
    decoupled_wd: Optional[bool] = None
    epsilon: float = DEFAULT_EPSILON
    precond_freq: int = 1
    expansion_order: int = 2
    grafting: bool = True
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    shampoo_beta2: float = 0.99
    shampoo_ridge: float = DEFAULT_RIDGE
    symmetrize: bool = False

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer kind {self.kind!r}; expected one of {OPTIMIZER_KINDS}")
        for label, value in self.__dict__.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(f"{label} must be finite, got {value}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ConfigError(f"beta1 must be in [0, 1), got {self.beta1}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.precond_freq < 1:
            raise ConfigError(f"precond_freq must be >= 1, got {self.precond_freq}")
        if self.expansion_order not in EXPANSION_ORDERS:
            raise ConfigError(f"expansion_order must be one of {EXPANSION_ORDERS}, got {self.expansion_order}")
        b1, b2 = self.adam_betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ConfigError(f"adam_betas must lie in [0, 1), got {self.adam_betas}")
        if not self.adam_eps > 0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")
        if not 0.0 < self.shampoo_beta2 < 1.0:
            raise ConfigError(f"shampoo_beta2 must be in (0, 1), got {self.shampoo_beta2}")
        if self.shampoo_ridge < 0:
            raise ConfigError(f"shampoo_ridge must be >= 0, got {self.shampoo_ridge}")

    @property
    def decoupled(self) -> bool:
        if self.decoupled_wd is None:
            return self.kind != "sgd"
        return self.decoupled_wd

    @property
    def base_lr(self) -> float:
        return self.lr_schedule.base_lr


@dataclass
class LayerState:
    params: DenseMatrix
    name: str = "layer"
    momentum: Optional[DenseMatrix] = None
    graft_momentum: Optional[DenseMatrix] = None
    precond: Optional[PreconditionerPair] = None
    shampoo_left: Optional[DenseMatrix] = None
    shampoo_right: Optional[DenseMatrix] = None
    shampoo_left_root: Optional[DenseMatrix] = None
    shampoo_right_root: Optional[DenseMatrix] = None
    adam_first: Optional[DenseMatrix] = None
    adam_second: Optional[DenseMatrix] = None
    step: int = 0

    @classmethod
    def create(cls, params, cfg: OptimizerConfig, name: str = "layer") -> "LayerState":
        theta = as_matrix(params, name).copy()
        m, n = theta.shape
        state = cls(params=theta, name=name, momentum=np.zeros_like(theta))
        if cfg.kind in ("jorge", "shampoo_ref"):
            state.graft_momentum = np.zeros_like(theta)
        if cfg.kind == "jorge":
            state.precond = init_preconditioners(m, n, cfg.epsilon)
        elif cfg.kind == "shampoo_ref":
            state.shampoo_left = cfg.epsilon * np.eye(m)
            state.shampoo_right = cfg.epsilon * np.eye(n)
        elif cfg.kind == "adamw":
            state.adam_first = np.zeros_like(theta)
            state.adam_second = np.zeros_like(theta)
        return state


@dataclass
class StepReport:
    lr_used: float
    update_norm: float
    graft_norm: float = math.nan
    precond_report: Optional[PrecondUpdateReport] = None
    op_counts: dict = field(default_factory=dict)


def _check_grad(state: LayerState, grad) -> DenseMatrix:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.shape:
        raise ShapeError(f"{state.name}: gradient shape {grad.shape} != parameter shape {state.params.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"{state.name}: non-finite gradient")
    return grad


def _coupled(grad: DenseMatrix, state: LayerState, cfg: OptimizerConfig) -> DenseMatrix:
    if cfg.weight_decay and not cfg.decoupled:
        return grad + cfg.weight_decay * state.params
    return grad


def _apply_decoupled_decay(theta: DenseMatrix, lr: float, cfg: OptimizerConfig) -> DenseMatrix:
    if cfg.weight_decay and cfg.decoupled:
        return theta - (lr * cfg.weight_decay) * theta
    return theta


def graft_update(
    theta: DenseMatrix, m_jorge: DenseMatrix, m_graft: DenseMatrix, lr: float, graft_norm: Optional[float] = None
) -> DenseMatrix:
    """Step along ``-m_jorge`` with length ``lr * |m_graft|_F``."""
    if graft_norm is None:
        graft_norm = frobenius_norm(m_graft)
    if graft_norm == 0.0:
        return theta.copy()
    direction_norm = frobenius_norm(m_jorge)
    if direction_norm == 0.0:
        raise NumericError("grafting: update direction is zero but the grafted magnitude is not")
    return theta - (lr * graft_norm / direction_norm) * m_jorge


def _momentum_update(theta, grad, precond_grad, lr, state, cfg) -> tuple[DenseMatrix, float, float]:
    """EMA momentum on the preconditioned gradient, optionally SGD-grafted.

    Returns (new theta before decoupled decay, step length, graft norm).
    """
    b1 = cfg.beta1
    state.momentum *= b1
    state.momentum += (1.0 - b1) * precond_grad
    if cfg.grafting:
        state.graft_momentum *= b1
        state.graft_momentum += grad
        graft_norm = frobenius_norm(state.graft_momentum)
        theta = graft_update(theta, state.momentum, state.graft_momentum, lr, graft_norm)
        return theta, lr * graft_norm, graft_norm
    return theta - lr * state.momentum, lr * frobenius_norm(state.momentum), math.nan


def sgd_step(state: LayerState, grad, lr: float, cfg: OptimizerConfig) -> StepReport:
    grad = _check_grad(state, grad)
    with count_ops() as ops:
        state.step += 1
        g = _coupled(grad, state, cfg)
        state.momentum = cfg.beta1 * state.momentum + g
        theta = state.params - lr * state.momentum
        state.params = _apply_decoupled_decay(theta, lr, cfg)
    return StepReport(lr, lr * frobenius_norm(state.momentum), op_counts=dict(ops))


def adamw_step(state: LayerState, grad, lr: float, cfg: OptimizerConfig) -> StepReport:
    grad = _check_grad(state, grad)
    with count_ops() as ops:
        state.step += 1
        t = state.step
        b1, b2 = cfg.adam_betas
        g = _coupled(grad, state, cfg)
        state.adam_first = b1 * state.adam_first + (1.0 - b1) * g
        state.adam_second = b2 * state.adam_second + (1.0 - b2) * g * g
        m_hat = state.adam_first / (1.0 - b1**t)
        v_hat = state.adam_second / (1.0 - b2**t)
        step = lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        theta = _apply_decoupled_decay(state.params, lr, cfg)
        state.params = theta - step
    return StepReport(lr, frobenius_norm(step), op_counts=dict(ops))


def shampoo_ref_step(state: LayerState, grad, lr: float, cfg: OptimizerConfig) -> StepReport:
    """Shampoo with exact inverse fourth roots (eigendecomposition)."""
    grad = _check_grad(state, grad)
    with count_ops() as ops:
        state.step += 1
        g = _coupled(grad, state, cfg)
        b2 = cfg.shampoo_beta2
        state.shampoo_left = b2 * state.shampoo_left + (1.0 - b2) * (g @ g.T)
        state.shampoo_right = b2 * state.shampoo_right + (1.0 - b2) * (g.T @ g)
        if state.shampoo_left_root is None or is_update_step(state.step, cfg.precond_freq):
            ridge = cfg.shampoo_ridge
            state.shampoo_left_root = exact_inv_root(state.shampoo_left, 4, ridge, name=f"{state.name} L")
            state.shampoo_right_root = exact_inv_root(state.shampoo_right, 4, ridge, name=f"{state.name} R")
        precond_grad = state.shampoo_left_root @ g @ state.shampoo_right_root
        theta, update_norm, graft_norm = _momentum_update(state.params, g, precond_grad, lr, state, cfg)
        state.params = _apply_decoupled_decay(theta, lr, cfg)
    return StepReport(lr, update_norm, graft_norm, op_counts=dict(ops))


def jorge_step(state: LayerState, grad, lr: float, cfg: OptimizerConfig) -> StepReport:
    """Inverse-free Shampoo approximation; optional SGD grafting."""
    grad = _check_grad(state, grad)
    with count_ops() as ops:
        state.step += 1
        g = _coupled(grad, state, cfg)
        state.precond, report = maybe_update_pair(
            state.precond,
            g,
            state.step,
            cfg.precond_freq,
            cfg.expansion_order,
            symmetrize=cfg.symmetrize,
            name=state.name,
        )
        precond_grad = precondition(state.precond, g)
        theta, update_norm, graft_norm = _momentum_update(state.params, g, precond_grad, lr, state, cfg)
        state.params = _apply_decoupled_decay(theta, lr, cfg)
    return StepReport(lr, update_norm, graft_norm, report, dict(ops))


STEP_RULES: dict[str, Callable[[LayerState, DenseMatrix, float, OptimizerConfig], StepReport]] = {
    "jorge": jorge_step,
    "shampoo_ref": shampoo_ref_step,
    "sgd": sgd_step,
    "adamw": adamw_step,
}


class Optimizer:
    """Applies one step rule to a list of parameter matrices.

    Layers are independent, so with ``max_workers > 1`` they are stepped on a
    thread pool.  The learning rate is read once per step before the fan-out.
    """

    def __init__(
        self,
        cfg: OptimizerConfig,
        params: Sequence,
        names: Optional[Sequence[str]] = None,
        max_workers: int = 1,
    ):
        self.cfg = cfg
        if names is None:
            names = [f"layer{i}" for i in range(len(params))]
        self.states = [LayerState.create(p, cfg, name) for p, name in zip(params, names)]
        self._rule = STEP_RULES[cfg.kind]
        self._pool = ThreadPoolExecutor(max_workers) if max_workers > 1 and len(self.states) > 1 else None

    @property
    def params(self) -> list[DenseMatrix]:
        return [s.params for s in self.states]

    def lr(self, epoch: int, step_in_epoch: float = 0.0) -> float:
        return lr_at(self.cfg.lr_schedule, epoch, step_in_epoch)

    def step(
        self,
        grads: Sequence,
        epoch: int = 0,
        step_in_epoch: float = 0.0,
        lr: Optional[float] = None,
    ) -> list[StepReport]:
        if len(grads) != len(self.states):
            raise ShapeError(f"expected {len(self.states)} gradients, got {len(grads)}")
        rate = self.lr(epoch, step_in_epoch) if lr is None else lr
        if self._pool is None:
            return [self._rule(s, g, rate, self.cfg) for s, g in zip(self.states, grads)]
        futures = [self._pool.submit(self._rule, s, g, rate, self.cfg) for s, g in zip(self.states, grads)]
        return [f.result() for f in futures]

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
