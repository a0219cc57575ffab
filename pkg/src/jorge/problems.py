"""Small differentiable training problems with analytic gradients.

All parameters are carried as 2-D matrices (vectors collapse to one row), so
the optimizers see the same layout they would for a real network layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .linalg import DenseMatrix, collapse_to_matrix

PROBLEM_KINDS = ("quadratic", "logreg", "mlp_synth")

Params = list[DenseMatrix]
Batch = Optional[np.ndarray]  # row indices into the training set, None = full data


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "quadratic"
    dim: int = 2
    cond: float = 1.0
    classes: int = 2
    hidden: int = 16
    samples: int = 256
    eval_samples: int = 256
    batch_size: int = 0  # 0 means full batch
    steps_per_epoch: int = 1  # only used by the quadratic
    separable: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"unknown problem kind {self.kind!r}; expected one of {PROBLEM_KINDS}")
        if self.batch_size < 0 or self.batch_size > self.samples:
            raise ConfigError(f"batch_size must be in [0, samples], got {self.batch_size}")
        if not self.cond >= 1:
            raise ConfigError(f"cond must be >= 1, got {self.cond}")
        if self.dim < 1 or self.samples < 1 or self.steps_per_epoch < 1:
            raise ConfigError("dim, samples and steps_per_epoch must be positive")


@dataclass
class Problem:
    name: str
    layer_shapes: list[list[int]]
    loss_and_grad: Callable[[Params, Batch], tuple[float, Params]]
    init_params: Callable[[int], Params]
    metrics: dict[str, Callable[[Params], float]]
    default_metric: str
    n_train: int = 0
    batch_size: int = 0
    full_batch_steps: int = 1
    info: dict = field(default_factory=dict)

    def loss(self, params: Params, batch: Batch = None) -> float:
        return self.loss_and_grad(params, batch)[0]

    def grad(self, params: Params, batch: Batch = None) -> Params:
        return self.loss_and_grad(params, batch)[1]

    def metric(self, params: Params, name: Optional[str] = None) -> float:
        name = name or self.default_metric
        if name not in self.metrics:
            raise ConfigError(f"problem {self.name!r} has no metric {name!r}; known: {sorted(self.metrics)}")
        return self.metrics[name](params)

    @property
    def steps_per_epoch(self) -> int:
        if self.batch_size == 0:
            return self.full_batch_steps
        return math.ceil(self.n_train / self.batch_size)

    def batches(self, seed: int, epoch: int) -> list[Batch]:
        """Batch sequence for one epoch; a function of ``(seed, epoch)`` only."""
        if self.batch_size == 0:
            return [None] * self.full_batch_steps
        order = np.random.default_rng([seed, epoch]).permutation(self.n_train)
        return [order[i : i + self.batch_size] for i in range(0, self.n_train, self.batch_size)]


def _as_layers(values: Sequence[np.ndarray], shapes: Sequence[Sequence[int]]) -> Params:
    return [collapse_to_matrix(shape, v) for v, shape in zip(values, shapes)]


# ---------------------------------------------------------------------------
# quadratic


def make_quadratic(dim: int, cond: float = 1.0, seed: int = 0, steps_per_epoch: int = 1) -> Problem:
    """``f(theta) = 0.5 * theta^T D theta`` with ``D`` diagonal.

    The eigenvalues are log-uniform on ``[1, cond]`` with both endpoints
    included; their order is shuffled by ``seed``.
    """
    if dim < 2:
        raise ConfigError(f"quadratic needs dim >= 2, got {dim}")
    if not cond >= 1:
        raise ConfigError(f"cond must be >= 1, got {cond}")
    rng = np.random.default_rng(seed)
    log_eigs = rng.uniform(0.0, math.log(cond), size=dim)
    log_eigs[0], log_eigs[1] = 0.0, math.log(cond)
    diag = np.exp(rng.permutation(log_eigs))[None, :]

    def loss_and_grad(params: Params, batch: Batch = None):
        theta = params[0]
        g = diag * theta
        return 0.5 * float(np.sum(theta * g)), [g]

    def init_params(init_seed: int) -> Params:
        return [np.random.default_rng([seed, init_seed]).standard_normal((1, dim))]

    def neg_loss(params: Params) -> float:
        return -loss_and_grad(params)[0]

    return Problem(
        name=f"quadratic_d{dim}_c{cond:g}",
        layer_shapes=[[dim]],
        loss_and_grad=loss_and_grad,
        init_params=init_params,
        metrics={"neg_loss": neg_loss, "neg_train_loss": neg_loss},
        default_metric="neg_loss",
        full_batch_steps=steps_per_epoch,
        info={"diag": diag.ravel().copy()},
    )


# ---------------------------------------------------------------------------
# logistic regression


def _logreg_data(rng, n, z_weights, scales, separable):
    z = rng.standard_normal((n, len(scales)))
    logits = z @ z_weights
    if separable:
        y = (logits > 0).astype(np.float64)
    else:
        y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logits))).astype(np.float64)
    return z * scales, y


def make_logreg(
    samples: int,
    dim: int,
    seed: int = 0,
    *,
    batch_size: int = 0,
    eval_samples: Optional[int] = None,
    separable: bool = False,
    scale_range: tuple[float, float] = (0.1, 10.0),
) -> Problem:
    """Binary logistic regression on synthetic data with a planted separator.

    Features get per-coordinate scales drawn log-uniformly from
    ``scale_range``, which makes the problem ill-conditioned.  Labels are drawn
    from the planted logistic model (or thresholded when ``separable``).  Any
    regularisation is the optimizer's business; the loss is plain mean
    cross-entropy.
    """
    if samples < dim:
        raise ConfigError(f"logreg needs samples >= dim, got {samples} < {dim}")
    rng = np.random.default_rng(seed)
    z_weights = rng.standard_normal(dim)
    z_weights *= 3.0 / np.linalg.norm(z_weights)
    lo, hi = scale_range
    scales = np.exp(rng.uniform(math.log(lo), math.log(hi), size=dim))
    x_train, y_train = _logreg_data(rng, samples, z_weights, scales, separable)
    x_eval, y_eval = _logreg_data(rng, eval_samples or samples, z_weights, scales, separable)
    planted = (z_weights / scales)[None, :]

    def _loss_grad(params, x, y):
        w, b = params
        s = x @ w[0] + b[0, 0]
        loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
        resid = (0.5 * (1.0 + np.tanh(0.5 * s)) - y) / len(y)
        return loss, [(resid @ x)[None, :], np.array([[resid.sum()]])]

    def loss_and_grad(params: Params, batch: Batch = None):
        if batch is None:
            return _loss_grad(params, x_train, y_train)
        return _loss_grad(params, x_train[batch], y_train[batch])

    def init_params(init_seed: int) -> Params:
        return [np.zeros((1, dim)), np.zeros((1, 1))]

    def accuracy(params: Params) -> float:
        s = x_eval @ params[0][0] + params[1][0, 0]
        return float(np.mean((s > 0) == (y_eval > 0.5)))

    def neg_train_loss(params: Params) -> float:
        return -_loss_grad(params, x_train, y_train)[0]

    return Problem(
        name=f"logreg_n{samples}_d{dim}",
        layer_shapes=[[dim], [1]],
        loss_and_grad=loss_and_grad,
        init_params=init_params,
        metrics={"accuracy": accuracy, "neg_train_loss": neg_train_loss, "neg_loss": neg_train_loss},
        default_metric="accuracy",
        n_train=samples,
        batch_size=batch_size,
        info={"planted": planted, "x_train": x_train, "y_train": y_train},
    )


# ---------------------------------------------------------------------------
# two-layer MLP


def make_mlp(
    in_dim: int,
    hidden: int,
    classes: int,
    samples: int,
    seed: int = 0,
    *,
    batch_size: int = 0,
    eval_samples: Optional[int] = None,
    separation: float = 1.5,
) -> Problem:
    """One tanh hidden layer and a softmax output, trained with cross-entropy.

    Data are Gaussian clusters around random class centres.  Gradients come from
    hand-written backpropagation; layers are ``[W1, b1, W2, b2]`` with biases
    stored as single rows.
    """
    if hidden < 2:
        raise ConfigError(f"hidden must be >= 2, got {hidden}")
    if classes < 2:
        raise ConfigError(f"classes must be >= 2, got {classes}")
    rng = np.random.default_rng(seed)
    centres = separation * rng.standard_normal((classes, in_dim))

    def draw(n):
        y = rng.integers(0, classes, size=n)
        return centres[y] + rng.standard_normal((n, in_dim)), y

    x_train, y_train = draw(samples)
    x_eval, y_eval = draw(eval_samples or samples)
    onehot_train = np.eye(classes)[y_train]
    shapes = [[in_dim, hidden], [hidden], [hidden, classes], [classes]]

    def forward(params, x):
        w1, b1, w2, b2 = params
        h = np.tanh(x @ w1 + b1)
        scores = h @ w2 + b2
        scores = scores - scores.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(scores).sum(axis=1, keepdims=True))
        return h, scores - log_norm

    def _loss_grad(params, x, onehot):
        w1, b1, w2, b2 = params
        n = len(x)
        h, log_probs = forward(params, x)
        loss = -float(np.sum(onehot * log_probs)) / n
        d_scores = (np.exp(log_probs) - onehot) / n
        d_w2 = h.T @ d_scores
        d_b2 = d_scores.sum(axis=0, keepdims=True)
        d_pre = (d_scores @ w2.T) * (1.0 - h * h)
        d_w1 = x.T @ d_pre
        d_b1 = d_pre.sum(axis=0, keepdims=True)
        return loss, [d_w1, d_b1, d_w2, d_b2]

    def loss_and_grad(params: Params, batch: Batch = None):
        if batch is None:
            return _loss_grad(params, x_train, onehot_train)
        return _loss_grad(params, x_train[batch], onehot_train[batch])

    def init_params(init_seed: int) -> Params:
        init_rng = np.random.default_rng([seed, init_seed])
        w1 = init_rng.standard_normal((in_dim, hidden)) / math.sqrt(in_dim)
        w2 = init_rng.standard_normal((hidden, classes)) / math.sqrt(hidden)
        return _as_layers([w1, np.zeros(hidden), w2, np.zeros(classes)], shapes)

    def accuracy(params: Params) -> float:
        _, log_probs = forward(params, x_eval)
        return float(np.mean(log_probs.argmax(axis=1) == y_eval))

    def neg_train_loss(params: Params) -> float:
        return -_loss_grad(params, x_train, onehot_train)[0]

    return Problem(
        name=f"mlp_{in_dim}x{hidden}x{classes}",
        layer_shapes=shapes,
        loss_and_grad=loss_and_grad,
        init_params=init_params,
        metrics={"accuracy": accuracy, "neg_train_loss": neg_train_loss, "neg_loss": neg_train_loss},
        default_metric="accuracy",
        n_train=samples,
        batch_size=batch_size,
        info={"x_train": x_train, "y_train": y_train},
    )


def build_problem(spec: DatasetSpec) -> Problem:
    if spec.kind == "quadratic":
        return make_quadratic(spec.dim, spec.cond, spec.seed, spec.steps_per_epoch)
    if spec.kind == "logreg":
        return make_logreg(
            spec.samples,
            spec.dim,
            spec.seed,
            batch_size=spec.batch_size,
            eval_samples=spec.eval_samples,
            separable=spec.separable,
        )
    return make_mlp(
        spec.dim,
        spec.hidden,
        spec.classes,
        spec.samples,
        spec.seed,
        batch_size=spec.batch_size,
        eval_samples=spec.eval_samples,
    )
