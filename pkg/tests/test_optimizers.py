import json
import math

import numpy as np
import pytest

from conftest import FIXTURES
from jorge.errors import ConfigError, NumericError, ShapeError
from jorge.optimizers import (
    LayerState,
    Optimizer,
    OptimizerConfig,
    adamw_step,
    graft_update,
    jorge_step,
    sgd_step,
    shampoo_ref_step,
)
from jorge.schedules import ScheduleSpec

from oracles import inv_root_eigh


def make(kind, lr=0.1, **kw):
    return OptimizerConfig(kind=kind, lr_schedule=ScheduleSpec("constant", lr, 10), **kw)


def state_for(cfg, theta):
    return LayerState.create(np.asarray(theta, dtype=float), cfg)


# -- config ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        {"kind": "lamb"},
        {"beta1": 1.0},
        {"weight_decay": -1.0},
        {"epsilon": 0.0},
        {"precond_freq": 0},
        {"expansion_order": 3},
        {"adam_betas": (0.9, 1.0)},
        {"shampoo_beta2": 1.0},
        {"weight_decay": math.nan},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        OptimizerConfig(**kw)


def test_decoupled_defaults():
    assert not make("sgd").decoupled
    assert make("jorge").decoupled and make("adamw").decoupled
    assert make("sgd", decoupled_wd=True).decoupled


# -- sgd ---------------------------------------------------------------------------


def test_sgd_plain_step():
    cfg = make("sgd", beta1=0.0)
    st = state_for(cfg, [[1.0]])
    sgd_step(st, np.array([[2.0]]), 0.5, cfg)
    assert st.params[0, 0] == 0.0


def test_sgd_momentum_accumulates():
    cfg = make("sgd", beta1=0.9)
    st = state_for(cfg, [[0.0]])
    sgd_step(st, np.ones((1, 1)), 0.0, cfg)
    assert st.momentum[0, 0] == 1.0
    sgd_step(st, np.ones((1, 1)), 0.0, cfg)
    assert st.momentum[0, 0] == pytest.approx(1.9)
    assert st.step == 2


def test_sgd_matches_transcription():
    rng = np.random.default_rng(0)
    cfg = make("sgd", beta1=0.9, weight_decay=1e-4)
    theta = rng.standard_normal((3, 3))
    st = state_for(cfg, theta)
    m = np.zeros((3, 3))
    for _ in range(5):
        g = rng.standard_normal((3, 3))
        m = 0.9 * m + (g + 1e-4 * theta)
        theta = theta - 0.1 * m
        sgd_step(st, g, 0.1, cfg)
    np.testing.assert_allclose(st.params, theta, rtol=1e-14, atol=1e-15)


def test_shape_and_finiteness_checks():
    cfg = make("sgd")
    st = state_for(cfg, np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        sgd_step(st, np.zeros((2, 3)), 0.1, cfg)
    with pytest.raises(NumericError):
        sgd_step(st, np.full((2, 2), np.inf), 0.1, cfg)


# -- adamw ---------------------------------------------------------------------------


def test_adamw_first_step_unit_magnitude():
    cfg = make("adamw", adam_eps=1e-300)
    st = state_for(cfg, [[0.0]])
    rep = adamw_step(st, np.ones((1, 1)), 1.0, cfg)
    assert st.params[0, 0] == pytest.approx(-1.0, rel=1e-12)
    assert rep.update_norm == pytest.approx(1.0, rel=1e-12)


def test_adamw_pure_decay():
    cfg = make("adamw", weight_decay=0.1)
    st = state_for(cfg, [[1.0]])
    adamw_step(st, np.zeros((1, 1)), 0.01, cfg)
    assert st.params[0, 0] == pytest.approx(0.999, rel=1e-15)


def test_adamw_scalar_loop_oracle():
    rng = np.random.default_rng(1)
    cfg = make("adamw", weight_decay=0.01)
    theta0 = rng.standard_normal((2, 2))
    grads = [rng.standard_normal((2, 2)) for _ in range(10)]
    st = state_for(cfg, theta0)
    for g in grads:
        adamw_step(st, g, 0.05, cfg)
    for i in range(2):
        for j in range(2):
            th, m, v = theta0[i, j], 0.0, 0.0
            for t, g in enumerate(grads, start=1):
                x = g[i, j]
                m = 0.9 * m + 0.1 * x
                v = 0.999 * v + 0.001 * x * x
                m_hat, v_hat = m / (1 - 0.9**t), v / (1 - 0.999**t)
                th = th - 0.05 * 0.01 * th
                th = th - 0.05 * m_hat / (math.sqrt(v_hat) + 1e-8)
            assert st.params[i, j] == pytest.approx(th, abs=1e-12)


# -- shampoo reference ---------------------------------------------------------------


def test_shampoo_zero_gradient_keeps_theta():
    cfg = make("shampoo_ref", epsilon=1.0, grafting=False)
    st = state_for(cfg, np.ones((2, 2)))
    for _ in range(5):
        shampoo_ref_step(st, np.zeros((2, 2)), 0.1, cfg)
    assert np.array_equal(st.params, np.ones((2, 2)))
    np.testing.assert_allclose(st.shampoo_left, 0.99**5 * np.eye(2))


def test_shampoo_scalar_closed_form():
    cfg = make("shampoo_ref", epsilon=1.0, shampoo_beta2=0.5, beta1=0.0, grafting=False, shampoo_ridge=0.0)
    st = state_for(cfg, [[0.0]])
    shampoo_ref_step(st, np.ones((1, 1)), 1.0, cfg)
    assert st.shampoo_left[0, 0] == 1.0
    assert st.params[0, 0] == pytest.approx(-1.0, rel=1e-12)


def test_shampoo_matches_eigh_oracle():
    rng = np.random.default_rng(2)
    cfg = make("shampoo_ref", grafting=False, shampoo_ridge=0.0, beta1=0.0, epsilon=1e-3)
    st = state_for(cfg, np.zeros((4, 4)))
    left, right = 1e-3 * np.eye(4), 1e-3 * np.eye(4)
    for _ in range(20):
        g = rng.standard_normal((4, 4))
        before = st.params.copy()
        shampoo_ref_step(st, g, 1.0, cfg)
        left = 0.99 * left + 0.01 * g @ g.T
        right = 0.99 * right + 0.01 * g.T @ g
        expected = inv_root_eigh(left) @ g @ inv_root_eigh(right)
        np.testing.assert_allclose(before - st.params, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())


def test_shampoo_counts_inverse_roots_on_update_steps_only():
    rng = np.random.default_rng(3)
    cfg = make("shampoo_ref", precond_freq=3)
    st = state_for(cfg, np.zeros((3, 2)))
    counts = [shampoo_ref_step(st, rng.standard_normal((3, 2)), 0.1, cfg).op_counts.get("exact_inv_root", 0)
              for _ in range(7)]
    assert counts == [2, 0, 0, 2, 0, 0, 2]


# -- grafting ------------------------------------------------------------------------


def test_graft_zero_magnitude():
    theta = np.ones((1, 2))
    assert np.array_equal(graft_update(theta, np.ones((1, 2)), np.zeros((1, 2)), 0.1), theta)


def test_graft_unit_direction():
    out = graft_update(np.zeros((1, 2)), np.array([[3.0, 4.0]]), np.array([[6.0, 8.0]]), 0.1)
    np.testing.assert_allclose(out, [[-0.6, -0.8]])


def test_graft_undefined_direction():
    with pytest.raises(NumericError):
        graft_update(np.zeros((1, 2)), np.zeros((1, 2)), np.ones((1, 2)), 0.1)


def test_graft_norm_identity_random():
    rng = np.random.default_rng(4)
    theta, mj, mg = (rng.standard_normal((4, 4)) for _ in range(3))
    out = graft_update(theta, mj, mg, 0.3)
    assert np.linalg.norm(out - theta) == pytest.approx(0.3 * np.linalg.norm(mg), rel=1e-12)


# -- jorge ---------------------------------------------------------------------------


def test_jorge_first_step_is_sgd_with_unit_epsilon():
    rng = np.random.default_rng(5)
    cfg = make("jorge", epsilon=1.0, grafting=False, beta1=0.0)
    g = rng.standard_normal((3, 4))
    st = state_for(cfg, np.zeros((3, 4)))
    jorge_step(st, g, 0.2, cfg)
    # the preconditioner is updated before use, so the step is the updated L_hat G R_hat
    lhat, rhat = st.precond.left, st.precond.right
    np.testing.assert_allclose(st.params, -0.2 * lhat @ g @ rhat)


def test_jorge_identity_precond_step_equals_minus_lr_g():
    cfg = make("jorge", epsilon=1.0, grafting=False, beta1=0.0, precond_freq=10**6)
    g = np.random.default_rng(6).standard_normal((3, 4))
    st = state_for(cfg, np.zeros((3, 4)))
    st.step = 1  # next step is not an update step, so the fresh identity pair is used
    jorge_step(st, g, 0.2, cfg)
    np.testing.assert_allclose(st.params, -0.2 * g)


def test_jorge_parallel_momenta_equal_sgd_update():
    # With unit epsilon and 1x1 layers after a skipped update, the preconditioned
    # gradient stays parallel to the raw one, so grafting reproduces SGD.
    cfg_j = make("jorge", epsilon=1.0, precond_freq=10**6)
    cfg_s = make("sgd")
    sj, ss = state_for(cfg_j, [[1.0, -2.0]]), state_for(cfg_s, [[1.0, -2.0]])
    sj.step = 1
    g = np.array([[0.5, 0.25]])
    for _ in range(3):
        jorge_step(sj, g, 0.1, cfg_j)
        sgd_step(ss, g, 0.1, cfg_s)
    np.testing.assert_allclose(sj.params, ss.params, rtol=1e-14)


def test_jorge_scalar_pipeline():
    cfg = make("jorge", epsilon=1.0, grafting=False, beta1=0.0)
    st = state_for(cfg, [[0.0]])
    rep = jorge_step(st, np.ones((1, 1)), 1.0, cfg)
    # L_hat and R_hat each become 1.077722; no momentum; theta = -L G R.
    p = 2**0.25 * (1 - 0.25 + 5 / 32)
    assert st.params[0, 0] == pytest.approx(-p * p, rel=1e-14)
    assert rep.precond_report.beta2_left == 0.5
    assert rep.op_counts == {}


def test_jorge_decay_after_graft():
    cfg = make("jorge", weight_decay=0.5)
    st = state_for(cfg, [[1.0, 1.0]])
    g = np.array([[1.0, 0.0]])
    theta = st.params.copy()
    jorge_step(st, g, 0.1, cfg)
    m = 0.1 * (st.precond.left @ g @ st.precond.right)
    pre_decay = theta - 0.1 * np.linalg.norm(g) * m / np.linalg.norm(m)
    np.testing.assert_allclose(st.params, pre_decay * (1 - 0.1 * 0.5), rtol=1e-14)


def test_two_dimensional_scale_fixture():
    from fixtures.make_fixtures import scale_iterations

    fixture = json.loads((FIXTURES / "convergence.json").read_text())["scale_2d"]
    sgd = scale_iterations("sgd", fixture["sgd_best_lr"])
    jorge = scale_iterations("jorge", fixture["sgd_best_lr"])
    assert (sgd, jorge) == (fixture["sgd_iterations"], fixture["jorge_iterations"])
    assert jorge < sgd


# -- driver --------------------------------------------------------------------------


def test_optimizer_uses_schedule_and_fans_out():
    rng = np.random.default_rng(7)
    params = [rng.standard_normal((3, 2)), rng.standard_normal((1, 4))]
    grads = [rng.standard_normal((3, 2)), rng.standard_normal((1, 4))]
    cfg = OptimizerConfig("jorge", ScheduleSpec("step_decay", 0.1, 4, (2,)))
    serial, threaded = Optimizer(cfg, params), Optimizer(cfg, params, max_workers=2)
    for epoch in range(4):
        a = serial.step(grads, epoch)
        b = threaded.step(grads, epoch)
        assert a[0].lr_used == pytest.approx(0.1 if epoch < 2 else 0.01)
        assert [r.update_norm for r in a] == [r.update_norm for r in b]
    threaded.close()
    for x, y in zip(serial.params, threaded.params):
        assert np.array_equal(x, y)
    with pytest.raises(ShapeError):
        serial.step(grads[:1])


def test_optimizer_does_not_alias_inputs():
    params = [np.ones((2, 2))]
    opt = Optimizer(make("sgd"), params)
    opt.step([np.ones((2, 2))])
    assert np.array_equal(params[0], np.ones((2, 2)))
