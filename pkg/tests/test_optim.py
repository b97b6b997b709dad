"""AdamW optimizer: hand-stepped references and decoupled decay semantics."""

import math

import numpy as np
import pytest

from spoofbench import (
    AdamWConfig,
    ConfigError,
    DimensionError,
    InputError,
    Tensor,
    adamw_step,
    init_state,
)
from spoofbench.optim import load_state, save_state

from helpers import gen


def reference_adamw(thetas, grad_fn, cfg, steps):
    """Straightforward textbook loop, independent of the package internals."""
    theta = {k: v.copy() for k, v in thetas.items()}
    m = {k: np.zeros_like(v) for k, v in thetas.items()}
    v = {k: np.zeros_like(vv) for k, vv in thetas.items()}
    for t in range(1, steps + 1):
        grads = grad_fn(theta, t)
        for k in theta:
            m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * grads[k]
            v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * grads[k] ** 2
            m_hat = m[k] / (1 - cfg.beta1**t)
            v_hat = v[k] / (1 - cfg.beta2**t)
            theta[k] = (
                theta[k]
                - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
                - cfg.lr * cfg.weight_decay * theta[k]
            )
    return theta


def test_single_step_hand_value():
    # constant gradient 1 at t=1: m_hat = v_hat = 1, step = lr / (1 + eps)
    cfg = AdamWConfig(lr=0.1, weight_decay=0.0)
    params = {"w": Tensor([2.0])}
    grads = {"w": Tensor([1.0])}
    new, state = adamw_step(params, grads, init_state(params), cfg)
    want = 2.0 - 0.1 / (1.0 + cfg.eps)
    assert math.isclose(new["w"].item(), want, rel_tol=1e-15)
    assert state.t == 1


def test_first_step_size_is_lr_regardless_of_grad_scale():
    # bias correction makes |step| ~ lr at t=1 for any constant gradient
    cfg = AdamWConfig(lr=0.05, weight_decay=0.0)
    for scale in (1e-4, 1.0, 1e4):
        params = {"w": Tensor([0.0])}
        grads = {"w": Tensor([scale])}
        new, _ = adamw_step(params, grads, init_state(params), cfg)
        assert math.isclose(abs(new["w"].item()), 0.05, rel_tol=1e-3)


def test_five_steps_match_reference_loop():
    g = gen(51)
    shapes = {"a": (3, 2), "b": (4,)}
    params = {k: Tensor(g.uniform(-1, 1, s)) for k, s in shapes.items()}
    fixed_grads = [{k: g.uniform(-1, 1, s) for k, s in shapes.items()} for _ in range(5)]
    cfg = AdamWConfig(lr=0.01, weight_decay=0.02)

    state = init_state(params)
    cur = params
    for step_grads in fixed_grads:
        cur, state = adamw_step(cur, {k: Tensor(v) for k, v in step_grads.items()}, state, cfg)

    want = reference_adamw(
        {k: v.array for k, v in params.items()},
        lambda _, t: fixed_grads[t - 1],
        cfg,
        5,
    )
    for k in shapes:
        assert np.max(np.abs(cur[k].array - want[k])) < 1e-12


def test_weight_decay_is_decoupled_from_gradient():
    # zero gradient: the only motion is the multiplicative decay lr*wd*theta
    cfg = AdamWConfig(lr=0.1, weight_decay=0.5)
    params = {"w": Tensor([4.0, -2.0])}
    new, _ = adamw_step(params, {"w": Tensor([0.0, 0.0])}, init_state(params), cfg)
    assert np.allclose(new["w"].array, np.array([4.0, -2.0]) * (1 - 0.1 * 0.5), atol=1e-15)


def test_zero_decay_reduces_to_adam():
    g = gen(52)
    params = {"w": Tensor(g.uniform(-1, 1, 6))}
    cfg = AdamWConfig(lr=0.02, weight_decay=0.0)
    grads_seq = [g.uniform(-1, 1, 6) for _ in range(3)]
    cur, state = params, init_state(params)
    for ga in grads_seq:
        cur, state = adamw_step(cur, {"w": Tensor(ga)}, state, cfg)
    want = reference_adamw({"w": params["w"].array}, lambda _, t: {"w": grads_seq[t - 1]}, cfg, 3)
    assert np.max(np.abs(cur["w"].array - want["w"])) < 1e-12


def test_step_is_pure():
    params = {"w": Tensor([1.0])}
    grads = {"w": Tensor([0.5])}
    state0 = init_state(params)
    adamw_step(params, grads, state0, AdamWConfig(lr=0.1))
    assert params["w"].item() == 1.0
    assert state0.t == 0
    assert state0.m["w"].item() == 0.0


def test_key_mismatch_rejected():
    params = {"w": Tensor([1.0])}
    with pytest.raises(InputError):
        adamw_step(params, {"x": Tensor([1.0])}, init_state(params), AdamWConfig(lr=0.1))


def test_shape_mismatch_names_parameter():
    params = {"w": Tensor([1.0, 2.0])}
    with pytest.raises(DimensionError) as e:
        adamw_step(params, {"w": Tensor([1.0])}, init_state(params), AdamWConfig(lr=0.1))
    assert "'w'" in str(e.value)


def test_config_validation():
    with pytest.raises(ConfigError):
        AdamWConfig(lr=0.0)
    with pytest.raises(ConfigError):
        AdamWConfig(beta1=1.0)
    with pytest.raises(ConfigError):
        AdamWConfig(beta2=-0.1)
    with pytest.raises(ConfigError):
        AdamWConfig(eps=0.0)
    with pytest.raises(ConfigError):
        AdamWConfig(weight_decay=-0.01)


def test_defaults_match_documented_values():
    cfg = AdamWConfig()
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay) == (
        1e-6,
        0.9,
        0.999,
        1e-8,
        0.01,
    )


def test_state_round_trip_bitwise(tmp_path):
    g = gen(53)
    params = {"a": Tensor(g.uniform(-1, 1, (2, 3))), "b": Tensor(g.uniform(-1, 1, 4))}
    cur, state = params, init_state(params)
    for _ in range(3):
        grads = {k: Tensor(g.uniform(-1, 1, v.shape)) for k, v in cur.items()}
        cur, state = adamw_step(cur, grads, state, AdamWConfig(lr=0.01))
    path = str(tmp_path / "opt.state")
    save_state(state, path)
    back = load_state(path)
    assert back.t == state.t
    for k in params:
        assert back.m[k].array.tobytes() == state.m[k].array.tobytes()
        assert back.v[k].array.tobytes() == state.v[k].array.tobytes()
