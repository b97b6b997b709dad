"""Reduced focal loss, multi-head aggregation, and distillation loss.

Hand-computed reference values come first, then finite-difference gradient
checks, then the blending contracts of the distillation objective
(teacher-independence at alpha=0, label-independence at alpha=1,
temperature flattening, and the self-distillation fixed point).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from spoofbench import (
    ConfigError,
    DistillConfig,
    HeadWeights,
    InputError,
    MASK_ALL,
    MASK_OVERALL,
    RflConfig,
    distill_loss,
    multihead_loss,
    reduced_focal,
)
from spoofbench.heads import N_HEADS, mask_of

from helpers import gen

FD_EPS = 1e-6


def fd_logit_grad(fn, z, eps=FD_EPS):
    return (fn(z + eps) - fn(z - eps)) / (2 * eps)


# ---------------------------------------------------------------------------
# reduced focal loss
# ---------------------------------------------------------------------------

def test_rfl_hand_value_above_cutoff():
    # p_t = 0.75, gamma = 2, cutoff = 0.5: weight ((1-0.75)/0.5)^2 = 0.25
    loss, _ = reduced_focal(0.75, 1)
    assert math.isclose(loss, -0.25 * math.log(0.75), rel_tol=1e-12)
    assert math.isclose(loss, 0.07192051811294522, rel_tol=1e-12)


def test_rfl_below_cutoff_is_plain_cross_entropy():
    for p, y in ((0.3, 1), (0.8, 0)):
        loss, grad = reduced_focal(p, y)
        p_t = p if y else 1 - p
        assert p_t < 0.5
        assert math.isclose(loss, -math.log(p_t), rel_tol=1e-12)
        # below the cutoff the gradient collapses to the usual p - y
        assert math.isclose(grad, p - y, rel_tol=1e-9)


def test_rfl_zero_gamma_everywhere_cross_entropy():
    cfg = RflConfig(gamma=0.0, cutoff=0.5)
    for p in np.linspace(0.05, 0.95, 19):
        for y in (0, 1):
            loss, grad = reduced_focal(float(p), y, cfg)
            p_t = p if y else 1 - p
            assert math.isclose(loss, -math.log(p_t), rel_tol=1e-12)
            assert math.isclose(grad, p - y, rel_tol=1e-9)


def test_rfl_downweights_confident_only():
    cfg = RflConfig(gamma=2.0, cutoff=0.5)
    easy, _ = reduced_focal(0.95, 1, cfg)
    assert easy < -((1 - 0.95) / 0.5) ** 2 * math.log(0.95) + 1e-15
    # ratio of focal to plain CE shrinks as confidence grows
    ratios = []
    for p in (0.6, 0.75, 0.9, 0.99):
        loss, _ = reduced_focal(p, 1, cfg)
        ratios.append(loss / -math.log(p))
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


def test_rfl_continuous_at_default_cutoff():
    below, _ = reduced_focal(0.5 - 1e-9, 1)
    above, _ = reduced_focal(0.5 + 1e-9, 1)
    assert abs(below - above) < 1e-7


def test_rfl_gradient_matches_finite_differences_100_cases():
    g = gen(31)
    worst = 0.0
    for _ in range(100):
        cfg = RflConfig(gamma=float(g.uniform(0, 4)), cutoff=float(g.uniform(0.2, 0.9)))
        y = int(g.integers(0, 2))
        z = float(g.uniform(-2, 2))
        p_t = expit(z) if y else 1 - expit(z)
        if abs(p_t - cfg.cutoff) < 1e-4:
            continue  # the weight switch is discontinuous for cutoff != 0.5
        _, grad = reduced_focal(float(expit(z)), y, cfg)
        fd = fd_logit_grad(lambda v: reduced_focal(float(expit(v)), y, cfg)[0], z)
        denom = max(abs(grad), abs(fd), 1e-8)
        worst = max(worst, abs(grad - fd) / denom)
    assert worst < 1e-4, f"worst rfl grad error {worst}"


def test_rfl_saturated_inputs_stay_finite():
    for p in (0.0, 1.0):
        for y in (0, 1):
            loss, grad = reduced_focal(p, y)
            assert math.isfinite(loss) and math.isfinite(grad)


def test_rfl_config_validation():
    with pytest.raises(ConfigError):
        RflConfig(gamma=-1.0)
    with pytest.raises(ConfigError):
        RflConfig(cutoff=0.0)
    with pytest.raises(ConfigError):
        RflConfig(cutoff=1.5)


# ---------------------------------------------------------------------------
# multi-head aggregation
# ---------------------------------------------------------------------------

def rand_bits(g):
    visible = g.integers(0, 2, 6)
    attack = visible.any() or g.random() < 0.5
    b7 = int(attack and not visible.any())
    return tuple(int(v) for v in visible) + (b7, int(attack))


def test_multihead_equals_weighted_mean_of_singles():
    g = gen(32)
    for _ in range(50):
        z = g.uniform(-3, 3, N_HEADS)
        bits = rand_bits(g)
        wvals = tuple(float(v) for v in g.uniform(0.1, 2.0, N_HEADS))
        weights = HeadWeights(wvals)
        cfg = RflConfig(gamma=float(g.uniform(0, 3)), cutoff=0.5)
        loss, grads = multihead_loss(z, bits, MASK_ALL, weights, cfg)
        singles = [reduced_focal(float(expit(z[h])), bits[h], cfg) for h in range(N_HEADS)]
        want = sum(w * s[0] for w, s in zip(wvals, singles)) / sum(wvals)
        assert math.isclose(loss, want, rel_tol=1e-12)
        for h in range(N_HEADS):
            want_g = wvals[h] * singles[h][1] / sum(wvals)
            assert math.isclose(grads.array[h], want_g, rel_tol=1e-9, abs_tol=1e-12)


def test_multihead_single_head_mask_reduces_to_single_loss():
    g = gen(33)
    z = g.uniform(-2, 2, N_HEADS)
    bits = rand_bits(g)
    loss, grads = multihead_loss(z, bits, MASK_OVERALL)
    single_loss, single_grad = reduced_focal(float(expit(z[7])), bits[7])
    assert math.isclose(loss, single_loss, rel_tol=1e-12)
    assert math.isclose(grads.array[7], single_grad, rel_tol=1e-12)
    assert np.array_equal(grads.array[:7], np.zeros(7))


def test_multihead_inactive_heads_do_not_affect_loss():
    g = gen(34)
    z = g.uniform(-2, 2, N_HEADS)
    bits = rand_bits(g)
    mask = mask_of(2, 8)
    base, _ = multihead_loss(z, bits, mask)
    z2 = z.copy()
    z2[[0, 2, 3, 4, 5, 6]] += g.uniform(-5, 5, 6)
    moved, _ = multihead_loss(z2, bits, mask)
    assert base == moved


def test_multihead_gradient_matches_finite_differences_100_cases():
    g = gen(35)
    worst = 0.0
    for _ in range(100):
        z = g.uniform(-2, 2, N_HEADS)
        bits = rand_bits(g)
        mask = int(g.integers(1, 256))
        _, grads = multihead_loss(z, bits, mask)
        for h in range(N_HEADS):
            def at(v, h=h):
                zz = z.copy()
                zz[h] = v
                return multihead_loss(zz, bits, mask)[0]
            fd = fd_logit_grad(at, z[h])
            denom = max(abs(grads.array[h]), abs(fd), 1e-8)
            worst = max(worst, abs(grads.array[h] - fd) / denom)
    assert worst < 1e-4, f"worst multihead grad error {worst}"


def test_multihead_rejects_empty_mask_and_bad_shapes():
    bits = (0,) * 7 + (1,)
    with pytest.raises(ConfigError):
        multihead_loss(np.zeros(N_HEADS), bits, 0)
    with pytest.raises(InputError):
        multihead_loss(np.zeros(4), bits)
    with pytest.raises(InputError):
        multihead_loss(np.zeros(N_HEADS), (1, 0))


def test_head_weights_validation():
    with pytest.raises(ConfigError):
        HeadWeights((1.0,) * 4)
    with pytest.raises(ConfigError):
        HeadWeights((-1.0,) + (1.0,) * 7)
    with pytest.raises(ConfigError):
        HeadWeights((0.0,) * N_HEADS)
    with pytest.raises(ConfigError):
        multihead_loss(np.zeros(N_HEADS), (0,) * 7 + (1,), mask_of(1), HeadWeights((0.0,) + (1.0,) * 7))


# ---------------------------------------------------------------------------
# distillation loss
# ---------------------------------------------------------------------------

def soft_term(zs, zt, tau):
    ps, pt = expit(zs / tau), expit(zt / tau)
    return -(pt * math.log(ps) + (1 - pt) * math.log(1 - ps))


def test_distill_alpha_zero_ignores_teacher():
    g = gen(41)
    zs = g.uniform(-2, 2, N_HEADS)
    bits = rand_bits(g)
    cfg = DistillConfig(alpha=0.0, tau=3.0)
    l1, g1 = distill_loss(zs, g.uniform(-2, 2, N_HEADS), bits, cfg)
    l2, g2 = distill_loss(zs, g.uniform(-2, 2, N_HEADS), bits, cfg)
    assert l1 == l2
    assert np.array_equal(g1.array, g2.array)
    # and equals the plain supervised log-loss averaged over heads
    want = np.mean([-math.log(p if y else 1 - p) for p, y in zip(expit(zs), bits)])
    assert math.isclose(l1, want, rel_tol=1e-12)


def test_distill_alpha_one_ignores_labels():
    g = gen(42)
    zs, zt = g.uniform(-2, 2, N_HEADS), g.uniform(-2, 2, N_HEADS)
    cfg = DistillConfig(alpha=1.0, tau=2.0)
    l1, g1 = distill_loss(zs, zt, rand_bits(g), cfg)
    l2, g2 = distill_loss(zs, zt, rand_bits(g), cfg)
    l3, g3 = distill_loss(zs, zt, None, cfg)  # no label needed at alpha=1
    assert l1 == l2 == l3
    assert np.array_equal(g1.array, g3.array)


def test_distill_temperature_flattening_limit():
    g = gen(43)
    zs, zt = g.uniform(-2, 2, N_HEADS), g.uniform(-2, 2, N_HEADS)
    cfg = DistillConfig(alpha=1.0, tau=1e6)
    loss, grads = distill_loss(zs, zt, None, cfg)
    # both tempered probabilities collapse to 1/2: loss -> ln 2, grads -> 0
    assert abs(loss - math.log(2)) < 1e-5
    assert np.max(np.abs(grads.array)) < 1e-6


def test_distill_self_distillation_gradient_vanishes():
    g = gen(44)
    z = g.uniform(-2, 2, N_HEADS)
    for tau in (0.5, 1.0, 4.0):
        _, grads = distill_loss(z, z.copy(), None, DistillConfig(alpha=1.0, tau=tau))
        assert np.max(np.abs(grads.array)) < 1e-12


def test_distill_blends_soft_and_supervised():
    g = gen(45)
    zs, zt = g.uniform(-2, 2, N_HEADS), g.uniform(-2, 2, N_HEADS)
    bits = rand_bits(g)
    alpha, tau = 0.3, 2.5
    loss, _ = distill_loss(zs, zt, bits, DistillConfig(alpha=alpha, tau=tau))
    want = np.mean(
        [
            alpha * soft_term(zs[h], zt[h], tau)
            - (1 - alpha) * math.log(expit(zs[h]) if bits[h] else 1 - expit(zs[h]))
            for h in range(N_HEADS)
        ]
    )
    assert math.isclose(loss, want, rel_tol=1e-12)


def test_distill_unlabeled_sample_keeps_only_soft_term():
    g = gen(46)
    zs, zt = g.uniform(-2, 2, N_HEADS), g.uniform(-2, 2, N_HEADS)
    cfg = DistillConfig(alpha=0.4, tau=2.0)
    loss, _ = distill_loss(zs, zt, None, cfg, unlabeled=True)
    want = 0.4 * np.mean([soft_term(zs[h], zt[h], 2.0) for h in range(N_HEADS)])
    assert math.isclose(loss, want, rel_tol=1e-12)


def test_distill_missing_label_requires_unlabeled_flag():
    zs, zt = np.zeros(N_HEADS), np.zeros(N_HEADS)
    with pytest.raises(InputError):
        distill_loss(zs, zt, None, DistillConfig(alpha=0.5))
    # explicit opt-in works
    loss, _ = distill_loss(zs, zt, None, DistillConfig(alpha=0.5), unlabeled=True)
    assert math.isfinite(loss)


def test_distill_supervised_rfl_switch_changes_only_supervised_term():
    g = gen(47)
    zs, zt = g.uniform(-2, 2, N_HEADS), g.uniform(-2, 2, N_HEADS)
    bits = rand_bits(g)
    rfl = RflConfig(gamma=2.0, cutoff=0.5)
    plain, _ = distill_loss(zs, zt, bits, DistillConfig(alpha=0.0, tau=2.0))
    focal, _ = distill_loss(zs, zt, bits, DistillConfig(alpha=0.0, tau=2.0), supervised_rfl=rfl)
    want = np.mean(
        [reduced_focal(float(expit(zs[h])), bits[h], rfl)[0] for h in range(N_HEADS)]
    )
    assert math.isclose(focal, want, rel_tol=1e-12)
    assert focal <= plain + 1e-12  # focal reweighting never increases log-loss
    # soft term unchanged by the switch
    s1, _ = distill_loss(zs, zt, bits, DistillConfig(alpha=1.0, tau=2.0))
    s2, _ = distill_loss(zs, zt, bits, DistillConfig(alpha=1.0, tau=2.0), supervised_rfl=rfl)
    assert s1 == s2


def test_distill_masked_heads_carry_no_gradient():
    g = gen(48)
    zs, zt = g.uniform(-2, 2, N_HEADS), g.uniform(-2, 2, N_HEADS)
    bits = rand_bits(g)
    _, grads = distill_loss(zs, zt, bits, mask=MASK_OVERALL)
    assert np.array_equal(grads.array[:7], np.zeros(7))
    assert grads.array[7] != 0.0


def test_distill_gradient_matches_finite_differences_100_cases():
    g = gen(49)
    worst = 0.0
    for case in range(100):
        zs = g.uniform(-2, 2, N_HEADS)
        zt = g.uniform(-2, 2, N_HEADS)
        bits = rand_bits(g)
        cfg = DistillConfig(alpha=float(g.uniform(0, 1)), tau=float(g.uniform(0.5, 5)))
        rfl = RflConfig(gamma=1.5, cutoff=0.5) if case % 3 == 0 else None
        unl = case % 4 == 0
        label = None if unl else bits
        _, grads = distill_loss(zs, zt, label, cfg, supervised_rfl=rfl, unlabeled=unl)
        for h in range(N_HEADS):
            def at(v, h=h):
                zz = zs.copy()
                zz[h] = v
                return distill_loss(zz, zt, label, cfg, supervised_rfl=rfl, unlabeled=unl)[0]
            fd = fd_logit_grad(at, zs[h])
            denom = max(abs(grads.array[h]), abs(fd), 1e-8)
            worst = max(worst, abs(grads.array[h] - fd) / denom)
    assert worst < 1e-4, f"worst distill grad error {worst}"


def test_distill_config_validation():
    with pytest.raises(ConfigError):
        DistillConfig(alpha=-0.1)
    with pytest.raises(ConfigError):
        DistillConfig(alpha=1.1)
    with pytest.raises(ConfigError):
        DistillConfig(tau=0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_losses_finite_for_any_finite_logits(seed):
    g = np.random.default_rng(seed)
    z = g.uniform(-40, 40, N_HEADS)  # deep saturation must stay finite
    bits = rand_bits(g)
    loss, grads = multihead_loss(z, bits)
    assert math.isfinite(loss) and np.isfinite(grads.array).all()
    dloss, dgrads = distill_loss(z, -z, bits)
    assert math.isfinite(dloss) and np.isfinite(dgrads.array).all()
