import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftfusion.core import Batch, FusionWeight, Sample, seed_rng
from driftfusion.model import (
    ModelState,
    batch_loss,
    bce_loss,
    fused_prediction,
    gradients,
    modality_logit,
    predict,
    sgd_step,
    unimodal_error_counts,
    unimodal_error_estimates,
)


def state(w1, b1, w2, b2, alpha=0.5, eta=0.1, level="logit"):
    return ModelState(np.asarray(w1, float), b1, np.asarray(w2, float), b2, FusionWeight.analytic(alpha), eta, level)


def random_state(rng, d1=3, d2=4, level="logit"):
    return state(rng.normal(size=d1), rng.normal(), rng.normal(size=d2), rng.normal(), rng.uniform(), 0.1, level)


def random_batch(rng, n=1, d1=3, d2=4):
    return Batch(rng.normal(size=(n, d1)), rng.normal(size=(n, d2)), rng.integers(0, 2, n))


def test_zero_weights_give_zero_logit():
    s = ModelState.zeros(2, 2, FusionWeight.analytic(0.5), 0.1)
    assert modality_logit(s, Sample(np.array([3.0, -1.0]), np.array([1.0, 1.0]), 1), 1) == 0.0


def test_logit_dot_product():
    s = state([1, 0], 0.0, [0, 0], 0.0)
    assert modality_logit(s, Sample(np.array([0.5, 9.0]), np.zeros(2), 0), 1) == 0.5


def test_logit_matches_loop_oracle():
    rng = seed_rng(3)
    for _ in range(20):
        s = random_state(rng)
        b = random_batch(rng, 5)
        z = modality_logit(s, b, 2)
        for i in range(5):
            naive = sum(s.w2[j] * b.x2[i, j] for j in range(4)) + s.b2
            assert z[i] == pytest.approx(naive, abs=1e-12)


def test_logit_rejects_wrong_dimension_and_modality():
    s = state([1, 0], 0.0, [0, 0], 0.0)
    with pytest.raises(ValueError):
        modality_logit(s, Sample(np.zeros(3), np.zeros(2), 0), 1)
    with pytest.raises(ValueError):
        modality_logit(s, Sample(np.zeros(2), np.zeros(2), 0), 3)


def _two_logit_state(z1, z2, alpha):
    # unit features so the biases are the logits
    return state([0.0], z1, [0.0], z2, alpha), Sample(np.zeros(1), np.zeros(1), 1)


def test_fusion_boundary_and_worked_values():
    s, x = _two_logit_state(1.3, -0.4, 1.0)
    assert fused_prediction(s, x)[0] == 1.3
    s, x = _two_logit_state(2.0, -2.0, 0.5)
    z, p = fused_prediction(s, x)
    assert z == 0.0 and p == 0.5
    s, x = _two_logit_state(1.0, 0.0, 0.47)
    assert fused_prediction(s, x)[0] == pytest.approx(0.47, abs=1e-15)


def test_probability_exactly_half_predicts_positive():
    s, x = _two_logit_state(2.0, -2.0, 0.5)
    assert predict(s, x)[0] == 1


@given(
    z1=st.floats(-30, 30), z2=st.floats(-30, 30), a=st.floats(0, 1),
    level=st.sampled_from(["logit", "probability"]),
)
def test_fused_logit_interpolates(z1, z2, a, level):
    s, x = _two_logit_state(z1, z2, a)
    s.fusion_level = level
    z, p = fused_prediction(s, x)
    if level == "logit":
        assert min(z1, z2) - 1e-12 <= z <= max(z1, z2) + 1e-12
    assert 0.0 <= p <= 1.0


def test_bce_worked_values():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2))
    assert bce_loss(0.9, 0) == pytest.approx(2.302585092994046, rel=1e-12)
    assert bce_loss(1.0, 1) == pytest.approx(0.0, abs=1e-11)
    assert bce_loss(0.0, 0) == pytest.approx(0.0, abs=1e-11)
    for bad in (-0.1, 1.1, float("nan")):
        with pytest.raises(ValueError):
            bce_loss(bad, 1)


def test_batch_loss_matches_bce_of_prediction():
    rng = seed_rng(4)
    for level in ("logit", "probability"):
        s, b = random_state(rng, level=level), random_batch(rng, 6)
        _, p = fused_prediction(s, b)
        assert batch_loss(s, b) == pytest.approx(float(np.mean(bce_loss(p, b.y))), rel=1e-9)


def _finite_difference(s, b, h=1e-6):
    theta = s.params()
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (batch_loss(s.with_params(tp), b) - batch_loss(s.with_params(tm), b)) / (2 * h)
    return g


def _flat(g):
    return np.concatenate([g["w1"], [g["b1"]], g["w2"], [g["b2"]]])


@pytest.mark.parametrize("level", ["logit", "probability"])
def test_gradient_matches_finite_differences(level):
    rng = seed_rng(5)
    for _ in range(50):
        s, b = random_state(rng, level=level), random_batch(rng, int(rng.integers(1, 5)))
        ga, gn = _flat(gradients(s, b)), _finite_difference(s, b)
        rel = np.linalg.norm(ga - gn) / max(np.linalg.norm(ga) + np.linalg.norm(gn), 1e-12)
        assert rel < 1e-5


def test_gradient_wrt_w1_scales_with_alpha_at_fixed_fused_logit():
    # z held fixed by zeroing modality 2 and compensating the bias of modality 1
    x = Sample(np.array([1.0, -2.0]), np.array([0.3]), 1)
    s1 = state([0.2, 0.1], 0.4, [0.0], 0.0, alpha=0.3)
    z_fixed = fused_prediction(s1, x)[0]
    s2 = state([0.1, 0.05], 0.2, [0.0], 0.0, alpha=0.6)
    assert fused_prediction(s2, x)[0] == pytest.approx(z_fixed)
    g1, g2 = gradients(s1, x)["w1"], gradients(s2, x)["w1"]
    assert np.allclose(g2, 2.0 * g1, rtol=1e-12)


def test_zero_learning_rate_leaves_state_unchanged():
    rng = seed_rng(6)
    s = random_state(rng)
    s.eta = 0.0
    out = sgd_step(s, random_batch(rng, 8))
    assert np.array_equal(out.params(), s.params())
    assert out is not s


def test_sgd_step_does_not_touch_fusion_weight():
    rng = seed_rng(7)
    s = random_state(rng)
    out = sgd_step(s, random_batch(rng, 8))
    assert out.fusion == s.fusion and out.eta == s.eta
    with pytest.raises(ValueError):
        sgd_step(ModelState.zeros(3, 4, FusionWeight.analytic(0.5), -1.0), random_batch(rng))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_update_raises():
    s = state([1e308], 0.0, [0.0], 0.0, eta=1e308)
    b = Batch(np.array([[1e308]]), np.array([[0.0]]), np.array([0]))
    with pytest.raises(FloatingPointError):
        sgd_step(s, b)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), eta=st.floats(1e-4, 1e-2), alpha=st.floats(0.05, 0.95))
def test_loss_nonincreasing_on_fixed_separable_batch(seed, eta, alpha):
    rng = seed_rng(seed)
    w = rng.normal(size=6)
    x = rng.normal(size=(32, 6))
    y = (x @ w >= 0).astype(np.int64)
    b = Batch(x[:, :3], x[:, 3:], y)
    s = ModelState.zeros(3, 3, FusionWeight.analytic(alpha), eta)
    prev = batch_loss(s, b)
    for _ in range(50):
        s = sgd_step(s, b)
        cur = batch_loss(s, b)
        assert cur <= prev + 1e-12
        prev = cur


def test_unimodal_estimates_hand_counted():
    # modality 1 scores sign(x1), modality 2 scores sign(x2)
    s = state([1.0], 0.0, [1.0], 0.0)
    y = np.array([1] * 10)
    x1 = np.array([[-1.0]] * 8 + [[1.0]] * 2)
    x2 = np.ones((10, 1))
    assert unimodal_error_estimates(s, Batch(x1, x2, y)) == (0.8, 0.0)
    assert unimodal_error_counts(s, Batch(x1, x2, y)) == (8, 0, 10)


def test_unimodal_estimates_symmetric_when_modalities_identical():
    rng = seed_rng(8)
    x = rng.normal(size=(20, 2))
    w = rng.normal(size=2)
    s = state(w, 0.1, w, 0.1)
    e1, e2 = unimodal_error_estimates(s, Batch(x, x.copy(), rng.integers(0, 2, 20)))
    assert e1 == e2
    samples = Batch(x, x, (x @ w + 0.1 >= 0).astype(np.int64)).samples()
    assert unimodal_error_estimates(s, samples)[0] == 0.0
    with pytest.raises(ValueError):
        unimodal_error_estimates(s, [])
