import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgemf.errors import IndexOutOfRange, LabelOutOfRange, ShapeMismatch
from kgemf.losses import nssa_loss, pairwise_loss, pointwise_loss, setwise_ce

finite_floats = st.floats(-20, 20, allow_nan=False)


def fd_check(fn, x0, analytic, eps=1e-6, rel=1e-6):
    """Central finite differences of a scalar fn over a flat array."""
    x0 = np.asarray(x0, dtype=np.float64)
    for i in range(x0.size):
        xp = x0.copy()
        xp.flat[i] += eps
        xm = x0.copy()
        xm.flat[i] -= eps
        fd = (fn(xp) - fn(xm)) / (2 * eps)
        assert fd == pytest.approx(analytic.flat[i], rel=rel, abs=1e-9)


# ---------------------------------------------------------------- margin ranking


def test_margin_at_boundary():
    value, _, _ = pairwise_loss([1.0], [0.0], margin=1.0)
    assert value == 0.0


def test_margin_violated():
    value, d_pos, d_neg = pairwise_loss([0.0], [0.0], margin=1.0)
    assert value == 1.0
    assert d_pos[0] == -1.0
    assert d_neg[0] == 1.0


def test_margin_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        pairwise_loss([0.0, 1.0], [0.0], margin=1.0)


def test_margin_gradient_fd():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=8)
    neg = rng.normal(size=8)
    value, d_pos, d_neg = pairwise_loss(pos, neg, margin=0.5)
    fd_check(lambda p: pairwise_loss(p, neg, 0.5)[0], pos, d_pos)
    fd_check(lambda n: pairwise_loss(pos, n, 0.5)[0], neg, d_neg)


# ---------------------------------------------------------------- pointwise


def test_bce_ln2():
    value, _ = pointwise_loss("bce", [0.0], [1.0])
    assert value == pytest.approx(np.log(2))


def test_bce_large_logit_stable():
    value, _ = pointwise_loss("bce", [100.0], [1.0])
    assert 0.0 <= value < 1e-40


def test_bce_label_range():
    with pytest.raises(LabelOutOfRange):
        pointwise_loss("bce", [0.0], [1.5])


def test_softplus_ln2_both_labels():
    for label in (-1.0, 1.0):
        value, _ = pointwise_loss("softplus", [0.0], [label])
        assert value == pytest.approx(np.log(2))


def test_softplus_bad_label():
    with pytest.raises(LabelOutOfRange):
        pointwise_loss("softplus", [0.0], [0.5])


def test_mse_zero_at_target():
    value, grad = pointwise_loss("mse", [0.7], [0.7])
    assert value == 0.0
    assert grad[0] == 0.0


@pytest.mark.parametrize("kind,labels", [
    ("bce", [1.0, 0.0, 1.0, 0.3]),
    ("mse", [1.0, 0.0, -2.0, 0.5]),
    ("softplus", [1.0, -1.0, 1.0, -1.0]),
])
def test_pointwise_gradient_fd(kind, labels):
    rng = np.random.default_rng(1)
    scores = rng.normal(size=4)
    _, grad = pointwise_loss(kind, scores, labels)
    fd_check(lambda s: pointwise_loss(kind, s, labels)[0], scores, grad)


# ---------------------------------------------------------------- cross entropy


def test_ce_uniform():
    value, _ = setwise_ce([1.0, 1.0, 1.0, 1.0], 0)
    assert value == pytest.approx(np.log(4))


def test_ce_dominant_true():
    value, _ = setwise_ce([50.0, 0.0, 0.0], 0)
    assert value < 1e-20


def test_ce_gradient_sums_to_zero():
    _, grad = setwise_ce([0.3, -1.2, 4.0], 2)
    assert grad.sum() == pytest.approx(0.0, abs=1e-12)


def test_ce_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        setwise_ce([0.0, 1.0], 2)


def test_ce_gradient_fd():
    rng = np.random.default_rng(2)
    row = rng.normal(size=6)
    _, grad = setwise_ce(row, 3)
    fd_check(lambda s: setwise_ce(s, 3)[0], row, grad)


# ---------------------------------------------------------------- NSSA


def test_nssa_single_negative_weight_one():
    def sigma(x):
        return 1.0 / (1.0 + np.exp(-x))

    value, _, _ = nssa_loss([0.5], [[-0.3]], margin=1.0, temperature=1.0)
    expected = -np.log(sigma(1.0 + 0.5)) - np.log(sigma(0.3 - 1.0))
    assert value == pytest.approx(expected)


def test_nssa_small_temperature_uniform_weights():
    # weights approach 1/k as the temperature goes to 0
    neg = np.array([[1.0, -2.0, 0.5, 3.0]])
    logits = 1e-9 * neg
    w = np.exp(logits - logits.max())
    w /= w.sum()
    np.testing.assert_allclose(w, 0.25, atol=1e-8)
    value, _, _ = nssa_loss([0.0], neg, margin=1.0, temperature=1e-9)
    assert np.isfinite(value)


def test_nssa_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nssa_loss([0.0, 1.0], [[0.0]], margin=1.0, temperature=1.0)


def test_nssa_gradient_fd_weight_frozen():
    """Gradients must match finite differences of the weight-frozen objective."""
    rng = np.random.default_rng(3)
    pos = rng.normal(size=5)
    neg = rng.normal(size=(5, 4))
    margin, alpha = 1.0, 0.7

    logits = alpha * neg
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)

    def frozen(p, n):
        def logsig(x):
            return np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))

        per = -logsig(margin + p) - (w * logsig(-n - margin)).sum(axis=1)
        return per.mean()

    value, d_pos, d_neg = nssa_loss(pos, neg, margin, alpha)
    assert value == pytest.approx(frozen(pos, neg))
    fd_check(lambda p: frozen(p, neg), pos, d_pos)
    fd_check(lambda n: frozen(pos, n.reshape(5, 4)), neg.reshape(-1), d_neg)


# ---------------------------------------------------------------- shared properties


@given(st.lists(finite_floats, min_size=1, max_size=10))
@settings(max_examples=50, deadline=None)
def test_losses_finite_and_nonnegative(scores):
    s = np.array(scores)
    ones = np.ones_like(s)
    for kind in ("bce", "mse"):
        value, _ = pointwise_loss(kind, s, ones * 0.0)
        assert np.isfinite(value) and value >= 0.0
    value, _ = pointwise_loss("softplus", s, ones)
    assert np.isfinite(value) and value >= 0.0
    value, _, _ = pairwise_loss(s, -s, margin=1.0)
    assert np.isfinite(value) and value >= 0.0
    value, _ = setwise_ce(s, 0)
    assert np.isfinite(value) and value >= 0.0
    value, _, _ = nssa_loss(s, np.stack([s, -s], axis=1), margin=1.0, temperature=1.0)
    assert np.isfinite(value) and value >= 0.0


@given(st.lists(finite_floats, min_size=1, max_size=10))
@settings(max_examples=50, deadline=None)
def test_sum_equals_mean_times_size(scores):
    s = np.array(scores)
    y = (s > 0).astype(float)
    v_mean, _ = pointwise_loss("bce", s, y, "mean")
    v_sum, _ = pointwise_loss("bce", s, y, "sum")
    assert v_sum == pytest.approx(v_mean * s.size, rel=1e-12, abs=1e-12)
    v_mean, _, _ = pairwise_loss(s, -s, 1.0, "mean")
    v_sum, _, _ = pairwise_loss(s, -s, 1.0, "sum")
    assert v_sum == pytest.approx(v_mean * s.size, rel=1e-12, abs=1e-12)
