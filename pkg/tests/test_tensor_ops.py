"""Oracle and contract tests for the autodiff tensor ops."""

import math

import numpy as np
import pytest

from soundsight import numerics as nm


def test_softmax_uniform_oracle():
    # exp(0) = 1 exactly, so a length-4 zero vector must give exactly 0.25 each
    out = nm.softmax(nm.Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, np.full(4, 0.25))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 7)) * 10.0
    out = nm.softmax(nm.Tensor(x), axis=-1)
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(out.data > 0)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5))
    a = nm.softmax(nm.Tensor(x)).data
    b = nm.softmax(nm.Tensor(x + 123.0)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_softmax_extreme_logits_stay_finite():
    x = np.array([[1e4, 0.0, -1e4]])
    out = nm.softmax(nm.Tensor(x)).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)


def test_cross_entropy_uniform_oracle():
    # all-zero logits over 1024 classes: loss = ln(1024) ~= 6.9315
    logits = nm.Tensor(np.zeros((5, 1024)))
    targets = np.array([0, 3, 17, 900, 1023])
    loss = nm.cross_entropy(logits, targets)
    assert abs(loss.item() - math.log(1024)) < 1e-12
    assert abs(loss.item() - 6.9315) < 1e-4


def test_cross_entropy_reduction_none_matches_mean():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(6, 9))
    targets = rng.integers(0, 9, size=6)
    per = nm.cross_entropy(nm.Tensor(logits), targets, reduction="none")
    mean = nm.cross_entropy(nm.Tensor(logits), targets, reduction="mean")
    assert per.shape == (6,)
    assert abs(per.data.mean() - mean.item()) < 1e-12


def test_cross_entropy_label_smoothing_mixes_uniform():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(4, 8))
    targets = rng.integers(0, 8, size=4)
    eps = 0.1
    logp = np.log(nm.softmax(nm.Tensor(logits)).data)
    hard = -logp[np.arange(4), targets]
    uniform = -logp.mean(axis=1)
    expected = ((1.0 - eps) * hard + eps * uniform).mean()
    got = nm.cross_entropy(nm.Tensor(logits), targets, label_smoothing=eps)
    np.testing.assert_allclose(got.item(), expected, rtol=1e-12)


def test_cross_entropy_rejects_bad_targets():
    logits = nm.Tensor(np.zeros((2, 4)))
    with pytest.raises(Exception):
        nm.cross_entropy(logits, np.array([0, 4]))


def test_shape_mismatch_names_op_and_shapes():
    a = nm.Tensor(np.zeros((2, 3)))
    b = nm.Tensor(np.zeros((4, 5)))
    with pytest.raises(nm.ShapeMismatch) as exc:
        nm.matmul(a, b)
    msg = str(exc.value)
    assert "matmul" in msg
    assert "(2, 3)" in msg and "(4, 5)" in msg


def test_add_shape_mismatch_rejected():
    with pytest.raises(nm.ShapeMismatch) as exc:
        nm.add(nm.Tensor(np.zeros((2, 3))), nm.Tensor(np.zeros((7,))))
    assert "add" in str(exc.value)


def test_nonfinite_forward_rejected():
    with np.errstate(over="ignore"), pytest.raises(nm.NonFiniteError):
        nm.exp(nm.Tensor(np.array([1000.0])))


def test_nonfinite_check_can_be_disabled():
    prev = nm.set_check_finite(False)
    try:
        with np.errstate(over="ignore"):
            out = nm.exp(nm.Tensor(np.array([1000.0])))
        assert np.isinf(out.data[0])
    finally:
        nm.set_check_finite(prev)


def test_no_grad_records_no_graph():
    x = nm.Tensor(np.ones(3), requires_grad=True)
    with nm.no_grad():
        y = nm.mul(x, 2.0)
    assert not y.requires_grad
    z = nm.mul(x, 2.0)
    assert z.requires_grad


def test_grad_accumulates_across_backward_calls():
    x = nm.Tensor(np.array([2.0]), requires_grad=True)
    nm.sum_(nm.mul(x, 3.0)).backward()
    first = x.grad.copy()
    nm.sum_(nm.mul(x, 3.0)).backward()
    np.testing.assert_allclose(x.grad, 2.0 * first)
    x.zero_grad()
    assert x.grad is None


def test_gelu_known_values():
    # exact-erf GELU: gelu(0) = 0, gelu(x) + gelu(-x) = x
    x = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
    out = nm.gelu(nm.Tensor(x)).data
    expected = x * 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))
    np.testing.assert_allclose(out, expected, atol=1e-15)
    assert out[2] == 0.0


def test_layer_norm_standardizes_rows():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 16)) * 5.0 + 2.0
    gain = nm.Tensor(np.ones(16))
    bias = nm.Tensor(np.zeros(16))
    out = nm.layer_norm(nm.Tensor(x), gain, bias).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


def test_layer_norm_applies_gain_and_bias():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 8))
    g = rng.normal(size=8)
    b = rng.normal(size=8)
    base = nm.layer_norm(nm.Tensor(x), nm.Tensor(np.ones(8)), nm.Tensor(np.zeros(8))).data
    out = nm.layer_norm(nm.Tensor(x), nm.Tensor(g), nm.Tensor(b)).data
    np.testing.assert_allclose(out, base * g + b, atol=1e-12)


def test_l2_normalize_unit_rows():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(4, 9))
    out = nm.l2_normalize(nm.Tensor(x)).data
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-12)


def test_l2_normalize_zero_row_stays_finite():
    out = nm.l2_normalize(nm.Tensor(np.zeros((1, 5)))).data
    assert np.all(np.isfinite(out))


def test_embedding_gathers_rows():
    table = nm.Tensor(np.arange(12.0).reshape(4, 3))
    ids = np.array([[0, 3], [2, 2]])
    out = nm.embedding(table, ids)
    assert out.shape == (2, 2, 3)
    np.testing.assert_array_equal(out.data[0, 1], table.data[3])
    np.testing.assert_array_equal(out.data[1, 0], table.data[2])


def test_embedding_rejects_out_of_range_ids():
    table = nm.Tensor(np.zeros((4, 3)))
    with pytest.raises(Exception):
        nm.embedding(table, np.array([0, 4]))


def test_matmul_batched_matches_numpy():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(2, 3, 4))
    b = rng.normal(size=(2, 4, 5))
    out = nm.matmul(nm.Tensor(a), nm.Tensor(b)).data
    np.testing.assert_allclose(out, a @ b, atol=1e-12)


def test_reshape_transpose_roundtrip():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 3, 4))
    t = nm.transpose(nm.Tensor(x), (1, 0, 2))
    assert t.shape == (3, 2, 4)
    r = nm.reshape(t, (6, 4))
    back = nm.transpose(nm.reshape(r, (3, 2, 4)), (1, 0, 2))
    np.testing.assert_array_equal(back.data, x)


def test_concat_take_narrow():
    a = nm.Tensor(np.arange(6.0).reshape(2, 3))
    b = nm.Tensor(np.arange(6.0, 12.0).reshape(2, 3))
    cat = nm.concat([a, b], axis=0)
    assert cat.shape == (4, 3)
    picked = nm.take(cat, np.array([3, 0]), axis=0)
    np.testing.assert_array_equal(picked.data[0], b.data[1])
    np.testing.assert_array_equal(picked.data[1], a.data[0])
    sliced = cat[1:3]
    np.testing.assert_array_equal(sliced.data, cat.data[1:3])


def test_broadcasting_add_reduces_grad():
    x = nm.Tensor(np.ones((2, 3)), requires_grad=True)
    b = nm.Tensor(np.ones(3), requires_grad=True)
    nm.sum_(nm.add(x, b)).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))
    np.testing.assert_array_equal(b.grad, np.full(3, 2.0))


def test_mean_and_sum_axes():
    x = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_allclose(nm.mean(nm.Tensor(x)).item(), x.mean())
    np.testing.assert_allclose(nm.sum_(nm.Tensor(x), axis=1).data, x.sum(axis=1))
    kept = nm.mean(nm.Tensor(x), axis=2, keepdims=True)
    assert kept.shape == (2, 3, 1)
