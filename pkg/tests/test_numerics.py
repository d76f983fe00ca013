import math

import numpy as np
import pytest

from komei.errors import DimensionError, EmptyEvidenceError
from komei.numerics import (OptimState, Parameter, Tensor2, adamw_step,
                            attention, backward, concat_cols, concat_rows, const,
                            cosine_matrix, div, embedding_mean, grad_check,
                            layer_norm, linear, log_softmax_rows, matmul, mul,
                            relu, sigmoid, softmax_row, softmax_rows, transpose,
                            tsum)


def test_tensor_rejects_nonfinite():
    with pytest.raises(ValueError):
        Tensor2([[1.0, float("nan")]])
    with pytest.raises(ValueError):
        Tensor2([[float("inf")]])


def test_tensor_shapes():
    t = Tensor2([1.0, 2.0, 3.0])
    assert t.shape == (1, 3)
    assert Tensor2(5.0).shape == (1, 1)
    with pytest.raises(DimensionError):
        Tensor2(np.zeros((2, 2, 2)))


# -- linear -----------------------------------------------------------------

def test_linear_identity():
    out = linear(const([1.0, 2.0]), const(np.eye(2)), const([0.0, 0.0]))
    assert np.array_equal(out.data, [[1.0, 2.0]])


def test_linear_hand_product():
    out = linear(const([1.0, 0.0]), const([[2.0, 3.0], [4.0, 5.0]]),
                 const([1.0, 1.0]))
    assert np.array_equal(out.data, [[3.0, 4.0]])


def test_linear_zero_input_passes_bias():
    out = linear(const([0.0, 0.0]), const([[2.0, 3.0], [4.0, 5.0]]),
                 const([7.0, -7.0]))
    assert np.array_equal(out.data, [[7.0, -7.0]])


def test_linear_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError, match=r"\(1, 3\).*\(2, 2\)"):
        linear(const([1.0, 2.0, 3.0]), const(np.eye(2)), const([0.0, 0.0]))


# -- relu ---------------------------------------------------------------------

def test_relu_golden():
    out = relu(const([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [[0.0, 0.0, 2.0]])


def test_relu_all_negative():
    out = relu(const([[-3.0, -0.5], [-1.0, -2.0]]))
    assert np.array_equal(out.data, np.zeros((2, 2)))


def test_relu_idempotent():
    rng = np.random.default_rng(0)
    x = const(rng.standard_normal((3, 5)))
    once = relu(x)
    twice = relu(once)
    assert np.array_equal(once.data, twice.data)


# -- softmax ------------------------------------------------------------------

def test_softmax_uniform():
    out = softmax_row(const([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)


def test_softmax_log_weights():
    out = softmax_row(const([math.log(1), math.log(2), math.log(3)]))
    assert np.allclose(out.data, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-15)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    out = softmax_rows(const(rng.standard_normal((20, 7)) * 30))
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(out.data > 0)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((1, 6))
    a = softmax_row(const(v))
    b = softmax_row(const(v + 123.456))
    assert np.allclose(a.data, b.data, atol=1e-12)


def test_softmax_empty_row_rejected():
    with pytest.raises(DimensionError):
        softmax_rows(const(np.zeros((1, 0))))


# -- layer norm ---------------------------------------------------------------

def test_layer_norm_already_standardized():
    out = layer_norm(const([1.0, -1.0]), const([1.0, 1.0]), const([0.0, 0.0]),
                     eps=1e-12)
    assert np.allclose(out.data, [[1.0, -1.0]], atol=1e-6)


def test_layer_norm_constant_row_gives_bias():
    out = layer_norm(const([4.0, 4.0]), const([1.0, 1.0]), const([2.0, 5.0]),
                     eps=1e-8)
    assert np.allclose(out.data, [[2.0, 5.0]], atol=1e-12)


def test_layer_norm_zero_gain_is_bias_exactly():
    rng = np.random.default_rng(3)
    out = layer_norm(const(rng.standard_normal((4, 6))), const(np.zeros((1, 6))),
                     const(np.full((1, 6), 9.0)))
    assert np.array_equal(out.data, np.full((4, 6), 9.0))


def test_layer_norm_standardizes_rows():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((10, 8)) * 5 + 3
    out = layer_norm(const(x), const(np.ones((1, 8))), const(np.zeros((1, 8))),
                     eps=1e-10)
    assert np.all(np.abs(out.data.mean(axis=1)) < 1e-9)
    assert np.all(np.abs(out.data.var(axis=1) - 1.0) < 1e-9)


# -- attention ----------------------------------------------------------------

def test_attention_single_key_returns_value_exactly():
    rng = np.random.default_rng(5)
    q = const(rng.standard_normal((3, 4)))
    k = const(rng.standard_normal((1, 4)))
    v = const(rng.standard_normal((1, 4)))
    out = attention(q, k, v)
    for i in range(3):
        assert np.array_equal(out.data[i], v.data[0])


def test_attention_identical_keys_average_values():
    k_row = np.array([1.0, 2.0])
    v = np.array([[1.0, 0.0], [0.0, 3.0]])
    out = attention(const([[0.5, -0.2]]), const(np.stack([k_row, k_row])),
                    const(v))
    assert np.allclose(out.data, [[0.5, 1.5]], atol=1e-12)


def test_attention_orthogonal_query_averages():
    q = const([[0.0, 0.0, 1.0]])
    k = const([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    v = const([[2.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
    out = attention(q, k, v)
    assert np.allclose(out.data, [[1.0, 2.0, 0.0]], atol=1e-12)


def test_attention_empty_evidence():
    with pytest.raises(EmptyEvidenceError):
        attention(const([[1.0]]), const(np.zeros((0, 1))), const(np.zeros((0, 1))))


# -- adamw ---------------------------------------------------------------------

def _param(value, name="p", trainable=True):
    return Parameter(Tensor2(value), name=name, trainable=trainable)


def test_adamw_first_step_is_signed_lr():
    p = _param([[1.0]])
    p.value.grad = np.array([[2.0]])
    state = OptimState(lr=0.1, weight_decay=0.0, eps=1e-16)
    adamw_step([p], state)
    assert abs(p.value.data[0, 0] - 0.9) < 1e-9


def test_adamw_pure_decay():
    p = _param([[1.0]])
    p.value.grad = np.array([[0.0]])
    state = OptimState(lr=0.1, weight_decay=0.01)
    adamw_step([p], state)
    assert abs(p.value.data[0, 0] - 0.999) < 1e-15


def test_adamw_frozen_untouched():
    p = _param([[1.0]], trainable=False)
    state = OptimState(lr=0.1, weight_decay=0.5)
    for _ in range(5):
        adamw_step([p], state)
    assert p.value.data[0, 0] == 1.0


def test_adamw_noop_without_decay_or_grad():
    p = _param([[3.0]])
    p.value.grad = np.array([[0.0]])
    state = OptimState(lr=0.1, weight_decay=0.0)
    adamw_step([p], state)
    assert p.value.data[0, 0] == 3.0


def test_adamw_warmup_then_decay_schedule():
    state = OptimState(lr=1.0, warmup_steps=10, total_steps=110)
    assert state.schedule_multiplier(5) == 0.5
    assert state.schedule_multiplier(10) == 1.0
    assert state.schedule_multiplier(60) == 0.5
    assert state.schedule_multiplier(110) == 0.0


def test_frozen_param_reports_zero_grad():
    p = _param([[1.0, 2.0]], trainable=False)
    loss = tsum(mul(p.value, p.value))
    backward(loss)
    assert np.array_equal(p.grad, np.zeros((1, 2)))


# -- gradient checking ----------------------------------------------------------

def test_grad_check_quadratic_exact():
    p = _param([[3.0]])

    def loss_fn(params):
        return mul(params[0].value, params[0].value)

    err = grad_check(loss_fn, [p], h=1e-4)
    assert err < 1e-9


def test_grad_check_unused_parameter():
    used = _param([[2.0]], name="used")
    unused = _param([[5.0]], name="unused")

    def loss_fn(params):
        return mul(used.value, used.value)

    err = grad_check(loss_fn, [used, unused], h=1e-5)
    assert err < 1e-6
    assert np.array_equal(unused.grad, np.zeros((1, 1)))


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_random_composite(seed):
    rng = np.random.default_rng(seed)
    w1 = _param(rng.standard_normal((3, 4)), name="w1")
    b1 = _param(rng.standard_normal((1, 4)), name="b1")
    gain = _param(np.ones((1, 4)), name="gain")
    bias = _param(np.zeros((1, 4)), name="bias")
    x = const(rng.standard_normal((5, 3)))

    weights = const(rng.standard_normal((5, 4)) * 3.0)

    def loss_fn(params):
        h = relu(linear(x, w1.value, b1.value))
        h = layer_norm(h, gain.value, bias.value, eps=1e-6)
        lp = log_softmax_rows(mul(sigmoid(h), weights))
        return tsum(mul(lp, weights))

    # some gradients here are tiny, so a larger step keeps finite-difference
    # roundoff below the comparison floor
    err = grad_check(loss_fn, [w1, b1, gain, bias], h=1e-3)
    assert err < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_grad_check_attention_and_cosine(seed):
    rng = np.random.default_rng(100 + seed)
    wq = _param(rng.standard_normal((4, 4)), name="wq")
    wk = _param(rng.standard_normal((4, 4)), name="wk")
    wv = _param(rng.standard_normal((4, 4)), name="wv")
    t = const(rng.standard_normal((3, 4)))
    e = const(rng.standard_normal((6, 4)))

    def loss_fn(params):
        q = matmul(t, wq.value)
        k = matmul(e, wk.value)
        v = matmul(e, wv.value)
        out = attention(q, k, v)
        sims = cosine_matrix(out, t)
        return tsum(log_softmax_rows(sims))

    err = grad_check(loss_fn, [wq, wk, wv], h=1e-5)
    assert err < 1e-4


def test_grad_check_embedding_and_concat():
    from komei.numerics import scale

    rng = np.random.default_rng(7)
    table = _param(rng.standard_normal((6, 3)), name="emb")

    def loss_fn(params):
        pooled = embedding_mean(table.value, [[0, 1, 1], [4], [2, 5]])
        a = concat_rows([pooled, scale(pooled, 0.5)])
        b = concat_cols([a, a])
        return tsum(mul(b, b))

    err = grad_check(loss_fn, [table], h=1e-5)
    assert err < 1e-4


def test_div_and_transpose_gradients():
    rng = np.random.default_rng(8)
    a = _param(rng.standard_normal((2, 3)) + 3.0, name="a")
    b = _param(rng.standard_normal((1, 3)) + 3.0, name="b")

    def loss_fn(params):
        return tsum(div(transpose(a.value), transpose(b.value)))

    # transposed shapes must still broadcast: (3,2) / (3,1)
    err = grad_check(loss_fn, [a, b], h=1e-5)
    assert err < 1e-4


def test_backward_needs_scalar():
    with pytest.raises(DimensionError):
        backward(const([[1.0, 2.0]]))


def test_zero_norm_cosine_warns():
    a = const(np.array([[0.0, 0.0], [1.0, 0.0]]))
    with pytest.warns(UserWarning, match="zero-norm"):
        out = cosine_matrix(a, a)
    assert out.data[0, 0] == 0.0
    assert abs(out.data[1, 1] - 1.0) < 1e-12
