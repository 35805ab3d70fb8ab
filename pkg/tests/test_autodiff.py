"""
Tensor operations: forward values against naive loops, gradients against
central finite differences (float64).
"""

# Third party packages
from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

# pyexo2ego libs
from pyexo2ego.libs.autodiff import (
    AutodiffException,
    NonFiniteError,
    ShapeMismatchError,
    Tensor,
    avg_pool2d,
    backward,
    broadcast_to,
    concat_channels,
    conv2d,
    conv_transpose2d,
    div,
    exp,
    grad_check,
    instance_norm,
    l2_norm,
    leaky_relu,
    log,
    log_sigmoid,
    log_softmax,
    matmul,
    mean_abs,
    mul,
    no_grad,
    reduce_max,
    reduce_mean,
    reduce_min,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    slice_channels,
    softmax,
    sqrt,
    tanh,
    transpose,
)

SEEDS = range(10)
TOLERANCE = 1e-4


def _f64(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.standard_normal(shape), dtype=np.float64)


def _away_from_zero(rng: np.random.Generator, *shape: int) -> Tensor:
    magnitude = rng.uniform(0.2, 1.0, size=shape)
    return Tensor(magnitude * rng.choice([-1.0, 1.0], size=shape), dtype=np.float64)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return reduce_sum(mul(out, Tensor(weights.reshape(out.shape), dtype=np.float64)))


def naive_conv2d(x: np.ndarray, k: np.ndarray, b: np.ndarray, stride: int, padding: int) -> np.ndarray:
    x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    batch, cin, height, width = x.shape
    cout, _, kh, kw = k.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    out = np.zeros((batch, cout, out_h, out_w))
    for n in range(batch):
        for o in range(cout):
            for i in range(out_h):
                for j in range(out_w):
                    patch = x[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = np.sum(patch * k[o]) + b[o]
    return out


def naive_conv_transpose2d(x: np.ndarray, k: np.ndarray, stride: int, padding: int) -> np.ndarray:
    batch, cin, height, width = x.shape
    _, cout, kh, kw = k.shape
    full = np.zeros((batch, cout, (height - 1) * stride + kh, (width - 1) * stride + kw))
    for n in range(batch):
        for c in range(cin):
            for i in range(height):
                for j in range(width):
                    full[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw] += x[n, c, i, j] * k[c]
    return full[:, :, padding:full.shape[2] - padding, padding:full.shape[3] - padding]


# ------------------------
# Convolutions
# ------------------------

@pytest.mark.parametrize("stride, padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_naive_loops(rng, stride, padding):
    x = rng.standard_normal((1, 2, 5, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = conv2d(Tensor(x), Tensor(k), Tensor(b), stride, padding)
    np.testing.assert_allclose(out.data, naive_conv2d(x, k, b, stride, padding), atol=1e-10)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(seed)
    x, k, b = _f64(rng, 1, 2, 5, 5), _f64(rng, 3, 2, 3, 3), _f64(rng, 3)
    weights = rng.standard_normal((1, 3, 3, 3))
    error = grad_check(lambda x, k, b: _weighted_sum(conv2d(x, k, b, 2, 1), weights), [x, k, b])
    assert error < TOLERANCE


def test_conv_transpose2d_scatter_example():
    out = conv_transpose2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 2, 2))), stride=2)
    assert out.shape == (1, 1, 4, 4)
    np.testing.assert_array_equal(out.data, np.ones((1, 1, 4, 4)))


@pytest.mark.parametrize("stride, padding", [(1, 0), (2, 0), (2, 1)])
def test_conv_transpose2d_matches_naive_scatter(rng, stride, padding):
    x = rng.standard_normal((2, 3, 3, 3))
    k = rng.standard_normal((3, 2, 4, 4))
    out = conv_transpose2d(Tensor(x), Tensor(k), stride=stride, padding=padding)
    np.testing.assert_allclose(out.data, naive_conv_transpose2d(x, k, stride, padding), atol=1e-10)


def test_conv_transpose2d_is_adjoint_of_conv2d(rng):
    k = rng.standard_normal((3, 2, 4, 4))
    x = rng.standard_normal((1, 2, 8, 8))
    y = rng.standard_normal((1, 3, 4, 4))
    forward = conv2d(Tensor(x), Tensor(k), stride=2, padding=1).data
    adjoint = conv_transpose2d(Tensor(y), Tensor(k), stride=2, padding=1).data
    assert np.sum(forward * y) == pytest.approx(np.sum(x * adjoint), rel=1e-10)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_transpose2d_gradients(seed):
    rng = np.random.default_rng(seed)
    x, k, b = _f64(rng, 1, 2, 3, 3), _f64(rng, 2, 2, 4, 4), _f64(rng, 2)
    weights = rng.standard_normal(2 * 6 * 6)
    error = grad_check(
        lambda x, k, b: _weighted_sum(conv_transpose2d(x, k, b, stride=2, padding=1), weights),
        [x, k, b]
    )
    assert error < TOLERANCE


def test_conv2d_rejects_channel_mismatch():
    with pytest.raises(ShapeMismatchError, match=r"\(1, 2, 5, 5\)"):
        conv2d(Tensor(np.zeros((1, 2, 5, 5))), Tensor(np.zeros((3, 4, 3, 3))))


# ------------------------
# Elementwise Operations
# ------------------------

def test_tanh_gradient_at_half():
    x = Tensor([0.5], requires_grad=True, dtype=np.float64)
    backward(reduce_sum(tanh(x)))
    assert x.grad[0] == pytest.approx(1.0 - np.tanh(0.5) ** 2)
    assert x.grad[0] == pytest.approx(0.78645, abs=1e-5)


def test_mean_abs_gradient():
    x = Tensor([0.5, -2.0], requires_grad=True, dtype=np.float64)
    backward(mean_abs(x))
    np.testing.assert_allclose(x.grad, [0.5, -0.5])
    assert grad_check(mean_abs, [Tensor([0.5, -2.0], dtype=np.float64)]) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("op", [tanh, sigmoid, log_sigmoid, exp], ids=lambda op: op.__name__)
def test_smooth_unary_gradients(seed, op):
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal(12)
    assert grad_check(lambda x: _weighted_sum(op(x), weights), [_f64(rng, 3, 4)]) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("op", [relu, leaky_relu, mean_abs], ids=lambda op: op.__name__)
def test_piecewise_gradients_away_from_kinks(seed, op):
    rng = np.random.default_rng(seed)
    x = _away_from_zero(rng, 3, 4)
    if op is mean_abs:
        assert grad_check(mean_abs, [x]) < TOLERANCE
    else:
        weights = rng.standard_normal(12)
        assert grad_check(lambda t: _weighted_sum(op(t), weights), [x]) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_log_sqrt_div_gradients(seed):
    rng = np.random.default_rng(seed)
    positive = Tensor(rng.uniform(0.5, 2.0, size=(2, 3)), dtype=np.float64)
    other = _f64(rng, 2, 3)
    weights = rng.standard_normal(6)
    assert grad_check(lambda x: _weighted_sum(log(x), weights), [positive]) < TOLERANCE
    assert grad_check(lambda x: _weighted_sum(sqrt(x), weights), [positive]) < TOLERANCE
    assert grad_check(lambda a, b: _weighted_sum(div(a, b), weights), [other, positive]) < TOLERANCE


def test_log_is_guarded_at_zero():
    x = Tensor([0.0, 1.0], requires_grad=True, dtype=np.float64)
    out = log(x)
    assert out.data[0] == pytest.approx(np.log(1e-12))
    backward(reduce_sum(out))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_elementwise_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeMismatchError) as info:
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros((3, 2)))
    assert info.value.shapes == ((2, 3), (3, 2))
    assert "(2, 3)" in str(info.value) and "(3, 2)" in str(info.value)


def test_non_finite_values_are_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with np.errstate(divide="ignore"):
        with pytest.raises(NonFiniteError, match="div"):
            div(Tensor([1.0]), Tensor([0.0]))


def test_zero_extent_is_rejected():
    with pytest.raises(AutodiffException):
        Tensor(np.zeros((0, 3)))


# ------------------------
# Shapes and Reductions
# ------------------------

@pytest.mark.parametrize("seed", SEEDS)
def test_shape_op_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _f64(rng, 2, 3, 4)
    w_t = rng.standard_normal(24)
    w_s = rng.standard_normal(2 * 2 * 4)
    assert grad_check(lambda t: _weighted_sum(transpose(t, (2, 0, 1)), w_t), [x]) < TOLERANCE
    assert grad_check(lambda t: _weighted_sum(reshape(t, (6, 4)), w_t), [x]) < TOLERANCE
    assert grad_check(lambda t: _weighted_sum(slice_axis(t, 1, 1, 3), w_s), [x]) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_broadcast_and_concat_gradients(seed):
    rng = np.random.default_rng(seed)
    bias = _f64(rng, 1, 3, 1)
    weights = rng.standard_normal(2 * 3 * 4)
    assert grad_check(lambda b: _weighted_sum(broadcast_to(b, (2, 3, 4)), weights), [bias]) < TOLERANCE

    a, b = _f64(rng, 1, 2, 3, 3), _f64(rng, 1, 1, 3, 3)
    w_c = rng.standard_normal(27)
    assert grad_check(lambda a, b: _weighted_sum(concat_channels(a, b), w_c), [a, b]) < TOLERANCE


def test_slice_channels_undoes_concat():
    a = Tensor(np.arange(18.0).reshape(1, 2, 3, 3), requires_grad=True)
    b = Tensor(-np.arange(9.0).reshape(1, 1, 3, 3), requires_grad=True)
    stacked = concat_channels(a, b)
    np.testing.assert_array_equal(slice_channels(stacked, 0, 2).data, a.data)
    np.testing.assert_array_equal(slice_channels(stacked, 2, 3).data, b.data)
    backward(reduce_sum(slice_channels(stacked, 2, 3)), leaves=[a, b])
    np.testing.assert_array_equal(a.grad, np.zeros_like(a.data))
    np.testing.assert_array_equal(b.grad, np.ones_like(b.data))


@pytest.mark.parametrize("seed", SEEDS)
def test_reduction_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _f64(rng, 3, 5)
    weights = rng.standard_normal(3)
    for op in (reduce_sum, reduce_mean, reduce_max, reduce_min):
        assert grad_check(lambda t: _weighted_sum(op(t, axis=1), weights), [x]) < TOLERANCE
    assert grad_check(lambda t: _weighted_sum(l2_norm(t, axis=-1), weights), [x]) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_and_matmul_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _f64(rng, 3, 4)
    weights = rng.standard_normal(12)
    assert grad_check(lambda t: _weighted_sum(softmax(t, axis=-1), weights), [x]) < TOLERANCE
    assert grad_check(lambda t: _weighted_sum(log_softmax(t, axis=-1), weights), [x]) < TOLERANCE

    a, b = _f64(rng, 2, 3, 4), _f64(rng, 2, 4, 5)
    w_m = rng.standard_normal(30)
    assert grad_check(lambda a, b: _weighted_sum(matmul(a, b), w_m), [a, b]) < TOLERANCE


def test_reduce_max_splits_ties_evenly():
    x = Tensor([[1.0, 3.0, 3.0]], requires_grad=True, dtype=np.float64)
    backward(reduce_sum(reduce_max(x, axis=1)))
    np.testing.assert_allclose(x.grad, [[0.0, 0.5, 0.5]])


def test_matmul_rejects_inner_mismatch():
    with pytest.raises(ShapeMismatchError):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


# ------------------------
# Image Operations and Composites
# ------------------------

@pytest.mark.parametrize("seed", SEEDS)
def test_instance_norm_and_pool_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _f64(rng, 2, 2, 4, 4)
    weights = rng.standard_normal(64)
    assert grad_check(lambda t: _weighted_sum(instance_norm(t), weights), [x]) < TOLERANCE
    w_p = rng.standard_normal(16)
    assert grad_check(lambda t: _weighted_sum(avg_pool2d(t), w_p), [x]) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_norm_activation_chain_gradients(seed):
    rng = np.random.default_rng(seed)
    x, k, b = _f64(rng, 1, 2, 8, 8), _f64(rng, 3, 2, 4, 4), _f64(rng, 3)
    weights = rng.standard_normal(3 * 4 * 4)

    def chain(x, k, b):
        return _weighted_sum(tanh(instance_norm(conv2d(x, k, b, stride=2, padding=1))), weights)

    assert grad_check(chain, [x, k, b]) < TOLERANCE


def test_avg_pool2d_rejects_odd_side():
    with pytest.raises(AutodiffException):
        avg_pool2d(Tensor(np.zeros((1, 1, 5, 4))))


# ------------------------
# Tape Behavior
# ------------------------

def test_backward_accumulates_until_reset():
    w = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    x = Tensor([3.0, 4.0], dtype=np.float64)
    backward(reduce_sum(w * x))
    backward(reduce_sum(w * x))
    np.testing.assert_array_equal(w.grad, [6.0, 8.0])
    w.zero_grad()
    assert w.grad is None


def test_backward_pools_gradient_of_reused_tensor():
    w = Tensor([2.0], requires_grad=True, dtype=np.float64)
    backward(reduce_sum(w * w + w))
    np.testing.assert_array_equal(w.grad, [5.0])


def test_backward_zero_fills_unreached_leaves():
    used = Tensor([1.0], requires_grad=True)
    unused = Tensor([1.0], requires_grad=True)
    backward(reduce_sum(used * 2.0), leaves=[used, unused])
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_backward_needs_scalar_loss():
    with pytest.raises(AutodiffException):
        backward(Tensor([1.0, 2.0], requires_grad=True) * 2.0)


def test_no_grad_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = tanh(w * 3.0)
    assert not out.requires_grad
    assert tanh(w).requires_grad


def test_grad_check_rejects_vector_output():
    with pytest.raises(AutodiffException):
        grad_check(lambda t: tanh(t), [Tensor(np.ones(3), dtype=np.float64)])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_sigmoid_gradient_is_bounded(values):
    x = Tensor(np.array(values), requires_grad=True, dtype=np.float64)
    backward(reduce_sum(sigmoid(x)))
    assert np.all(x.grad > 0) and np.all(x.grad <= 0.25)
