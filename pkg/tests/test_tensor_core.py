import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from resdens import kernels
from resdens import tensor_core as tc
from resdens.errors import DimensionError
from resdens.kernels import _numba, _numpy

from oracles import affine_loop, avgpool_loop, conv2d_loop, fd_grad, rel_err


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---- conv2d -------------------------------------------------------------------


def test_conv_zero_input_gives_zero(rng):
    out = tc.conv2d_forward(np.zeros((1, 1, 3, 3)), rng.normal(size=(1, 1, 3, 3)), np.zeros(1), tc.ConvSpec((3, 3), 1, 1))
    assert np.all(out == 0.0)


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(1, 1, 3, 3))
    out = tc.conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1), tc.ConvSpec((1, 1), 1, 0))
    np.testing.assert_array_equal(out, x)


def test_conv_matches_loop_oracle(rng):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = tc.conv2d_forward(x, w, b, tc.ConvSpec((3, 3), 1, 1))
    assert out.shape == (2, 4, 8, 8)
    assert np.max(np.abs(out - conv2d_loop(x, w, b, 1, 1))) <= 1e-12


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (2, 1, 3), (3, 2, 2), (2, 0, 1)])
def test_conv_strides_and_padding_match_oracle(rng, stride, pad, k):
    x = rng.normal(size=(2, 2, 7, 6))
    w = rng.normal(size=(3, 2, k, k))
    b = rng.normal(size=3)
    out = tc.conv2d_forward(x, w, b, tc.ConvSpec((k, k), stride, pad))
    assert np.max(np.abs(out - conv2d_loop(x, w, b, stride, pad))) <= 1e-12


def test_conv_channel_mismatch_names_axes(rng):
    with pytest.raises(DimensionError, match="channel axis"):
        tc.conv2d_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1), tc.ConvSpec((3, 3)))


def test_conv_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        tc.conv2d_forward(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros(1), tc.ConvSpec((3, 3), 1, 0))


def test_conv_backward_zero_cotangent(rng):
    x, w = rng.normal(size=(2, 3, 5, 5)), rng.normal(size=(4, 3, 3, 3))
    spec = tc.ConvSpec((3, 3), 1, 1)
    gx, gw, gb = tc.conv2d_backward(x, w, spec, np.zeros((2, 4, 5, 5)))
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv_backward_scalar_case():
    x, w, g = 1.5, -0.7, 2.25
    gx, gw, gb = tc.conv2d_backward(np.full((1, 1, 1, 1), x), np.full((1, 1, 1, 1), w), tc.ConvSpec((1, 1)), np.full((1, 1, 1, 1), g))
    assert gx.item() == w * g and gw.item() == x * g and gb.item() == g


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 0), (2, 1)])
def test_conv_backward_finite_differences(rng, stride, pad):
    x = rng.normal(size=(2, 2, 5, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    spec = tc.ConvSpec((3, 3), stride, pad)
    r = rng.normal(size=tc.conv2d_forward(x, w, b, spec).shape)
    gx, gw, gb = tc.conv2d_backward(x, w, spec, r)

    def f():
        return float(np.sum(tc.conv2d_forward(x, w, b, spec) * r))

    for arr, g in ((x, gx), (w, gw), (b, gb)):
        assert rel_err(g, fd_grad(f, arr)) <= 1e-6


def test_conv_backward_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        tc.conv2d_backward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 3, 3)), tc.ConvSpec((3, 3), 1, 1), np.zeros((1, 1, 3, 3)))


# ---- pooling --------------------------------------------------------------------


def test_pool_constant(rng):
    out = tc.avg_pool2d_forward(np.full((2, 3, 6, 6), 0.37), (2, 2), (2, 2))
    assert np.all(out == 0.37)


def test_pool_hand_value():
    out = tc.avg_pool2d_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), (2, 2), (2, 2))
    assert out.shape == (1, 1, 1, 1) and out.item() == 2.5


def test_pool_matches_loop_oracle(rng):
    x = rng.normal(size=(1, 2, 6, 6))
    assert np.max(np.abs(tc.avg_pool2d_forward(x, (2, 2), (2, 2)) - avgpool_loop(x, (2, 2), (2, 2)))) <= 1e-12


def test_pool_backward_equal_share():
    g = tc.avg_pool2d_backward((1, 1, 2, 2), (2, 2), (2, 2), np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(g, np.full((1, 1, 2, 2), 0.25))


def test_pool_backward_zero():
    assert not tc.avg_pool2d_backward((1, 2, 4, 4), (2, 2), (2, 2), np.zeros((1, 2, 2, 2))).any()


@pytest.mark.parametrize("window,stride", [((2, 2), (2, 2)), ((3, 2), (1, 2)), ((2, 2), (1, 1))])
def test_pool_backward_finite_differences(rng, window, stride):
    x = rng.normal(size=(2, 2, 7, 6))
    r = rng.normal(size=tc.avg_pool2d_forward(x, window, stride).shape)
    g = tc.avg_pool2d_backward(x.shape, window, stride, r)
    assert rel_err(g, fd_grad(lambda: float(np.sum(tc.avg_pool2d_forward(x, window, stride) * r)), x)) <= 1e-6


def test_pool_window_too_large():
    with pytest.raises(DimensionError):
        tc.avg_pool2d_forward(np.zeros((1, 1, 1, 4)), (2, 2), (2, 2))


def test_pool_backward_shape_mismatch():
    with pytest.raises(DimensionError):
        tc.avg_pool2d_backward((1, 1, 4, 4), (2, 2), (2, 2), np.zeros((1, 1, 3, 3)))


# ---- affine -------------------------------------------------------------------


def test_affine_identity(rng):
    x = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(tc.matmul_affine_forward(x, np.eye(4), np.zeros(4)), x)


def test_affine_hand_arithmetic():
    out = tc.matmul_affine_forward(np.array([[1.0, 2.0]]), np.eye(2), np.array([3.0, 4.0]))
    np.testing.assert_array_equal(out, [[4.0, 6.0]])


def test_affine_matches_loop_and_fd(rng):
    x, w, b = rng.normal(size=(4, 10)), rng.normal(size=(10, 3)), rng.normal(size=3)
    assert np.max(np.abs(tc.matmul_affine_forward(x, w, b) - affine_loop(x, w, b))) <= 1e-12
    r = rng.normal(size=(4, 3))
    gx, gw, gb = tc.matmul_affine_backward(x, w, r)
    f = lambda: float(np.sum(tc.matmul_affine_forward(x, w, b) * r))  # noqa: E731
    for arr, g in ((x, gx), (w, gw), (b, gb)):
        assert rel_err(g, fd_grad(f, arr)) <= 1e-6


def test_affine_inner_dimension_mismatch():
    with pytest.raises(DimensionError, match="inner"):
        tc.matmul_affine_forward(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))


# ---- relu / softmax ---------------------------------------------------------------


def test_relu_values_and_idempotence(rng):
    np.testing.assert_array_equal(tc.relu_forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    x = rng.normal(size=(5, 5))
    np.testing.assert_array_equal(tc.relu_forward(tc.relu_forward(x)), tc.relu_forward(x))


def test_relu_backward_gating():
    np.testing.assert_array_equal(tc.relu_backward(np.array([-1.0, 2.0]), np.array([5.0, 7.0])), [0.0, 7.0])
    # subgradient at exactly zero
    assert tc.relu_backward(np.array([0.0]), np.array([3.0]))[0] == 0.0


def test_softmax_uniform():
    np.testing.assert_allclose(tc.softmax(np.zeros((1, 4))), [[0.25] * 4], rtol=0, atol=1e-15)


@pytest.mark.parametrize("c", [-50.0, 0.0, 3.7, 700.0])
def test_softmax_log2_pair(c):
    p = tc.softmax(np.array([[c, c + math.log(2)]]))
    np.testing.assert_allclose(p, [[1 / 3, 2 / 3]], rtol=0, atol=1e-12)


def test_softmax_no_overflow():
    with np.errstate(all="raise"):
        p = tc.softmax(np.array([[1000.0, 1000.0]]))
    np.testing.assert_array_equal(p, [[0.5, 0.5]])


def test_softmax_needs_two_classes():
    with pytest.raises(DimensionError):
        tc.softmax(np.zeros((2, 1)))


finite_rows = hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 6)),
                         elements=st.floats(-300, 300, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(z=finite_rows, c=st.floats(-100, 100))
def test_softmax_rows_sum_to_one_and_shift_invariant(z, c):
    p = tc.softmax(z)
    assert np.all(p >= 0) and np.all(np.isfinite(p))
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12
    assert np.max(np.abs(tc.softmax(z + c) - p)) <= 1e-12


# ---- purity and invariants ------------------------------------------------------------


def test_operations_do_not_mutate_inputs(rng):
    x, w, b = rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    snapshot = [a.copy() for a in (x, w, b)]
    spec = tc.ConvSpec((3, 3), 1, 1)
    g = rng.normal(size=(2, 3, 5, 5))
    g0 = g.copy()
    tc.conv2d_forward(x, w, b, spec)
    tc.conv2d_backward(x, w, spec, g)
    tc.avg_pool2d_forward(x, (2, 2), (2, 2))
    tc.relu_forward(x)
    tc.relu_backward(x, x)
    for a, s in zip((x, w, b, g), snapshot + [g0]):
        np.testing.assert_array_equal(a, s)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(-1e6, 1e6, allow_nan=False), n=st.integers(1, 3), ch=st.integers(1, 3),
       h=st.integers(2, 9), w=st.integers(2, 9))
def test_pool_of_constant_is_constant(c, n, ch, h, w):
    out = tc.avg_pool2d_forward(np.full((n, ch, h, w), c), (2, 2), (2, 2))
    # (c + c + c + c) / 4 is exact for binary floats barring overflow
    assert np.all(out == c)


def test_convspec_output_size():
    assert tc.ConvSpec((3, 3), 2, 1).output_size(224, 224) == (112, 112)
    with pytest.raises(DimensionError):
        tc.ConvSpec((3, 3), 0, 0)


# ---- backend equivalence -----------------------------------------------------------------


def test_active_backend_is_reported():
    assert kernels.BACKEND in ("numba", "numpy")


@pytest.mark.parametrize("stride,k", [(1, 3), (2, 3), (1, 1), (2, 2)])
def test_numba_and_numpy_kernels_bit_identical(rng, stride, k):
    xp = rng.normal(size=(2, 3, 9, 8))
    oh, ow = (9 - k) // stride + 1, (8 - k) // stride + 1
    c1 = _numpy.im2col(xp, k, k, stride, oh, ow)
    c2 = _numba.im2col(xp, k, k, stride, oh, ow)
    np.testing.assert_array_equal(c1, c2)
    cols = rng.normal(size=c1.shape)
    np.testing.assert_array_equal(_numpy.col2im(cols, xp.shape, k, k, stride, oh, ow),
                                  _numba.col2im(cols, xp.shape, k, k, stride, oh, ow))
    ph, pw = (9 - 2) // stride + 1, (8 - 2) // stride + 1
    np.testing.assert_array_equal(_numpy.avgpool_forward(xp, 2, 2, stride, stride, ph, pw),
                                  _numba.avgpool_forward(xp, 2, 2, stride, stride, ph, pw))
    g = rng.normal(size=(2, 3, ph, pw))
    np.testing.assert_array_equal(_numpy.avgpool_backward(g, xp.shape, 2, 2, stride, stride),
                                  _numba.avgpool_backward(g, xp.shape, 2, 2, stride, stride))
    img = rng.uniform(size=(7, 5))
    ys, xs = rng.uniform(-2, 9, size=(2, 40))
    np.testing.assert_array_equal(_numpy.bilinear_sample(img, ys, xs), _numba.bilinear_sample(img, ys, xs))
