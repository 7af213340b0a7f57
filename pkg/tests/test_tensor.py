import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from caranet import tensor as T
from caranet.tensor import ConvSpec, GraphError, ShapeError, Tensor

from oracles import bilinear_pixel, conv2d_loops

finite = st.floats(-50, 50, allow_nan=False)


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


# -- conv2d ------------------------------------------------------------------

def test_identity_1x1_kernel():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 1, 5, 4)))
    out = T.conv2d(x, Tensor(np.ones((1, 1, 1, 1))))
    assert np.array_equal(out.data, x.data)


def test_dilated_impulse_reaches_5x5():
    x = np.zeros((1, 1, 9, 9))
    x[0, 0, 4, 4] = 1.0
    out = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 3, 3))), ConvSpec(1, 1, dilation=2))
    rows, cols = np.nonzero(out.data[0, 0])
    assert (rows.min(), rows.max(), cols.min(), cols.max()) == (2, 6, 2, 6)
    assert out.shape == x.shape


@pytest.mark.parametrize("dilation,stride,pad", [(1, 1, None), (2, 1, None), (1, 2, (1, 1)), (3, 2, (0, 2))])
def test_conv_matches_loops(dilation, stride, pad):
    rng = np.random.default_rng(dilation * 10 + stride)
    x, w, b = rng.normal(size=(2, 3, 8, 7)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    spec = ConvSpec(3, 4, dilation=dilation, stride=stride, padding=pad)
    got = T.conv2d(Tensor(x), Tensor(w), spec, Tensor(b)).data
    want = conv2d_loops(x, w, b, dilation, stride, spec.pads())
    assert got.shape[2:] == spec.output_size(8, 7) == want.shape[2:]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_conv_error_names_axis():
    with pytest.raises(ShapeError, match="channel axis"):
        T.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ShapeError, match="height axis"):
        T.conv2d(Tensor(np.zeros((1, 1, 2, 9))), Tensor(np.zeros((1, 1, 5, 1))), ConvSpec(1, 1, 5, 1, padding=0))


def test_separable_kernel_equals_asymmetric_pair():
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=3), rng.normal(size=3)
    x = Tensor(rng.normal(size=(1, 1, 9, 9)))
    full = T.conv2d(x, Tensor(np.outer(u, v)[None, None]), ConvSpec(1, 1, dilation=2))
    pair = T.asymmetric_conv(x, Tensor(v.reshape(1, 1, 1, 3)), Tensor(u.reshape(1, 1, 3, 1)), dilation=2)
    np.testing.assert_allclose(pair.data, full.data, atol=1e-12)


def test_asymmetric_ones_k1_is_identity():
    x = Tensor(np.random.default_rng(1).normal(size=(1, 2, 3, 3)))
    eye = np.eye(2).reshape(2, 2, 1, 1)
    assert np.array_equal(T.asymmetric_conv(x, Tensor(eye), Tensor(eye)).data, x.data)


def test_asymmetric_rejects_unequal_lengths():
    with pytest.raises(ShapeError):
        T.asymmetric_conv(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 1, 3))), Tensor(np.zeros((1, 1, 5, 1))))


# -- matmul and pointwise ------------------------------------------------------

def test_matmul_small_cases():
    a = np.random.default_rng(0).normal(size=(3, 3))
    assert np.array_equal(T.matmul(Tensor(a), Tensor(np.eye(3))).data, a)
    assert np.array_equal(T.matmul(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2)))).data, np.full((2, 2), 2.0))
    with pytest.raises(ShapeError, match="inner"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_sigmoid_of_zero_is_half():
    assert T.sigmoid(Tensor(np.zeros(3))).data.tolist() == [0.5, 0.5, 0.5]


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_sigmoid_open_interval(x):
    s = T.sigmoid(Tensor(x)).data
    assert np.all((s > 0) & (s < 1))
    r = T.one_minus_sigmoid(Tensor(x)).data
    assert np.all((r > 0) & (r < 1))


@given(arrays(np.float64, (3, 5), elements=finite), st.sampled_from([0, 1, -1]))
def test_softmax_rows_sum_to_one(x, axis):
    s = T.softmax(Tensor(x), axis=axis).data
    np.testing.assert_allclose(s.sum(axis=axis), 1.0, atol=1e-12)


def test_softmax_constant_is_uniform_and_axis_checked():
    np.testing.assert_allclose(T.softmax(Tensor(np.full((1, 7), 3.0)), axis=1).data, 1 / 7)
    with pytest.raises(ShapeError):
        T.softmax(Tensor(np.ones((2, 2))), axis=2)


def test_elementwise_identities_and_no_broadcast():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 3)))
    assert np.array_equal(T.elementwise(x, Tensor(np.ones((2, 3))), "mul").data, x.data)
    assert not T.elementwise(x, Tensor(np.zeros((2, 3))), "mul").data.any()
    with pytest.raises(ShapeError):
        T.add(x, Tensor(np.ones((1, 3))))


# -- resampling and pooling ----------------------------------------------------

def test_resize_same_size_is_bitwise_copy():
    x = Tensor(np.random.default_rng(0).normal(size=(1, 2, 5, 6)))
    out = T.bilinear_resize(x, 5, 6)
    assert np.array_equal(out.data, x.data) and out.data is not x.data


def test_resize_single_pixel_is_constant():
    out = T.bilinear_resize(Tensor(np.full((1, 1, 1, 1), 2.5)), 4, 4)
    assert np.all(out.data == 2.5)


def test_resize_2x2_against_formula():
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    got = T.bilinear_resize(Tensor(img[None, None]), 4, 4).data[0, 0]
    np.testing.assert_allclose(got, bilinear_pixel(img, 4, 4), atol=1e-12)
    np.testing.assert_allclose(got[0], [0.0, 0.25, 0.75, 1.0], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 11), st.integers(1, 11))
def test_resize_matches_formula(h, w, oh, ow):
    img = np.random.default_rng(h * 100 + w).normal(size=(h, w))
    got = T.bilinear_resize(Tensor(img[None, None]), oh, ow).data[0, 0]
    np.testing.assert_allclose(got, bilinear_pixel(img, oh, ow), atol=1e-12)


def test_resize_rejects_zero_target():
    with pytest.raises(ShapeError):
        T.bilinear_resize(Tensor(np.ones((1, 1, 2, 2))), 0, 3)


def test_pooling_basics():
    const = Tensor(np.full((1, 1, 6, 6), 1.5))
    assert np.all(T.avg_pool(const, 3, 1).data == 1.5)
    x = np.zeros((1, 1, 4, 4))
    x[0, 0, 1, 2] = 7.0
    out = T.max_pool(Tensor(x), 2).data[0, 0]
    assert out[0, 1] == 7.0 and out.sum() == 7.0
    with pytest.raises(ShapeError):
        T.avg_pool(Tensor(np.ones((1, 1, 2, 2))), 5)


def test_max_pool_gradient_routes_to_argmax():
    x = leaf(np.arange(16.0).reshape(1, 1, 4, 4))
    T.sum(T.max_pool(x, 2)).backward()
    expected = np.zeros((4, 4))
    expected[[1, 1, 3, 3], [1, 3, 1, 3]] = 1
    assert np.array_equal(x.grad[0, 0], expected)


# -- autograd ------------------------------------------------------------------

def test_backward_simple_losses():
    x = leaf(np.random.default_rng(0).normal(size=(3, 2)))
    T.sum(x).backward()
    assert np.array_equal(x.grad, np.ones((3, 2)))
    x.grad = None
    T.sum(x * x).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_accumulates_until_zeroed():
    x = leaf([1.0, 2.0])
    T.sum(x).backward()
    T.sum(x).backward()
    assert x.grad.tolist() == [2.0, 2.0]
    x.zero_grad()
    assert x.grad is None


def test_backward_errors():
    x = leaf(np.ones(3))
    with pytest.raises(GraphError, match="scalar"):
        (x * x).backward()
    with pytest.raises(GraphError, match="detached"):
        T.sum(Tensor(np.ones(3))).backward()


def test_shared_subexpression_gradient():
    x = leaf([3.0])
    y = x * x
    T.sum(y + y * x).backward()  # d/dx (x^2 + x^3) = 2x + 3x^2
    assert x.grad.tolist() == [2 * 3.0 + 3 * 9.0]


def test_forward_ops_deterministic():
    def run():
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(1, 2, 6, 6)))
        w = Tensor(rng.normal(size=(2, 2, 3, 3)))
        return T.bilinear_resize(T.sigmoid(T.conv2d(x, w, ConvSpec(2, 2, dilation=2))), 9, 9).data

    assert run().tobytes() == run().tobytes()


def test_narrow_split_concat_roundtrip():
    x = leaf(np.random.default_rng(0).normal(size=(1, 6, 2, 2)))
    parts = T.split(x, [1, 2, 3], axis=1)
    assert [p.shape[1] for p in parts] == [1, 2, 3]
    assert np.array_equal(T.concat(parts, axis=1).data, x.data)
    with pytest.raises(ShapeError):
        T.split(x, [2, 2], axis=1)
