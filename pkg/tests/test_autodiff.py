import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centerscan import autodiff as ad
from centerscan.autodiff import Tensor, ShapeError, finite_diff_grad, relative_error


def check_grad(f, x, tol=1e-4, step=1e-6):
    xt = Tensor(x, requires_grad=True)
    f(xt).backward()
    want = finite_diff_grad(f, Tensor(x), step=step).data
    assert relative_error(xt.grad, want) <= tol, (xt.grad, want)


def rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def test_matmul_identity():
    out = ad.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0], [4.0]]))
    assert np.array_equal(out.data, [[3.0], [4.0]])


def test_softmax_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3])


def test_exp_zero():
    assert ad.exp(Tensor(0.0)).item() == 1.0


def test_matmul_shape_error_names_op():
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_conv2d_shape_error_names_op():
    with pytest.raises(ShapeError, match="conv2d"):
        ad.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 5, 3, 3))))


def test_backward_requires_scalar_root():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError, match="scalar"):
        (x * 2.0).backward()


def test_sum_gradient_is_ones():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, [1.0, 1.0, 1.0])


def test_square_gradient():
    x = Tensor(np.array([2.0]), requires_grad=True)
    (x * x).sum().backward()
    assert np.allclose(x.grad, [4.0])


def test_gradient_accumulates_without_zeroing():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)

    def run():
        (x * x).sum().backward()

    run()
    first = x.grad.copy()
    run()
    assert np.array_equal(x.grad, 2.0 * first)


def test_backward_linearity():
    rng = np.random.default_rng(0)
    x0 = rand(rng, 4)

    def f(t):
        return (t * t).sum()

    def g(t):
        return ad.exp(t).sum()

    a, b = 2.5, -1.25
    xt = Tensor(x0, requires_grad=True)
    (f(xt) * a + g(xt) * b).backward()
    combined = xt.grad.copy()

    xf = Tensor(x0, requires_grad=True)
    f(xf).backward()
    xg = Tensor(x0, requires_grad=True)
    g(xg).backward()
    assert np.allclose(combined, a * xf.grad + b * xg.grad, atol=1e-12)


def test_finite_diff_on_sum_and_square():
    g = finite_diff_grad(lambda t: t.sum(), Tensor([5.0, 7.0]))
    assert np.allclose(g.data, [1.0, 1.0])
    g = finite_diff_grad(lambda t: (t * t).sum(), Tensor([3.0]))
    assert np.allclose(g.data, [6.0], atol=1e-6)


def test_finite_diff_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: t.sum(), Tensor([1.0]), step=0.0)


ELEMENTWISE = {
    "exp": ad.exp,
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "softplus": ad.softplus,
    "neg": ad.neg,
    "square": lambda t: ad.pow_const(t, 2.0),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
def test_elementwise_grads_match_oracle(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    op = ELEMENTWISE[name]
    weights = Tensor(rand(rng, 3, 4))
    check_grad(lambda t: (op(t) * weights).sum(), rand(rng, 3, 4))


def test_binary_op_grads_with_broadcasting():
    rng = np.random.default_rng(7)
    other = Tensor(rand(rng, 1, 4))
    for op in (ad.add, ad.sub, ad.mul):
        check_grad(lambda t: op(t, other).sum(), rand(rng, 3, 4))
    check_grad(lambda t: ad.div(t, other + 3.0).sum(), rand(rng, 3, 4))


def test_matmul_grad_batched():
    rng = np.random.default_rng(3)
    w = Tensor(rand(rng, 4, 2))
    check_grad(lambda t: ad.matmul(t, w).sum(), rand(rng, 2, 3, 4))
    a = Tensor(rand(rng, 2, 3, 4))
    check_grad(lambda t: ad.matmul(a, t).sum(), rand(rng, 4, 2))


def test_reduction_grads():
    rng = np.random.default_rng(5)
    check_grad(lambda t: t.sum(axis=1).sum(), rand(rng, 3, 4))
    check_grad(lambda t: t.mean(axis=(0, 2)).sum(), rand(rng, 2, 3, 4))
    check_grad(lambda t: ad.reduce_max(t, axis=1).sum(), rand(rng, 3, 5))


def test_shape_op_grads():
    rng = np.random.default_rng(11)
    check_grad(lambda t: t.reshape(6, 2)[1:4, :].sum(), rand(rng, 3, 4))
    check_grad(lambda t: t.transpose(1, 0, 2).sum(axis=0).mean(), rand(rng, 2, 3, 4))
    check_grad(lambda t: ad.concat([t, t * 2.0], axis=1).sum(), rand(rng, 3, 2))
    check_grad(lambda t: ad.stack([t, t * t], axis=0).sum(), rand(rng, 4))
    check_grad(lambda t: ad.take(t, [2, 0, 2], axis=1).sum(), rand(rng, 2, 3))


def test_softmax_layernorm_grads():
    rng = np.random.default_rng(13)
    w1 = Tensor(rand(rng, 3, 4))
    check_grad(lambda t: (ad.softmax(t, axis=1) * w1).sum(), rand(rng, 3, 4))
    gain = Tensor(rand(rng, 4) + 2.0)
    bias = Tensor(rand(rng, 4))
    w2 = Tensor(rand(rng, 3, 4))
    check_grad(lambda t: (ad.layer_norm(t, gain, bias) * w2).sum(), rand(rng, 3, 4))


def test_conv2d_grads():
    rng = np.random.default_rng(17)
    w = Tensor(rand(rng, 2, 3, 3, 3))
    b = Tensor(rand(rng, 2))
    check_grad(lambda t: ad.conv2d(t, w, b, stride=1, padding=1).sum(), rand(rng, 1, 3, 5, 5))
    check_grad(lambda t: ad.conv2d(t, w, b, stride=2, padding=1).sum(), rand(rng, 1, 3, 6, 6))
    x = Tensor(rand(rng, 1, 3, 5, 5))
    check_grad(lambda t: ad.conv2d(x, t, b, stride=1, padding=1).sum(), rand(rng, 2, 3, 3, 3))


def test_conv_transpose2d_grads_and_shape():
    rng = np.random.default_rng(19)
    w = Tensor(rand(rng, 3, 2, 2, 2))
    b = Tensor(rand(rng, 2))
    out = ad.conv_transpose2d(Tensor(rand(rng, 1, 3, 4, 4)), w, b, stride=2)
    assert out.shape == (1, 2, 8, 8)
    check_grad(lambda t: ad.conv_transpose2d(t, w, b, stride=2).sum(), rand(rng, 1, 3, 4, 4))
    x = Tensor(rand(rng, 1, 3, 4, 4))
    check_grad(lambda t: ad.conv_transpose2d(x, t, b, stride=2).sum(), rand(rng, 3, 2, 2, 2))


def test_bilinear_resize_grad_and_corners():
    rng = np.random.default_rng(23)
    check_grad(lambda t: ad.bilinear_resize(t, 7, 5).sum(), rand(rng, 1, 2, 4, 4))
    x = rand(rng, 1, 1, 4, 4)
    same = ad.bilinear_resize(Tensor(x), 4, 4)
    assert np.array_equal(same.data, x)
    doubled = ad.bilinear_resize(Tensor(np.ones((1, 1, 2, 2))), 4, 4)
    assert np.allclose(doubled.data, 1.0)


def test_composite_graph_matches_oracle_tight():
    # Random composite graph checked at the tighter unit tolerance.
    rng = np.random.default_rng(29)
    w1 = Tensor(rand(rng, 4, 5))
    w2 = Tensor(rand(rng, 5, 2))

    def f(t):
        h = ad.tanh(ad.matmul(t, w1))
        z = ad.sigmoid(ad.matmul(h, w2))
        return (z * z).mean() + ad.softmax(h, axis=1).sum(axis=0).mean()

    xt = Tensor(rand(rng, 3, 4), requires_grad=True)
    f(xt).backward()
    want = finite_diff_grad(f, Tensor(xt.data), step=1e-6).data
    assert relative_error(xt.grad, want) <= 1e-5


def test_no_grad_suppresses_recording():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = (x * 2.0).sum()
    assert y._backward_fn is None and not y.requires_grad


def test_frozen_leaf_gets_no_grad():
    x = Tensor(np.ones(3), requires_grad=True)
    frozen = Tensor(np.ones(3), requires_grad=False)
    (x * frozen).sum().backward()
    assert frozen.grad is None
    assert np.array_equal(x.grad, np.ones(3))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=8))
def test_property_sigmoid_grad_matches_oracle(xs):
    x = np.asarray(xs)
    xt = Tensor(x, requires_grad=True)
    ad.sigmoid(xt).sum().backward()
    want = finite_diff_grad(lambda t: ad.sigmoid(t).sum(), Tensor(x)).data
    assert relative_error(xt.grad, want) <= 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 10_000))
def test_property_softmax_rows_sum_to_one(rows, cols, seed):
    rng = np.random.default_rng(seed)
    out = ad.softmax(Tensor(rng.normal(size=(rows, cols))), axis=1)
    assert np.allclose(out.data.sum(axis=1), 1.0)
    assert np.all(out.data >= 0)
