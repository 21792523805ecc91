import numpy as np
import pytest

from cgad import autodiff as ad
from cgad.autodiff import Adam, Tensor, no_grad
from cgad.errors import DimensionError, StateError


def _numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.square])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4))
    t = Tensor(x.copy(), requires_grad=True)
    ad.backward(ad.sum_all(op(t)))
    expected = _numeric_grad(lambda v: float(op(Tensor(v)).data.sum()), x)
    np.testing.assert_allclose(t.grad, expected, rtol=1e-6, atol=1e-8)


def test_relu_gradient_masks_negatives():
    t = Tensor([-1.0, 2.0, 0.5], requires_grad=True)
    ad.backward(ad.sum_all(ad.relu(t)))
    np.testing.assert_array_equal(t.grad, [0.0, 1.0, 1.0])


def test_broadcast_add_and_mul():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    ad.backward(ad.sum_all(a * b + b))
    np.testing.assert_array_equal(a.grad, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(b.grad, [4.0, 4.0, 4.0])


def test_subtraction_and_constants():
    a = Tensor([2.0, 3.0], requires_grad=True)
    ad.backward(ad.sum_all(5.0 - a * 2.0))
    np.testing.assert_array_equal(a.grad, [-2.0, -2.0])


def test_einsum_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    x, w = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
    tx, tw = Tensor(x.copy(), requires_grad=True), Tensor(w.copy(), requires_grad=True)
    ad.backward(ad.sum_all(ad.square(ad.einsum("abc,cd->abd", tx, tw))))
    fx = lambda v: float((np.einsum("abc,cd->abd", v, w) ** 2).sum())
    fw = lambda v: float((np.einsum("abc,cd->abd", x, v) ** 2).sum())
    np.testing.assert_allclose(tx.grad, _numeric_grad(fx, x), rtol=1e-5)
    np.testing.assert_allclose(tw.grad, _numeric_grad(fw, w), rtol=1e-5)


def test_einsum_rank_mismatch():
    with pytest.raises(DimensionError):
        ad.einsum("ab,bc->ac", Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_getitem_and_concat_route_gradients():
    a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = Tensor(np.ones((2, 1)), requires_grad=True)
    out = ad.concat([a[:, 1:], b], axis=1)
    ad.backward(ad.sum_all(out * Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])))
    np.testing.assert_array_equal(a.grad, [[0.0, 1.0, 2.0], [0.0, 4.0, 5.0]])
    np.testing.assert_array_equal(b.grad, [[3.0], [6.0]])


def test_fancy_index_accumulates_repeats():
    a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.sum_all(a[np.array([0, 0, 2])]))
    np.testing.assert_array_equal(a.grad, [2.0, 0.0, 1.0])


def test_shared_subexpression_accumulates():
    a = Tensor([3.0], requires_grad=True)
    b = a * a
    ad.backward(ad.sum_all(b + b))
    np.testing.assert_array_equal(a.grad, [12.0])


def test_backward_twice_raises():
    a = Tensor([1.0], requires_grad=True)
    loss = ad.sum_all(a * a)
    ad.backward(loss)
    with pytest.raises(StateError):
        ad.backward(loss)


def test_backward_needs_scalar():
    a = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(StateError):
        ad.backward(a * a)


def test_no_grad_records_nothing():
    a = Tensor([1.0], requires_grad=True)
    with no_grad():
        loss = ad.sum_all(a * a)
    with pytest.raises(StateError):
        ad.backward(loss)
    assert ad.grad_enabled()


def test_adam_first_step_moves_by_lr():
    p = Tensor([1.0, -1.0], requires_grad=True)
    opt = Adam([p], lr=0.1)
    opt.zero_grad()
    ad.backward(ad.sum_all(p * Tensor([2.0, -3.0])))
    opt.step()
    # bias-corrected first step is lr * sign(grad)
    np.testing.assert_allclose(p.data, [0.9, -0.9], rtol=1e-6)


def test_adam_minimises_quadratic():
    p = Tensor([5.0], requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        ad.backward(ad.sum_all(ad.square(p - 2.0)))
        opt.step()
    assert p.data[0] == pytest.approx(2.0, abs=0.05)
