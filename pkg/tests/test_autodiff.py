"""Gradient checks for the reverse-mode graph: every op is compared against
central finite differences of an equivalent pure-numpy forward function."""

import numpy as np
import pytest

import fdris.autodiff as ad
from fdris.autodiff import Var


def finite_diff(f, x0, eps=1e-6):
    """Central-difference gradient of scalar f at x0, entry by entry."""
    g = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp, xm = x0.copy(), x0.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def check_grad(build, x0, tol=1e-6):
    """`build` maps a Var to a scalar Var; compare backward vs finite diff."""
    x = Var(x0.copy())
    y = build(x)
    y.backward()

    def f(v):
        return float(build(Var(v)).value)

    g_fd = finite_diff(f, x0)
    assert np.allclose(x.grad, g_fd, rtol=1e-5, atol=tol), (
        f"max err {np.max(np.abs(x.grad - g_fd))}"
    )


RNG = np.random.default_rng(7)


def test_add_mul_grad():
    b = RNG.standard_normal((3, 4))
    check_grad(lambda x: ad.vsum((x + Var(b)) * x * 2.0), RNG.standard_normal((3, 4)))


def test_sub_div_grad():
    b = RNG.uniform(1.0, 2.0, (2, 5))
    check_grad(lambda x: ad.vsum((x - 1.5) / Var(b)), RNG.standard_normal((2, 5)))


def test_matmul_grad_both_sides():
    a0 = RNG.standard_normal((3, 4))
    b0 = RNG.standard_normal((4, 2))
    a, b = Var(a0.copy()), Var(b0.copy())
    y = ad.vsum((a @ b) ** 2)
    y.backward()
    ga_fd = finite_diff(lambda v: float(np.sum((v @ b0) ** 2)), a0)
    gb_fd = finite_diff(lambda v: float(np.sum((a0 @ v) ** 2)), b0)
    assert np.allclose(a.grad, ga_fd, atol=1e-5)
    assert np.allclose(b.grad, gb_fd, atol=1e-5)


def test_pow_grad():
    check_grad(lambda x: ad.vsum(x**3), RNG.uniform(0.5, 2.0, (4,)))


def test_relu_grad_away_from_kink():
    x0 = RNG.standard_normal((5, 5))
    x0[np.abs(x0) < 1e-3] = 0.5  # keep finite differences valid
    check_grad(lambda x: ad.vsum(ad.relu(x) * 3.0), x0)


def test_tanh_grad():
    check_grad(lambda x: ad.vsum(ad.tanh(x) ** 2), RNG.standard_normal((3, 3)))


def test_sqrt_grad():
    check_grad(lambda x: ad.vsum(ad.sqrt(x)), RNG.uniform(0.5, 3.0, (6,)))


def test_softmax_rows_sum_to_one():
    x = Var(RNG.standard_normal((4, 7)))
    s = ad.softmax(x, axis=-1)
    assert np.allclose(s.value.sum(axis=-1), 1.0)
    assert np.all(s.value > 0)


def test_softmax_shift_invariance():
    x0 = RNG.standard_normal((2, 5))
    a = ad.softmax(Var(x0)).value
    b = ad.softmax(Var(x0 + 1000.0)).value
    assert np.allclose(a, b)


def test_softmax_grad():
    w = RNG.standard_normal((3, 4))
    check_grad(
        lambda x: ad.vsum(ad.softmax(x, axis=-1) * Var(w)),
        RNG.standard_normal((3, 4)),
    )


def test_vsum_axis_keepdims_grad():
    check_grad(
        lambda x: ad.vsum(ad.vsum(x, axis=0, keepdims=True) ** 2),
        RNG.standard_normal((3, 4)),
    )


def test_vmean_grad():
    check_grad(lambda x: ad.vmean(x * x), RNG.standard_normal((4, 4)))


def test_reshape_concat_grad():
    def build(x):
        a = ad.reshape(x, (2, 6))
        return ad.vsum(ad.concat([a, a * 2.0], axis=-1) ** 2)

    check_grad(build, RNG.standard_normal((3, 4)))


def test_getitem_grad_accumulates_duplicates():
    x = Var(np.arange(4.0))
    y = ad.vsum(x[np.array([1, 1, 2])])
    y.backward()
    assert np.array_equal(x.grad, [0.0, 2.0, 1.0, 0.0])


def test_getitem_row_fancy_grad():
    x = Var(RNG.standard_normal((2, 5)))
    idx = np.array([0, 0, 3])
    y = ad.vsum(x[:, idx] * 2.0)
    y.backward()
    expect = np.zeros((2, 5))
    expect[:, 0] = 4.0
    expect[:, 3] = 2.0
    assert np.array_equal(x.grad, expect)


def test_layer_norm_output_stats():
    x = Var(RNG.standard_normal((6, 10)) * 5 + 3)
    y = ad.layer_norm_op(x, Var(np.ones(10)), Var(np.zeros(10)), 1e-5)
    assert np.allclose(y.value.mean(axis=-1), 0.0, atol=1e-7)
    assert np.allclose(y.value.std(axis=-1), 1.0, atol=1e-3)


def test_layer_norm_grad():
    g0 = RNG.standard_normal(6)
    b0 = RNG.standard_normal(6)
    w = RNG.standard_normal((4, 6))

    def build(x):
        return ad.vsum(ad.layer_norm_op(x, Var(g0), Var(b0), 1e-5) * Var(w))

    check_grad(build, RNG.standard_normal((4, 6)))


def test_layer_norm_gain_offset_grad():
    x0 = RNG.standard_normal((4, 6))
    w = RNG.standard_normal((4, 6))
    g0 = RNG.standard_normal(6)
    b0 = RNG.standard_normal(6)
    g, b = Var(g0.copy()), Var(b0.copy())
    y = ad.vsum(ad.layer_norm_op(Var(x0), g, b, 1e-5) * Var(w))
    y.backward()
    gg = finite_diff(
        lambda v: float(
            np.sum(ad.layer_norm_op(Var(x0), Var(v), Var(b0), 1e-5).value * w)
        ),
        g0,
    )
    bb = finite_diff(
        lambda v: float(
            np.sum(ad.layer_norm_op(Var(x0), Var(g0), Var(v), 1e-5).value * w)
        ),
        b0,
    )
    assert np.allclose(g.grad, gg, atol=1e-5)
    assert np.allclose(b.grad, bb, atol=1e-5)


def test_straight_through_forward_hard_backward_soft():
    soft = Var(np.array([[0.3, 0.7]]))
    hard = np.array([[0.0, 1.0]])
    y = ad.straight_through(hard, soft)
    assert np.array_equal(y.value, hard)
    ad.vsum(y * np.array([2.0, 5.0])).backward()
    assert np.allclose(soft.grad, [[2.0, 5.0]])


def test_backward_reuses_nodes_once():
    # diamond graph: x feeds two branches that rejoin; gradient must sum once
    x = Var(np.array([2.0]))
    a = x * 3.0
    b = x * 4.0
    y = ad.vsum(a + b)
    y.backward()
    assert np.allclose(x.grad, [7.0])


def test_backward_deep_chain_no_recursion_limit():
    x = Var(np.array([1.0]))
    y = x
    for _ in range(5000):
        y = y * 1.0
    ad.vsum(y).backward()
    assert np.allclose(x.grad, [1.0])


def test_unbroadcast_scalar_plus_matrix():
    x = Var(np.array([1.5]))
    y = ad.vsum(x + Var(np.zeros((3, 4))))
    y.backward()
    assert np.allclose(x.grad, [12.0])


@pytest.mark.parametrize("shape", [(1,), (3,), (2, 3), (2, 3, 4)])
def test_composite_grad_random_shapes(shape):
    check_grad(
        lambda x: ad.vmean(ad.tanh(x * 2.0 + 1.0) ** 2),
        RNG.standard_normal(shape),
    )
