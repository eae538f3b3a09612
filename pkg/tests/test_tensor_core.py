import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnforecast.tensor_core import (
    ShapeError,
    activation,
    activation_derivative,
    as_weight,
    contract3,
    contract3_backward,
)


def naive_contract(w, a, b, c):
    M, N, O, P = w.shape
    flat = w.ravel().tolist()
    out = [0.0] * M
    for m, n, o, p in itertools.product(range(M), range(N), range(O), range(P)):
        out[m] += flat[((m * N + n) * O + o) * P + p] * a[n] * b[o] * c[p]
    return np.array(out)


def random_instance(rng, dims):
    w = rng.normal(size=dims)
    a, b, c = (rng.normal(size=k) for k in dims[1:])
    return w, a, b, c


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def assert_close_rel(got, want, rel=1e-6, abs_floor=1e-9):
    err = np.abs(got - want)
    assert np.all(err <= rel * np.abs(want) + abs_floor), np.max(err)


dims_st = st.tuples(*(st.integers(1, 4) for _ in range(4)))


def test_zero_tensor_gives_zero():
    w = np.zeros((3, 2, 4, 1))
    out = contract3(w, [1.0, 2.0], [1, 2, 3, 4], [5.0])
    assert np.array_equal(out, np.zeros(3))


def test_scalar_example():
    w = as_weight([2.0], (1, 1, 1, 1))
    assert contract3(w, [1.0], [2.0], [3.0]).tolist() == [12.0]


@given(dims_st, st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_matches_naive_loop(dims, seed):
    w, a, b, c = random_instance(np.random.default_rng(seed), dims)
    np.testing.assert_allclose(contract3(w, a, b, c), naive_contract(w, a, b, c), rtol=1e-12, atol=1e-12)


@given(dims_st, st.integers(0, 2**31), st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_multilinear_in_each_slot(dims, seed, lam):
    rng = np.random.default_rng(seed)
    w, a, b, c = random_instance(rng, dims)
    base = contract3(w, a, b, c)
    args = [a, b, c]
    for slot in range(3):
        scaled = list(args)
        scaled[slot] = lam * args[slot]
        np.testing.assert_allclose(contract3(w, *scaled), lam * base, rtol=1e-10, atol=1e-10)
        other = rng.normal(size=args[slot].shape)
        summed = list(args)
        summed[slot] = args[slot] + other
        alt = list(args)
        alt[slot] = other
        np.testing.assert_allclose(contract3(w, *summed), base + contract3(w, *alt), rtol=1e-10, atol=1e-10)


def test_batched_equals_per_sample():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(3, 2, 2, 4))
    A, B, C = rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), rng.normal(size=(5, 4))
    batched = contract3(w, A, B, C)
    for i in range(5):
        np.testing.assert_allclose(batched[i], contract3(w, A[i], B[i], C[i]), rtol=1e-13)


@pytest.mark.parametrize("slot,axis", [(0, "n"), (1, "o"), (2, "p")])
def test_shape_error_names_axis(slot, axis):
    w = np.zeros((2, 3, 3, 3))
    args = [np.zeros(3)] * 3
    args[slot] = np.zeros(4)
    with pytest.raises(ShapeError, match=f"axis {axis}"):
        contract3(w, *args)


def test_as_weight_rejects_bad_count():
    with pytest.raises(ShapeError):
        as_weight([1.0, 2.0, 3.0], (1, 2, 2, 1))
    with pytest.raises(ValueError):
        as_weight([np.nan], (1, 1, 1, 1))


def test_row_major_layout():
    w = as_weight(np.arange(24.0), (2, 3, 2, 2))
    assert w[1, 2, 0, 1] == ((1 * 3 + 2) * 2 + 0) * 2 + 1


# -- activation ------------------------------------------------------------

def test_tanh_values():
    assert activation([0.0, 0.0]).tolist() == [0.0, 0.0]
    assert activation([1.0])[0] == pytest.approx(0.7615941559557649, abs=1e-15)
    x = np.linspace(-4, 4, 17)
    np.testing.assert_array_equal(activation(-x), -activation(x))


def test_tanh_derivative_values():
    assert activation_derivative([0.0]).tolist() == [1.0]
    assert activation_derivative([0.7615941559557649])[0] == pytest.approx(0.41997434161402614, abs=1e-15)
    t = activation(np.linspace(-5, 5, 101))
    d = activation_derivative(t)
    assert np.all((d > 0) & (d <= 1))


def test_tanh_derivative_cosh_identity():
    x = np.linspace(-5, 5, 201)
    d = activation_derivative(activation(x))
    np.testing.assert_allclose(d * np.cosh(x) ** 2, 1.0, atol=1e-12)


def test_sigmoid_and_its_derivative():
    x = np.linspace(-30, 30, 121)
    s = activation(x, "sigmoid")
    np.testing.assert_allclose(s, 1 / (1 + np.exp(-x)), rtol=1e-14)
    assert activation([0.0], "sigmoid")[0] == 0.5
    # finite-difference check of f' written through the output
    h = 1e-6
    fd = (activation(x + h, "sigmoid") - activation(x - h, "sigmoid")) / (2 * h)
    np.testing.assert_allclose(activation_derivative(s, "sigmoid"), fd, atol=1e-9)


def test_activation_rejects_nonfinite_and_unknown():
    with pytest.raises(ValueError):
        activation([np.inf])
    with pytest.raises(ValueError):
        activation([0.0], "relu")


# -- backward --------------------------------------------------------------

def test_backward_zero_upstream():
    rng = np.random.default_rng(0)
    w, a, b, c = random_instance(rng, (2, 3, 2, 2))
    for g in contract3_backward(w, a, b, c, np.zeros(2)):
        assert not np.any(g)


def test_backward_scalar_example():
    w = as_weight([2.0], (1, 1, 1, 1))
    gw, ga, gb, gc = contract3_backward(w, [1.0], [2.0], [3.0], [1.0])
    assert gw.ravel().tolist() == [6.0]
    assert (ga.tolist(), gb.tolist(), gc.tolist()) == ([12.0], [6.0], [4.0])


@given(dims_st, st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_backward_matches_finite_differences(dims, seed):
    rng = np.random.default_rng(seed)
    w, a, b, c = random_instance(rng, dims)
    u = rng.normal(size=dims[0])
    gw, ga, gb, gc = contract3_backward(w, a, b, c, u)
    assert_close_rel(gw, fd_grad(lambda x: u @ contract3(x, a, b, c), w))
    assert_close_rel(ga, fd_grad(lambda x: u @ contract3(w, x, b, c), a))
    assert_close_rel(gb, fd_grad(lambda x: u @ contract3(w, a, x, c), b))
    assert_close_rel(gc, fd_grad(lambda x: u @ contract3(w, a, b, x), c))


def test_backward_batched_sums_weight_gradient():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(2, 3, 3, 2))
    A, B, C, U = rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    gw, ga, gb, gc = contract3_backward(w, A, B, C, U)
    parts = [contract3_backward(w, A[i], B[i], C[i], U[i]) for i in range(4)]
    np.testing.assert_allclose(gw, sum(p[0] for p in parts), rtol=1e-12)
    np.testing.assert_allclose(ga, np.stack([p[1] for p in parts]), rtol=1e-12)
    np.testing.assert_allclose(gc, np.stack([p[3] for p in parts]), rtol=1e-12)


def test_backward_shape_error():
    with pytest.raises(ShapeError):
        contract3_backward(np.zeros((2, 1, 1, 1)), [1.0], [1.0], [1.0], [1.0])

