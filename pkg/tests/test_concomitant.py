import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import bump
from transmute.concomitant import (ClosednessError, antiderivative, bilinear_concomitant, cell_circulation,
                                   closedness_residual, lagrange_residual)
from transmute.diffop import DifferentialOperator
from transmute.numgrid import FormField, GridFunction, _diff_array, make_grid, sample


def test_first_order_concomitant_constant():
    g = make_grid([(0, 1)], [21])
    L = DifferentialOperator(g, {(1,): 1.0})
    one = sample(g, lambda x: 1 + 0 * x)
    (Z1,) = bilinear_concomitant(L, one, one).components
    assert np.allclose(Z1, -1)


def test_second_order_concomitant_is_wronskian():
    g = make_grid([(0, 2)], [401])
    x = g.axis(0)
    L = DifferentialOperator(g, {(2,): -1.0})
    phi, psi = sample(g, lambda x: np.exp(0.3 * x)), sample(g, lambda x: np.sin(2 * x))
    (Z1,) = bilinear_concomitant(L, phi, psi).components
    w = np.exp(0.3 * x) * 2 * np.cos(2 * x) - 0.3 * np.exp(0.3 * x) * np.sin(2 * x)
    assert np.max(np.abs(Z1 - w)[1:-1]) < 1e-3


def test_concomitant_of_zero_is_zero():
    g = make_grid([(0, 1), (0, 1)], [12, 12])
    L = DifferentialOperator(g, {(1, 1): 1.0, (2, 0): 2.0})
    zero = GridFunction(g, np.zeros(g.shape))
    psi = sample(g, lambda x, y: np.sin(x * y))
    assert all(np.all(Z == 0) for Z in bilinear_concomitant(L, zero, psi).components)


def test_lagrange_residual_converges_for_bumps():
    res = []
    for n in (64, 128, 256):
        g = make_grid([(0, 1)], [n])
        L = DifferentialOperator(g, {(2,): -1.0})
        phi = sample(g, lambda x: bump(x, 0.05, 0.95) * np.cos(3 * x))
        psi = sample(g, lambda x: bump(x, 0.1, 0.9))
        res.append(lagrange_residual(L, phi, psi))
    assert res[0] / res[1] >= 3.5 and res[1] / res[2] >= 3.5


def test_lagrange_residual_polynomial_class():
    # every product the identity differentiates stays at per-axis degree <= 2
    g = make_grid([(0, 1), (0, 1)], [17, 17])
    x, y = g.coords()
    L = DifferentialOperator(g, {(2, 0): 1 + x, (1, 1): 2.0, (0, 1): x, (0, 0): 3.0 + y})
    phi = sample(g, lambda x, y: 1 + y)
    psi = sample(g, lambda x, y: x + x * y)
    assert lagrange_residual(L, phi, psi) <= 1e-10


def test_lagrange_residual_zero_psi():
    g = make_grid([(0, 1)], [30])
    L = DifferentialOperator(g, {(3,): 1.0, (1,): g.axis(0)})
    phi = sample(g, np.exp)
    assert lagrange_residual(L, phi, GridFunction(g, np.zeros(30))) == 0


def test_wronskian_of_linear_pair():
    g = make_grid([(0, 1)], [64])
    L = DifferentialOperator(g, {(2,): -1.0})
    phi, psi = sample(g, lambda x: x), sample(g, lambda x: 1 + 0 * x)
    assert closedness_residual(L, phi, psi) <= 1e-8
    (Z1,) = bilinear_concomitant(L, phi, psi).components
    assert np.allclose(Z1, -1)


def test_wronskian_of_sine_cosine():
    g = make_grid([(0, 3)], [512])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): -1.0})
    phi, psi = sample(g, np.sin), sample(g, np.cos)
    assert closedness_residual(L, phi, psi) <= 1e-6
    (Z1,) = bilinear_concomitant(L, phi, psi).components
    # the centred stencil scales the Wronskian by sin(h)/h uniformly
    assert np.max(np.abs(Z1[1:-1] + 1)) <= 1e-5


def test_closedness_zero_and_rejects_non_kernel():
    g = make_grid([(0, 1)], [50])
    L = DifferentialOperator(g, {(2,): -1.0})
    phi = sample(g, lambda x: x)
    assert closedness_residual(L, phi, GridFunction(g, np.zeros(50))) == 0
    with pytest.raises(ClosednessError):
        closedness_residual(L, phi, sample(g, np.exp))


@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_conjugate_bilinearity(c):
    g = make_grid([(0, 1), (0, 1)], [10, 10])
    x, y = g.coords()
    L = DifferentialOperator(g, {(1, 1): 1 + 1j * x, (0, 2): y, (1, 0): 2.0})
    phi = sample(g, lambda x, y: np.exp(1j * x) * y)
    psi = sample(g, lambda x, y: np.cos(x + 2 * y))
    Z = bilinear_concomitant(L, phi, psi).components
    Zc = bilinear_concomitant(L, phi * c, psi).components
    Zd = bilinear_concomitant(L, phi, psi * c).components
    for a, b, d in zip(Z, Zc, Zd):
        assert np.allclose(b, np.conj(c) * a, atol=1e-9)
        assert np.allclose(d, c * a, atol=1e-9)


def test_antiderivative_of_exact_form():
    g = make_grid([(0, 1), (0, 1)], [33, 33])
    x, y = g.coords()
    F = antiderivative(FormField(g, 1, (y, x)), (4, 7))
    x0, y0 = g.axis(0)[4], g.axis(1)[7]
    assert np.allclose(F.values, x * y - x0 * y0, atol=1e-12)
    zero = antiderivative(FormField(g, 1, (0 * x, 0 * x)), (0, 0))
    assert np.all(zero.values == 0)


def test_antiderivative_rejects_non_closed():
    g = make_grid([(0, 1), (0, 1)], [20, 20])
    x, y = g.coords()
    with pytest.raises(ClosednessError):
        antiderivative(FormField(g, 1, (-y, x)), (0, 0))


def _potential_mismatch(n, phi_fn, psi_fn):
    g = make_grid([(0, 1), (0, 1)], [n, n])
    L = DifferentialOperator(g, {(2, 0): -1.0, (0, 2): -1.0})
    phi, psi = sample(g, phi_fn), sample(g, psi_fn)
    assert closedness_residual(L, phi, psi) <= 1e-6
    form = bilinear_concomitant(L, phi, psi).form()
    assert np.max(np.abs(cell_circulation(form))) <= 1e-6
    F = antiderivative(form, (0, 0))
    return max(np.max(np.abs(_diff_array(F.values, g, axis, 1) - form.components[axis])) for axis in range(2))


@pytest.mark.parametrize("phi_fn, psi_fn", [
    (lambda x, y: 1 + 0 * x, lambda x, y: x * x - y * y),
    (lambda x, y: x, lambda x, y: y),
    (lambda x, y: 1 + 0 * x, lambda x, y: x * y),
])
def test_antiderivative_of_kernel_pair_concomitant(phi_fn, psi_fn):
    assert _potential_mismatch(128, phi_fn, psi_fn) <= 1e-6


def test_antiderivative_mismatch_is_second_order():
    errs = [_potential_mismatch(n, lambda x, y: x * y, lambda x, y: x * x - y * y) for n in (32, 64, 128)]
    assert errs[2] <= 1e-4
    assert np.log2(errs[0] / errs[1]) >= 1.8 and np.log2(errs[1] / errs[2]) >= 1.8
