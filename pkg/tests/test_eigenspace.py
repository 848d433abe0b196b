import numpy as np
import pytest
from hypothesis import given, strategies as st

from transmute.concomitant import membership
from transmute.diffop import DifferentialOperator
from transmute.eigenspace import (FamilyError, FamilyRecipe, SpectralFamily, adjoint_kernel_family, build_kernel_family,
                                  march, membership_report, read_manifest, spectral_grid, write_manifest)
from transmute.numgrid import make_grid


def test_unit_slope_kernel_of_second_derivative():
    g = make_grid([(0, 2)], [101])
    L = DifferentialOperator(g, {(2,): -1.0})
    fam = build_kernel_family(L, spectral_grid([1.0]), 30, "unit-slope")
    x0 = g.axis(0)[30]
    assert np.allclose(fam.values[0, :, 0], g.axis(0) - x0, atol=1e-12)


def test_sine_member():
    k = 2.0
    g = make_grid([(0, 3)], [512])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): -k * k})
    fam = build_kernel_family(L, spectral_grid([k]), 100, "unit-slope", member_tol=1e-3)
    exact = np.sin(k * (g.axis(0) - g.axis(0)[100])) / k
    assert np.max(np.abs(fam.values[0, :, 0] - exact)) <= 1e-6


def test_marching_converges_at_fourth_order():
    k, errs = 3.0, []
    for n in (65, 129, 257):
        g = make_grid([(0, 2)], [n])
        L = DifferentialOperator(g, {(2,): -1.0, (0,): -k * k})
        v = march(L, 0, np.array([0.0, 1.0]))[:, 0]
        errs.append(np.max(np.abs(v - np.sin(k * g.axis(0)) / k)))
    assert min(np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])) >= 3.8


def test_non_member_is_diagnosed():
    g = make_grid([(-4, 4)], [200])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): 2 / np.cosh(g.axis(0)) ** 2})
    recipe = FamilyRecipe("analytic", function=lambda xi, x: np.exp(-xi * x * x))
    with pytest.raises(FamilyError, match="failed members"):
        build_kernel_family(L, spectral_grid([1.0]), None, recipe)


def test_self_adjoint_families_coincide():
    g = make_grid([(0, 3)], [300])
    x = g.axis(0)
    L = DifferentialOperator(g, {(2,): -1.0, (0,): -1 - 0.5 * np.exp(-x)})
    sigma = spectral_grid([1.0])
    psi = build_kernel_family(L, sigma, 0, "slope")
    phi = adjoint_kernel_family(L, sigma, 0, "slope")
    assert np.max(np.abs(phi.values - psi.values)) <= 1e-8
    assert phi.side == "adjoint"


def test_first_order_adjoint_family_is_trivial():
    g = make_grid([(0, 1)], [50])
    L = DifferentialOperator(g, {(1,): 1.0})
    with pytest.raises(FamilyError):
        adjoint_kernel_family(L, spectral_grid([1.0]), 10, "slope")


def test_airy_marching_membership():
    g = make_grid([(0, 1)], [1024])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): g.axis(0)})
    recipe = FamilyRecipe("initial", initial=lambda xi: [1.0, xi], start=0)
    fam = build_kernel_family(L, spectral_grid([1.0, 2.0]), None, recipe)
    rep = membership_report(fam, L)
    assert max(rep.residuals) <= 1e-6


def test_membership_report_fault_injection(rng):
    g = make_grid([(0, 3)], [256])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): -1.0})
    fam = build_kernel_family(L, spectral_grid([1.0]), 0, "slope", member_tol=1e-3)
    assert membership_report(fam, L, 1e-3).passed
    noisy = np.concatenate([fam.values, rng.normal(size=fam.values.shape)])
    bad = SpectralFamily(g, spectral_grid([1.0, 2.0]), noisy, "L", 0)
    rep = membership_report(bad, L, 1e-3)
    assert rep.failed == [1]
    assert not rep.passed


def test_empty_family_report():
    g = make_grid([(0, 1)], [20])
    empty = SpectralFamily(g, spectral_grid([]), np.zeros((0, 20, 1)), "L")
    rep = membership_report(empty, DifferentialOperator(g, {(2,): 1.0}))
    assert rep.passed and rep.residuals == []


def test_proportional_members_fail_gram_check():
    g = make_grid([(0, 3)], [256])
    L = DifferentialOperator(g, {(2,): -1.0})
    with pytest.raises(FamilyError, match="gram"):
        build_kernel_family(L, spectral_grid([1.0, 2.0]), 0, "slope")


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_membership_is_scale_invariant(c):
    g = make_grid([(0, 2)], [128])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): -4.0})
    fam = build_kernel_family(L, spectral_grid([1.0]), 0, "slope", member_tol=1e-3)
    f = fam.member(0)
    # L f cancels O(f / h^2) terms, so rounding shows up near 1e-9 relative
    assert membership(L, f * c) == pytest.approx(membership(L, f), rel=1e-7)


def test_manifest_round_trip(tmp_path):
    g = make_grid([(0, 1)], [40])
    L = DifferentialOperator(g, {(2,): -1.0})
    fam = build_kernel_family(L, spectral_grid([1.0], [0.5]), 5, "unit-slope")
    back = read_manifest(write_manifest(fam, tmp_path))
    assert np.array_equal(back.values, fam.values)
    assert back.gamma == (5,) or back.gamma == 5
    assert back.recipe == "unit-slope" and back.spectral.weights[0] == 0.5


def test_weights_must_be_positive():
    with pytest.raises(FamilyError):
        spectral_grid([1.0, 2.0], [1.0, -1.0])
