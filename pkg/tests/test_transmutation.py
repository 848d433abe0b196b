import numpy as np
import pytest

from transmute.batteries import bump_battery, gaussian_battery
from transmute.diffop import DifferentialOperator
from transmute.eigenspace import FamilyRecipe, SpectralFamily, build_kernel_family, adjoint_kernel_family, spectral_grid
from transmute.glm import one_soliton_potential
from transmute.numgrid import make_grid
from transmute.transmutation import (TransmutationError, adjoint_companion, build_delsarte, conjugation_residual,
                                     cumulative_matrix, delsarte_assemble, delsarte_inverse, exponential_seed_constant,
                                     family_membership, intertwining_residual, kernel_matrices, transform_family,
                                     transformed_operator, volterra_weights)

EXP = FamilyRecipe("analytic", function=lambda k, x: np.exp(-k.real * x))


@pytest.fixture(scope="module")
def darboux():
    g = make_grid([(-4, 8)], [512])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): 1.0})
    sigma = spectral_grid([1.0])
    psi = build_kernel_family(L, sigma, None, EXP)
    phi = adjoint_kernel_family(L, sigma, None, EXP)
    C = np.array([[exponential_seed_constant(1.0, 0.0, 8.0)]])
    op, psi_t = build_delsarte(phi, psi, C)
    inv = delsarte_inverse(op)
    res = transformed_operator(L, op, inverse=inv, return_diagnostics=True)
    return dict(g=g, L=L, psi=psi, phi=phi, C=C, op=op, psi_t=psi_t, inv=inv, Lt=res.operator, res=res)


def test_volterra_weights_integrate_cubics_exactly():
    h = 0.1
    for m in (3, 4, 5, 9, 30):
        t = np.arange(m) * h
        w = volterra_weights(m, h)
        for p in range(4):
            assert np.dot(w, t**p) == pytest.approx(t[-1] ** (p + 1) / (p + 1), rel=1e-12)


def test_cumulative_matrix_orientation():
    n, h = 9, 0.25
    x = np.arange(n) * h
    T = cumulative_matrix(n, h, 4)
    assert np.allclose(T @ np.ones(n), x - x[4])


def test_kernel_matrices_at_base_point():
    g = make_grid([(0, 2)], [201])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): 1.0})
    fam = build_kernel_family(L, spectral_grid([0.0, 1.0]), None,
                              FamilyRecipe("initial", initial=lambda xi: [1 - xi, xi], start=50))
    a, b = kernel_matrices(fam, fam, L, 50, 50)
    assert np.array_equal(a.values, b.values)


def test_kernel_matrices_match_analytic_wronskian():
    g = make_grid([(0, 2)], [512])
    L = DifferentialOperator(g, {(2,): -1.0, (0,): 1.0})
    x0 = 100
    # cosh(x - x0) and sinh(x - x0) from Cauchy data at x0
    fam = build_kernel_family(L, spectral_grid([0.0, 1.0]), None,
                              FamilyRecipe("initial", initial=lambda xi: [1 - xi, xi], start=x0))
    Ox, _ = kernel_matrices(fam, fam, L, 400, x0)
    t = g.axis(0)[400] - g.axis(0)[x0]
    f = [np.cosh(t), np.sinh(t)]
    df = [np.sinh(t), np.cosh(t)]
    exact = np.array([[f[e] * df[k] - df[e] * f[k] for k in range(2)] for e in range(2)])
    assert np.max(np.abs(Ox.values - exact)) <= 1e-4
    # swapping roles gives the conjugate transpose up to the antisymmetry sign
    Os, _ = kernel_matrices(fam, fam, L, 400, x0)
    assert np.allclose(Ox.companion().values, np.conj(Os.values.T), atol=1e-8)
    assert np.allclose(Ox.companion().values, -Ox.values, atol=1e-8)


def test_transform_family_identity_for_constant_concomitant():
    g = make_grid([(0, 1)], [40])
    L = DifferentialOperator(g, {(1,): 1.0})
    ones = FamilyRecipe("analytic", function=lambda xi, x: np.ones_like(x))
    fam = build_kernel_family(L, spectral_grid([1.0]), None, ones)
    adj = adjoint_kernel_family(L, spectral_grid([1.0]), None, ones)
    omegas = [kernel_matrices(adj, fam, L, i, 0)[0] for i in range(40)]
    assert all(np.allclose(o.values, -1) for o in omegas)
    out = transform_family(fam, omegas, omegas[0])
    assert np.allclose(out.values, fam.values)


def test_transformed_family_at_base_point(darboux):
    op = darboux["op"]
    a = op.anchor
    assert np.array_equal(darboux["psi_t"].values[:, a], darboux["psi"].values[:, a])


def test_transformed_seed_matches_darboux_formula(darboux):
    x = darboux["g"].axis(0)
    C = darboux["C"][0, 0].real
    exact = C * np.exp(-x) / (C + (np.exp(-2 * x) - np.exp(-16.0)) / 2)
    assert np.max(np.abs(darboux["psi_t"].values[0, :, 0] - exact)) <= 1e-4 * np.max(np.abs(exact))


def test_empty_family_is_identity():
    g = make_grid([(0, 1)], [30])
    empty = SpectralFamily(g, spectral_grid([]), np.zeros((0, 30, 1)))
    op = delsarte_assemble(empty, empty, np.zeros((0, 0)))
    assert np.array_equal(op.matrix, np.eye(30))
    assert delsarte_inverse(op) is op
    L = DifferentialOperator(g, {(2,): -1.0})
    assert transformed_operator(L, op) is L
    f = gaussian_battery(g, 3, np.random.default_rng(1))
    assert intertwining_residual(L, L, op, f) == 0


def test_operator_reproduces_transformed_family(darboux):
    out = darboux["op"].apply(darboux["psi"].values[0])
    assert np.max(np.abs(out - darboux["psi_t"].values[0])) <= 1e-6


@pytest.mark.parametrize("orientation", ["plus", "minus"])
def test_volterra_support(darboux, orientation):
    g = darboux["g"]
    op, _ = build_delsarte(darboux["phi"], darboux["psi"], darboux["C"], orientation)
    x = g.axis(0)
    f = np.exp(-((x - 2) ** 2) * 4) * (np.abs(x - 2) < 1.0)
    out = op.apply(f[:, None])[:, 0]
    # the film from x toward the anchor misses supp f on this side
    untouched = x > 3.0 if orientation == "plus" else x < 1.0
    assert np.max(np.abs(out - f)[untouched]) <= 1e-10


def test_inverse_round_trip(darboux):
    op, inv = darboux["op"], darboux["inv"]
    for f in gaussian_battery(darboux["g"], 10, np.random.default_rng(0)):
        assert np.max(np.abs(inv.apply(op.apply(f)) - f)) <= 1e-5 * np.max(np.abs(f))
    back = inv.apply(darboux["psi_t"].values[0])
    assert np.max(np.abs(back - darboux["psi"].values[0])) <= 1e-5 * np.max(np.abs(back))


def test_inverse_of_identity():
    g = make_grid([(0, 1)], [20])
    empty = SpectralFamily(g, spectral_grid([]), np.zeros((0, 20, 1)))
    op = delsarte_assemble(empty, empty, np.zeros((0, 0)))
    assert np.array_equal(delsarte_inverse(op).matrix, np.eye(20))


def test_darboux_potential(darboux):
    g, L, Lt = darboux["g"], darboux["L"], darboux["Lt"]
    x = g.axis(0)
    dq = (Lt.coefficient((0,)) - L.coefficient((0,)))[1:-1, 0, 0]
    exact = one_soliton_potential(x, 1.0, 0.0)[1:-1]
    assert np.max(np.abs(dq - exact)) <= 1e-3 * np.max(np.abs(exact))


def test_principal_symbol_preserved(darboux):
    L, Lt = darboux["L"], darboux["Lt"]
    err = np.max(np.abs(Lt.coefficient((2,)) - L.coefficient((2,)))[1:-1])
    assert err <= 1e-3
    assert np.max(np.abs(Lt.coefficient((1,)))[1:-1]) <= 1e-3
    assert darboux["res"].model_residual <= 1e-6


def test_intertwining_and_membership(darboux):
    tests = bump_battery(darboux["g"], 10, np.random.default_rng(0))
    assert intertwining_residual(darboux["L"], darboux["Lt"], darboux["op"], tests) <= 1e-4
    assert max(family_membership(darboux["Lt"], darboux["psi_t"].values)) <= 1e-4


def test_conjugation_consistency(darboux):
    tests = gaussian_battery(darboux["g"], 6, np.random.default_rng(2))
    assert conjugation_residual(darboux["op"], tests) <= 1e-6
    comp = adjoint_companion(darboux["op"])
    assert comp.orientation == "minus"


def test_reduced_kernels_regular_at_base_point(darboux):
    op = darboux["op"]
    M = op.reduced_kernels()
    h = darboux["g"].spacings[0]
    a = op.anchor
    assert np.max(np.abs(M[a] - op.omega_x0)) == 0
    assert np.max(np.abs(M[a - 1] - op.omega_x0)) <= 10 * h


def test_singular_base_kernel_refused(darboux):
    with pytest.raises(TransmutationError):
        build_delsarte(darboux["phi"], darboux["psi"], np.zeros((1, 1)))


def test_two_dimensional_kernel_matrices():
    g = make_grid([(0, 1), (0, 1)], [64, 64])
    L = DifferentialOperator(g, {(2, 0): -1.0, (0, 2): -1.0})
    fam = build_kernel_family(L, spectral_grid([0.0, 1.0]), None,
                              FamilyRecipe("analytic", function=lambda xi, x, y: (1 - xi) * x + xi * (x * x - y * y)))
    Ox, O0 = kernel_matrices(fam, fam, L, (63, 63), (0, 0), omega_x0=np.eye(2) * 3)
    assert np.allclose(O0.values, np.eye(2) * 3)
    assert np.all(np.isfinite(Ox.values))
