"""Affine operator pencils, their tau-extension and pencil Delsarte operators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concomitant import concomitant_arrays
from .diffop import DifferentialOperator, apply_array, formal_adjoint
from .eigenspace import FamilyError, SpectralFamily, SpectralGrid, build_kernel_family
from .numgrid import GridSpec, make_grid
from .transmutation import (DelsarteOperator, default_anchor,
                            delsarte_assemble, reduced_kernels, transform_family, transformed_operator)


class PencilError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AffinePencil:
    """L(lambda) = sum_i lambda^i L_i."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise PencilError("a pencil needs at least one component")
        g, N = comps[0].grid, comps[0].channels
        if any(c.grid != g or c.channels != N for c in comps):
            raise PencilError("pencil components must share grid and channels")
        if len(comps) > 1 and not any(np.any(a != 0) for a in comps[-1].coefficients.values()):
            raise PencilError("top pencil component is identically zero")
        object.__setattr__(self, "components", comps)

    @property
    def degree(self) -> int:
        return len(self.components) - 1

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    @property
    def channels(self) -> int:
        return self.components[0].channels

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(c.order for c in self.components)


def evaluate_pencil(P: AffinePencil, lam: complex) -> DifferentialOperator:
    coeffs = {}
    for i, Li in enumerate(P.components):
        for alpha, a in Li.coefficients.items():
            coeffs[alpha] = coeffs.get(alpha, 0) + lam**i * a
    return DifferentialOperator(P.grid, coeffs, P.channels, name=f"L({lam})")


def tau_grid(P: AffinePencil, tau_interval=(0.0, 1.0), n_tau: int = 65) -> GridSpec:
    if P.grid.dim != 1:
        raise PencilError("tau-extension is available for 1D pencils only")
    return make_grid([P.grid.intervals[0], tau_interval], [P.grid.counts[0], n_tau])


def tau_extend(P: AffinePencil, tau_interval=(0.0, 1.0), n_tau: int = 65, grid: GridSpec | None = None) -> DifferentialOperator:
    """Replace lambda^i by d^i/dtau^i; coefficients are constant along tau."""
    grid = tau_grid(P, tau_interval, n_tau) if grid is None else grid
    if grid.dim != 2:
        raise PencilError("extended grid must be 2D (x, tau)")
    nt = grid.counts[1]
    coeffs = {}
    for i, Li in enumerate(P.components):
        for (a,), c in Li.coefficients.items():
            coeffs[(a, i)] = np.repeat(c[:, None], nt, axis=1)
    return DifferentialOperator(grid, coeffs, P.channels, name="L_tau")


def separability_residual(P: AffinePencil, lam: complex, psi: np.ndarray, tau_interval=(0.0, 1.0), n_tau: int = 65) -> float:
    """max |L_tau(psi e^{lam tau}) - e^{lam tau} L(lam) psi| / max |psi e^{lam tau}|."""
    Lt = tau_extend(P, tau_interval, n_tau)
    tau = Lt.grid.axis(1)
    E = np.exp(lam * tau)
    Psi = psi[:, None, :] * E[None, :, None]
    lhs = apply_array(Lt, Psi)
    rhs = apply_array(evaluate_pencil(P, lam), psi)[:, None, :] * E[None, :, None]
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(Psi)))


@dataclass(frozen=True, eq=False)
class SpectrumSample:
    lambdas: np.ndarray
    weights: np.ndarray
    witness: dict = field(default_factory=dict)

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if lam.shape != w.shape or np.any(w <= 0):
            raise PencilError("spectrum sample needs one positive weight per lambda")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "weights", w)


def spectrum_sample(lambdas, weights=None) -> SpectrumSample:
    lambdas = np.atleast_1d(lambdas)
    if weights is None:
        weights = np.full(len(lambdas), 1.0 / max(len(lambdas), 1))
    return SpectrumSample(lambdas, weights)


@dataclass(frozen=True, eq=False)
class SeparatedFamily:
    pencil: AffinePencil
    spectrum: SpectrumSample
    psi: tuple  # one SpectralFamily per lambda
    phi: tuple

    def __len__(self):
        return len(self.psi)


def separated_family(P: AffinePencil, spectrum: SpectrumSample, sigma: SpectralGrid, gamma, recipe,
                     adjoint_recipe=None, member_tol: float = 1e-4) -> SeparatedFamily:
    """Kernel members of L(lambda) and of its formal adjoint for every sampled lambda.

    ``recipe`` may be a callable lambda -> recipe when members depend on lambda.
    """
    psis, phis = [], []
    adjoint_recipe = adjoint_recipe or recipe
    for lam in spectrum.lambdas:
        L = evaluate_pencil(P, lam)
        rec = recipe(lam) if callable(recipe) else recipe
        arec = adjoint_recipe(lam) if callable(adjoint_recipe) else adjoint_recipe
        try:
            psis.append(build_kernel_family(L, sigma, gamma, rec, member_tol))
            adj, _ = formal_adjoint(L)
            phis.append(build_kernel_family(adj, sigma, gamma, arec, member_tol, side="adjoint"))
        except FamilyError as exc:
            raise PencilError(f"no kernel witness at lambda = {lam}: {exc}") from None
        spectrum.witness[complex(lam)] = max(np.max(np.abs(apply_array(L, v))) / np.max(np.abs(v))
                                             for v in psis[-1].values) if sigma.size else 0.0
    return SeparatedFamily(P, spectrum, tuple(psis), tuple(phis))


def pencil_density(P: AffinePencil, lam: complex, phi: np.ndarray) -> np.ndarray:
    """G with d(phi, f) = sum_i i lam^{i-1} <L_i^* phi, f> = G^H f."""
    G = np.zeros_like(phi, dtype=complex)
    for i, Li in enumerate(P.components[1:], start=1):
        adj, _ = formal_adjoint(Li)
        G = G + i * np.conj(lam) ** (i - 1) * np.array([apply_array(adj, v) for v in phi]).reshape(phi.shape)
    return G


def _default_tau_operator(P):
    return lambda grid: tau_extend(P, grid=grid)


def tau_density(P: AffinePencil, lam: complex, phi: np.ndarray, tau: float, tau_operator=None,
                dtau: float = 1e-2) -> np.ndarray:
    """Density read off the tau-component of the extended concomitant at fixed tau.

    Members are lifted to phi e^{-conj(lam) tau} and unit channel vectors times
    e^{lam tau} on a short tau stencil around ``tau``.
    """
    tau_operator = tau_operator or _default_tau_operator(P)
    n_tau = 7
    grid = make_grid([P.grid.intervals[0], (tau - 3 * dtau, tau + 3 * dtau)], [P.grid.counts[0], n_tau])
    Lt = tau_operator(grid)
    t = grid.axis(1)
    N = P.channels
    K = phi.shape[0]
    G = np.zeros_like(phi, dtype=complex)
    up = np.exp(-np.conj(lam) * t)
    down = np.exp(lam * t)
    for e in range(K):
        Phi = phi[e][:, None, :] * up[None, :, None]
        for c in range(N):
            Psi = np.zeros(grid.shape + (N,), dtype=complex)
            Psi[..., c] = down[None, :]
            Ztau = concomitant_arrays(Lt, Phi, Psi)[1][:, n_tau // 2]
            G[e, :, c] = np.conj(Ztau)
    return G


def tau_reduced_kernels(P: AffinePencil, lam: complex, phi: SpectralFamily, psi: SpectralFamily, tau: float,
                        anchor: int, omega_x0=None, tau_operator=None, quadrature: str = "cubic") -> np.ndarray:
    C = np.eye(psi.size, dtype=complex) if omega_x0 is None else np.asarray(omega_x0, dtype=complex)
    G = tau_density(P, lam, phi.values, tau, tau_operator)
    return reduced_kernels(G, psi.values, P.grid, anchor, C, quadrature)


def tau_independence_check(P: AffinePencil, family: SeparatedFamily, tau1: float, tau2: float, anchor: int | None = None,
                           tau_operator=None) -> float:
    anchor = default_anchor(P.grid, "plus") if anchor is None else anchor
    worst = 0.0
    for lam, psi, phi in zip(family.spectrum.lambdas, family.psi, family.phi):
        k1 = tau_reduced_kernels(P, lam, phi, psi, tau1, anchor, tau_operator=tau_operator)
        k2 = tau_reduced_kernels(P, lam, phi, psi, tau2, anchor, tau_operator=tau_operator)
        worst = max(worst, float(np.max(np.abs(k1 - k2), initial=0.0)))
    return worst


def _joint(family: SeparatedFamily, omega_x0, anchor: int):
    """Stack per-lambda members and assemble the joint base kernel.

    Diagonal blocks come from ``omega_x0`` (a list per lambda, or a joint matrix
    whose diagonal blocks are used); off-diagonal blocks are fixed.
    """
    P = family.pencil
    lams = family.spectrum.lambdas
    sizes = [f.size for f in family.psi]
    blocks = np.cumsum([0] + sizes)
    Ktot = blocks[-1]
    C = np.zeros((Ktot, Ktot), dtype=complex)
    for a, lam_a in enumerate(lams):  # adjoint index (rows)
        for b, lam_b in enumerate(lams):  # direct index (columns)
            ra, rb = slice(blocks[a], blocks[a + 1]), slice(blocks[b], blocks[b + 1])
            if a == b:
                if omega_x0 is None:
                    base = np.eye(sizes[a])
                elif isinstance(omega_x0, (list, tuple)):
                    base = np.asarray(omega_x0[a])
                else:
                    full = np.asarray(omega_x0)
                    base = full[ra, rb] if full.shape == (Ktot, Ktot) else full
                C[ra, rb] = base
            else:
                Lb = evaluate_pencil(P, lam_b)
                for e in range(sizes[a]):
                    for k in range(sizes[b]):
                        Z = concomitant_arrays(Lb, family.phi[a].values[e], family.psi[b].values[k])[0]
                        C[blocks[a] + e, blocks[b] + k] = Z[anchor] / (lam_b - lam_a)
    return C, blocks


def pencil_delsarte(P: AffinePencil, family: SeparatedFamily, omega_x0=None, orientation: str = "plus",
                    tau: float = 0.0, quadrature: str = "cubic", tau_operator=None):
    """Delsarte operator from reduced tau-kernels; returns (op, transformed members per lambda).

    With several lambdas the pencil must be affine (degree 1) so that the reduced
    density does not depend on lambda; cross blocks of the base kernel come from
    the concomitant at x0 divided by the lambda difference.
    """
    grid = P.grid
    anchor = default_anchor(grid, orientation)
    lams = family.spectrum.lambdas
    if len(lams) == 0:
        empty = SpectralFamily(grid, SpectralGrid(np.zeros(0), np.zeros(0)), np.zeros((0,) + grid.shape + (P.channels,)))
        return delsarte_assemble(empty, empty, np.zeros((0, 0)), orientation, psi=empty, density=empty.values), []
    if len(lams) > 1 and P.degree > 1:
        raise PencilError("several spectral samples need a degree-1 pencil")
    C, blocks = _joint(family, omega_x0, anchor)
    psi = np.concatenate([f.values for f in family.psi])
    G = np.concatenate([tau_density(P, lam, f.values, tau, tau_operator) for lam, f in zip(lams, family.phi)])
    pts = np.concatenate([f.spectral.points + 1e6 * i for i, f in enumerate(family.psi)])
    w = np.concatenate([f.spectral.weights * wl for f, wl in zip(family.psi, family.spectrum.weights)])
    joint = SpectralFamily(grid, SpectralGrid(pts, w), psi, "L(lambda)", family.psi[0].gamma, "direct")
    M = reduced_kernels(G, psi, grid, anchor, C, quadrature)
    psi_t = transform_family(joint, M, C)
    phi_joint = joint.with_values(np.concatenate([f.values for f in family.phi]), side="adjoint")
    op = delsarte_assemble(phi_joint, psi_t, C, orientation, psi=joint, density=G, quadrature=quadrature)
    return op, [psi_t.values[blocks[i]:blocks[i + 1]] for i in range(len(lams))]


def transformed_pencil(P: AffinePencil, op: DelsarteOperator, probes=None, window: float | None = None):
    """Recover L~(mu) at r+1 probe values and solve for components; returns (pencil, joint residual).

    The joint residual compares the fitted pencil with a direct recovery at one
    extra probe value.
    """
    r = P.degree
    probes = np.arange(r + 2, dtype=float) if probes is None else np.asarray(probes)
    recovered = [transformed_operator(evaluate_pencil(P, mu), op, window) for mu in probes]
    V = np.vander(probes[:r + 1], r + 1, increasing=True)
    Vinv = np.linalg.inv(V)
    alphas = sorted({a for L in recovered for a in L.coefficients})
    comps = []
    for i in range(r + 1):
        coeffs = {a: sum(Vinv[i, s] * recovered[s].coefficient(a) for s in range(r + 1)) for a in alphas}
        comps.append(DifferentialOperator(P.grid, coeffs, P.channels, name=f"L~_{i}"))
    fitted = AffinePencil(tuple(comps))
    resid = 0.0
    if len(probes) > r + 1:
        mu = probes[r + 1]
        direct, model = recovered[r + 1], evaluate_pencil(fitted, mu)
        n = P.grid.counts[0]
        inner = slice(1, n - 1)
        for a in alphas:
            d = np.abs(direct.coefficient(a)[inner] - model.coefficient(a)[inner])
            resid = max(resid, float(np.max(d) / max(np.max(np.abs(direct.coefficient(a)[inner])), 1.0)))
    return fitted, resid
