"""Delsarte transmutation operators: kernel matrices, transforms, inverses, collocation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import factorial

import numpy as np

from .concomitant import concomitant_arrays, interior_mask, stencil_margin
from .diffop import DifferentialOperator, apply_array
from .eigenspace import SpectralFamily
from .numgrid import FormField, GridFunction, GridSpec, diff_matrix, integrate_cells, integrate_path, staircase

COND_CUTOFF = 1e12
SV_CUTOFF = 1e-10


class TransmutationError(ValueError):
    pass


# --- quadrature ----------------------------------------------------------------

def volterra_weights(m: int, h: float, kind: str = "cubic") -> np.ndarray:
    """Weights for the integral over m consecutive nodes using only those nodes.

    ``cubic`` is fourth order: Simpson for m = 3, local cubic interpolation per
    interval for m >= 4; it falls back to the trapezoid rule for m = 2.
    """
    return _volterra_weights(int(m), float(h), kind).copy()


@lru_cache(maxsize=4096)
def _volterra_weights(m: int, h: float, kind: str) -> np.ndarray:
    w = np.zeros(m)
    if m == 1:
        return w
    if kind == "trapezoid" or m == 2:
        w[:] = h
        w[0] = w[-1] = h / 2
        return w
    if kind != "cubic":
        raise TransmutationError(f"unknown quadrature {kind!r}")
    if m == 3:
        return np.array([1.0, 4.0, 1.0]) * h / 3
    # interior interval k contributes [-1, 13, 13, -1] on nodes k-1..k+2
    ind = np.zeros(m)
    ind[1:m - 2] = 1.0
    w = np.convolve(ind, [-1.0, 13.0, 13.0, -1.0])[1:m + 1]
    w[0:4] += [9, 19, -5, 1]
    w[m - 4:m] += [1, -5, 19, 9]
    return w * h / 24


def cumulative_matrix(n: int, h: float, anchor: int, kind: str = "cubic") -> np.ndarray:
    """T with (T g)_i approximating the oriented integral of g from x_anchor to x_i."""
    T = np.zeros((n, n))
    for i in range(n):
        if i < anchor:
            T[i, i:anchor + 1] = -volterra_weights(anchor - i + 1, h, kind)
        elif i > anchor:
            T[i, anchor:i + 1] = volterra_weights(i - anchor + 1, h, kind)
    return T


def shift_density(phi: np.ndarray) -> np.ndarray:
    """Reduced density of the shifted operator L - lambda: d(phi, f) = -<phi, f>."""
    return -phi


# --- spectral-index algebra with measure rho --------------------------------------

def rho_inverse(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Inverse of A in the algebra (A.B)(i,j) = sum_k A(i,k) rho_k B(k,j)."""
    Rinv = np.diag(1.0 / rho)
    return Rinv @ safe_inverse(A) @ Rinv


def safe_inverse(A: np.ndarray, where: str = "") -> np.ndarray:
    if A.size == 0:
        return A
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= SV_CUTOFF * s[0] or s[0] / s[-1] > COND_CUTOFF:
        cond = np.inf if s[-1] == 0 else s[0] / s[-1]
        raise TransmutationError(f"kernel matrix singular{where}: condition {cond:.2e}")
    return np.linalg.pinv(A, rcond=SV_CUTOFF)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray  # (K, K), entry (eta, xi)
    node: tuple[int, ...]

    @property
    def cond(self) -> float:
        if self.values.size == 0:
            return 1.0
        return float(np.linalg.cond(self.values))

    def companion(self) -> KernelMatrix:
        """Hermitian companion built from the conjugate-transposed concomitant."""
        return KernelMatrix(np.conj(self.values.T), self.node)


def _node(x) -> tuple[int, ...]:
    return tuple(np.atleast_1d(x).astype(int).tolist())


def reduced_kernels(phi_density: np.ndarray, psi: np.ndarray, grid: GridSpec, anchor: int, omega_x0: np.ndarray,
                    quadrature: str = "cubic") -> np.ndarray:
    """Omega_x = Omega_x0 + integral from x0 to x of d(phi, psi), for every node: (n, K, K)."""
    T = cumulative_matrix(grid.counts[0], grid.spacings[0], anchor, quadrature)
    dens = np.einsum("esb,ksb->sek", np.conj(phi_density), psi)
    return omega_x0[None] + np.einsum("xs,sek->xek", T, dens)


def kernel_matrices(phi: SpectralFamily, psi: SpectralFamily, L: DifferentialOperator, x, x0, *,
                    density=None, omega_x0=None, quadrature: str = "cubic"):
    """Kernel matrices at x and x0.

    In 1D with ``density=None`` cycles are point evaluations of the concomitant.
    With a density (callable on member arrays) the reduced kernel
    Omega_x0 + int_{x0}^{x} d(phi, psi) is returned. In 2D the staircase integral
    of the concomitant 1-form from x0 to x is added to ``omega_x0``.
    """
    x, x0 = _node(x), _node(x0)
    K = psi.size
    if phi.size != K:
        raise TransmutationError("families differ in size")
    if phi.grid != L.grid or psi.grid != L.grid:
        raise TransmutationError("families and operator live on different grids")
    if L.dim == 1 and density is None:
        Z = np.array([[concomitant_arrays(L, phi.values[e], psi.values[k])[0] for k in range(K)] for e in range(K)])
        Z = Z.reshape(K, K, -1)
        return KernelMatrix(Z[:, :, x[0]], x), KernelMatrix(Z[:, :, x0[0]], x0)
    C = np.eye(K, dtype=complex) if omega_x0 is None else np.asarray(omega_x0, dtype=complex)
    if L.dim == 1:
        G = density(phi.values)
        M = reduced_kernels(G, psi.values, L.grid, x0[0], C, quadrature)
        out = KernelMatrix(M[x[0]], x), KernelMatrix(C.copy(), x0)
    else:
        vals = np.zeros((K, K), dtype=complex)
        for e in range(K):
            for k in range(K):
                Z = concomitant_arrays(L, phi.values[e], psi.values[k])
                form = FormField(L.grid, 1, (Z[1], Z[0]))
                vals[e, k] = integrate_path(form, staircase(x0, x))
        out = KernelMatrix(C + vals, x), KernelMatrix(C.copy(), x0)
    if out[1].cond > COND_CUTOFF:
        raise TransmutationError(f"Omega_x0 ill-conditioned: {out[1].cond:.2e}")
    return out


def transform_family(psi: SpectralFamily, omegas, omega_x0, weights=None) -> SpectralFamily:
    """psi~(x) = psi(x) . Omega_x^{-1} . Omega_x0 with rho-weighted index contraction.

    ``omegas`` is an array (n, K, K) of kernel matrices, one per node (1D).
    """
    rho = psi.spectral.weights if weights is None else np.asarray(weights, dtype=float)
    R = np.diag(rho)
    C = np.asarray(omega_x0.values if isinstance(omega_x0, KernelMatrix) else omega_x0)
    out = np.empty_like(psi.values)
    for i, Om in enumerate(omegas):
        Om = Om.values if isinstance(Om, KernelMatrix) else Om
        try:
            P = R @ rho_inverse(Om, rho) @ R @ C
        except TransmutationError as exc:
            raise TransmutationError(f"{exc} at node {i}") from None
        out[:, i] = np.einsum("k...,kj->j...", psi.values[:, i], P)
    return psi.with_values(out, side="transformed")


# --- Delsarte operators ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DelsarteOperator:
    """f -> f - sum psi_out(xi) rho [Omega_x0^{-1}]_rho rho  int_{x0}^{x} d(phi(eta), f).

    ``density`` holds fields G_eta with d(phi(eta), f) = G_eta^H f pointwise. The
    operator is realized as a dense matrix on the 1D grid.
    """

    grid: GridSpec
    psi_out: np.ndarray  # (K, n, N) members multiplying the integral term
    density: np.ndarray  # (K, n, N)
    omega_x0: np.ndarray  # (K, K)
    weights: np.ndarray
    anchor: int
    orientation: str = "plus"
    quadrature: str = "cubic"
    psi_in: np.ndarray | None = None  # members mapped onto psi_out, when known
    phi: SpectralFamily | None = None

    @property
    def size(self) -> int:
        return self.psi_out.shape[0]

    @property
    def channels(self) -> int:
        return self.psi_out.shape[-1] if self.size else 1

    @cached_property
    def cumulative(self) -> np.ndarray:
        return cumulative_matrix(self.grid.counts[0], self.grid.spacings[0], self.anchor, self.quadrature)

    @cached_property
    def coupling(self) -> np.ndarray:
        """psi_out . Omega_x0^{-1} in the rho algebra, shape (n, N, K)."""
        rho = self.weights
        P = np.diag(rho) @ rho_inverse(self.omega_x0, rho) @ np.diag(rho)
        return np.einsum("kxa,ke->xae", self.psi_out, P)

    @cached_property
    def matrix(self) -> np.ndarray:
        n, N = self.grid.counts[0], self.channels
        eye = np.eye(n * N, dtype=complex)
        if self.size == 0:
            return eye
        Kx = np.einsum("xae,xs,esb->xasb", self.coupling, self.cumulative, np.conj(self.density))
        return eye - Kx.reshape(n * N, n * N)

    def apply(self, f):
        v = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=complex)
        n, N = self.grid.counts[0], self.channels
        shp = v.shape
        out = self.matrix @ v.reshape(n * N, -1)
        out = out.reshape(shp)
        return GridFunction(self.grid, out) if isinstance(f, GridFunction) else out

    __call__ = apply

    def kernel(self) -> tuple[np.ndarray, np.ndarray]:
        """Sampled kernel K(x, s) of (op - 1) with shape (n, n, N, N) and its support mask."""
        n = self.grid.counts[0]
        idx = np.arange(n)
        lo = np.minimum(idx, self.anchor)[:, None]
        hi = np.maximum(idx, self.anchor)[:, None]
        support = (idx[None, :] >= lo) & (idx[None, :] <= hi) & (idx[:, None] != self.anchor)
        sign = np.where(idx > self.anchor, 1.0, -1.0)[:, None, None, None]
        K = -sign * np.einsum("xae,esb->xsab", self.coupling, np.conj(self.density)) if self.size else \
            np.zeros((n, n, 1, 1), dtype=complex)
        return np.where(support[:, :, None, None], K, 0), support

    def reduced_kernels(self) -> np.ndarray:
        if self.psi_in is None:
            raise TransmutationError("input family unknown; cannot form Omega_x")
        return reduced_kernels(self.density, self.psi_in, self.grid, self.anchor, self.omega_x0, self.quadrature)


def default_anchor(grid: GridSpec, orientation: str) -> int:
    if orientation == "plus":
        return grid.counts[0] - 1
    if orientation == "minus":
        return 0
    raise TransmutationError(f"orientation must be 'plus' or 'minus', got {orientation!r}")


def delsarte_assemble(phi: SpectralFamily, psi_tilde: SpectralFamily, omega_x0, orientation: str = "plus", *,
                      psi: SpectralFamily | None = None, density=shift_density, anchor: int | None = None,
                      quadrature: str = "cubic") -> DelsarteOperator:
    """Volterra operator with film from x0 toward x; x0 defaults to the right end for 'plus'."""
    grid = psi_tilde.grid
    if grid.dim != 1:
        raise TransmutationError("Delsarte operators are realized on 1D grids")
    anchor = default_anchor(grid, orientation) if anchor is None else int(anchor)
    C = np.asarray(omega_x0.values if isinstance(omega_x0, KernelMatrix) else omega_x0, dtype=complex)
    G = np.asarray(density(phi.values) if callable(density) else density, dtype=complex)
    if psi_tilde.size:
        rho_inverse(C, psi_tilde.spectral.weights)  # refuses singular Omega_x0
    return DelsarteOperator(grid, psi_tilde.values, G, C, psi_tilde.spectral.weights, anchor, orientation,
                            quadrature, None if psi is None else psi.values, phi)


def build_delsarte(phi: SpectralFamily, psi: SpectralFamily, omega_x0=None, orientation: str = "plus", *,
                   density=shift_density, anchor: int | None = None, quadrature: str = "cubic"):
    """Kernel matrices, transformed family and operator in one pass; returns (op, psi_tilde)."""
    grid = psi.grid
    anchor = default_anchor(grid, orientation) if anchor is None else int(anchor)
    K = psi.size
    C = np.eye(K, dtype=complex) if omega_x0 is None else np.asarray(omega_x0, dtype=complex)
    G = np.asarray(density(phi.values) if callable(density) else density, dtype=complex)
    M = reduced_kernels(G, psi.values, grid, anchor, C, quadrature)
    psi_t = transform_family(psi, M, C)
    op = delsarte_assemble(phi, psi_t, C, orientation, psi=psi, density=G, anchor=anchor, quadrature=quadrature)
    return op, psi_t


def delsarte_inverse(op: DelsarteOperator) -> DelsarteOperator:
    """Mirrored operator: psi and psi~ swap, density G M^{-H} C^H, base constant -C."""
    if op.size == 0:
        return op
    M = op.reduced_kernels()
    C = op.omega_x0
    Gt = np.empty_like(op.density)
    for i in range(M.shape[0]):
        try:
            S = safe_inverse(M[i]).conj().T @ C.conj().T
        except TransmutationError as exc:
            raise TransmutationError(f"{exc} at node {i}") from None
        Gt[:, i] = np.einsum("ea,ek->ka", op.density[:, i], S)
    return DelsarteOperator(op.grid, op.psi_in, Gt, -C, op.weights, op.anchor, op.orientation, op.quadrature,
                            op.psi_out, None)


def adjoint_companion(op: DelsarteOperator) -> DelsarteOperator:
    """Operator acting on the adjoint side; equals the Hermitian adjoint of op^{-1}.

    Its film runs from the opposite end of the box, so its kernel lives on the
    complementary triangle.
    """
    if op.size == 0:
        return op
    inv = delsarte_inverse(op)
    n = op.grid.counts[0]
    anchor = 0 if op.anchor == n - 1 else n - 1 if op.anchor == 0 else None
    if anchor is None:
        raise TransmutationError("companion needs the anchor at an end of the box")
    # (op^-1)^H g = g - Gt C^{-H} int_{x0'}^{x} psi^H g, where inv carries Gt and -C
    return DelsarteOperator(op.grid, inv.density, op.psi_in, (-inv.omega_x0).conj().T, op.weights, anchor,
                            "minus" if op.orientation == "plus" else "plus", op.quadrature, None, None)


# --- transformed operator by collocation -----------------------------------------------

@dataclass(frozen=True, eq=False)
class CollocationResult:
    operator: DifferentialOperator
    model_residual: float
    worst_condition: float


def transformed_operator(L: DifferentialOperator, op: DelsarteOperator, window: float | None = None,
                         inverse: DelsarteOperator | None = None, cond_cutoff: float = COND_CUTOFF,
                         return_diagnostics: bool = False):
    """Recover coefficients of op L op^{-1} by local collocation at every node.

    Test functions are Gaussian-windowed monomials (x - x_i)^j / j!, one per unknown
    coefficient, plus one extra to detect order inflation.
    """
    grid = L.grid
    if grid.dim != 1:
        raise TransmutationError("coefficient recovery is implemented for 1D operators")
    if op.size == 0:
        res = CollocationResult(L, 0.0, 1.0)
        return res if return_diagnostics else L
    n, N, order = grid.counts[0], L.channels, L.order
    h = grid.spacings[0]
    x = grid.axis(0)
    s = 24 * h if window is None else float(window)
    inverse = delsarte_inverse(op) if inverse is None else inverse
    A, B = op.matrix, inverse.matrix
    Lt = A @ L.matrix() @ B
    X = x[:, None] - x[None, :]
    W = np.exp(-X**2 / (2 * s * s))
    D = [np.eye(n)] + [diff_matrix(n, h, k).toarray() for k in range(1, order + 2)]
    tests = [X**j / factorial(j) * W for j in range(order + 2)]
    # S[i, j, k] = (D^k g_j)(x_i) for g_j centered at x_i
    S = np.array([[np.diag(D[k] @ g) for k in range(order + 1)] for g in tests]).transpose(2, 0, 1)
    coeffs = np.zeros((n, order + 1, N, N), dtype=complex)
    worst, model = 1.0, 0.0
    eyeN = np.eye(N)
    for c in range(N):
        # H[i, j, a] = (L~ (g_j e_c))_a (x_i)
        H = np.empty((n, order + 2, N), dtype=complex)
        for j, g in enumerate(tests):
            G = np.kron(g, eyeN[:, [c]])  # (nN, n)
            Hg = (Lt @ G).reshape(n, N, n)
            H[:, j] = Hg[np.arange(n), :, np.arange(n)]
        for i in range(n):
            Si = S[i, :order + 1]
            cnd = np.linalg.cond(Si)
            if cnd > cond_cutoff:
                raise TransmutationError(f"collocation system ill-conditioned at node {i}: {cnd:.2e}")
            worst = max(worst, cnd)
            sol = np.linalg.solve(Si, H[i, :order + 1])  # (order+1, N): row k -> a_k[:, c]
            coeffs[i, :, :, c] = sol
            pred = S[i, order + 1] @ sol
            if stencil_margin(order + 1) <= i < n - stencil_margin(order + 1):
                scale = max(np.max(np.abs(H[i, :order + 1])), 1e-300)
                model = max(model, float(np.max(np.abs(pred - H[i, order + 1])) / scale))
    table = {(k,): coeffs[:, k] for k in range(order + 1)}
    Lt_op = DifferentialOperator(grid, table, N, name=f"{L.name}~")
    res = CollocationResult(Lt_op, model, worst)
    return res if return_diagnostics else Lt_op


def conjugation_residual(op: DelsarteOperator, testset) -> float:
    """max |<op* g, op f> - <g, f>| / (||f|| ||g||) over pairs from the test set."""
    comp = adjoint_companion(op)
    vals = [f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=complex).reshape(op.grid.shape + (-1,))
            for f in testset]
    norms = [np.sqrt(abs(integrate_cells(np.abs(v) ** 2, op.grid))) for v in vals]
    worst = 0.0
    for f, nf in zip(vals, norms):
        Af = op.apply(f)
        for g, ng in zip(vals, norms):
            lhs = integrate_cells(np.conj(comp.apply(g)) * Af, op.grid)
            worst = max(worst, abs(lhs - integrate_cells(np.conj(g) * f, op.grid)) / max(nf * ng, 1e-300))
    return worst


def interior_norm(v: np.ndarray, grid: GridSpec, margin: int) -> float:
    mask = interior_mask(grid, margin)
    return float(np.linalg.norm(v[mask]))


def intertwining_residual(L: DifferentialOperator, Lt: DifferentialOperator, op: DelsarteOperator, testset,
                          margin: int | None = None) -> float:
    """max_f ||(L~ op - op L) f||_2 / ||f||_2, norms over interior nodes."""
    margin = stencil_margin(L.order) if margin is None else margin
    worst = 0.0
    for f in testset:
        v = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=complex).reshape(L.grid.shape + (-1,))
        r = apply_array(Lt, op.apply(v)) - op.apply(apply_array(L, v))
        worst = max(worst, interior_norm(r, L.grid, margin) / max(np.linalg.norm(v), 1e-300))
    return worst


def family_membership(Lt: DifferentialOperator, values: np.ndarray, margin: int | None = None) -> list[float]:
    """Relative interior residuals ||L~ psi~||_inf / ||psi~||_inf per member."""
    margin = stencil_margin(Lt.order) if margin is None else margin
    mask = interior_mask(Lt.grid, margin)
    return [float(np.max(np.abs(apply_array(Lt, v))[mask]) / np.max(np.abs(v))) for v in values]


def exponential_seed_constant(kappa: float, x1: float, b: float) -> float:
    """Base kernel for the seed exp(-kappa x) with anchor b that centers the soliton at x1."""
    return float(np.exp(-2 * kappa * x1) / (2 * kappa) - np.exp(-2 * kappa * b) / (2 * kappa))
