"""Opposite-film pairs, Fredholm kernels and Nystrom solution of the GLM equations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_solve
from scipy.linalg.lapack import dgecon, dgetrf, zgecon, zgetrf

from .concomitant import interior_mask, stencil_margin
from .diffop import apply_array
from .numgrid import GridFunction, GridSpec, _diff_array, trapezoid_weights
from .transmutation import (COND_CUTOFF, DelsarteOperator, build_delsarte, default_anchor,
                            shift_density, volterra_weights)


class GLMError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FredholmKernel:
    grid: GridSpec
    values: np.ndarray  # (n, n, N, N) samples F(s, t)
    weights: np.ndarray  # global quadrature weights in t

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def matrix(self) -> np.ndarray:
        """Discrete operator with entries F(s_i, t_j) w_j."""
        n, N = self.values.shape[0], self.channels
        M = self.values * self.weights[None, :, None, None]
        return M.transpose(0, 2, 1, 3).reshape(n * N, n * N)

    def is_symmetric(self, tol: float = 1e-10) -> bool:
        F = self.values
        return bool(np.max(np.abs(F - F.transpose(1, 0, 3, 2))) <= tol * max(np.max(np.abs(F)), 1e-300))


@dataclass(frozen=True, eq=False)
class VolterraKernel:
    grid: GridSpec
    values: np.ndarray  # (n, n, N, N) samples K(x, s)
    orientation: str = "plus"

    def support(self) -> np.ndarray:
        n = self.values.shape[0]
        i, j = np.indices((n, n))
        return j >= i if self.orientation == "plus" else j <= i

    def excluded_mass(self) -> float:
        return float(np.max(np.abs(self.values[~self.support()]), initial=0.0))

    def trace(self) -> np.ndarray:
        n = self.values.shape[0]
        return self.values[np.arange(n), np.arange(n)]


def fredholm_from_matrix(grid: GridSpec, Phi: np.ndarray, N: int = 1) -> FredholmKernel:
    n = grid.counts[0]
    w = trapezoid_weights(grid)
    F = Phi.reshape(n, N, n, N).transpose(0, 2, 1, 3) / w[None, :, None, None]
    return FredholmKernel(grid, F, w)


def build_pair(phi, psi, omega_x0=None, *, density=shift_density, quadrature: str = "trapezoid"):
    """Plus-film operator anchored at the right end and its minus-film partner.

    Both carry the transformed family and base kernel of the plus operator, so
    they differ by a finite-rank term built from the same families.
    """
    plus, psi_t = build_delsarte(phi, psi, omega_x0, "plus", density=density, quadrature=quadrature)
    minus = DelsarteOperator(plus.grid, plus.psi_out, plus.density, plus.omega_x0, plus.weights,
                             default_anchor(plus.grid, "minus"), "minus", quadrature, None, phi)
    return plus, minus


def fredholm_from_pair(plus: DelsarteOperator, minus: DelsarteOperator) -> FredholmKernel:
    A, B = plus.matrix, minus.matrix
    if np.linalg.cond(A) > COND_CUTOFF:
        raise GLMError("plus operator is not invertible")
    Phi = np.linalg.solve(A, B) - np.eye(A.shape[0])
    return fredholm_from_matrix(plus.grid, Phi, plus.channels)


def _row_solve(F: np.ndarray, i: int, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve X (I + W F_sub) = -F_row for the row blocks X over nodes idx."""
    m, N = len(idx), F.shape[-1]
    lo, hi = idx[0], idx[-1] + 1
    Fsub = F[lo:hi, lo:hi].transpose(0, 2, 1, 3).reshape(m * N, m * N)
    A = np.eye(m * N) + np.repeat(w, N)[:, None] * Fsub
    getrf, gecon = (dgetrf, dgecon) if A.dtype.kind == "f" else (zgetrf, zgecon)
    lu, piv, info = getrf(A)
    rcond = gecon(lu, np.linalg.norm(A, 1))[0] if info == 0 else 0.0
    if rcond < 1 / COND_CUTOFF:
        raise GLMError(f"singular GLM row system at node {i}")
    rhs = -F[i, lo:hi].transpose(1, 0, 2).reshape(N, m * N)  # rows a, columns (j, b)
    X = lu_solve((lu, piv), rhs.T, trans=1).T
    return X.reshape(N, m, N).transpose(1, 0, 2)


def solve_glm(Phi: FredholmKernel, orientation: str = "plus", quadrature: str = "trapezoid") -> VolterraKernel:
    """Row-wise Nystrom solution of K + Phi + K Phi = 0 on the orientation side."""
    n, N = Phi.values.shape[0], Phi.channels
    h = Phi.grid.spacings[0]
    F = Phi.values
    if orientation == "minus":
        M = Phi.matrix()
        Fm = np.linalg.solve(np.eye(n * N) + M, np.eye(n * N)) - np.eye(n * N)
        F = fredholm_from_matrix(Phi.grid, Fm, N).values
    elif orientation != "plus":
        raise GLMError(f"unknown orientation {orientation!r}")
    if not np.any(F.imag):
        F = F.real
    K = np.zeros((n, n, N, N), dtype=F.dtype)
    for i in range(n):
        idx = np.arange(i, n) if orientation == "plus" else np.arange(0, i + 1)
        w = volterra_weights(len(idx), h, quadrature)
        K[i, idx] = _row_solve(F, i, idx, w)
    return VolterraKernel(Phi.grid, K.astype(complex), orientation)


def delsarte_kernel(op: DelsarteOperator) -> VolterraKernel:
    K, _ = op.kernel()
    n = op.grid.counts[0]
    # include the diagonal sampled as the limit s -> x
    sign = np.sign(np.arange(n) - op.anchor).astype(float)
    sign[op.anchor] = -1.0 if op.orientation == "plus" else 1.0
    full = -sign[:, None, None, None] * np.einsum("xae,esb->xsab", op.coupling, np.conj(op.density))
    idx = np.arange(n)
    K[idx, idx] = full[idx, idx]
    return VolterraKernel(op.grid, K, op.orientation)


def commutation_residual(L, Phi: FredholmKernel, testset, margin: int | None = None) -> float:
    """max_f ||((1+Phi)L - L(1+Phi)) f||_2 / ||(1+Phi) f||_2 over interior nodes."""
    margin = stencil_margin(L.order) if margin is None else margin
    n, N = Phi.values.shape[0], Phi.channels
    P = np.eye(n * N) + Phi.matrix()
    mask = interior_mask(L.grid, margin)
    worst = 0.0
    for f in testset:
        v = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=complex).reshape(n, N)
        Pv = (P @ v.reshape(-1)).reshape(n, N)
        r = (P @ apply_array(L, v).reshape(-1)).reshape(n, N) - apply_array(L, Pv)
        worst = max(worst, float(np.linalg.norm(r[mask]) / max(np.linalg.norm(Pv), 1e-300)))
    return worst


def marchenko_recover_potential(K: VolterraKernel, q0: GridFunction, accuracy: int = 4) -> GridFunction:
    """q~ = q0 - 2 d/dx K(x, x)."""
    if K.grid.dim != 1 or q0.grid != K.grid:
        raise GLMError("Marchenko recovery needs a 1D kernel on the potential's grid")
    tr = K.trace()
    dtr = _diff_array(tr, K.grid, 0, 1, accuracy)
    if q0.channels == 1:
        dtr = dtr[:, 0, 0][:, None]
    else:
        dtr = np.diagonal(dtr, axis1=1, axis2=2)
    return GridFunction(K.grid, q0.values - 2 * dtr)


# --- classical oracles ------------------------------------------------------------------

def bound_state_data(grid: GridSpec, kappas, cs) -> FredholmKernel:
    """Reflectionless data F(s, t) = sum_j c_j^2 exp(-kappa_j (s + t))."""
    x = grid.axis(0)
    S, T = np.meshgrid(x, x, indexing="ij")
    F = sum(c**2 * np.exp(-k * (S + T)) for k, c in zip(kappas, cs))
    return FredholmKernel(grid, np.asarray(F, dtype=complex)[:, :, None, None], trapezoid_weights(grid))


def soliton_center(kappa: float, c: float) -> float:
    """x1 with c^2 = 2 kappa exp(2 kappa x1)."""
    return float(np.log(c**2 / (2 * kappa)) / (2 * kappa))


def one_soliton_potential(x, kappa: float, x1: float) -> np.ndarray:
    return -2 * kappa**2 / np.cosh(kappa * (x - x1)) ** 2


def one_soliton_kernel(x, s, kappa: float, c: float) -> np.ndarray:
    c2 = c**2
    return -c2 * np.exp(-kappa * (x + s)) / (1 + c2 / (2 * kappa) * np.exp(-2 * kappa * x))


def rank_one_solution(grid: GridSpec, u: np.ndarray, c: float, quadrature: str = "trapezoid") -> np.ndarray:
    """Discrete Sherman-Morrison solution for Phi(s, t) = c u(s) u(t) (plus side)."""
    n, h = grid.counts[0], grid.spacings[0]
    K = np.zeros((n, n), dtype=complex)
    for i in range(n):
        w = volterra_weights(n - i, h, quadrature)
        denom = 1 + c * np.sum(w * u[i:] * u[i:])
        K[i, i:] = -c * u[i] * u[i:] / denom
    return K


def bound_states(K: VolterraKernel, kappas) -> np.ndarray:
    """psi_j(x) = exp(-kappa_j x) + int_x^b K(x, t) exp(-kappa_j t) dt for a plus kernel."""
    grid = K.grid
    x, h, n = grid.axis(0), grid.spacings[0], grid.counts[0]
    out = []
    for k in kappas:
        e = np.exp(-k * x)
        v = e.astype(complex).copy()
        for i in range(n):
            v[i] += np.sum(volterra_weights(n - i, h, "cubic") * K.values[i, i:, 0, 0] * e[i:])
        out.append(v)
    return np.array(out)
