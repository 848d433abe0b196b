"""Bilinear concomitant of the Lagrangian identity and its antiderivative."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffop import DifferentialOperator, apply_array, formal_adjoint, inner_density, OperatorError
from .numgrid import FormField, GridFunction, GridSpec, integrate_path, partial, staircase, _diff_array


class ClosednessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConcomitantForm:
    """Components Z_i with <L*phi,psi> - <phi,L psi> = sum_i (-1)^(i+1) d_i Z_i."""

    grid: GridSpec
    components: tuple[np.ndarray, ...]
    operator: str = "L"

    def form(self) -> FormField:
        # Z^(m-1): m=1 a 0-form; m=2 Z1 dx2 + Z2 dx1, lexicographic (dx1, dx2)
        if self.grid.dim == 1:
            return FormField(self.grid, 0, self.components)
        return FormField(self.grid, 1, (self.components[1], self.components[0]))

    def divergence(self) -> np.ndarray:
        out = 0
        for i, Z in enumerate(self.components):
            out = out + (-1) ** i * _diff_array(Z, self.grid, i, 1)
        return out


def _check(L, *fs):
    for f in fs:
        if f.grid != L.grid or f.channels != L.channels:
            raise OperatorError("grid or channel mismatch")


def concomitant_arrays(L: DifferentialOperator, phi: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, ...]:
    grid, m = L.grid, L.dim
    Z = [np.zeros(grid.shape, dtype=complex) for _ in range(m)]
    for alpha, a in L.coefficients.items():
        u = np.einsum("...ji,...j->...i", np.conj(a), phi)  # a^H phi
        # peel axis 1: <u, d^a psi> = d1 W1 + <(-1)^a1 d1^a1 u, d2^a2 psi>
        for axis in range(m):
            k = alpha[axis]
            if k == 0:
                continue
            tail = (0,) * (axis + 1) + tuple(alpha[axis + 1:])
            W = 0
            for j in range(k):
                left = partial(u, grid, tuple(j if i == axis else 0 for i in range(m)))
                right_alpha = tuple(k - 1 - j if i == axis else tail[i] for i in range(m))
                W = W + (-1) ** j * inner_density(left, partial(psi, grid, right_alpha))
            # Z_1 = -W_1, Z_2 = +W_2 so that the identity reads d1 Z1 - d2 Z2
            Z[axis] = Z[axis] - W if axis == 0 else Z[axis] + W
            u = (-1) ** k * partial(u, grid, tuple(k if i == axis else 0 for i in range(m)))
    return tuple(Z)


def bilinear_concomitant(L: DifferentialOperator, phi: GridFunction, psi: GridFunction) -> ConcomitantForm:
    _check(L, phi, psi)
    return ConcomitantForm(L.grid, concomitant_arrays(L, phi.values, psi.values), L.name)


def interior_mask(grid: GridSpec, margin: int) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        idx = np.arange(grid.counts[ax])
        ok = (idx >= margin) & (idx < grid.counts[ax] - margin)
        mask &= np.expand_dims(ok, tuple(j for j in range(grid.dim) if j != ax))
    return mask


def lagrange_defect(L: DifferentialOperator, phi: GridFunction, psi: GridFunction) -> np.ndarray:
    adj, _ = formal_adjoint(L)
    lhs = inner_density(apply_array(adj, phi.values), psi.values) - inner_density(phi.values, apply_array(L, psi.values))
    return lhs - bilinear_concomitant(L, phi, psi).divergence()


def lagrange_residual(L: DifferentialOperator, phi: GridFunction, psi: GridFunction, margin: int | None = None) -> float:
    """Max interior deviation from the Lagrangian identity; margin defaults to order+1 nodes."""
    _check(L, phi, psi)
    margin = L.order + 1 if margin is None else margin
    r = lagrange_defect(L, phi, psi)
    return float(np.max(np.abs(r[interior_mask(L.grid, margin)]), initial=0.0))


def stencil_margin(order: int) -> int:
    """Nodes per side where the central stencil of this order does not fit."""
    return (order + 1) // 2


def membership(L: DifferentialOperator, f: GridFunction, margin: int | None = None) -> float:
    """Relative residual ||L f||_inf / ||f||_inf over nodes away from one-sided stencils."""
    scale = np.max(np.abs(f.values))
    if scale == 0:
        return 0.0
    margin = stencil_margin(L.order) if margin is None else margin
    r = np.abs(apply_array(L, f.values))[interior_mask(L.grid, margin)]
    return float(np.max(r, initial=0.0) / scale)


def closedness_residual(L: DifferentialOperator, phi: GridFunction, psi: GridFunction, input_tol: float = 1e-4,
                        margin: int | None = None) -> float:
    """Max interior |d Z| for a kernel pair (phi in ker L*, psi in ker L)."""
    _check(L, phi, psi)
    adj, _ = formal_adjoint(L)
    for name, op, f in (("phi", adj, phi), ("psi", L, psi)):
        r = membership(op, f)
        if r > input_tol:
            raise ClosednessError(f"{name} is not in the kernel: residual {r:.3e} > {input_tol:.1e}")
    margin = L.order if margin is None else margin
    dZ = bilinear_concomitant(L, phi, psi).divergence()
    return float(np.max(np.abs(dZ[interior_mask(L.grid, margin)]), initial=0.0))


@dataclass(frozen=True, eq=False)
class AntiderivativeField:
    grid: GridSpec
    values: np.ndarray
    basepoint: tuple[int, ...]


def cell_circulation(form: FormField) -> np.ndarray:
    """Trapezoid circulation of a 1-form around each grid cell, divided by the cell area."""
    F1, F2 = form.components
    h1, h2 = form.grid.spacings
    bottom = (F1[:-1, :-1] + F1[1:, :-1]) / 2 * h1
    top = (F1[:-1, 1:] + F1[1:, 1:]) / 2 * h1
    right = (F2[1:, :-1] + F2[1:, 1:]) / 2 * h2
    left = (F2[:-1, :-1] + F2[:-1, 1:]) / 2 * h2
    return (bottom + right - top - left) / (h1 * h2)


def antiderivative(form: FormField, basepoint: tuple[int, ...], tol: float | None = 1e-6) -> AntiderivativeField:
    """Staircase (axis 1 then axis 2) integral of a closed 1-form from the basepoint."""
    grid = form.grid
    if grid.dim != 2 or form.degree != 1:
        raise ClosednessError("antiderivative needs a 1-form on a 2D grid")
    if tol is not None:
        circ = np.max(np.abs(cell_circulation(form)))
        scale = max(np.max(np.abs(form.components[0])), np.max(np.abs(form.components[1])), 1.0)
        if circ > tol * scale:
            raise ClosednessError(f"form is not numerically closed: cell circulation {circ:.3e}")
    F1, F2 = form.components
    h1, h2 = grid.spacings
    i0, j0 = basepoint
    # cumulative trapezoid along axis 1 on row j0, then along axis 2 in every column
    row = np.concatenate([[0], np.cumsum((F1[1:, j0] + F1[:-1, j0]) / 2 * h1)])
    row -= row[i0]
    col = np.concatenate([np.zeros((grid.counts[0], 1)), np.cumsum((F2[:, 1:] + F2[:, :-1]) / 2 * h2, axis=1)], axis=1)
    col -= col[:, [j0]]
    values = row[:, None] + col
    return AntiderivativeField(grid, values, (i0, j0))


def path_value(form: FormField, start, end, axes_order=(0, 1)) -> complex:
    return integrate_path(form, staircase(start, end, axes_order))
