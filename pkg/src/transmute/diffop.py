"""Matrix differential operators on grids and their formal adjoints."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .numgrid import GridFunction, GridSpec, integrate_cells, partial, _diff_array

MAX_ORDER = 3
MAX_CHANNELS = 4


class OperatorError(ValueError):
    pass


def multi_indices(dim: int, order: int):
    """All multi-indices with |alpha| <= order, graded then lexicographic."""
    out = []
    for k in range(order + 1):
        out += sorted((a for a in itertools.product(range(k + 1), repeat=dim) if sum(a) == k), reverse=True)
    return out


@dataclass(frozen=True, eq=False)
class DifferentialOperator:
    """L = sum_alpha a_alpha(x) d^alpha with coefficients of shape grid.shape + (N, N)."""

    grid: GridSpec
    coefficients: dict
    channels: int = 1
    name: str = "L"

    def __post_init__(self):
        coeffs = {}
        for alpha, a in self.coefficients.items():
            alpha = tuple(int(k) for k in alpha)
            if len(alpha) != self.grid.dim or min(alpha) < 0:
                raise OperatorError(f"bad multi-index {alpha}")
            a = np.asarray(a, dtype=complex)
            N = self.channels
            if a.ndim == 0:
                a = np.broadcast_to(a * np.eye(N), self.grid.shape + (N, N))
            elif a.shape == (N, N):
                a = np.broadcast_to(a, self.grid.shape + (N, N))
            elif a.shape == self.grid.shape:
                a = a[..., None, None] * np.eye(N)
            if a.shape != self.grid.shape + (N, N):
                raise OperatorError(f"coefficient {alpha} has shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise OperatorError(f"coefficient {alpha} not finite")
            a = np.array(a)
            a.setflags(write=False)
            coeffs[alpha] = coeffs[alpha] + a if alpha in coeffs else a
        if self.channels > MAX_CHANNELS:
            raise OperatorError(f"at most {MAX_CHANNELS} channels")
        if coeffs and max(sum(a) for a in coeffs) > MAX_ORDER:
            raise OperatorError(f"order above {MAX_ORDER}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def order(self) -> int:
        nz = [sum(a) for a, c in self.coefficients.items() if np.any(c != 0)]
        return max(nz, default=0)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def coefficient(self, alpha) -> np.ndarray:
        alpha = tuple(alpha)
        if alpha in self.coefficients:
            return self.coefficients[alpha]
        N = self.channels
        return np.zeros(self.grid.shape + (N, N), dtype=complex)

    def matrix(self):
        """Dense (size*N) x (size*N) matrix of the discretized operator."""
        n, N = self.grid.size, self.channels
        eye = np.eye(n * N).reshape((n * N,) + self.grid.shape + (N,))
        cols = apply_array(self, np.moveaxis(eye, 0, -1))
        return cols.reshape(n * N, n * N)


def apply_array(L: DifferentialOperator, v: np.ndarray) -> np.ndarray:
    """Apply to raw values of shape grid.shape + (N,) + batch."""
    out = np.zeros(v.shape, dtype=complex)
    batch = "".join("pqrs"[: v.ndim - L.dim - 1])
    for alpha, a in L.coefficients.items():
        dv = partial(v, L.grid, alpha)
        out += np.einsum(f"...ij,...j{batch}->...i{batch}", a, dv)
    return out


def apply(L: DifferentialOperator, f: GridFunction) -> GridFunction:
    if f.grid != L.grid or f.channels != L.channels:
        raise OperatorError("grid or channel mismatch between operator and function")
    return GridFunction(f.grid, apply_array(L, f.values))


def coefficient_derivative(a: np.ndarray, grid: GridSpec, gamma) -> np.ndarray:
    """d^gamma of a coefficient field, composing first-order stencils per axis."""
    out = a
    for axis, k in enumerate(gamma):
        for _ in range(k):
            out = _diff_array(out, grid, axis, 1)
    return out


@dataclass(frozen=True)
class AdjointExpansionCertificate:
    source: str
    coefficients: dict
    terms: tuple  # (alpha, beta, multiplicity) per Leibniz contribution

    def recombine(self, grid: GridSpec, source: DifferentialOperator) -> dict:
        out = {}
        for alpha, beta, mult in self.terms:
            gamma = tuple(x - y for x, y in zip(alpha, beta))
            aH = np.conj(np.swapaxes(source.coefficient(alpha), -1, -2))
            c = mult * coefficient_derivative(aH, grid, gamma)
            out[beta] = out.get(beta, 0) + c
        return out


def formal_adjoint(L: DifferentialOperator):
    """Expand sum_alpha (-1)^|alpha| d^alpha (a_alpha^H .) by the Leibniz rule."""
    coeffs, terms = {}, []
    for alpha, a in L.coefficients.items():
        aH = np.conj(np.swapaxes(a, -1, -2))
        sign = (-1) ** sum(alpha)
        for beta in itertools.product(*[range(k + 1) for k in alpha]):
            gamma = tuple(x - y for x, y in zip(alpha, beta))
            mult = sign * int(np.prod([comb(x, y) for x, y in zip(alpha, beta)]))
            terms.append((alpha, beta, mult))
            c = mult * coefficient_derivative(aH, L.grid, gamma)
            coeffs[beta] = coeffs[beta] + c if beta in coeffs else c
    adj = DifferentialOperator(L.grid, coeffs, L.channels, name=f"{L.name}*")
    return adj, AdjointExpansionCertificate(L.name, adj.coefficients, tuple(terms))


def inner_density(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Pointwise <phi, psi> = conj(phi)^T psi over the channel axis."""
    return np.sum(np.conj(phi) * psi, axis=-1)


def adjoint_defect(L: DifferentialOperator, phi: GridFunction, psi: GridFunction, margin: int | None = None,
                   atol: float = 1e-12) -> complex:
    margin = L.order if margin is None else margin
    for f in (phi, psi):
        mask = np.zeros(L.grid.shape, dtype=bool)
        for ax in range(L.dim):
            idx = np.arange(L.grid.counts[ax])
            near = (idx < margin) | (idx >= L.grid.counts[ax] - margin)
            mask |= np.expand_dims(near, tuple(j for j in range(L.dim) if j != ax))
        if np.max(np.abs(f.values[mask]), initial=0.0) > atol:
            raise OperatorError("inputs must vanish near the grid boundary")
    adj, _ = formal_adjoint(L)
    lhs = inner_density(apply(adj, phi).values, psi.values)
    rhs = inner_density(phi.values, apply(L, psi).values)
    return integrate_cells(lhs - rhs, L.grid)


# --- analytic coefficient presets ----------------------------------------------

def _polynomial(coords, coefficients):
    # 1D: list c_k of x^k; 2D: dict "i,j" -> c for x1^i x2^j
    if isinstance(coefficients, dict):
        out = 0
        for key, c in coefficients.items():
            powers = [int(p) for p in str(key).split(",")]
            term = complex(c)
            for x, p in zip(coords, powers):
                term = term * x**p
            out = out + term
        return out
    x = coords[0]
    return sum(complex(c) * x**k for k, c in enumerate(coefficients))


def _radius(coords, center, axis):
    if axis is None:
        center = np.broadcast_to(np.atleast_1d(center), (len(coords),))
        return np.sqrt(sum((x - c) ** 2 for x, c in zip(coords, center)))
    return coords[axis] - center


def preset_field(grid: GridSpec, spec) -> np.ndarray:
    """Sample a scalar coefficient preset on the grid."""
    coords = grid.coords()
    if not isinstance(spec, dict):
        return np.full(grid.shape, complex(spec))
    kind = spec.get("preset", "constant")
    if kind == "constant":
        v = spec.get("value", 0.0)
        v = complex(*v) if isinstance(v, (list, tuple)) else complex(v)
        return np.full(grid.shape, v)
    if kind == "polynomial":
        return np.broadcast_to(_polynomial(coords, spec["coefficients"]), grid.shape).astype(complex)
    r = _radius(coords, spec.get("center", 0.0), spec.get("axis", 0 if grid.dim == 1 else None))
    amp, width = complex(spec.get("amplitude", 1.0)), float(spec.get("width", 1.0))
    if kind == "sech2":
        return amp / np.cosh(r / width) ** 2
    if kind == "gaussian":
        return amp * np.exp(-(r / width) ** 2 / 2)
    raise OperatorError(f"unknown coefficient preset {kind!r}")


def operator_from_description(grid: GridSpec, desc: dict, name: str = "L") -> DifferentialOperator:
    """Build an operator from a parsed description (see README for the schema)."""
    dim = int(desc.get("dim", grid.dim))
    if dim != grid.dim:
        raise OperatorError(f"operator dim {dim} does not match grid dim {grid.dim}")
    N = int(desc.get("channels", 1))
    coeffs = {}
    for term in desc.get("terms", []):
        alpha = tuple(term["alpha"])
        c = term["coefficient"]
        if isinstance(c, dict) and "entries" in c:
            entries = c["entries"]
            a = np.stack([np.stack([preset_field(grid, e) for e in row], -1) for row in entries], -2)
        else:
            a = preset_field(grid, c)[..., None, None] * np.eye(N)
        coeffs[alpha] = coeffs.get(alpha, 0) + a
    L = DifferentialOperator(grid, coeffs, N, name=name)
    if "order" in desc and coeffs and L.order != int(desc["order"]):
        raise OperatorError(f"declared order {desc['order']} but terms give {L.order}")
    return L
