"""Finite kernel families of an operator indexed by a discrete spectral set."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .concomitant import membership
from .diffop import DifferentialOperator, formal_adjoint
from .numgrid import GridFunction, GridSpec, read_csv, trapezoid_weights, write_csv

OVERFLOW_GUARD = 1e150
GRAM_FLOOR = 1e-10


class FamilyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape != w.shape:
            raise FamilyError("points and weights differ in length")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise FamilyError("spectral weights must be positive and finite")
        if len(np.unique(pts)) != len(pts):
            raise FamilyError("spectral points must be distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return len(self.points)


def spectral_grid(points, weights=None) -> SpectralGrid:
    points = np.atleast_1d(points)
    if weights is None:
        weights = np.full(len(points), 1.0 / max(len(points), 1))
    return SpectralGrid(points, weights)


@dataclass(frozen=True)
class FamilyRecipe:
    """How members are produced.

    ``slope``: psi(G) = 0, psi'(G) = xi, higher derivatives zero.
    ``unit-slope``: as ``slope`` with psi'(G) = 1 for every xi.
    ``initial``: ``initial(xi)`` returns the full state (psi, psi', ...) at ``start``.
    ``analytic``: ``function(xi, *coords)`` gives the member directly (checked, not marched).
    """

    name: str
    initial: Callable | None = None
    function: Callable | None = None
    start: int | None = None


@dataclass(frozen=True, eq=False)
class SpectralFamily:
    grid: GridSpec
    spectral: SpectralGrid
    values: np.ndarray  # (K,) + grid.shape + (N,)
    operator: str = "L"
    gamma: object = None
    side: str = "direct"
    recipe: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != self.grid.dim + 2 or v.shape[1:-1] != self.grid.shape or v.shape[0] != self.spectral.size:
            raise FamilyError(f"family values of shape {v.shape} do not fit {self.spectral.size} members "
                              f"on grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def member(self, k: int) -> GridFunction:
        return GridFunction(self.grid, self.values[k])

    def with_values(self, values, **kw) -> SpectralFamily:
        args = dict(grid=self.grid, spectral=self.spectral, values=np.asarray(values, dtype=complex),
                    operator=self.operator, gamma=self.gamma, side=self.side, recipe=self.recipe)
        args.update(kw)
        return SpectralFamily(**args)


@dataclass
class MembershipReport:
    residuals: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    gram_min_sv: float = np.inf
    member_tol: float = 1e-4
    failed: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failed and (not self.residuals or self.gram_min_sv > GRAM_FLOOR)


def _gamma_nodes(grid: GridSpec, gamma):
    if gamma is None:
        return None
    if grid.dim == 1:
        return (np.atleast_1d(gamma)[0],)
    axis, index = gamma  # node line {x_axis = index}
    sl = [slice(None)] * 2
    sl[axis] = index
    return tuple(sl)


def membership_report(family: SpectralFamily, L: DifferentialOperator, member_tol: float = 1e-4) -> MembershipReport:
    if family.size and family.grid != L.grid:
        raise FamilyError("family and operator grids differ")
    rep = MembershipReport(member_tol=member_tol)
    sel = _gamma_nodes(family.grid, family.gamma)
    for k in range(family.size):
        f = family.member(k)
        r = membership(L, f)
        scale = np.max(np.abs(f.values))
        b = 0.0 if sel is None else float(np.max(np.abs(f.values[sel])) / scale) if scale else 0.0
        rep.residuals.append(r)
        rep.boundary.append(b)
        if not r <= member_tol or not b <= member_tol or scale == 0:
            rep.failed.append(k)
    if family.size:
        V = family.values.reshape(family.size, -1)
        w = np.repeat(trapezoid_weights(family.grid).ravel(), family.channels)
        norms = np.sqrt(np.sum(w * np.abs(V) ** 2, axis=1, keepdims=True))
        V = V / np.maximum(norms, 1e-300)
        G = (np.conj(V) * w) @ V.T
        rep.gram_min_sv = float(np.linalg.svd(G, compute_uv=False).min())
    return rep


def march(L: DifferentialOperator, start: int, state0: np.ndarray) -> np.ndarray:
    """Classical RK4 for L psi = 0 from node ``start`` in both directions."""
    grid = L.grid
    n, N, order = grid.counts[0], L.channels, L.order
    x = grid.axis(0)
    h = grid.spacings[0]
    splines = {k: CubicSpline(x, L.coefficient((k,)), axis=0) for k in range(order + 1)}
    lead = L.coefficient((order,))
    if np.any(np.abs(np.linalg.det(lead)) == 0):
        raise FamilyError("leading coefficient is singular on the grid")

    def rhs(t, y):
        Y = y.reshape(order, N)
        acc = sum(splines[k](t) @ Y[k] for k in range(order))
        top = np.linalg.solve(splines[order](t), -acc)
        return np.concatenate([Y[1:].ravel(), top])

    out = np.zeros((n, order * N), dtype=complex)
    out[start] = state0
    for direction in (1, -1):
        i = start
        y = np.asarray(state0, dtype=complex)
        while 0 <= i + direction < n:
            t, s = x[i], direction * h
            k1 = rhs(t, y)
            k2 = rhs(t + s / 2, y + s / 2 * k1)
            k3 = rhs(t + s / 2, y + s / 2 * k2)
            k4 = rhs(t + s, y + s * k3)
            y = y + s / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            i += direction
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > OVERFLOW_GUARD:
                raise FamilyError(f"marching blow-up near x = {x[i]:.4g}")
            out[i] = y
    return out[:, :N]


def _initial_state(recipe: FamilyRecipe, xi, order: int, N: int) -> np.ndarray:
    if recipe.name in ("slope", "unit-slope"):
        s = np.zeros((order, N), dtype=complex)
        if order >= 2:
            s[1] = xi if recipe.name == "slope" else 1.0
        return s.ravel()
    if recipe.name == "initial":
        return np.asarray(recipe.initial(xi), dtype=complex).ravel()
    raise FamilyError(f"unknown recipe {recipe.name!r}")


def build_kernel_family(L: DifferentialOperator, sigma: SpectralGrid, gamma, recipe: FamilyRecipe | str,
                        member_tol: float = 1e-4, side: str = "direct") -> SpectralFamily:
    if isinstance(recipe, str):
        recipe = FamilyRecipe(recipe)
    grid, N = L.grid, L.channels
    members = []
    for xi in sigma.points:
        if recipe.name == "analytic":
            v = np.asarray(recipe.function(xi, *grid.coords()), dtype=complex)
            if v.shape == grid.shape:
                v = np.repeat(v[..., None], N, axis=-1)
            members.append(v)
            continue
        if grid.dim != 1:
            raise FamilyError("marching needs a 1D grid; use an analytic recipe in 2D")
        start = gamma if gamma is not None else recipe.start
        if start is None:
            raise FamilyError("marching needs a start node (gamma or recipe.start)")
        if recipe.name in ("slope", "unit-slope") and gamma is None:
            raise FamilyError(f"recipe {recipe.name!r} needs gamma")
        y0 = _initial_state(recipe, xi, max(L.order, 1), N)
        members.append(march(L, int(start), y0))
    values = np.array(members, dtype=complex).reshape((sigma.size,) + grid.shape + (N,))
    fam = SpectralFamily(grid, sigma, values, L.name, gamma, side, recipe.name)
    rep = membership_report(fam, L, member_tol)
    if not rep.passed:
        raise FamilyError(f"family invariants violated: failed members {rep.failed}, "
                          f"residuals {np.round(rep.residuals, 12).tolist()}, gram floor {rep.gram_min_sv:.2e}")
    return fam


def adjoint_kernel_family(L: DifferentialOperator, sigma: SpectralGrid, gamma, recipe, member_tol: float = 1e-4) -> SpectralFamily:
    adj, _ = formal_adjoint(L)
    return build_kernel_family(adj, sigma, gamma, recipe, member_tol, side="adjoint")


def write_manifest(family: SpectralFamily, directory, stem: str = "member") -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(family.size):
        name = f"{stem}_{k}.csv"
        write_csv(family.member(k), d / name)
        files.append(name)
    gamma = family.gamma
    manifest = {
        "schema": "transmute-family/1",
        "points": [[float(p.real), float(p.imag)] for p in family.spectral.points],
        "weights": family.spectral.weights.tolist(),
        "recipe": family.recipe,
        "gamma": None if gamma is None else np.asarray(gamma).tolist(),
        "side": family.side,
        "operator": family.operator,
        "members": files,
    }
    path = d / f"{stem}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_manifest(path) -> SpectralFamily:
    path = Path(path)
    m = json.loads(path.read_text())
    members = [read_csv(path.parent / f) for f in m["members"]]
    sigma = SpectralGrid(np.array([complex(a, b) for a, b in m["points"]]), np.array(m["weights"]))
    gamma = m["gamma"]
    gamma = tuple(gamma) if isinstance(gamma, list) else gamma
    return SpectralFamily(members[0].grid, sigma, np.array([f.values for f in members]),
                          m["operator"], gamma, m["side"], m["recipe"])
