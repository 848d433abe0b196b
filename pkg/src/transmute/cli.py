"""Command line front end: ``transmute <subcommand> --config <path>``."""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from . import batteries
from .concomitant import bilinear_concomitant, closedness_residual, lagrange_residual
from .diffop import DifferentialOperator, OperatorError, operator_from_description
from .eigenspace import FamilyRecipe, adjoint_kernel_family, build_kernel_family, spectral_grid
from .glm import (bound_state_data, bound_states, build_pair, commutation_residual, delsarte_kernel,
                  fredholm_from_pair, marchenko_recover_potential, one_soliton_potential, soliton_center, solve_glm)
from .numgrid import GridFunction, GridSpec, integrate_path, make_grid, staircase, write_csv, write_matrix_csv
from .pencil import (AffinePencil, evaluate_pencil, pencil_delsarte, pencil_density, separability_residual, separated_family,
                     spectrum_sample, tau_independence_check, transformed_pencil)
from .transmutation import (build_delsarte, delsarte_inverse, exponential_seed_constant, family_membership,
                            intertwining_residual, kernel_matrices, transformed_operator)

SUBCOMMANDS = ("lagrange-check", "closedness", "darboux", "glm-roundtrip", "marchenko", "pencil-reduce")
REPORT_SCHEMA = "transmute-report/1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# --- configuration ------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GridCfg(_Strict):
    intervals: list[tuple[float, float]]
    counts: list[PositiveInt]


class TermCfg(_Strict):
    alpha: list[int]
    coefficient: Any


class OperatorCfg(_Strict):
    file: Optional[str] = None
    dim: Optional[PositiveInt] = None
    channels: PositiveInt = 1
    order: Optional[int] = None
    terms: list[TermCfg] = []

    @model_validator(mode="after")
    def _source(self):
        if self.file is not None and self.terms:
            raise ValueError("give either 'file' or inline 'terms', not both")
        return self


class SpectrumCfg(_Strict):
    lam: float | tuple[float, float] = Field(alias="lambda")
    weight: PositiveFloat = 1.0


class PencilCfg(_Strict):
    components: list[OperatorCfg]
    spectrum: list[SpectrumCfg] = []


class BoundStateCfg(_Strict):
    kappa: PositiveFloat
    c: PositiveFloat


class FamiliesCfg(_Strict):
    kind: Literal["exponential", "marching", "harmonic"] = "exponential"
    points: list[float] = []
    weights: Optional[list[PositiveFloat]] = None
    gamma: Optional[int] = None
    recipe: Literal["slope", "unit-slope", "initial"] = "slope"
    initial_states: Optional[list[list[float]]] = None
    omega_x0: Optional[list[list[float]]] = None
    soliton_center: Optional[float] = None
    harmonics: list[Literal["1", "x1", "x2", "x1*x2", "x1^2-x2^2"]] = []
    bound_states: list[BoundStateCfg] = []


class TolerancesCfg(_Strict):
    member: PositiveFloat = 1e-3
    lagrange_order: PositiveFloat = 1.8
    residual_floor: PositiveFloat = 1e-10
    closedness: PositiveFloat = 1e-6
    path_agreement: PositiveFloat = 1e-6
    potential_relative_error: Optional[PositiveFloat] = None
    intertwining: PositiveFloat = 1e-4
    membership: PositiveFloat = 1e-4
    round_trip: PositiveFloat = 1e-5
    glm_round_trip: PositiveFloat = 1e-6
    excluded_mass: PositiveFloat = 1e-10
    overlap: PositiveFloat = 1e-12
    commutation: PositiveFloat = 1e-4
    bound_state_membership: PositiveFloat = 1e-3
    separability: PositiveFloat = 1e-6
    tau_difference: PositiveFloat = 1e-8
    pencil_agreement: PositiveFloat = 1e-8


class ScenarioCfg(_Strict):
    seed: int = 0
    draws: PositiveInt = 5
    refinements: list[PositiveInt] = [64, 128, 256]
    battery: PositiveInt = 10
    tau_interval: tuple[float, float] = (0.0, 1.0)
    n_tau: PositiveInt = 1025
    tau_values: tuple[float, float] = (0.0, 1.0)
    window: Optional[PositiveFloat] = None


class ConfigModel(_Strict):
    grid: GridCfg
    operator: Optional[OperatorCfg] = None
    pencil: Optional[PencilCfg] = None
    families: FamiliesCfg = FamiliesCfg()
    tolerances: TolerancesCfg = TolerancesCfg()
    scenario: ScenarioCfg = ScenarioCfg()

    @model_validator(mode="after")
    def _exclusive(self):
        if self.operator is not None and self.pencil is not None:
            raise ValueError("'operator' and 'pencil' blocks are mutually exclusive")
        return self


@dataclass
class Scenario:
    subcommand: str
    config: ConfigModel
    path: Path
    out: Path
    seed: int

    @property
    def tol(self) -> TolerancesCfg:
        return self.config.tolerances


def _load_yaml(path: Path, what: str) -> Any:
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    try:
        return yaml.safe_load(path.read_text())
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigError(f"{path}: syntax error at line {line}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _format_validation(path: Path, exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return f"{path}: invalid config: " + "; ".join(parts)


def _resolve_operator(cfg: OperatorCfg, base: Path) -> OperatorCfg:
    if cfg.file is None:
        return cfg
    path = (base / cfg.file) if not Path(cfg.file).is_absolute() else Path(cfg.file)
    data = _load_yaml(path, "operator file")
    try:
        inner = OperatorCfg.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(path, exc)) from None
    if inner.file is not None:
        raise ConfigError(f"{path}: operator files may not reference other files")
    return inner


def parse_config(path, subcommand: str = "lagrange-check", out=None, seed: int | None = None) -> Scenario:
    path = Path(path)
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    data = _load_yaml(path, "config file")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        cfg = ConfigModel.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(path, exc)) from None
    if cfg.operator is not None:
        cfg.operator = _resolve_operator(cfg.operator, path.parent)
    if cfg.pencil is not None:
        cfg.pencil.components = [_resolve_operator(c, path.parent) for c in cfg.pencil.components]
    try:
        make_grid(cfg.grid.intervals, cfg.grid.counts)
    except ValueError as exc:
        raise ConfigError(f"{path}: grid: {exc}") from None
    needs_op = {"lagrange-check", "closedness", "darboux", "glm-roundtrip"}
    if subcommand in needs_op and cfg.operator is None:
        raise ConfigError(f"{path}: subcommand {subcommand} needs an 'operator' block")
    if subcommand == "pencil-reduce" and cfg.pencil is None:
        raise ConfigError(f"{path}: subcommand pencil-reduce needs a 'pencil' block")
    if subcommand == "marchenko" and not cfg.families.bound_states:
        raise ConfigError(f"{path}: families.bound_states is required for marchenko")
    out = Path(out) if out is not None else path.parent / f"{path.stem}_{subcommand}"
    return Scenario(subcommand, cfg, path, out, cfg.scenario.seed if seed is None else seed)


# --- reporting ----------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    threshold: float
    provenance: str
    mode: str = "max"  # "max": value <= threshold; "min": value >= threshold

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.mode == "max" else self.value >= self.threshold

    def line(self) -> str:
        op = "\u2264" if self.mode == "max" else "\u2265"
        status = "pass" if self.passed else "FAIL"
        return f"{self.name} {op} {_short(self.threshold)}: {status}  (measured {self.value:.3e}; {self.provenance})"


def _short(t: float) -> str:
    """1e-04 -> 1e-4, 2.5e-07 -> 2.5e-7, 1.8 -> 1.8."""
    if t == 0 or 1e-2 <= abs(t) < 1e4:
        return f"{t:g}"
    m, e = f"{t:e}".split("e")
    m = m.rstrip("0").rstrip(".")
    return f"{m}e{int(e)}"


@dataclass
class RunReport:
    subcommand: str
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    error: str | None = None
    elapsed: float = 0.0
    seed: int = 0

    def add(self, name, value, threshold, provenance, mode="max"):
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check {name}")
        self.checks.append(Check(name, float(value), float(threshold), provenance, mode))

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def text(self) -> str:
        lines = [f"# schema: {REPORT_SCHEMA}", f"subcommand: {self.subcommand}", f"seed: {self.seed}", ""]
        lines += [c.line() for c in self.checks]
        if self.error:
            lines.append(f"numerical failure: {self.error}")
        lines += ["", "artifacts: " + (", ".join(self.artifacts) or "none"),
                  f"elapsed: {self.elapsed:.2f} s", f"overall: {'pass' if self.passed else 'FAIL'}"]
        return "\n".join(lines) + "\n"


# --- pipelines -------------------------------------------------------------------------------

def _grid(sc: Scenario, counts=None) -> GridSpec:
    g = sc.config.grid
    return make_grid(g.intervals, counts or g.counts)


def _operator(sc: Scenario, grid: GridSpec, desc: OperatorCfg | None = None) -> DifferentialOperator:
    desc = desc or sc.config.operator
    return operator_from_description(grid, desc.model_dump(exclude={"file"}, exclude_none=True))


def _sigma(fam: FamiliesCfg):
    return spectral_grid(np.array(fam.points, dtype=float), fam.weights)


def _families_1d(sc: Scenario, L: DifferentialOperator):
    fam = sc.config.families
    if not fam.points:
        raise ConfigError("families.points must list at least one spectral point")
    sigma = _sigma(fam)
    if fam.kind == "exponential":
        recipe = FamilyRecipe("analytic", function=lambda k, x: np.exp(-k.real * x))
        gamma = None
    elif fam.kind == "marching":
        recipe = _marching_recipe(fam)
        # an explicit Cauchy state starts at gamma but need not vanish there
        gamma = None if fam.recipe == "initial" else fam.gamma
    else:
        raise ConfigError(f"families.kind {fam.kind!r} is not available in 1D")
    psi = build_kernel_family(L, sigma, gamma, recipe, sc.tol.member)
    phi = adjoint_kernel_family(L, sigma, gamma, recipe, sc.tol.member)
    return psi, phi


def _marching_recipe(fam: FamiliesCfg) -> FamilyRecipe:
    if fam.recipe != "initial":
        return FamilyRecipe(fam.recipe)
    states = fam.initial_states
    if states is None or len(states) != len(fam.points) or len(set(fam.points)) != len(fam.points):
        raise ConfigError("recipe 'initial' needs one initial state per (distinct) spectral point")
    table = {float(p): np.asarray(v, dtype=complex) for p, v in zip(fam.points, states)}
    return FamilyRecipe("initial", initial=lambda xi: table[float(np.real(xi))], start=fam.gamma)


_HARMONICS = {
    "1": lambda x, y: np.ones_like(x),
    "x1": lambda x, y: x,
    "x2": lambda x, y: y,
    "x1*x2": lambda x, y: x * y,
    "x1^2-x2^2": lambda x, y: x * x - y * y,
}


def _base_kernel(sc: Scenario, grid: GridSpec, K: int):
    fam = sc.config.families
    if fam.omega_x0 is not None:
        C = np.array(fam.omega_x0, dtype=complex)
        if C.shape != (K, K):
            raise ConfigError(f"families.omega_x0 must be {K}x{K}")
        return C
    if fam.soliton_center is not None:
        if fam.kind != "exponential" or K != 1:
            raise ConfigError("families.soliton_center needs a single exponential seed")
        return np.array([[exponential_seed_constant(fam.points[0], fam.soliton_center, grid.intervals[0][1])]])
    return np.eye(K, dtype=complex)


def run_lagrange(sc: Scenario, rep: RunReport):
    rng = np.random.default_rng(sc.seed)
    N = sc.config.operator.channels
    rows, worst_order, worst_final = [], np.inf, 0.0
    for d in range(sc.config.scenario.draws):
        seed_d = rng.integers(2**32)
        res = []
        for n in sc.config.scenario.refinements:
            grid = _grid(sc, [n] * len(sc.config.grid.counts))
            L = _operator(sc, grid)
            r = np.random.default_rng(seed_d)
            phi = GridFunction(grid, batteries.smooth_random(grid, N, r))
            psi = GridFunction(grid, batteries.smooth_random(grid, N, r))
            res.append(lagrange_residual(L, phi, psi))
            rows.append((d, n, res[-1]))
        worst_final = max(worst_final, res[-1])
        if res[-1] > sc.tol.residual_floor:
            orders = [np.log2(a / b) if b > 0 else np.inf for a, b in zip(res, res[1:])]
            worst_order = min(worst_order, min(orders))
    path = sc.out / "lagrange.csv"
    with open(path, "w") as fh:
        fh.write("# schema: transmute-lagrange/1\ndraw,n,residual\n")
        for d, n, r in rows:
            fh.write(f"{d},{n},{r!r}\n")
    rep.artifacts.append(path.name)
    if np.isfinite(worst_order):
        rep.add("lagrange_convergence_order", worst_order, sc.tol.lagrange_order, "Lagrangian identity", "min")
    else:
        rep.add("lagrange_residual", worst_final, sc.tol.residual_floor, "Lagrangian identity")


def run_closedness(sc: Scenario, rep: RunReport):
    grid = _grid(sc)
    L = _operator(sc, grid)
    fam = sc.config.families
    if grid.dim == 2:
        if not fam.harmonics:
            raise ConfigError("families.harmonics must list kernel members for a 2D closedness run")
        X = grid.coords()
        members = [GridFunction(grid, np.repeat(_HARMONICS[h](*X)[..., None], L.channels, -1)) for h in fam.harmonics]
        worst, agree = 0.0, 0.0
        corner = tuple(n - 1 for n in grid.counts)
        K = len(members)
        omega = np.zeros((K, K), dtype=complex)
        for e, phi in enumerate(members):
            for k, psi in enumerate(members):
                worst = max(worst, closedness_residual(L, phi, psi, sc.tol.member))
                form = bilinear_concomitant(L, phi, psi).form()
                p1 = integrate_path(form, staircase((0, 0), corner, (0, 1)))
                p2 = integrate_path(form, staircase((0, 0), corner, (1, 0)))
                scale = max(abs(p1), 1.0)
                agree = max(agree, abs(p1 - p2) / scale)
                omega[e, k] = p1
        write_matrix_csv(omega, sc.out / "kernel_matrix.csv", "transmute-kernel/1", ("eta", "xi"))
        rep.artifacts.append("kernel_matrix.csv")
        rep.add("closedness_residual", worst, sc.tol.closedness, "closedness of the concomitant form")
        rep.add("staircase_agreement", agree, sc.tol.path_agreement, "Stokes path independence")
    else:
        psi, phi = _families_1d(sc, L)
        worst = 0.0
        for e in range(phi.size):
            for k in range(psi.size):
                worst = max(worst, closedness_residual(L, phi.member(e), psi.member(k), sc.tol.member))
        x0 = grid.counts[0] // 2
        om, _ = kernel_matrices(phi, psi, L, grid.counts[0] - 1, x0)
        write_matrix_csv(om.values, sc.out / "kernel_matrix.csv", "transmute-kernel/1", ("eta", "xi"))
        rep.artifacts.append("kernel_matrix.csv")
        rep.add("wronskian_slope", worst, sc.tol.closedness, "constancy of the 1D concomitant")


def run_darboux(sc: Scenario, rep: RunReport):
    grid = _grid(sc)
    if grid.dim != 1:
        raise ConfigError("darboux runs on a 1D grid")
    L = _operator(sc, grid)
    psi, phi = _families_1d(sc, L)
    C = _base_kernel(sc, grid, psi.size)
    op, psi_t = build_delsarte(phi, psi, C)
    inv = delsarte_inverse(op)
    res = transformed_operator(L, op, sc.config.scenario.window, inverse=inv, return_diagnostics=True)
    Lt = res.operator
    x = grid.axis(0)
    rng = np.random.default_rng(sc.seed)
    tests = batteries.bump_battery(grid, sc.config.scenario.battery, rng)
    rep.add("intertwining_residual", intertwining_residual(L, Lt, op, tests), sc.tol.intertwining, "intertwining L~ op = op L")
    rep.add("transformed_membership", max(family_membership(Lt, psi_t.values)), sc.tol.membership,
            "transformed family lies in ker L~")
    smooth = batteries.gaussian_battery(grid, sc.config.scenario.battery, rng)
    rt = max(np.max(np.abs(inv.apply(op.apply(f)) - f)) / np.max(np.abs(f)) for f in smooth)
    rep.add("inverse_round_trip", rt, sc.tol.round_trip, "inverse Delsarte operator")
    inner = slice(1, grid.counts[0] - 1)
    lead = (L.order,)
    lead_err = np.max(np.abs(Lt.coefficient(lead)[inner] - L.coefficient(lead)[inner]))
    rep.add("leading_coefficient_shift", lead_err, 1e-3, "principal symbol preserved")
    dq = (Lt.coefficient((0,)) - L.coefficient((0,)))[:, 0, 0]
    fam = sc.config.families
    if fam.soliton_center is not None:
        k = fam.points[0]
        exact = one_soliton_potential(x, k, fam.soliton_center)
        err = np.max(np.abs(dq - exact)[inner]) / np.max(np.abs(exact))
        tol = sc.tol.potential_relative_error or 1e-3
        rep.add("potential_relative_error", err, tol, "classical Darboux potential shift")
    write_csv(GridFunction(grid, np.stack([Lt.coefficient((j,))[:, 0, 0] for j in range(L.order + 1)], -1)),
              sc.out / "coefficients.csv", "transmute-coefficients/1")
    write_csv(GridFunction(grid, np.moveaxis(psi_t.values[..., 0], 0, -1)), sc.out / "transformed_family.csv",
              "transmute-family/1")
    rep.artifacts += ["coefficients.csv", "transformed_family.csv"]


def run_glm(sc: Scenario, rep: RunReport):
    grid = _grid(sc)
    if grid.dim != 1:
        raise ConfigError("glm-roundtrip runs on a 1D grid")
    L = _operator(sc, grid)
    psi, phi = _families_1d(sc, L)
    C = _base_kernel(sc, grid, psi.size)
    plus, minus = build_pair(phi, psi, C)
    F = fredholm_from_pair(plus, minus)
    Kp, Km = delsarte_kernel(plus), delsarte_kernel(minus)
    scale = max(np.max(np.abs(Kp.values)), 1e-300)
    K = solve_glm(F, "plus")
    rep.add("glm_round_trip", np.max(np.abs(K.values - Kp.values)) / scale, sc.tol.glm_round_trip,
            "GLM factorization round trip")
    rep.add("excluded_mass_plus", Kp.excluded_mass() / scale, sc.tol.excluded_mass, "Volterra support")
    rep.add("excluded_mass_minus", Km.excluded_mass() / max(np.max(np.abs(Km.values)), 1e-300), sc.tol.excluded_mass,
            "Volterra support")
    n = grid.counts[0]
    off = ~np.eye(n, dtype=bool)
    ov = np.max(np.minimum(np.abs(Kp.values[..., 0, 0]), np.abs(Km.values[..., 0, 0]))[off]) / scale
    rep.add("support_overlap", ov, sc.tol.overlap, "disjoint kernel supports")
    tests = batteries.bump_battery(grid, sc.config.scenario.battery, np.random.default_rng(sc.seed))
    rep.add("commutation_residual", commutation_residual(L, F, tests), sc.tol.commutation, "(1+Phi) L = L (1+Phi)")
    write_matrix_csv(F.values, sc.out / "fredholm.csv", "transmute-fredholm/1", ("s", "t"))
    write_matrix_csv(K.values, sc.out / "volterra.csv", "transmute-volterra/1", ("x", "s"))
    rep.artifacts += ["fredholm.csv", "volterra.csv"]


def run_marchenko(sc: Scenario, rep: RunReport):
    grid = _grid(sc)
    if grid.dim != 1:
        raise ConfigError("marchenko runs on a 1D grid")
    bs = sc.config.families.bound_states
    kappas, cs = [b.kappa for b in bs], [b.c for b in bs]
    F = bound_state_data(grid, kappas, cs)
    K = solve_glm(F, "plus", quadrature="cubic")
    q0 = np.zeros(grid.counts[0])
    if sc.config.operator is not None:
        q0 = _operator(sc, grid).coefficient((0,))[:, 0, 0]
    q = marchenko_recover_potential(K, GridFunction(grid, q0))
    x = grid.axis(0)
    if len(bs) == 1 and not np.any(q0):
        exact = one_soliton_potential(x, kappas[0], soliton_center(kappas[0], cs[0]))
        err = np.max(np.abs(q.values[:, 0] - exact)) / np.max(np.abs(exact))
        rep.add("potential_relative_error", err, sc.tol.potential_relative_error or 1e-4, "one-soliton Marchenko oracle")
    states = bound_states(K, kappas)
    worst = 0.0
    for k, v in zip(kappas, states):
        Lk = DifferentialOperator(grid, {(2,): -1, (0,): q.values[:, 0] + k * k})
        worst = max(worst, max(family_membership(Lk, v[None, :, None])))
    rep.add("bound_state_membership", worst, sc.tol.bound_state_membership, "bound states of the recovered potential")
    write_csv(q, sc.out / "potential.csv", "transmute-potential/1")
    write_csv(GridFunction(grid, K.trace()[:, 0, 0]), sc.out / "kernel_trace.csv", "transmute-trace/1")
    rep.artifacts += ["potential.csv", "kernel_trace.csv"]


def run_pencil(sc: Scenario, rep: RunReport):
    grid = _grid(sc)
    if grid.dim != 1:
        raise ConfigError("pencil-reduce runs on a 1D grid")
    pc = sc.config.pencil
    P = AffinePencil(tuple(_operator(sc, grid, c) for c in pc.components))
    lams = [complex(*s.lam) if isinstance(s.lam, tuple) else complex(s.lam) for s in pc.spectrum]
    spec = spectrum_sample(lams, [s.weight for s in pc.spectrum] or None)
    fam = sc.config.families
    sigma = _sigma(fam)
    if fam.kind == "exponential":
        recipe = FamilyRecipe("analytic", function=lambda k, x: np.exp(-k.real * x))
        sep = separated_family(P, spec, sigma, None, recipe, member_tol=sc.tol.member)
    elif fam.kind == "marching":
        gamma = None if fam.recipe == "initial" else fam.gamma
        sep = separated_family(P, spec, sigma, gamma, _marching_recipe(fam), member_tol=sc.tol.member)
    else:
        raise ConfigError("pencil-reduce needs exponential or marching families")
    s = sc.config.scenario
    worst = max((separability_residual(P, lam, f.values[k], s.tau_interval, s.n_tau)
                 for lam, f in zip(spec.lambdas, sep.psi) for k in range(f.size)), default=0.0)
    rep.add("separability_residual", worst, sc.tol.separability, "tau-extension separability")
    rep.add("tau_difference", tau_independence_check(P, sep, *s.tau_values), sc.tol.tau_difference,
            "tau-independence of reduced kernels")
    C = _base_kernel(sc, grid, sum(f.size for f in sep.psi))
    op, psi_t = pencil_delsarte(P, sep, C)
    if len(lams) == 1:
        ref, _ = build_delsarte(sep.phi[0], sep.psi[0], C, density=lambda p: pencil_density(P, lams[0], p))
        diff = np.max(np.abs(op.matrix - ref.matrix)) / max(np.max(np.abs(ref.matrix)), 1e-300)
        rep.add("single_lambda_agreement", diff, sc.tol.pencil_agreement, "pencil reduces to the plain construction")
    fitted, joint = transformed_pencil(P, op, window=s.window)
    worst_m = 0.0
    for lam, v in zip(spec.lambdas, psi_t):
        worst_m = max(worst_m, max(family_membership(evaluate_pencil(fitted, lam), v)))
    rep.add("transformed_membership", worst_m, sc.tol.membership, "transformed pencil members")
    if fam.soliton_center is not None and len(lams) == 1:
        L0, Lt0 = evaluate_pencil(P, lams[0]), evaluate_pencil(fitted, lams[0])
        inner = slice(1, grid.counts[0] - 1)
        dq = (Lt0.coefficient((0,)) - L0.coefficient((0,)))[inner, 0, 0]
        exact = one_soliton_potential(grid.axis(0)[inner], fam.points[0], fam.soliton_center)
        rep.add("potential_relative_error", np.max(np.abs(dq - exact)) / np.max(np.abs(exact)),
                sc.tol.potential_relative_error or 1e-3, "Darboux shift through the pencil")
    write_csv(GridFunction(grid, np.stack([fitted.components[0].coefficient((j,))[:, 0, 0]
                                           for j in range(P.components[0].order + 1)], -1)),
              sc.out / "pencil_coefficients.csv", "transmute-coefficients/1")
    M = op.reduced_kernels()
    write_matrix_csv(M, sc.out / "reduced_kernels.csv", "transmute-reduced-kernel/1", ("x", "eta"))
    rep.artifacts += ["pencil_coefficients.csv", "reduced_kernels.csv"]


PIPELINES = {
    "lagrange-check": run_lagrange,
    "closedness": run_closedness,
    "darboux": run_darboux,
    "glm-roundtrip": run_glm,
    "marchenko": run_marchenko,
    "pencil-reduce": run_pencil,
}


def run(sc: Scenario) -> RunReport:
    rep = RunReport(sc.subcommand, seed=sc.seed)
    sc.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        PIPELINES[sc.subcommand](sc, rep)
    except (ConfigError, OperatorError) as exc:
        raise ConfigError(str(exc)) from None
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.elapsed = time.perf_counter() - t0
    (sc.out / "report.txt").write_text(rep.text(), encoding="utf-8")
    return rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="transmute", description=__doc__,
                                 epilog="exit status: 0 all checks pass, 2 config error, 3 numerical failure")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="YAML scenario file")
    ap.add_argument("--out", default=None, help="output directory (default: <config stem>_<subcommand> next to it)")
    ap.add_argument("--seed", type=int, default=None, help="override scenario.seed")
    args = ap.parse_args(argv)
    try:
        sc = parse_config(args.config, args.subcommand, args.out, args.seed)
        rep = run(sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(rep.text())
    if not rep.passed:
        failed = [c.name for c in rep.checks if not c.passed]
        print(f"numerical failure: {rep.error or ', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
