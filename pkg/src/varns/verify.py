"""End-to-end experiments: the heat demonstration and the cutoff-level sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .checks import TheoremCheck, energy_inequality_check
from .flux import FluxModel
from .functional import FunctionalSpec, evaluate
from .grid import Grid, SpaceTimeField, TimeGrid, inner_products, l2_inner, perp_gradient, project_admissible
from .minimize import (
    CertifyTolerances,
    MinimizeConfig,
    MinimizeReport,
    certify_solution,
    initial_field,
    minimize,
)
from .oracle import ErrorReport, ReferenceRun, compare, heat_flow_exact, reference_solve


def two_mode_field(grid: Grid, seed: int, peak_sq: float = 10.0, kmax: int = 3) -> np.ndarray:
    """Sum of two random low Fourier modes (stream-function form), scaled so max |v0|^2 = peak_sq."""
    rng = np.random.default_rng(seed)
    x, y = grid.coords
    psi = np.zeros(grid.shape)
    picked = set()
    while len(picked) < 2:
        k = tuple(int(c) for c in rng.integers(-kmax, kmax + 1, size=2))
        if k != (0, 0) and k not in picked and (-k[0], -k[1]) not in picked:
            picked.add(k)
    for k in sorted(picked):
        amp = rng.uniform(0.5, 1.0)
        phase = rng.uniform(0, 2 * math.pi)
        psi += amp * np.cos(k[0] * x + k[1] * y + phase) / (k[0] ** 2 + k[1] ** 2)
    v0 = project_admissible(perp_gradient(psi, grid), grid)
    peak = float(np.max(v0[0] ** 2 + v0[1] ** 2))
    return v0 * math.sqrt(peak_sq / peak)


def st_distance(a, b, grid: Grid, time: TimeGrid, relative_to=None) -> float:
    d = np.asarray(a) - np.asarray(b)
    num = math.sqrt(max(inner_products(d, d, grid, time).pairing, 0.0))
    if relative_to is None:
        return num
    den = math.sqrt(max(inner_products(relative_to, relative_to, grid, time).pairing, 0.0))
    return num / den if den > 0 else num


# -- heat ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HeatDemoReport:
    run: MinimizeReport
    w_ratio: float
    terminal_w: float
    error: ErrorReport
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def heat_demo(v0, T: float = 1.0, grid: Grid = Grid(), m: int = 64, nu: float = 1.0,
              cfg: MinimizeConfig = MinimizeConfig(), truth=None,
              w_tol: float = 1e-6, error_tol: float = 1e-3) -> HeatDemoReport:
    """Minimize the heat objective from the constant-in-time start and judge it.

    ``terminal_w`` is the relative residual on the last interval, the discrete
    stand-in for W(T) = 0.  ``truth`` defaults to the continuum heat flow of v0.
    """
    time = TimeGrid(m, T)
    v0 = np.asarray(v0, dtype=float)
    spec = FunctionalSpec("heat", v0, nu=nu)
    run = minimize(spec, initial_field(v0, grid, time), cfg)
    u = run.final_field
    ev = evaluate(u, spec)
    last_w = math.sqrt(float(l2_inner(ev.lift.w[-1], ev.lift.w[-1], grid)))
    last_u = math.sqrt(float(l2_inner(ev.lift.u_eval[-1], ev.lift.u_eval[-1], grid)))
    terminal = last_w / last_u if last_u > 0 else last_w
    ref = heat_flow_exact(v0, grid, time, nu) if truth is None else truth
    err = compare(u, ref)
    ctx = {"nu": nu, "m": m, "nx": grid.nx, "converged_by": run.converged_by}
    checks = (
        TheoremCheck("heat_w_residual", ev.w_ratio, w_tol, ctx),
        TheoremCheck("heat_terminal_w", terminal, w_tol, ctx),
        TheoremCheck("heat_analytic_error", err.relative_l2, error_tol, ctx),
    )
    return HeatDemoReport(run, ev.w_ratio, terminal, err, checks)


# -- cutoff sweep -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevelResult:
    n: float
    run: MinimizeReport
    certified: bool
    failed_checks: tuple
    sup_u_sq: float
    distance_to_reference: float | None

    @property
    def saturated(self) -> bool:
        return self.n >= self.sup_u_sq


@dataclass(frozen=True, eq=False)
class SweepReport:
    levels: tuple
    results: tuple
    pairwise: tuple  # relative distance between consecutive levels
    checks: tuple
    status: str  # pass | fail | inconclusive
    inconclusive_levels: tuple = field(default=())
    reference: ReferenceRun | None = None

    def table(self) -> list[dict]:
        rows = []
        for i, r in enumerate(self.results):
            rows.append({
                "n": r.n, "sup_u_sq": r.sup_u_sq, "saturated": r.saturated, "certified": r.certified,
                "iterations": r.run.iterations, "converged_by": r.run.converged_by,
                "w_ratio": r.run.trace[-1].w_ratio,
                "distance_to_next": self.pairwise[i] if i < len(self.pairwise) else None,
                "distance_to_reference": r.distance_to_reference,
            })
        return rows


def cutoff_sweep(v0, nu: float, time: TimeGrid, grid: Grid, levels, cfg: MinimizeConfig = MinimizeConfig(),
                 reference_steps: int | None = None, saturation_tol: float = 1e-5,
                 tol: CertifyTolerances = CertifyTolerances()) -> SweepReport:
    """Minimize for each cutoff level and compare consecutive levels.

    Checks: consecutive saturated levels agree to ``saturation_tol`` (relative
    space-time L2); pairwise distances do not increase once saturated; with a
    reference run, distances to the exact-flux solution do not increase.  A
    level whose certificate fails makes the sweep inconclusive, not failed.
    """
    levels = tuple(float(n) for n in levels)
    if list(levels) != sorted(levels) or len(set(levels)) != len(levels) or not levels:
        raise ValueError("levels must be strictly ascending")
    v0 = np.asarray(v0, dtype=float)
    reference = None
    if reference_steps is not None:
        reference = reference_solve(v0, nu, time, reference_steps, FluxModel.exact(), grid)

    results = []
    for n in levels:
        spec = FunctionalSpec("navier_stokes", v0, FluxModel.cutoff(n), nu)
        run = minimize(spec, initial_field(v0, grid, time), cfg)
        cert = certify_solution(run, spec, tol)
        d = run.final_field.data
        sup = float(np.max(d[:, 0] ** 2 + d[:, 1] ** 2))
        dist = None
        if reference is not None:
            dist = st_distance(d, reference.data, grid, time, relative_to=reference.data)
        results.append(LevelResult(n, run, cert.passed, tuple(cert.failed), sup, dist))

    pairwise = tuple(st_distance(a.run.final_field.data, b.run.final_field.data, grid, time,
                                 relative_to=b.run.final_field.data)
                     for a, b in zip(results, results[1:]))
    checks = []
    for i, d in enumerate(pairwise):
        if results[i].saturated and results[i + 1].saturated:
            checks.append(TheoremCheck(f"saturated_agreement[{levels[i]:g},{levels[i + 1]:g}]", d,
                                       saturation_tol, {"nu": nu}))
    sat_pairs = [d for i, d in enumerate(pairwise) if results[i].saturated]
    if len(sat_pairs) >= 2:
        rise = max(b - a for a, b in zip(sat_pairs, sat_pairs[1:]))
        checks.append(TheoremCheck("saturated_cauchy_decrease", max(rise, 0.0), saturation_tol, {}))
    if reference is not None:
        dists = [r.distance_to_reference for r in results]
        rise = max((b - a for a, b in zip(dists, dists[1:])), default=0.0)
        checks.append(TheoremCheck("reference_distance_nonincreasing", max(rise, 0.0), 0.0,
                                   {"distances": [float(x) for x in dists]}))
    for r in results:
        checks.append(TheoremCheck(f"energy_inequality[n={r.n:g}]",
                                   energy_inequality_check(r.run.final_field, nu, tol.energy).defect,
                                   tol.energy, {"n": r.n}))

    bad = tuple(r.n for r in results if not r.certified)
    if bad:
        status = "inconclusive"
    else:
        status = "pass" if all(c.passed for c in checks) else "fail"
    return SweepReport(levels, tuple(results), pairwise, tuple(checks), status, bad, reference)
