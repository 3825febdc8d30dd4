"""Projected, preconditioned limited-memory BFGS over slices 1..m.

The initial inverse-Hessian guess of the two-loop recursion is the exact inverse
Hessian of the flux-free objective.  That objective is diagonal in Fourier modes
and tridiagonal in time: with kappa = |k|^2, a = nu kappa dt / 4 and
b = 1 / (nu kappa dt), slices 1..m-1 carry 2(a + b) on the diagonal, slice m
carries a + b + 1 and neighbours couple through a - b.  The heat problem
therefore converges in one step; nonlinear fluxes are left to the curvature
pairs.

By default the descended quantity is the residual form
|v0|^2/2 + nu/2 sum dt |grad W|^2 (``objective="rewrite"``); ``"defining"``
descends the defining form instead.  Trace entries record the descended value
as ``value`` and the defining form as ``defining_value``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .checks import TheoremCheck, energy_equality_check, max_energy_defect, weak_form_residual
from .grid import Grid, SpaceTimeField, TimeGrid, _fft2, _ifft2, l2_inner, project_admissible
from .functional import OBJECTIVES, Evaluation, FunctionalSpec, evaluate
from .lift import LiftOverflowError


class MinimizeDivergenceError(FloatingPointError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class MinimizeConfig:
    max_iters: int = 200
    tol_grad: float = 1e-12
    tol_W: float = 1e-6
    memory: int = 10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    precondition: bool = True
    objective: str = "rewrite"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not (self.tol_grad > 0 and self.tol_W > 0):
            raise ValueError("tolerances must be positive")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if not (0 < self.armijo < 1 and 0 < self.shrink < 1):
            raise ValueError("line-search parameters must lie in (0, 1)")


@dataclass(frozen=True)
class TraceEntry:
    value: float
    defining_value: float
    rewrite_gap: float
    grad_norm: float
    w_norm: float
    w_ratio: float
    energy_defect: float
    step: float


@dataclass(frozen=True, eq=False)
class MinimizeReport:
    iterations: int
    trace: tuple
    converged_by: str  # gradient | w_residual | max_iters | stalled
    final_field: SpaceTimeField
    final: Evaluation

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.trace])

    def as_dict(self) -> dict:
        last = self.trace[-1]
        return {
            "iterations": self.iterations,
            "converged_by": self.converged_by,
            "final_value": last.value,
            "final_w_ratio": last.w_ratio,
            "final_grad_norm": last.grad_norm,
            "trace": [e.__dict__ for e in self.trace],
        }


class StokesPreconditioner:
    """Applies the inverse flux-free Hessian (L2 metric) to slices 1..m."""

    def __init__(self, grid: Grid, time: TimeGrid, nu: float = 1.0):
        self.grid, self.time, self.nu = grid, time, nu
        keep = grid.nyquist_free & grid.dealias_mask & (grid.k2 > 0)
        kappa = np.where(keep, grid.k2, 1.0)
        dt, m = time.dt, time.m
        a = nu * kappa * dt / 4
        b = 1.0 / (nu * kappa * dt)
        self.off = a - b
        diag = np.broadcast_to(2 * (a + b), (m,) + kappa.shape).copy()
        diag[-1] = a + b + 1.0
        den = np.empty_like(diag)
        cp = np.empty_like(diag)
        den[0] = diag[0]
        cp[0] = self.off / den[0]
        for i in range(1, m):
            den[i] = diag[i] - self.off * cp[i - 1]
            cp[i] = self.off / den[i]
        self.den, self.cp, self.keep = den, cp, keep

    def apply(self, g: np.ndarray) -> np.ndarray:
        y = _fft2(g) * self.keep
        m = y.shape[0]
        off = self.off
        y[0] = y[0] / self.den[0]
        for i in range(1, m):
            y[i] = (y[i] - off * y[i - 1]) / self.den[i]
        for i in range(m - 2, -1, -1):
            y[i] = y[i] - self.cp[i] * y[i + 1]
        return _ifft2(y).real


def heat_flow_field(v0, grid: Grid, time: TimeGrid, nu: float = 1.0) -> SpaceTimeField:
    """The exact discrete heat minimizer: per-mode factor ((1 - c)/(1 + c))^j, c = nu |k|^2 dt / 2."""
    v0 = np.asarray(v0, dtype=float)
    vh = _fft2(v0)
    c = nu * grid.k2 * time.dt / 2
    amp = (1 - c) / (1 + c)
    data = np.empty((time.m + 1,) + v0.shape)
    data[0] = v0
    cur = vh
    for j in range(1, time.m + 1):
        cur = cur * amp
        data[j] = _ifft2(cur).real
    data[1:] = project_admissible(data[1:], grid)
    return SpaceTimeField(data, grid, time)


def initial_field(v0, grid: Grid, time: TimeGrid, kind: str = "constant", nu: float = 1.0) -> SpaceTimeField:
    if kind == "constant":
        return SpaceTimeField.constant(v0, grid, time)
    if kind == "heat":
        return heat_flow_field(v0, grid, time, nu)
    raise ValueError(f"unknown initialization {kind!r}")


def _objective(ev: Evaluation, objective: str) -> float:
    return ev.residual_energy if objective == "rewrite" else ev.excess


def _entry(ev: Evaluation, u: SpaceTimeField, spec: FunctionalSpec, half_v0: float, step: float,
           objective: str) -> TraceEntry:
    gnorm = math.sqrt(max(float(np.sum(l2_inner(ev.grad, ev.grad, u.grid))), 0.0))
    return TraceEntry(half_v0 + _objective(ev, objective), float(ev.value),
                      float(ev.value_via_rewrite - half_v0), gnorm,
                      ev.w_norm, ev.w_ratio, max_energy_defect(u, spec.nu), step)


def _safe_eval(u, spec, objective):
    try:
        ev = evaluate(u, spec, with_gradient=True, objective=objective)
    except (LiftOverflowError, FloatingPointError):
        return None
    if not (math.isfinite(_objective(ev, objective)) and np.all(np.isfinite(ev.grad))):
        return None
    return ev


def minimize(spec: FunctionalSpec, init: SpaceTimeField, cfg: MinimizeConfig = MinimizeConfig()) -> MinimizeReport:
    grid = init.grid
    init.check_invariants()
    half_v0 = 0.5 * float(l2_inner(spec.v0, spec.v0, grid))
    precond = StokesPreconditioner(grid, init.time, spec.nu) if cfg.precondition else None

    def dot(a, b):
        return float(np.vdot(a, b)) * grid.cell_area

    def h0(q):
        return precond.apply(q) if precond is not None else q

    obj = cfg.objective
    u = init
    ev = _safe_eval(u, spec, obj)
    if ev is None:
        raise MinimizeDivergenceError("objective is not finite at the initial field", ())
    trace = [_entry(ev, u, spec, half_v0, 0.0, obj)]
    g0 = trace[0].grad_norm
    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    it = 0
    reason = "max_iters"
    while True:
        last = trace[-1]
        if last.w_ratio <= cfg.tol_W:
            reason = "w_residual"
            break
        if last.grad_norm <= cfg.tol_grad * max(g0, 1e-300) or last.grad_norm == 0.0:
            reason = "gradient"
            break
        if it >= cfg.max_iters:
            reason = "max_iters"
            break

        g = ev.grad[1:]
        accepted = None
        for attempt in range(2):
            p = _two_loop(g, pairs, h0, dot) if attempt == 0 else -h0(g)
            slope = dot(g, p)
            if not slope < 0:
                pairs.clear()
                continue
            step = 1.0
            for _ in range(cfg.max_backtracks):
                trial = u.replace_later(project_admissible(u.data[1:] + step * p, grid))
                tev = _safe_eval(trial, spec, obj)
                if tev is not None and _objective(tev, obj) <= _objective(ev, obj) + cfg.armijo * step * slope:
                    accepted = (trial, tev, step)
                    break
                step *= cfg.shrink
            if accepted is not None:
                break
            pairs.clear()
        if accepted is None:
            if not math.isfinite(_objective(ev, obj)):
                raise MinimizeDivergenceError("line search failed on non-finite objective", tuple(trace))
            reason = "stalled"
            break

        trial, tev, step = accepted
        s = trial.data[1:] - u.data[1:]
        y = tev.grad[1:] - g
        sy = dot(s, y)
        if sy > 1e-14 * math.sqrt(dot(s, s) * dot(y, y)):
            pairs.append((s, y, 1.0 / sy))
            if len(pairs) > cfg.memory:
                pairs.pop(0)
        u, ev = trial, tev
        it += 1
        trace.append(_entry(ev, u, spec, half_v0, step, obj))

    return MinimizeReport(it, tuple(trace), reason, u, ev)


def _two_loop(g, pairs, h0, dot):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * dot(s, q)
        alphas.append(a)
        q = q - a * y
    r = h0(q)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * dot(y, r)
        r = r + (a - b) * s
    return -r


# -- certification ------------------------------------------------------------

@dataclass(frozen=True)
class CertifyTolerances:
    w_ratio: float = 1e-6
    gap: float = 1e-6
    energy: float = 1e-3
    weak_form: float = 1e-3


@dataclass(frozen=True)
class Certificate:
    checks: tuple
    converged_by: str
    context: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def certify_field(u: SpaceTimeField, spec: FunctionalSpec, tol: CertifyTolerances = CertifyTolerances(),
                  converged_by: str = "n/a") -> Certificate:
    ev = evaluate(u, spec)
    half = 0.5 * float(l2_inner(spec.v0, spec.v0, u.grid))
    scale = half if half > 0 else 1.0
    ctx = {"kind": spec.kind, "flux": spec.flux.label, "nu": spec.nu}
    energy = energy_equality_check(u, spec.nu, tol.energy)
    worst = max(energy, key=lambda c: c.defect)
    checks = (
        TheoremCheck("w_residual", ev.w_ratio, tol.w_ratio, dict(ctx, w_norm=ev.w_norm)),
        TheoremCheck("functional_gap", abs(ev.value - half) / scale, tol.gap, dict(ctx, excess=ev.excess)),
        TheoremCheck("energy_equality", worst.defect, tol.energy, dict(ctx, worst_slice=worst.context["slice"])),
        weak_form_residual(u, spec.flux, nu=spec.nu, tolerance=tol.weak_form),
    )
    return Certificate(checks, converged_by, ctx)


def certify_solution(report: MinimizeReport, spec: FunctionalSpec,
                     tol: CertifyTolerances = CertifyTolerances()) -> Certificate:
    return certify_field(report.final_field, spec, tol, report.converged_by)
