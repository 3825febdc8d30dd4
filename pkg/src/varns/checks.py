"""Pass/fail checks on space-time fields: energy balance and weak-form residuals.

Test-function battery (version 1, fixed order).  For each wavevector k in
``BATTERY_WAVEVECTORS`` two functions are generated:

    psi(x, t) = (1 - t/T)          * perp_grad sin(k.x)
    psi(x, t) = cos(pi t / (2 T))  * perp_grad cos(k.x)

with perp_grad s = (d_y s, -d_x s).  Every psi is divergence-free, mean-zero
and vanishes at t = T.  The residual of one psi is

    |t1 + t2 + t3 - t4| / S
    t1 = int v0 . psi(0)          t2 = int int u . d_t psi
    t3 = int int F(u) : grad psi   t4 = nu int int grad u : grad psi

where S = |v0||psi(0)| + |u|(|d_t psi| + nu |lap psi|) + |F(u)||grad psi| bounds
every term by Cauchy-Schwarz (space-time L2 norms, trapezoid in time).  S is
homogeneous of degree one in psi, so residuals do not change under psi -> c psi.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import json
import math

import numpy as np

from .flux import FluxModel
from .grid import Grid, SpaceTimeField, TimeGrid, grad_inner, gradient, interpolate, l2_inner


@dataclass(frozen=True)
class TheoremCheck:
    name: str
    defect: float
    tolerance: float
    context: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.defect <= self.tolerance)

    def as_dict(self) -> dict:
        return {"name": self.name, "defect": float(self.defect), "tolerance": float(self.tolerance),
                "pass": self.passed, "context": dict(self.context)}


class BatteryError(ValueError):
    pass


def _trapezoid(per, time: TimeGrid) -> float:
    total = 0.0
    for w, p in zip(time.trapezoid_weights, per):
        total += w * p
    return float(total)


def _cumulative_trapezoid(per, time: TimeGrid) -> np.ndarray:
    per = np.asarray(per, dtype=float)
    inc = 0.5 * time.dt * (per[1:] + per[:-1])
    return np.concatenate([[0.0], np.cumsum(inc)])


# -- energy -------------------------------------------------------------------

def energy_balance(u: SpaceTimeField, nu: float = 1.0) -> np.ndarray:
    """Signed 1/2|u(t_j)|^2 + nu int_0^t_j |grad u|^2 - 1/2|v0|^2 per slice."""
    g = u.grid
    e = l2_inner(u.data, u.data, g)
    diss = _cumulative_trapezoid(grad_inner(u.data, u.data, g), u.time)
    return 0.5 * e + nu * diss - 0.5 * e[0]


def _energy_scale(u: SpaceTimeField) -> float:
    half = 0.5 * float(l2_inner(u.v0, u.v0, u.grid))
    # absolute defects when v0 vanishes
    return half if math.sqrt(2 * half) >= 1e-14 else 1.0


def energy_equality_check(u: SpaceTimeField, nu: float = 1.0, tolerance: float = 1e-3) -> list[TheoremCheck]:
    bal = energy_balance(u, nu)
    scale = _energy_scale(u)
    return [TheoremCheck(f"energy_equality[{j}]", abs(float(b)) / scale, tolerance,
                         {"slice": j, "t": float(t), "nu": nu})
            for j, (b, t) in enumerate(zip(bal, u.time.times))]


def energy_inequality_check(u: SpaceTimeField, nu: float = 1.0, tolerance: float = 1e-3) -> TheoremCheck:
    """Worst slice of  nu int_0^tau |grad u|^2 - 1/2(|v0|^2 - |u(tau)|^2)  (relative, signed)."""
    bal = energy_balance(u, nu) / _energy_scale(u)
    j = int(np.argmax(bal))
    return TheoremCheck("energy_inequality", float(bal[j]), tolerance,
                        {"slice": j, "t": float(u.time.times[j]), "nu": nu})


def max_energy_defect(u: SpaceTimeField, nu: float = 1.0) -> float:
    return float(np.max(np.abs(energy_balance(u, nu)))) / _energy_scale(u)


def flux_energy_pairing(delta, model: FluxModel, grid: Grid, oversample: int = 1) -> tuple[float, float]:
    """(int F(delta) : grad delta, |grad delta| |F(delta)|) for one slice.

    The integral vanishes in the continuum for fluxes with a potential.  On the
    grid it is exact for the quadratic flux on band-limited slices; for cutoff
    fluxes the integrand is not a trigonometric polynomial, so ``oversample``
    evaluates it after interpolation to a finer grid.
    """
    d, g = interpolate(delta, grid, oversample) if oversample > 1 else (np.asarray(delta, dtype=float), grid)
    F = model.evaluate(d)
    gd = gradient(d, g)  # [i, l] = d_l delta_i
    val = g.cell_area * float(np.sum(F * gd))
    scale = math.sqrt(float(np.sum(grad_inner(d, d, g))) * g.cell_area * float(np.sum(F * F)))
    return val, scale


# -- weak form ----------------------------------------------------------------

BATTERY_WAVEVECTORS = ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, 0), (0, 2), (2, 2), (3, 1))
BATTERY_VERSION = 1


@dataclass(frozen=True)
class TestFunction:
    k: tuple[int, int]
    spatial: str  # "sin" | "cos"
    temporal: str  # "linear" | "cosine"
    amplitude: float = 1.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.spatial not in ("sin", "cos") or self.temporal not in ("linear", "cosine"):
            raise BatteryError(f"unknown profile {self.spatial}/{self.temporal}")
        if len(self.k) != 2 or any(int(c) != c for c in self.k) or self.k == (0, 0):
            raise BatteryError("wavevector must be a nonzero integer pair")
        if not math.isfinite(self.amplitude) or self.amplitude == 0:
            raise BatteryError("amplitude must be finite and nonzero")

    @property
    def label(self) -> str:
        return f"{self.spatial}({self.k[0]},{self.k[1]})x{self.temporal}"

    def theta(self, t, T):
        t = np.asarray(t, dtype=float)
        if self.temporal == "linear":
            return self.amplitude * (1.0 - t / T), np.full_like(t, -self.amplitude / T)
        w = math.pi / (2 * T)
        return self.amplitude * np.cos(w * t), -self.amplitude * w * np.sin(w * t)

    def spatial_parts(self, grid: Grid):
        """(psi, grad psi) of the spatial factor; grad[i, l] = d_l psi_i."""
        if grid.lx != grid.ly or abs(grid.lx - 2 * math.pi) > 1e-12:
            raise BatteryError("the battery is defined on the 2*pi torus")
        k1, k2 = self.k
        if max(abs(k1), abs(k2)) >= grid.nx // 3 or max(abs(k1), abs(k2)) >= grid.ny // 3:
            raise BatteryError(f"test function {self.label} is not resolved on this grid")
        x, y = grid.coords
        phi = k1 * x + k2 * y
        if self.spatial == "sin":  # perp_grad sin(phi) = cos(phi) (k2, -k1)
            sig, dsig = np.cos(phi), -np.sin(phi)
        else:  # perp_grad cos(phi) = -sin(phi) (k2, -k1)
            sig, dsig = -np.sin(phi), -np.cos(phi)
        c = (k2, -k1)
        psi = np.stack([c[0] * sig, c[1] * sig])
        gpsi = np.stack([np.stack([c[i] * dsig * k1, c[i] * dsig * k2]) for i in range(2)])
        return psi, gpsi


def battery() -> list[TestFunction]:
    out = []
    for k in BATTERY_WAVEVECTORS:
        out.append(TestFunction(k, "sin", "linear"))
        out.append(TestFunction(k, "cos", "cosine"))
    return out


@dataclass(frozen=True)
class WeakFormTerms:
    initial: float
    time: float
    flux: float
    viscous: float
    scale: float

    @property
    def total(self) -> float:
        return self.initial + self.time + self.flux - self.viscous

    @property
    def residual(self) -> float:
        return abs(self.total) / self.scale if self.scale > 0 else 0.0


def weak_form_terms(u: SpaceTimeField, model: FluxModel, psi_fn: TestFunction, nu: float = 1.0) -> WeakFormTerms:
    g, time = u.grid, u.time
    T = time.t_final
    psi, gpsi = psi_fn.spatial_parts(g)
    k2 = float(psi_fn.k[0] ** 2 + psi_fn.k[1] ** 2)
    th, dth = psi_fn.theta(time.times, T)
    data = u.data

    F = model.evaluate(np.moveaxis(data, 1, 0))  # (2, 2, m+1, nx, ny)
    up = l2_inner(data, psi, g)  # u(t_j) . psi_space
    fg = g.cell_area * np.einsum("ijsxy,ijxy->s", F, gpsi)

    psi_sq = float(l2_inner(psi, psi, g))
    gpsi_sq = g.cell_area * float(np.sum(gpsi * gpsi))
    t1 = th[0] * float(l2_inner(u.v0, psi, g))
    t2 = _trapezoid(dth * up, time)
    t3 = _trapezoid(th * fg, time)
    # lap psi = -|k|^2 psi exactly
    t4 = nu * k2 * _trapezoid(th * up, time)

    u_norm = math.sqrt(max(_trapezoid(l2_inner(data, data, g), time), 0.0))
    f_norm = math.sqrt(max(_trapezoid(g.cell_area * np.einsum("ijsxy,ijsxy->s", F, F), time), 0.0))
    dpsi_norm = math.sqrt(_trapezoid(dth**2, time) * psi_sq)
    psi_norm = math.sqrt(_trapezoid(th**2, time) * psi_sq)
    gpsi_norm = math.sqrt(_trapezoid(th**2, time) * gpsi_sq)
    v0_norm = math.sqrt(float(l2_inner(u.v0, u.v0, g)))
    scale = (v0_norm * abs(th[0]) * math.sqrt(psi_sq) + u_norm * (dpsi_norm + nu * k2 * psi_norm)
             + f_norm * gpsi_norm)
    return WeakFormTerms(t1, t2, t3, t4, scale)


def weak_form_residual(u: SpaceTimeField, model: FluxModel, tests: list[TestFunction] | None = None,
                       nu: float = 1.0, tolerance: float = 1e-3) -> TheoremCheck:
    tests = battery() if tests is None else list(tests)
    if not tests:
        raise BatteryError("empty test-function battery")
    res = [weak_form_terms(u, model, p, nu).residual for p in tests]
    j = int(np.argmax(res))
    return TheoremCheck("weak_form", float(res[j]), tolerance,
                        {"worst": tests[j].label, "count": len(tests), "battery_version": BATTERY_VERSION,
                         "flux": model.label, "nu": nu})


def weak_form_table(u: SpaceTimeField, model: FluxModel, nu: float = 1.0) -> list[tuple[str, float]]:
    return [(p.label, weak_form_terms(u, model, p, nu).residual) for p in battery()]


# -- output -------------------------------------------------------------------

def write_checks_csv(checks: list[TheoremCheck], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "defect", "tolerance", "pass", "context"])
        for c in checks:
            w.writerow([c.name, repr(float(c.defect)), repr(float(c.tolerance)), int(c.passed),
                        json.dumps(c.context, sort_keys=True)])


def checks_summary(checks: list[TheoremCheck]) -> dict:
    return {"passed": all(c.passed for c in checks), "failed": [c.name for c in checks if not c.passed],
            "checks": [c.as_dict() for c in checks]}
