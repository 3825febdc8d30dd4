"""Ground truths for judging the variational solver.

``reference_solve`` is a classical Fourier pseudo-spectral time stepper for
d_t u = nu lap u - P div F(u) with 2/3 dealiasing and fourth-order Runge-Kutta.
Diffusion is treated with an integrating factor by default.  With
``diffusion="explicit"`` the linear term goes through the Runge-Kutta stages
too, which makes the fourth-order temporal error visible on pure heat modes
(where the integrating factor is exact).
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable

import numpy as np

from .flux import FluxModel
from .grid import (
    Grid,
    GridMismatchError,
    SpaceTimeField,
    TimeGrid,
    _fft2,
    _ifft2,
    _leray_hat,
    inner_products,
)


class OracleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyticCase:
    name: str
    evaluator: Callable  # (x, y, t) -> (u, v)

    @classmethod
    def heat_mode(cls, k=(1, 0), nu: float = 1.0, amplitude: float = 1.0):
        """amplitude * (-k2, k1)/|k| sin(k.x) e^{-nu |k|^2 t}; k = (1, 0) gives (0, sin x) e^{-nu t}."""
        k1, k2 = k
        kk = k1 * k1 + k2 * k2
        if kk == 0:
            raise ValueError("heat mode needs a nonzero wavevector")
        nk = math.sqrt(kk)

        def ev(x, y, t):
            s = amplitude * np.sin(k1 * x + k2 * y) * math.exp(-nu * kk * t) / nk
            return -k2 * s, k1 * s

        return cls(f"heat_mode({k1},{k2})", ev)

    @classmethod
    def heat_modes(cls, modes, nu: float = 1.0):
        """Superposition of ``heat_mode(k, nu, amplitude)`` for (k, amplitude) pairs."""
        parts = [cls.heat_mode(k, nu, a) for k, a in modes]

        def ev(x, y, t):
            u = 0.0
            v = 0.0
            for p in parts:
                a, b = p.evaluator(x, y, t)
                u, v = u + a, v + b
            return u, v

        return cls("heat_modes", ev)

    @classmethod
    def taylor_green(cls, nu: float = 1.0):
        def ev(x, y, t):
            d = math.exp(-2 * nu * t)
            return np.cos(x) * np.sin(y) * d, -np.sin(x) * np.cos(y) * d

        return cls("taylor_green", ev)

    def sample(self, grid: Grid, time: TimeGrid) -> np.ndarray:
        x, y = grid.coords
        return np.stack([np.stack(np.broadcast_arrays(*self.evaluator(x, y, t))) for t in time.times]).astype(float)

    def initial(self, grid: Grid) -> np.ndarray:
        x, y = grid.coords
        return np.stack(np.broadcast_arrays(*self.evaluator(x, y, 0.0))).astype(float)

    def field(self, grid: Grid, time: TimeGrid) -> SpaceTimeField:
        return SpaceTimeField(self.sample(grid, time), grid, time)


@dataclass(frozen=True, eq=False)
class ReferenceRun:
    data: np.ndarray  # (m + 1, 2, nx, ny)
    grid: Grid
    time: TimeGrid
    steps: int
    diffusion: str
    max_divergence: float

    @property
    def final(self) -> np.ndarray:
        return self.data[-1]

    def field(self) -> SpaceTimeField:
        return SpaceTimeField(self.data, self.grid, self.time, validate=False)


def _nonlinear_hat(uh, model: FluxModel, grid: Grid):
    """Fourier coefficients of -P M div F(u)."""
    if model.kind == "zero":
        return np.zeros_like(uh)
    u = _ifft2(uh)
    F = model.evaluate(u)
    Fh = _fft2(F)
    kx, ky = grid.dk
    div = np.stack([1j * kx * Fh[i, 0] + 1j * ky * Fh[i, 1] for i in range(2)])
    return -_leray_hat(div, grid, dealias=True)


def reference_solve(v0, nu: float, time: TimeGrid, steps: int, model: FluxModel, grid: Grid,
                    diffusion: str = "integrating_factor", cfl: float = 0.5) -> ReferenceRun:
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (2,) + grid.shape:
        raise OracleConfigError("v0 does not match the grid")
    if diffusion not in ("integrating_factor", "explicit"):
        raise OracleConfigError(f"unknown diffusion treatment {diffusion!r}")
    if steps <= 0 or steps % time.m:
        raise OracleConfigError("steps must be a positive multiple of the number of output intervals")
    h = time.t_final / steps
    umax = float(np.sqrt(np.max(v0[0] ** 2 + v0[1] ** 2)))
    if umax > 0 and h > cfl * grid.dx / umax:
        raise OracleConfigError(f"advective step limit violated: dt={h:.3g} > {cfl} dx/max|u|")
    lam = -nu * np.where(grid.dealias_mask, grid.k2, 0.0)
    if diffusion == "explicit" and h * nu * float(np.max(-lam)) > 2.5:
        raise OracleConfigError("explicit diffusion step limit violated")

    def nl(uh):
        return _nonlinear_hat(uh, model, grid)

    uh = _leray_hat(_fft2(v0), grid, dealias=True)
    every = steps // time.m
    out = np.empty((time.m + 1, 2) + grid.shape)
    out[0] = v0
    e1, e2 = np.exp(lam * h), np.exp(lam * h / 2)
    kx, ky = grid.dk
    worst = 0.0
    for n in range(1, steps + 1):
        if diffusion == "integrating_factor":
            k1 = nl(uh)
            k2 = nl(e2 * (uh + 0.5 * h * k1))
            k3 = nl(e2 * uh + 0.5 * h * k2)
            k4 = nl(e1 * uh + h * e2 * k3)
            uh = e1 * uh + (h / 6) * (e1 * k1 + 2 * e2 * (k2 + k3) + k4)
        else:
            def rhs(a):
                return lam * a + nl(a)
            k1 = rhs(uh)
            k2 = rhs(uh + 0.5 * h * k1)
            k3 = rhs(uh + 0.5 * h * k2)
            k4 = rhs(uh + h * k3)
            uh = uh + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(uh)):
            raise FloatingPointError(f"reference solver blew up at step {n}")
        divh = kx * uh[0] + ky * uh[1]
        scale = max(float(np.abs(uh).max()), 1e-300)
        worst = max(worst, float(np.abs(divh).max()) / scale)
        if n % every == 0:
            out[n // every] = _ifft2(uh)
    return ReferenceRun(out, grid, time, steps, diffusion, worst)


@dataclass(frozen=True)
class ErrorReport:
    relative_l2: float
    terminal_l2: float
    per_slice_max: np.ndarray

    def as_dict(self):
        return {"relative_l2": self.relative_l2, "terminal_l2": self.terminal_l2,
                "max_abs": float(np.max(self.per_slice_max))}


def compare(u: SpaceTimeField, truth) -> ErrorReport:
    """Relative space-time L2 error, relative terminal-slice L2 error and per-slice max error."""
    if isinstance(truth, AnalyticCase):
        ref = truth.sample(u.grid, u.time)
    elif isinstance(truth, ReferenceRun):
        if truth.grid != u.grid or truth.time != u.time:
            raise GridMismatchError("reference run lives on different grids")
        ref = truth.data
    elif isinstance(truth, SpaceTimeField):
        if not truth.same_grids(u):
            raise GridMismatchError("fields live on different grids")
        ref = truth.data
    else:
        ref = np.asarray(truth, dtype=float)
        if ref.shape != u.data.shape:
            raise GridMismatchError("truth array does not match the field shape")
    diff = u.data - ref
    ip = inner_products(diff, diff, u.grid, u.time)
    rp = inner_products(ref, ref, u.grid, u.time)
    num, den = math.sqrt(max(ip.pairing, 0.0)), math.sqrt(max(rp.pairing, 0.0))
    rel = num / den if den > 0 else num
    tn, td = float(ip.slice_norms_a[-1]), float(rp.slice_norms_a[-1])
    term = tn / td if td > 0 else tn
    per = np.abs(diff).reshape(diff.shape[0], -1).max(axis=1)
    return ErrorReport(rel, term, per)


def heat_flow_exact(v0, grid: Grid, time: TimeGrid, nu: float = 1.0) -> np.ndarray:
    """Continuum heat flow of a band-limited v0, exp(-nu |k|^2 t) per Fourier mode."""
    vh = _fft2(np.asarray(v0, dtype=float))
    return np.stack([_ifft2(vh * np.exp(-nu * grid.k2 * t)) for t in time.times])
