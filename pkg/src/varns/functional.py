"""Space-time objectives and their exact discrete gradients.

For a history u with pinned u_0 = v0, the staggered lift H (see ``lift``) and
an optional shift r, the discrete objective is

    value = 1/2 [ sum_j dt ( nu |grad(ubar_j + rbar_j)|^2
                             + (1/nu) |grad(H_j - rbar_j)|^2 ) + |u_m|^2 ]

With W = ubar + rbar - H / nu the same number can be written as

    value = 1/2 |v0|^2 + nu/2 sum_j dt |grad W_j|^2 + 1/2 sum_j dt |grad rbar_j|^2 - phi

where phi = sum_j dt <ubar_j, M div F(ubar_j)> vanishes for energy-neutral
fluxes (exactly, to rounding, for u (x) u on band-limited fields).  ``value`` and
``value_via_rewrite`` report both forms; ``excess`` is value - |v0|^2/2 computed
from the second form without cancellation.  ``residual_energy`` is the same
quantity without phi; the optimizer descends it by default, since phi is an
aliasing artefact for cutoff fluxes inside their transition band and would
otherwise pull the discrete minimizer away from W = 0.

The heat objective is the zero-flux case.  The shift r is supported only for
nu = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .flux import FluxModel
from .grid import (
    Grid,
    SpaceTimeField,
    grad_inner,
    gradient as spatial_gradient,
    l2_inner,
    laplacian,
    project_admissible,
    require_same_grids,
    time_derivative,
)
from .lift import LiftResult, collocated_lift, stokes_lift


class UsageError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FunctionalSpec:
    kind: str
    v0: np.ndarray
    model: FluxModel = FluxModel.exact()
    nu: float = 1.0
    r: SpaceTimeField | None = None

    def __post_init__(self):
        if self.kind not in ("heat", "navier_stokes"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.r is not None and self.nu != 1.0:
            raise ValueError("the shifted functional is defined for nu = 1 only")
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))

    @property
    def flux(self) -> FluxModel:
        return FluxModel.zero() if self.kind == "heat" else self.model


@dataclass(frozen=True, eq=False)
class Evaluation:
    value: float
    value_via_rewrite: float
    excess: float
    residual_energy: float
    w_norm: float
    u_norm: float
    grad: np.ndarray | None
    lift: LiftResult

    @property
    def w_ratio(self) -> float:
        return self.w_norm / self.u_norm if self.u_norm > 0 else self.w_norm


def _weighted(per, weights):
    total = 0.0
    for w, p in zip(weights, per):
        total += w * p
    return float(total)


def _check_pinned(u: SpaceTimeField, spec: FunctionalSpec):
    if spec.v0.shape != u.v0.shape or not np.array_equal(u.v0, spec.v0):
        raise UsageError("slice 0 of u must equal the pinned initial datum")
    if spec.r is not None:
        require_same_grids(u, spec.r)


OBJECTIVES = ("defining", "rewrite")


def evaluate(u: SpaceTimeField, spec: FunctionalSpec, with_gradient=False,
             objective: str = "defining") -> Evaluation:
    """Both forms of the objective; ``grad`` differentiates ``value`` for
    objective="defining" and ``residual_energy`` for objective="rewrite"."""
    if objective not in OBJECTIVES:
        raise UsageError(f"unknown objective {objective!r}")
    _check_pinned(u, spec)
    g, dt, nu = u.grid, u.time.dt, spec.nu
    weights = np.full(u.m, dt)
    lift = stokes_lift(u, spec.flux, spec.r, nu)
    ubar, h, rbar = lift.u_eval, lift.h, lift.r_eval

    a = ubar if rbar is None else ubar + rbar
    b = h if rbar is None else h - rbar
    e = l2_inner(u.data[[0, -1]], u.data[[0, -1]], g)
    value = 0.5 * (nu * _weighted(grad_inner(a, a, g), weights)
                   + _weighted(grad_inner(b, b, g), weights) / nu + e[1])

    wsq = _weighted(grad_inner(lift.w, lift.w, g), weights)
    rsq = 0.0 if rbar is None else _weighted(grad_inner(rbar, rbar, g), weights)
    phi = _weighted(l2_inner(ubar, lift.flux_part, g), weights)
    rewrite = 0.5 * e[0] + 0.5 * nu * wsq + 0.5 * rsq
    excess = 0.5 * nu * wsq + 0.5 * rsq - phi

    w_norm = math.sqrt(_weighted(l2_inner(lift.w, lift.w, g), weights))
    u_norm = math.sqrt(_weighted(l2_inner(ubar, ubar, g), weights))
    grad = _gradient(u, spec, lift, objective == "rewrite") if with_gradient else None
    return Evaluation(value, rewrite, excess, 0.5 * nu * wsq + 0.5 * rsq, w_norm, u_norm, grad, lift)


def _gradient(u: SpaceTimeField, spec: FunctionalSpec, lift: LiftResult, add_phi=False) -> np.ndarray:
    """Reverse sweep through midpoint averaging, differencing, flux, projection
    and inverse Laplacian.  Returns the per-slice L2 Riesz representer of the
    derivative, projected onto admissible slices; slice 0 is zero."""
    g, dt, nu = u.grid, u.time.dt, spec.nu
    ubar, h, rbar = lift.u_eval, lift.h, lift.r_eval
    a_field = ubar if rbar is None else ubar + rbar
    b_field = h if rbar is None else h - rbar

    # adjoint of H = invlap(P M (D u + M div F(ubar))) paired with (dt/nu) (-lap)(H - rbar)
    z = -(dt / nu) * b_field
    coef_avg = -nu * dt * laplacian(a_field, g)
    model = spec.flux
    if model.kind != "zero":
        gz = spatial_gradient(z, g)  # (m, 2, 2, nx, ny), [i, l] = d_l z_i
        q = model.contract_derivative(np.moveaxis(ubar, -3, 0), np.moveaxis(gz, (-4, -3), (0, 1)),
                                      with_isotropic=False)
        coef_avg = coef_avg - np.moveaxis(q, 0, -3)
        if add_phi:
            # d phi = sum dt <dubar, M div F(ubar)> - sum dt sum_x grad ubar : F'(ubar) dubar
            gu = spatial_gradient(ubar, g)
            qp = model.contract_derivative(np.moveaxis(ubar, -3, 0), np.moveaxis(gu, (-4, -3), (0, 1)),
                                           with_isotropic=False)
            coef_avg = coef_avg + dt * (lift.flux_part - np.moveaxis(qp, 0, -3))

    out = np.zeros_like(u.data)
    out[1:] += 0.5 * coef_avg + z / dt
    out[1:-1] += 0.5 * coef_avg[1:] - z[1:] / dt
    out[-1] += u.data[-1]
    out[1:] = project_admissible(out[1:], g)
    return out


def gradient(u: SpaceTimeField, spec: FunctionalSpec) -> np.ndarray:
    return evaluate(u, spec, with_gradient=True).grad


def tangent_pairing(a, b, grid: Grid) -> float:
    """sum over slices of the spatial L2 pairing (the metric of ``grad``)."""
    return float(np.sum(l2_inner(a, b, grid)))


def first_variation_report(u: SpaceTimeField, delta, spec: FunctionalSpec) -> float:
    """Continuous first-variation formula evaluated by collocated quadrature:

        int int  nu grad W : grad delta + d_t delta . W - (sum_k delta_k dF/du_k(u)) : grad W

    with W from ``collocated_lift`` and trapezoid weights in time.
    """
    _check_pinned(u, spec)
    if isinstance(delta, SpaceTimeField):
        require_same_grids(u, delta)
        delta = delta.data
    delta = np.asarray(delta, dtype=float)
    g = u.grid
    if delta.shape != u.data.shape:
        raise UsageError("delta must have the shape of u")
    if np.any(delta[0] != 0):
        raise UsageError("delta must vanish at t = 0")
    scale = max(float(np.abs(delta).max()), 1e-300)
    if np.abs(delta - project_admissible(delta, g)).max() > 1e-10 * scale:
        raise UsageError("delta must be divergence-free, mean-zero and dealiased")

    lift = collocated_lift(u, spec.flux, spec.r, spec.nu)
    w = lift.w
    per = spec.nu * grad_inner(w, delta, g) + l2_inner(time_derivative(delta, u.time), w, g)
    if spec.flux.kind != "zero":
        A = spec.flux.apply_derivative(np.moveaxis(u.data, -3, 0), np.moveaxis(delta, -3, 0))
        gw = spatial_gradient(w, g)
        per = per - g.cell_area * np.einsum("ij...xy,...ijxy->...", A, gw)
    return _weighted(per, u.time.trapezoid_weights)
