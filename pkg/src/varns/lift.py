"""Stokes lift H_u and the residual W_u.

Two discretizations are provided.

``stokes_lift`` (used by the objective) is staggered: on each interval
``[t_{j-1}, t_j]`` it takes the midpoint average ``ubar_j`` and the difference
quotient ``(u_j - u_{j-1}) / dt`` and solves

    laplacian(H_j) = P M [ (u_j - u_{j-1}) / dt + M div F(ubar_j) ]

with P the Leray projection and M the 2/3 truncation.  Midpoint quadrature with
these differences satisfies summation by parts exactly, so the discrete energy
identity  sum_j dt <grad ubar_j, grad H_j> = (|u_0|^2 - |u_m|^2) / 2  holds to
rounding whenever the flux term is energy-neutral.

``collocated_lift`` solves the same Stokes problem independently on every slice
``t_j`` using the collocated ``time_derivative`` stencil; it serves as an
independent route for consistency checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flux import FluxModel
from .grid import (
    FieldDataError,
    Grid,
    SpaceTimeField,
    divergence,
    grad_inner,
    inv_laplacian,
    l2_inner,
    project_admissible,
    require_same_grids,
    time_derivative,
)


class LiftOverflowError(FloatingPointError):
    def __init__(self, slice_index):
        super().__init__(f"non-finite values in the lift at slice {slice_index}")
        self.slice_index = slice_index


@dataclass(frozen=True)
class LiftResult:
    """Lift on the evaluation times of one discretization.

    ``w = u_eval + r_eval - h / nu`` where ``u_eval`` is the velocity at the
    evaluation times (midpoint averages for the staggered lift).
    """

    h: np.ndarray
    w: np.ndarray
    u_eval: np.ndarray
    r_eval: np.ndarray | None
    times: np.ndarray
    weights: np.ndarray
    rhs_norm_per_slice: np.ndarray
    flux_part: np.ndarray
    nu: float


def flux_divergence(u, model: FluxModel, grid: Grid) -> np.ndarray:
    """M div F(u) for slices u of shape (..., 2, nx, ny).

    The isotropic g_n I part of the cutoff flux is dropped: its divergence is a
    gradient and vanishes under every projection applied downstream.
    """
    if model.kind == "zero":
        return np.zeros_like(u)
    comp = np.moveaxis(u, -3, 0)
    F = model.evaluate(comp, with_isotropic=False)  # (2, 2, ..., nx, ny)
    F = np.moveaxis(F, (0, 1), (-4, -3))  # (..., 2, 2, nx, ny)
    return divergence(F, grid, dealiased=True)


def _check(arr, offset=0):
    bad = ~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1)
    if bad.any():
        raise LiftOverflowError(int(np.argmax(bad)) + offset)


def _midpoints(a):
    return 0.5 * (a[1:] + a[:-1])


def stokes_lift(u: SpaceTimeField, model: FluxModel, r: SpaceTimeField | None = None,
                nu: float = 1.0) -> LiftResult:
    g, time = u.grid, u.time
    data = u.data
    ubar = _midpoints(data)
    du = (data[1:] - data[:-1]) / time.dt
    fpart = flux_divergence(ubar, model, g)
    _check(fpart, 1)
    rhs = project_admissible(du + fpart, g)
    h = inv_laplacian(rhs, g, check_mean=False)
    _check(h, 1)
    rbar = None
    w = ubar - h / nu
    if r is not None:
        require_same_grids(u, r)
        rbar = _midpoints(r.data)
        w = w + rbar
    norms = np.sqrt(np.maximum(grad_inner(h, h, g), 0.0))
    return LiftResult(h, w, ubar, rbar, time.midpoints, np.full(time.m, time.dt), norms, fpart, nu)


def collocated_lift(u: SpaceTimeField, model: FluxModel, r: SpaceTimeField | None = None,
                    nu: float = 1.0) -> LiftResult:
    """Per-slice lift H(t_j) = inv_laplacian(P(d_t u(t_j) + M div F(u(t_j))))."""
    g, time = u.grid, u.time
    fpart = flux_divergence(u.data, model, g)
    _check(fpart)
    h = inv_laplacian(project_admissible(time_derivative(u) + fpart, g), g, check_mean=False)
    _check(h)
    w = u.data - h / nu
    rr = None
    if r is not None:
        require_same_grids(u, r)
        rr = r.data
        w = w + rr
    norms = np.sqrt(np.maximum(grad_inner(h, h, g), 0.0))
    return LiftResult(h, w, np.asarray(u.data), rr, time.times, time.trapezoid_weights, norms, fpart, nu)


def dual_norm(v_rhs, grid: Grid, weights) -> float:
    """(sum_j w_j |grad Lift(v_j)|^2)^(1/2): the discrete L2(0,T; V^-1) norm."""
    v_rhs = np.asarray(v_rhs, dtype=float)
    if not np.all(np.isfinite(v_rhs)):
        raise FieldDataError("non-finite right-hand side")
    lifted = inv_laplacian(project_admissible(v_rhs, grid), grid, check_mean=False)
    per = grad_inner(lifted, lifted, grid)
    total = 0.0
    for w, p in zip(np.asarray(weights, dtype=float), np.atleast_1d(per)):
        total += w * p
    return float(np.sqrt(max(total, 0.0)))


def weighted_sq_norm(a, weights, grid: Grid, gradient=False) -> float:
    """sum_j w_j |a_j|^2 (or |grad a_j|^2), ascending j."""
    per = grad_inner(a, a, grid) if gradient else l2_inner(a, a, grid)
    total = 0.0
    for w, p in zip(weights, per):
        total += w * p
    return float(total)


def lift_energy_identity(u: SpaceTimeField, lift: LiftResult) -> np.ndarray:
    """Defect of  sum_{i<=j} dt <grad ubar_i, grad H_i> - (|u_0|^2 - |u_j|^2)/2  for every j."""
    g = u.grid
    per = grad_inner(lift.u_eval, lift.h, g) * lift.weights
    lhs = np.concatenate([[0.0], np.cumsum(per)])
    e = l2_inner(u.data, u.data, g)
    return lhs - 0.5 * (e[0] - e)


__all__ = [
    "LiftResult", "LiftOverflowError", "stokes_lift", "collocated_lift", "dual_norm",
    "flux_divergence", "lift_energy_identity", "weighted_sq_norm",
]
