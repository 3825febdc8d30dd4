"""Nonlinear fluxes: exact u (x) u, the cutoff family F_n, and the zero flux.

Pointwise functions take velocities component-first, ``v[0], v[1]`` being
arrays of any common shape; matrices come back as ``(2, 2, *shape)`` with
``F[i, j]``, derivatives as ``(2, 2, 2, *shape)`` indexed ``[k, i, j]`` for
dF_ij/dv_k.

For the cutoff flux

    F_n(v) = f_n(|v|^2) v (x) v + g_n(|v|^2) I,   f_n(s) = h(s/n),
    g_n(r) = 1/2 int_0^r f_n,

the potential is G(v) = g_n(|v|^2) v, whose Jacobian dG_j/dv_i is F_ij.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline


class FluxMembershipError(ValueError):
    def __init__(self, message, offending):
        super().__init__(message)
        self.offending = offending


def _q(t):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    safe = np.where(pos, t, 1.0)
    return np.where(pos, np.exp(-1.0 / safe), 0.0)


def _dq(t):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    safe = np.where(pos, t, 1.0)
    return np.where(pos, np.exp(-1.0 / safe) / safe**2, 0.0)


def smooth_step(s):
    """h(s) = q(2-s) / (q(2-s) + q(s-1)); 1 on (-inf, 1], 0 on [2, inf)."""
    a, b = _q(2.0 - s), _q(np.asarray(s) - 1.0)
    return a / (a + b)


def smooth_step_prime(s):
    s = np.asarray(s, dtype=float)
    a, b = _q(2.0 - s), _q(s - 1.0)
    da, db = -_dq(2.0 - s), _dq(s - 1.0)
    return (da * b - a * db) / (a + b) ** 2


@dataclass(frozen=True)
class CutoffProfile:
    """Profile h with its derivative; integral of h on [1, 2] tabulated once.

    ``table_nodes`` cumulative integrals are computed with adaptive quadrature
    (tolerance 1e-13) and interpolated by cubic Hermite splines with the exact
    slope h at every node.
    """

    h: object = smooth_step
    h_prime: object = smooth_step_prime
    table_nodes: int = 2048

    @cached_property
    def _integral_table(self):
        nodes = np.linspace(1.0, 2.0, self.table_nodes + 1)
        pieces = [integrate.quad(lambda s: float(self.h(s)), a, b, epsabs=1e-14, epsrel=1e-13)[0]
                  for a, b in zip(nodes[:-1], nodes[1:])]
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        return CubicHermiteSpline(nodes, cum, self.h(nodes)), cum[-1]

    def integral(self, rho):
        """H(rho) = int_0^rho h(s) ds."""
        rho = np.asarray(rho, dtype=float)
        spline, tail = self._integral_table
        mid = spline(np.clip(rho, 1.0, 2.0))
        return np.where(rho <= 1.0, rho, np.where(rho >= 2.0, 1.0 + tail, 1.0 + mid))

    def f(self, s, n):
        return self.h(np.asarray(s, dtype=float) / n)

    def f_prime(self, s, n):
        return self.h_prime(np.asarray(s, dtype=float) / n) / n

    def g(self, r, n):
        """g_n(r) = 1/2 int_0^r f_n = (n/2) H(r/n)."""
        return 0.5 * n * self.integral(np.asarray(r, dtype=float) / n)


DEFAULT_PROFILE = CutoffProfile()


def _outer(v):
    return np.stack([np.stack([v[0] * v[0], v[0] * v[1]]), np.stack([v[1] * v[0], v[1] * v[1]])])


def _eye_like(v):
    z = np.zeros_like(v[0])
    o = np.ones_like(v[0])
    return np.stack([np.stack([o, z]), np.stack([z, o])])


@dataclass(frozen=True)
class FluxModel:
    """kind is one of ``zero``, ``exact_quadratic``, ``cutoff`` (with level n)."""

    kind: str = "exact_quadratic"
    n: float | None = None
    profile: CutoffProfile = field(default=DEFAULT_PROFILE, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("zero", "exact_quadratic", "cutoff"):
            raise ValueError(f"unknown flux kind {self.kind!r}")
        if self.kind == "cutoff" and not (self.n is not None and self.n > 0):
            raise ValueError("cutoff flux needs a positive level n")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def exact(cls):
        return cls("exact_quadratic")

    @classmethod
    def cutoff(cls, n, profile: CutoffProfile = DEFAULT_PROFILE):
        return cls("cutoff", float(n), profile)

    @property
    def label(self) -> str:
        return f"cutoff({self.n:g})" if self.kind == "cutoff" else self.kind

    # -- pointwise maps -----------------------------------------------------
    def evaluate(self, v, with_isotropic=True):
        """F(v).  ``with_isotropic=False`` drops the g_n I part (a pure gradient
        after taking the divergence, so it never survives a Leray projection)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "zero":
            return np.zeros((2, 2) + v.shape[1:])
        out = _outer(v)
        if self.kind == "cutoff":
            s = v[0] ** 2 + v[1] ** 2
            out = out * self.profile.f(s, self.n)
            if with_isotropic:
                out = out + self.profile.g(s, self.n) * _eye_like(v)
        return out

    def derivative(self, v):
        """dF_ij/dv_k as ``[k, i, j, ...]``."""
        v = np.asarray(v, dtype=float)
        shape = (2, 2, 2) + v.shape[1:]
        if self.kind == "zero":
            return np.zeros(shape)
        d = np.zeros(shape)
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    d[k, i, j] = (i == k) * v[j] + (j == k) * v[i]
        if self.kind == "cutoff":
            s = v[0] ** 2 + v[1] ** 2
            f = self.profile.f(s, self.n)
            fp = self.profile.f_prime(s, self.n)
            for k in range(2):
                for i in range(2):
                    for j in range(2):
                        d[k, i, j] = f * d[k, i, j] + 2 * fp * v[k] * v[i] * v[j] + (i == j) * f * v[k]
        return d

    def apply_derivative(self, v, dv, with_isotropic=True):
        """sum_k dv_k dF/dv_k(v), pointwise."""
        v = np.asarray(v, dtype=float)
        dv = np.asarray(dv, dtype=float)
        if self.kind == "zero":
            return np.zeros((2, 2) + v.shape[1:])
        # d(v (x) v)[dv] = dv (x) v + v (x) dv
        base = np.stack([np.stack([2 * dv[0] * v[0], dv[0] * v[1] + v[0] * dv[1]]),
                         np.stack([dv[1] * v[0] + v[1] * dv[0], 2 * dv[1] * v[1]])])
        if self.kind == "exact_quadratic":
            return base
        s = v[0] ** 2 + v[1] ** 2
        f = self.profile.f(s, self.n)
        fp = self.profile.f_prime(s, self.n)
        vdv = v[0] * dv[0] + v[1] * dv[1]
        out = f * base + 2 * fp * vdv * _outer(v)
        if with_isotropic:
            out = out + f * vdv * _eye_like(v)
        return out

    def contract_derivative(self, v, a, with_isotropic=True):
        """Adjoint of apply_derivative: q_k = sum_ij dF_ij/dv_k(v) a_ij."""
        v = np.asarray(v, dtype=float)
        a = np.asarray(a, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(v)
        sym0 = 2 * a[0, 0] * v[0] + (a[0, 1] + a[1, 0]) * v[1]
        sym1 = 2 * a[1, 1] * v[1] + (a[0, 1] + a[1, 0]) * v[0]
        base = np.stack([sym0, sym1])
        if self.kind == "exact_quadratic":
            return base
        s = v[0] ** 2 + v[1] ** 2
        f = self.profile.f(s, self.n)
        fp = self.profile.f_prime(s, self.n)
        vav = (v[0] * (a[0, 0] * v[0] + a[0, 1] * v[1]) + v[1] * (a[1, 0] * v[0] + a[1, 1] * v[1]))
        out = f * base + 2 * fp * vav * v
        if with_isotropic:
            out = out + f * (a[0, 0] + a[1, 1]) * v
        return out

    def potential(self, v):
        """G(v) with dG_j/dv_i = F_ij; None when no potential exists."""
        v = np.asarray(v, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(v)
        if self.kind == "cutoff":
            return self.profile.g(v[0] ** 2 + v[1] ** 2, self.n) * v
        return None


def eval_flux(model: FluxModel, v) -> np.ndarray:
    return model.evaluate(v)


def eval_flux_derivative(model: FluxModel, v) -> np.ndarray:
    return model.derivative(v)


# -- membership ---------------------------------------------------------------

def _fd_jacobian(fun, v, step):
    """Fourth-order central differences; returns [k, ...] = dfun/dv_k."""
    cols = []
    for k in range(len(v)):
        e = np.zeros_like(v)
        e[k] = step
        cols.append((-fun(v + 2 * e) + 8 * fun(v + e) - 8 * fun(v - e) + fun(v - 2 * e)) / (12 * step))
    return np.stack(cols)


@dataclass
class MembershipReport:
    model: str
    samples: int
    symmetry_defect: float
    potential_defect: float
    derivative_defect: float
    derivative_defect_band: float
    zero_value: float
    growth_constant: float
    growth_bound: float
    offending: list
    passed: bool

    def as_dict(self):
        return dict(self.__dict__, offending=[list(map(float, v)) for v in self.offending])


GROWTH_BOUND = 1.0 + math.sqrt(2) / 2  # |f v(x)v| + |g I|_F <= |v|^2 + (|v|^2/2) sqrt(2)


def flux_membership_check(model: FluxModel, samples: int = 200, seed: int = 0,
                          tol: float = 1e-6, raise_on_failure=False) -> MembershipReport:
    """Sample random v and test the defining properties of the flux class."""
    if samples < 100:
        raise ValueError("use at least 100 samples")
    rng = np.random.default_rng(seed)
    # spread |v|^2 over [0, 3n] so the cutoff band is exercised
    scale = math.sqrt(3 * model.n) if model.kind == "cutoff" else 2.0
    radius = scale * np.sqrt(rng.uniform(0, 1, samples))
    theta = rng.uniform(0, 2 * math.pi, samples)
    vs = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)

    sym = pot = der = der_band = growth = 0.0
    offending = []
    for v in vs:
        d = model.derivative(v)
        size = max(float(np.abs(d).max()), float(np.hypot(*v)), 1e-300)
        # dF_ij/dv_m == dF_mj/dv_i
        s_def = float(np.abs(d - d.transpose(1, 0, 2)).max()) / size
        step = 1e-4 * max(1.0, float(np.hypot(*v)))
        fd = _fd_jacobian(model.evaluate, v, step)
        d_def = float(np.abs(fd - d).max()) / size
        G = model.potential(v)
        if G is None:
            p_def = math.inf
        else:
            jac = _fd_jacobian(model.potential, v, step)  # [i, j] = dG_j/dv_i
            p_def = float(np.abs(jac - model.evaluate(v)).max()) / max(float(np.abs(model.evaluate(v)).max()), 1e-300)
        r2 = float(v @ v)
        # stencil reaches 2 * step; band defects are reported separately
        reach = (abs(math.hypot(*v)) + 2 * step) ** 2
        low = (max(math.hypot(*v) - 2 * step, 0.0)) ** 2
        in_band = model.kind == "cutoff" and reach > model.n and low < 2 * model.n
        if r2 > 0:
            growth = max(growth, float(np.linalg.norm(model.evaluate(v))) / r2)
        if max(s_def, p_def, d_def) > tol:
            offending.append(v)
        sym, pot = max(sym, s_def), max(pot, p_def)
        if in_band:
            der_band = max(der_band, d_def)
        else:
            der = max(der, d_def)

    zero_value = float(np.abs(model.evaluate(np.zeros(2))).max())
    passed = not offending and zero_value == 0.0 and growth <= GROWTH_BOUND * (1 + 1e-12)
    report = MembershipReport(model.label, samples, sym, pot, der, der_band, zero_value, growth,
                              GROWTH_BOUND, offending[:10], passed)
    if raise_on_failure and not passed:
        raise FluxMembershipError(f"{model.label} is not in the flux class", report.offending)
    return report
