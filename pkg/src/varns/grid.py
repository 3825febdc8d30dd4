"""Periodic 2-D grid, spectral calculus and space-time fields.

Vector fields are stored component-first: a slice is ``(2, nx, ny)`` and a
space-time field is ``(m + 1, 2, nx, ny)``.  Sample ``[c, i, j]`` sits at
``x = i * lx / nx``, ``y = j * ly / ny``.

Derivatives use wavenumbers with the Nyquist row/column zeroed, which keeps the
discrete derivative a real skew-symmetric operator (so spectral integration by
parts holds exactly on grid sums).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.fft as sfft


class FieldDataError(ValueError):
    """Non-finite or malformed samples."""


class PreconditionError(ValueError):
    """An operation was called outside its domain."""


class GridMismatchError(ValueError):
    """Two fields live on different grids."""


def _fft2(a):
    return sfft.fft2(a, axes=(-2, -1), workers=-1)


def _ifft2(a):
    return sfft.ifft2(a, axes=(-2, -1), workers=-1).real


@dataclass(frozen=True)
class Grid:
    nx: int = 64
    ny: int = 64
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("periods lx, ly must be positive")

    # -- tables -----------------------------------------------------------
    @cached_property
    def shape(self):
        return (self.nx, self.ny)

    @cached_property
    def area(self) -> float:
        return self.lx * self.ly

    @cached_property
    def cell_area(self) -> float:
        return self.area / (self.nx * self.ny)

    @cached_property
    def dx(self) -> float:
        return min(self.lx / self.nx, self.ly / self.ny)

    @cached_property
    def mode_index(self):
        """Integer mode numbers along each axis (FFT ordering)."""
        ix = np.fft.fftfreq(self.nx, 1.0 / self.nx).round().astype(int)
        iy = np.fft.fftfreq(self.ny, 1.0 / self.ny).round().astype(int)
        return ix, iy

    @cached_property
    def kx(self) -> np.ndarray:
        return self.mode_index[0] * (2 * math.pi / self.lx)

    @cached_property
    def ky(self) -> np.ndarray:
        return self.mode_index[1] * (2 * math.pi / self.ly)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the full (nx, ny) spectral grid."""
        return self.kx[:, None] ** 2 + self.ky[None, :] ** 2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        ix, iy = self.mode_index
        return (np.abs(ix)[:, None] != self.nx // 2) & (np.abs(iy)[None, :] != self.ny // 2)

    @cached_property
    def dk(self):
        """Derivative wavenumbers (kx, ky) broadcast to 2-D, Nyquist zeroed."""
        ix, iy = self.mode_index
        kx = np.where(np.abs(ix) == self.nx // 2, 0.0, self.kx)
        ky = np.where(np.abs(iy) == self.ny // 2, 0.0, self.ky)
        return (np.broadcast_to(kx[:, None], self.shape), np.broadcast_to(ky[None, :], self.shape))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes with |index| <= n/3 on both axes."""
        ix, iy = self.mode_index
        return (np.abs(ix)[:, None] <= self.nx / 3) & (np.abs(iy)[None, :] <= self.ny / 3)

    @cached_property
    def coords(self):
        x = np.arange(self.nx) * (self.lx / self.nx)
        y = np.arange(self.ny) * (self.ly / self.ny)
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class TimeGrid:
    m: int = 64
    t_final: float = 1.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 4:
            raise ValueError(f"m must be an integer >= 4, got {self.m}")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")

    @property
    def dt(self) -> float:
        return self.t_final / self.m

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.dt

    @cached_property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.dt

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.m + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


# -- spectral operators -----------------------------------------------------

def check_finite(w, what="field"):
    if not np.all(np.isfinite(w)):
        raise FieldDataError(f"{what} contains non-finite samples")


def leray_project(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Project a vector field (..., 2, nx, ny) onto divergence-free, mean-zero fields.

    The mean and the Nyquist modes are removed; gradients map to zero.
    """
    w = np.asarray(w, dtype=float)
    check_finite(w)
    return _ifft2(_leray_hat(_fft2(w), grid))


def _leray_hat(wh, grid: Grid, dealias=False):
    kx, ky = grid.dk
    keep = grid.nyquist_free & (grid.k2 > 0)
    if dealias:
        keep = keep & grid.dealias_mask
    a, b = wh[..., 0, :, :], wh[..., 1, :, :]
    kdotw = (kx * a + ky * b) * grid.inv_k2
    out = np.empty_like(wh)
    out[..., 0, :, :] = np.where(keep, a - kx * kdotw, 0)
    out[..., 1, :, :] = np.where(keep, b - ky * kdotw, 0)
    return out


def project_admissible(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Leray projection followed by the 2/3 dealias truncation.

    Admissible velocity slices are exactly the range of this map.
    """
    w = np.asarray(w, dtype=float)
    check_finite(w)
    return _ifft2(_leray_hat(_fft2(w), grid, dealias=True))


def dealias(a: np.ndarray, grid: Grid) -> np.ndarray:
    return _ifft2(_fft2(a) * grid.dealias_mask)


def laplacian(w: np.ndarray, grid: Grid) -> np.ndarray:
    return _ifft2(-grid.k2 * _fft2(w))


def inv_laplacian(w: np.ndarray, grid: Grid, check_mean=True) -> np.ndarray:
    """Unique mean-zero z with laplacian(z) = w, per scalar component."""
    wh = _fft2(np.asarray(w, dtype=float))
    if check_mean:
        mean = np.abs(wh[..., 0, 0]) / (grid.nx * grid.ny)
        rms = np.sqrt(np.mean(np.asarray(w) ** 2, axis=(-2, -1)))
        if np.any(mean > 1e-12 * np.maximum(rms, 1e-300) + 1e-300):
            raise PreconditionError("inv_laplacian needs mean-zero input")
    return _ifft2(-grid.inv_k2 * wh)


def gradient(a: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient; appends a derivative axis: out[..., j, :, :] = d_j a."""
    kx, ky = grid.dk
    ah = _fft2(a)
    return np.stack([_ifft2(1j * kx * ah), _ifft2(1j * ky * ah)], axis=-3)


def divergence(f: np.ndarray, grid: Grid, dealiased=False) -> np.ndarray:
    """Contract the trailing derivative axis: out[...] = sum_j d_j f[..., j, :, :]."""
    kx, ky = grid.dk
    fh = _fft2(f)
    dh = 1j * kx * fh[..., 0, :, :] + 1j * ky * fh[..., 1, :, :]
    if dealiased:
        dh = dh * grid.dealias_mask
    return _ifft2(dh)


def curl(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Scalar vorticity d_x w_y - d_y w_x."""
    kx, ky = grid.dk
    wh = _fft2(w)
    return _ifft2(1j * kx * wh[..., 1, :, :] - 1j * ky * wh[..., 0, :, :])


def perp_gradient(s: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence-free field (d_y s, -d_x s) from a stream function."""
    g = gradient(s, grid)
    return np.stack([g[..., 1, :, :], -g[..., 0, :, :]], axis=-3)


def l2_inner(a, b, grid: Grid) -> np.ndarray:
    """Spatial L2 pairing per leading index (sums components and grid)."""
    prod = np.asarray(a) * np.asarray(b)
    return grid.cell_area * np.sum(prod, axis=(-3, -2, -1))


def grad_inner(a, b, grid: Grid) -> np.ndarray:
    """Dirichlet pairing  int grad a : grad b  per leading slice (vector slices)."""
    ah, bh = _fft2(a), _fft2(b)
    dens = grid.k2 * (ah * np.conj(bh)).real
    return grid.cell_area / (grid.nx * grid.ny) * np.sum(dens, axis=(-3, -2, -1))


def divergence_norm(w, grid: Grid) -> float:
    """Spectral L2 norm of div w."""
    d = divergence(w, grid)
    return float(np.sqrt(grid.cell_area * np.sum(d * d)))


def interpolate(a: np.ndarray, grid: Grid, factor: int):
    """Trigonometric interpolation onto a grid ``factor`` times finer (zero padding).

    Nyquist modes of the input are dropped.  Returns (samples, fine grid).
    """
    if int(factor) != factor or factor < 1:
        raise ValueError("factor must be a positive integer")
    fine = Grid(grid.nx * factor, grid.ny * factor, grid.lx, grid.ly)
    ah = _fft2(np.asarray(a, dtype=float)) * grid.nyquist_free
    ix, iy = grid.mode_index
    big = np.zeros(ah.shape[:-2] + fine.shape, dtype=complex)
    big[..., (ix % fine.nx)[:, None], (iy % fine.ny)[None, :]] = ah
    return _ifft2(big) * factor * factor, fine


# -- space-time ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Admissible velocity history on ``time.m + 1`` slices; slice 0 is v0."""

    data: np.ndarray
    grid: Grid
    time: TimeGrid
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        expect = (self.time.m + 1, 2, self.grid.nx, self.grid.ny)
        if data.shape != expect:
            raise ValueError(f"field shape {data.shape} != {expect}")
        check_finite(data, "space-time field")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.validate:
            self.check_invariants()

    def check_invariants(self, rtol=1e-12):
        g = self.grid
        for j, s in enumerate(self.data):
            scale = max(float(np.sqrt(np.sum(l2_inner(s, s, g)))), 1e-300)
            if divergence_norm(s, g) > rtol * scale * max(1.0, 2 * math.pi / g.dx):
                raise FieldDataError(f"slice {j} is not divergence-free")
            mean = np.abs(s.mean(axis=(-2, -1)))
            if np.any(mean * math.sqrt(g.area) > rtol * scale):
                raise FieldDataError(f"slice {j} has nonzero mean")

    @classmethod
    def from_slices(cls, v0, later, grid: Grid, time: TimeGrid, project=True):
        """Pin ``v0`` and append slices 1..m (projected unless told otherwise)."""
        later = np.asarray(later, dtype=float)
        if project:
            later = project_admissible(later, grid)
        data = np.concatenate([np.asarray(v0, dtype=float)[None], later], axis=0)
        return cls(data, grid, time)

    @classmethod
    def constant(cls, v0, grid: Grid, time: TimeGrid):
        v0 = np.asarray(v0, dtype=float)
        return cls(np.broadcast_to(v0, (time.m + 1,) + v0.shape), grid, time)

    @classmethod
    def sample(cls, fn, grid: Grid, time: TimeGrid, project=False):
        """Build from ``fn(x, y, t) -> (u, v)``; slice 0 is fn at t=0."""
        x, y = grid.coords
        data = np.stack([np.stack(fn(x, y, t)) for t in time.times])
        if project:
            data = project_admissible(data, grid)
        return cls(data, grid, time)

    @property
    def v0(self) -> np.ndarray:
        return self.data[0]

    @property
    def m(self) -> int:
        return self.time.m

    def replace_later(self, later) -> "SpaceTimeField":
        """New field with the same slice 0 (bitwise) and new slices 1..m."""
        data = np.empty_like(self.data)
        data[0] = self.data[0]
        data[1:] = later
        return SpaceTimeField(data, self.grid, self.time, validate=False)

    def same_grids(self, other: "SpaceTimeField") -> bool:
        return self.grid == other.grid and self.time == other.time


def require_same_grids(a: SpaceTimeField, b: SpaceTimeField):
    if not a.same_grids(b):
        raise GridMismatchError("fields live on different grids")


def time_derivative(u, time: TimeGrid | None = None) -> np.ndarray:
    """Collocated d/dt: central inside, second-order one-sided at both ends."""
    if isinstance(u, SpaceTimeField):
        time = u.time
        u = u.data
    dt = time.dt
    u = np.asarray(u)
    out = np.empty_like(u, dtype=float)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * dt)
    out[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * dt)
    out[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * dt)
    return out


@dataclass(frozen=True)
class InnerProducts:
    pairing: float
    slice_norms_a: np.ndarray
    slice_norms_b: np.ndarray


def inner_products(a, b, grid: Grid | None = None, time: TimeGrid | None = None) -> InnerProducts:
    """Space-time L2 pairing (trapezoid in time, ascending slices) and per-slice norms."""
    if isinstance(a, SpaceTimeField) and isinstance(b, SpaceTimeField):
        require_same_grids(a, b)
        grid, time, a, b = a.grid, a.time, a.data, b.data
    elif isinstance(a, SpaceTimeField) or isinstance(b, SpaceTimeField):
        raise GridMismatchError("pass two SpaceTimeFields or two arrays plus grids")
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[0] != time.m + 1 or a.shape[-2:] != grid.shape:
        raise GridMismatchError(f"shapes {a.shape} / {b.shape} do not match the grids")
    per = l2_inner(a, b, grid)
    total = 0.0
    for w, p in zip(time.trapezoid_weights, per):
        total += w * p
    na = np.sqrt(l2_inner(a, a, grid))
    nb = np.sqrt(l2_inner(b, b, grid))
    return InnerProducts(float(total), na, nb)


def spacetime_norm(a, grid: Grid, time: TimeGrid) -> float:
    return math.sqrt(max(inner_products(a, a, grid, time).pairing, 0.0))
