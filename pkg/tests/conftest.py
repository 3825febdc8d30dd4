import numpy as np
import pytest

from varns.grid import Grid, SpaceTimeField, TimeGrid, perp_gradient, project_admissible

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_slices(rng, count, grid):
    return project_admissible(rng.standard_normal((count, 2) + grid.shape), grid)


def random_field(rng, grid, time, scale=1.0):
    data = scale * random_slices(rng, time.m + 1, grid)
    return SpaceTimeField(data, grid, time)


def low_mode_slice(rng, grid, kmax=3, peak_sq=1.0):
    """Divergence-free slice from random stream-function modes with |k| <= kmax, scaled to max |v|^2 = peak_sq."""
    x, y = grid.coords
    psi = np.zeros(grid.shape)
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if 0 < k1 * k1 + k2 * k2 <= kmax * kmax:
                a, b = rng.standard_normal(2)
                psi += a * np.cos(k1 * x + k2 * y) + b * np.sin(k1 * x + k2 * y)
    v = project_admissible(perp_gradient(psi, grid), grid)
    return v * np.sqrt(peak_sq / np.max(v[0] ** 2 + v[1] ** 2))


def smooth_field(grid, time, seed=0, kmax=2):
    """Smooth in space and time: low modes with polynomial-exponential time profiles."""
    rng = np.random.default_rng(seed)
    x, y = grid.coords
    data = np.zeros((time.m + 1, 2) + grid.shape)
    for _ in range(3):
        k = rng.integers(-kmax, kmax + 1, size=2)
        if not k.any():
            continue
        a, b, c = rng.uniform(-1, 1, 3)
        s = np.sin(k[0] * x + k[1] * y + c)
        mode = np.stack([-k[1] * s, k[0] * s])
        for j, t in enumerate(time.times):
            data[j] += (a + b * t) * np.exp(-t) * mode
    return SpaceTimeField(project_admissible(data, grid), grid, time)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def g16():
    return Grid(16, 16)


@pytest.fixture
def g32():
    return Grid(32, 32)


@pytest.fixture
def g64():
    return Grid(64, 64)
