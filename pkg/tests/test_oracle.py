import math

import numpy as np
import pytest

from varns.flux import FluxModel
from varns.grid import Grid, GridMismatchError, TimeGrid, inner_products
from varns.oracle import (
    AnalyticCase,
    OracleConfigError,
    compare,
    heat_flow_exact,
    reference_solve,
)

G64 = Grid(64, 64)
G16 = Grid(16, 16)


class TestAnalytic:
    def test_heat_mode_shape(self):
        v = AnalyticCase.heat_mode((1, 0)).initial(G16)
        x, _ = G16.coords
        assert np.abs(v[0]).max() == 0.0 and np.abs(v[1] - np.sin(x)).max() <= 1e-15

    def test_taylor_green_is_admissible(self):
        AnalyticCase.taylor_green(0.3).field(G16, TimeGrid(4))

    def test_superposition(self):
        a = AnalyticCase.heat_modes([((1, 0), 1.0), ((1, 2), 0.5)], nu=0.2).sample(G16, TimeGrid(4))
        b = (AnalyticCase.heat_mode((1, 0), 0.2).sample(G16, TimeGrid(4))
             + AnalyticCase.heat_mode((1, 2), 0.2, 0.5).sample(G16, TimeGrid(4)))
        assert np.abs(a - b).max() <= 1e-15

    def test_heat_flow_exact_matches_analytic(self):
        case = AnalyticCase.heat_mode((2, 1), 0.7)
        t = TimeGrid(4)
        assert np.abs(heat_flow_exact(case.initial(G16), G16, t, 0.7) - case.sample(G16, t)).max() <= 1e-14


class TestReferenceSolve:
    def test_taylor_green_256_steps(self):
        tg = AnalyticCase.taylor_green(1.0)
        run = reference_solve(tg.initial(G64), 1.0, TimeGrid(8), 256, FluxModel.exact(), G64)
        assert compare(run.field(), tg).relative_l2 <= 1e-8  # frozen: 4.6e-16
        assert run.max_divergence <= 1e-12

    def test_heat_mode_zero_flux(self):
        case = AnalyticCase.heat_mode((2, 1), 0.5)
        t = TimeGrid(8)
        run = reference_solve(case.initial(G64), 0.5, t, 64, FluxModel.zero(), G64)
        assert np.abs(run.data - case.sample(G64, t)).max() <= 1e-10

    def test_saturated_cutoff_equals_exact(self):
        v0 = AnalyticCase.taylor_green(1.0).initial(G64)
        a = reference_solve(v0, 1.0, TimeGrid(8), 64, FluxModel.exact(), G64)
        b = reference_solve(v0, 1.0, TimeGrid(8), 64, FluxModel.cutoff(2), G64)
        assert np.abs(a.data - b.data).max() <= 1e-10

    def test_explicit_fourth_order(self):
        case = AnalyticCase.heat_mode((1, 1))
        t = TimeGrid(4)
        errs = []
        for steps in (24, 48, 96, 192):
            run = reference_solve(case.initial(G16), 1.0, t, steps, FluxModel.zero(), G16, diffusion="explicit")
            errs.append(float(np.abs(run.final - case.sample(G16, t)[-1]).max()))
        rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert all(3.8 < r < 4.2 for r in rates), rates

    @pytest.mark.parametrize("kwargs", [
        {"steps": 30},  # not a multiple of m
        {"steps": 0},
        {"diffusion": "implicit"},
        {"steps": 8, "diffusion": "explicit"},  # diffusive limit
    ])
    def test_config_errors(self, kwargs):
        args = {"steps": 64, "diffusion": "integrating_factor"} | kwargs
        v0 = AnalyticCase.heat_mode((1, 0)).initial(G16)
        with pytest.raises(OracleConfigError):
            reference_solve(v0, 1.0, TimeGrid(8), args["steps"], FluxModel.zero(), G16, args["diffusion"])

    def test_advective_limit(self):
        v0 = 100 * AnalyticCase.taylor_green(1.0).initial(G16)
        with pytest.raises(OracleConfigError):
            reference_solve(v0, 1.0, TimeGrid(8), 8, FluxModel.exact(), G16)

    def test_shape_mismatch(self):
        with pytest.raises(OracleConfigError):
            reference_solve(np.zeros((2, 8, 8)), 1.0, TimeGrid(4), 8, FluxModel.zero(), G16)


class TestCompare:
    def test_identical_is_zero(self):
        tg = AnalyticCase.taylor_green(1.0)
        u = tg.field(G16, TimeGrid(4))
        rep = compare(u, tg)
        assert rep.relative_l2 == 0.0 and rep.terminal_l2 == 0.0 and rep.per_slice_max.max() == 0.0

    def test_single_mode_offset_closed_form(self):
        t = TimeGrid(4)
        tg = AnalyticCase.taylor_green(1.0)
        eps = 1e-3
        mode = AnalyticCase.heat_mode((0, 2), 0.0).sample(G16, t)  # time-constant (-sin 2y, 0)
        u = tg.field(G16, t)
        rep = compare(u, u.data + eps * mode)
        # truth = u + eps mode; mode is orthogonal to the Taylor-Green mode
        ref = u.data + eps * mode
        expect = eps * math.sqrt(inner_products(mode, mode, G16, t).pairing / inner_products(ref, ref, G16, t).pairing)
        assert abs(rep.relative_l2 - expect) <= 1e-12 * expect

    def test_grid_mismatch(self):
        tg = AnalyticCase.taylor_green(1.0)
        with pytest.raises(GridMismatchError):
            compare(tg.field(G16, TimeGrid(4)), tg.field(G16, TimeGrid(8)))
        with pytest.raises(GridMismatchError):
            compare(tg.field(G16, TimeGrid(4)), np.zeros((3, 2, 16, 16)))
