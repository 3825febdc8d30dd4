import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varns.flux import FluxModel
from varns.functional import FunctionalSpec, evaluate
from varns.grid import Grid, SpaceTimeField, TimeGrid, l2_inner
from varns.minimize import (
    CertifyTolerances,
    MinimizeConfig,
    StokesPreconditioner,
    certify_field,
    certify_solution,
    heat_flow_field,
    initial_field,
    minimize,
)
from varns.oracle import AnalyticCase, compare

from conftest import low_mode_slice, random_field, random_slices

G = Grid(32, 32)
T = TimeGrid(32)


@pytest.fixture(scope="module")
def tg_run():
    v0 = AnalyticCase.taylor_green(1.0).initial(G)
    spec = FunctionalSpec("navier_stokes", v0, FluxModel.cutoff(4))
    return spec, minimize(spec, initial_field(v0, G, T))


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"objective": "dual"}, {"max_iters": -1}, {"tol_W": 0.0},
                                        {"tol_grad": -1.0}, {"memory": 0}, {"armijo": 1.5}, {"shrink": 0.0}])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            MinimizeConfig(**kwargs)

    def test_unknown_init(self):
        with pytest.raises(ValueError):
            initial_field(np.zeros((2,) + G.shape), G, T, "random")


class TestPreconditioner:
    @pytest.mark.parametrize("nu", [1.0, 0.7, 0.05])
    def test_inverts_heat_hessian(self, nu, rng):
        v0 = random_slices(rng, 1, G)[0]
        spec = FunctionalSpec("heat", v0, nu=nu)
        u = SpaceTimeField.from_slices(v0, random_slices(rng, T.m, G), G, T)
        d = random_slices(rng, T.m, G)
        g1 = evaluate(u, spec, with_gradient=True).grad[1:]
        g2 = evaluate(u.replace_later(u.data[1:] + d), spec, with_gradient=True).grad[1:]
        out = StokesPreconditioner(G, T, nu).apply(g2 - g1)
        assert np.abs(out - d).max() <= 1e-11 * np.abs(d).max()  # frozen: 2.8e-15 at nu = 0.7

    def test_heat_flow_field_zero_gradient(self, rng):
        v0 = random_slices(rng, 1, G)[0]
        u = heat_flow_field(v0, G, T, 0.4)
        ev = evaluate(u, FunctionalSpec("heat", v0, nu=0.4), with_gradient=True)
        assert ev.w_ratio <= 1e-12


class TestHeat:
    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.1, 2.0))
    def test_one_step_from_any_start(self, seed, nu):
        rng = np.random.default_rng(seed)
        v0 = random_slices(rng, 1, G)[0]
        u = SpaceTimeField.from_slices(v0, random_slices(rng, T.m, G), G, T)
        rep = minimize(FunctionalSpec("heat", v0, nu=nu), u)
        assert rep.converged_by == "w_residual" and rep.iterations <= 2
        assert rep.final.w_ratio <= 1e-6

    def test_single_mode_error(self):
        case = AnalyticCase.heat_mode((1, 0))
        v0 = case.initial(G)
        rep = minimize(FunctionalSpec("heat", v0), initial_field(v0, G, TimeGrid(64)))
        assert compare(rep.final_field, case).relative_l2 <= 1e-3


class TestInvariants:
    def test_trace_nonincreasing_and_pinned(self, rng):
        v0 = low_mode_slice(rng, G, kmax=2, peak_sq=4.0)
        spec = FunctionalSpec("navier_stokes", v0, FluxModel.cutoff(2))
        rep = minimize(spec, initial_field(v0, G, TimeGrid(16)), MinimizeConfig(max_iters=15))
        assert np.all(np.diff(rep.values) <= 0)
        assert np.array_equal(rep.final_field.v0, v0)
        rep.final_field.check_invariants()

    def test_gap_residual_link_along_trace(self, rng):
        v0 = random_slices(rng, 1, G)[0]
        spec = FunctionalSpec("heat", v0, nu=0.5)
        u = SpaceTimeField.from_slices(v0, random_slices(rng, T.m, G), G, T)
        half = 0.5 * float(l2_inner(v0, v0, G))
        for cfg in (MinimizeConfig(max_iters=3, precondition=False),):
            for e in minimize(spec, u, cfg).trace:
                gap = e.defining_value - half
                assert abs(gap - e.rewrite_gap) <= 1e-8 * max(abs(gap), half)

    def test_stationary_start(self, tg_run):
        spec, rep = tg_run
        again = minimize(spec, rep.final_field)
        assert again.iterations <= 2 and again.converged_by in ("gradient", "w_residual")

    def test_max_iters_zero(self):
        v0 = AnalyticCase.taylor_green(1.0).initial(G)
        spec = FunctionalSpec("navier_stokes", v0, FluxModel.cutoff(4))
        rep = minimize(spec, initial_field(v0, G, T), MinimizeConfig(max_iters=0))
        assert rep.converged_by == "max_iters" and rep.iterations == 0

    def test_report_dict(self, tg_run):
        d = tg_run[1].as_dict()
        assert d["converged_by"] == "w_residual" and len(d["trace"]) == d["iterations"] + 1


class TestCertificate:
    def test_taylor_green_passes(self, tg_run):
        spec, rep = tg_run
        cert = certify_solution(rep, spec)
        assert cert.passed, [c.as_dict() for c in cert.checks]
        assert compare(rep.final_field, AnalyticCase.taylor_green(1.0)).relative_l2 <= 1e-2

    def test_zero_datum(self):
        v0 = np.zeros((2,) + G.shape)
        spec = FunctionalSpec("navier_stokes", v0, FluxModel.cutoff(4))
        rep = minimize(spec, initial_field(v0, G, T))
        cert = certify_solution(rep, spec)
        assert np.abs(rep.final_field.data).max() == 0.0
        assert all(c.defect == 0.0 for c in cert.checks)

    def test_perturbed_field_fails(self, tg_run):
        spec, rep = tg_run
        base = rep.final_field
        clean = certify_field(base, spec)
        rng = np.random.default_rng(0)
        noise = np.stack([low_mode_slice(rng, G, 3) for _ in range(T.m)])
        noise *= 1e-2 * np.abs(base.data).max() / np.abs(noise).max()
        cert = certify_field(base.replace_later(base.data[1:] + noise), spec)
        assert not cert.passed and "w_residual" in cert.failed
        weak = {c.name: c.defect for c in cert.checks}["weak_form"]
        clean_weak = {c.name: c.defect for c in clean.checks}["weak_form"]
        # the low-mode battery sees the noise, but below the 1e-3 tolerance (frozen: 4.1e-4)
        assert weak >= 5 * clean_weak

    def test_unpreconditioned_single_iteration_fails(self, tg_run):
        spec, _ = tg_run
        rep = minimize(spec, initial_field(spec.v0, G, T), MinimizeConfig(max_iters=1, precondition=False))
        cert = certify_solution(rep, spec)
        assert rep.converged_by == "max_iters" and "w_residual" in cert.failed

    def test_tolerances_are_used(self, tg_run):
        spec, rep = tg_run
        strict = CertifyTolerances(energy=1e-8)
        assert certify_solution(rep, spec, strict).failed == ["energy_equality"]
