import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varns.flux import FluxModel
from varns.functional import (
    OBJECTIVES,
    FunctionalSpec,
    UsageError,
    evaluate,
    first_variation_report,
    gradient,
    tangent_pairing,
)
from varns.grid import Grid, SpaceTimeField, TimeGrid, l2_inner
from varns.minimize import heat_flow_field

from conftest import random_field, random_slices, smooth_field

G16 = Grid(16, 16)
T8 = TimeGrid(8)
MODELS = [FluxModel.zero(), FluxModel.exact(), FluxModel.cutoff(1), FluxModel.cutoff(10)]


def half_norm(v, g):
    return 0.5 * float(l2_inner(v, v, g))


def fd_directional(u, spec, d, objective, eps=1e-5):
    pick = (lambda e: e.value) if objective == "defining" else (lambda e: e.residual_energy)
    plus = pick(evaluate(u.replace_later(u.data[1:] + eps * d[1:]), spec))
    minus = pick(evaluate(u.replace_later(u.data[1:] - eps * d[1:]), spec))
    return (plus - minus) / (2 * eps)


class TestSpec:
    def test_shift_requires_unit_viscosity(self, rng):
        u = random_field(rng, G16, T8)
        with pytest.raises(ValueError):
            FunctionalSpec("navier_stokes", u.v0, nu=0.5, r=u)

    @pytest.mark.parametrize("kind,nu", [("euler", 1.0), ("heat", 0.0), ("heat", -1.0)])
    def test_rejects(self, kind, nu):
        with pytest.raises(ValueError):
            FunctionalSpec(kind, np.zeros((2,) + G16.shape), nu=nu)

    def test_heat_ignores_model(self):
        assert FunctionalSpec("heat", np.zeros(2), FluxModel.exact()).flux.kind == "zero"

    def test_pinned_slice_enforced(self, rng):
        u = random_field(rng, G16, T8)
        spec = FunctionalSpec("heat", random_slices(rng, 1, G16)[0])
        with pytest.raises(UsageError):
            evaluate(u, spec)

    def test_unknown_objective(self, rng):
        u = random_field(rng, G16, T8)
        with pytest.raises(UsageError):
            evaluate(u, FunctionalSpec("heat", u.v0), objective="dual")


class TestValues:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_heat_value_bounded_below(self, seed):
        u = random_field(np.random.default_rng(seed), G16, T8)
        ev = evaluate(u, FunctionalSpec("heat", u.v0, nu=0.7))
        half = half_norm(u.v0, G16)
        assert ev.excess >= 0
        assert ev.value >= half * (1 - 1e-12)

    def test_discrete_heat_minimizer(self, rng):
        v0 = random_slices(rng, 1, G16)[0]
        for nu in (1.0, 0.3):
            ev = evaluate(heat_flow_field(v0, G16, T8, nu), FunctionalSpec("heat", v0, nu=nu))
            assert ev.w_ratio <= 1e-12
            assert abs(ev.value - half_norm(v0, G16)) <= 1e-12 * half_norm(v0, G16)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label)
    def test_two_forms_agree_when_energy_neutral(self, model, rng):
        u = random_field(rng, G16, T8, scale=0.2 if model.kind == "cutoff" else 1.0)
        ev = evaluate(u, FunctionalSpec("navier_stokes", u.v0, model))
        phi = ev.residual_energy - ev.excess
        assert abs(ev.value - ev.value_via_rewrite + phi) <= 1e-9 * (1 + abs(ev.value))
        if model.kind in ("zero", "exact_quadratic"):
            assert abs(phi) <= 1e-10 * (1 + abs(ev.value))

    def test_shifted_value(self, rng):
        u, r = random_field(rng, G16, T8), random_field(rng, G16, T8)
        ev = evaluate(u, FunctionalSpec("navier_stokes", u.v0, r=r))
        assert abs(ev.value - ev.value_via_rewrite) <= 1e-9 * (1 + abs(ev.value))


class TestGradient:
    @pytest.mark.parametrize("objective", OBJECTIVES)
    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label)
    def test_matches_central_differences(self, model, objective):
        rng = np.random.default_rng(7)
        u = random_field(rng, G16, T8)
        spec = FunctionalSpec("navier_stokes", u.v0, model, nu=0.8)
        grad = evaluate(u, spec, with_gradient=True, objective=objective).grad
        for _ in range(3):
            d = np.zeros_like(u.data)
            d[1:] = random_slices(rng, T8.m, G16)
            an = tangent_pairing(grad, d, G16)
            fd = fd_directional(u, spec, d, objective)
            assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-8)

    def test_gradient_is_admissible_and_unpinned(self, rng):
        u = random_field(rng, G16, T8)
        g = gradient(u, FunctionalSpec("navier_stokes", u.v0))
        assert np.array_equal(g[0], np.zeros_like(g[0]))
        SpaceTimeField(g, G16, T8)  # admissibility check

    def test_zero_at_heat_minimizer(self, rng):
        v0 = random_slices(rng, 1, G16)[0]
        u = heat_flow_field(v0, G16, T8)
        g = gradient(u, FunctionalSpec("heat", v0))
        assert np.abs(g).max() <= 1e-10 * np.abs(v0).max()


class TestFirstVariation:
    def test_agrees_with_gradient_on_smooth_data(self):
        g, t = Grid(32, 32), TimeGrid(32)
        u = smooth_field(g, t, seed=5)
        spec = FunctionalSpec("navier_stokes", u.v0, FluxModel.exact())
        ramp = np.sin(0.5 * math.pi * t.times)[:, None, None, None]
        d = ramp * (u.data + smooth_field(g, t, seed=6).data)  # vanishes at t = 0
        an = tangent_pairing(gradient(u, spec), d, g)
        fv = first_variation_report(u, d, spec)
        assert abs(fv - an) <= 1e-3 * abs(an)  # frozen: 9.3e-5

    def test_usage_errors(self, rng):
        u = random_field(rng, G16, T8)
        spec = FunctionalSpec("navier_stokes", u.v0)
        with pytest.raises(UsageError):
            first_variation_report(u, np.zeros((3, 2) + G16.shape), spec)
        with pytest.raises(UsageError):
            first_variation_report(u, u.data, spec)
        bad = np.zeros_like(u.data)
        x, _ = G16.coords
        bad[1:, 0] = np.sin(x)
        with pytest.raises(UsageError):
            first_variation_report(u, bad, spec)


class TestDocumentedValues:
    def test_constant_single_mode(self):
        g, t = Grid(16, 16), TimeGrid(8)
        x, _ = g.coords
        v0 = np.stack([np.zeros_like(x), np.sin(x)])
        ev = evaluate(SpaceTimeField.constant(v0, g, t), FunctionalSpec("heat", v0))
        assert abs(ev.value - 2 * math.pi**2) <= 1e-12

    def test_heat_gradient_is_affine(self, rng):
        v0 = random_slices(rng, 1, G16)[0]
        spec = FunctionalSpec("heat", v0)
        a = SpaceTimeField.from_slices(v0, random_slices(rng, T8.m, G16), G16, T8)
        b = SpaceTimeField.from_slices(v0, random_slices(rng, T8.m, G16), G16, T8)
        z = SpaceTimeField.from_slices(v0, np.zeros((T8.m, 2) + G16.shape), G16, T8)
        s = SpaceTimeField.from_slices(v0, a.data[1:] + b.data[1:] - z.data[1:], G16, T8)
        lhs = gradient(s, spec)
        rhs = gradient(a, spec) + gradient(b, spec) - gradient(z, spec)
        assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()

    def test_zero_shift_reduces_bitwise(self, rng):
        u = random_field(rng, G16, T8)
        zero = SpaceTimeField(np.zeros_like(u.data), G16, T8)
        plain = evaluate(u, FunctionalSpec("navier_stokes", u.v0))
        shifted = evaluate(u, FunctionalSpec("navier_stokes", u.v0, r=zero))
        assert shifted.value == plain.value and shifted.w_norm == plain.w_norm

    def test_first_variation_vanishes_with_residual(self, rng):
        v0 = random_slices(rng, 1, G16)[0]
        u = heat_flow_field(v0, G16, T8)
        d = np.zeros_like(u.data)
        d[1:] = random_slices(rng, T8.m, G16)
        fv = first_variation_report(u, d, FunctionalSpec("heat", v0))
        # collocated lift of the discrete minimizer: W is O(dt^2), not zero
        assert abs(fv) <= 0.05 * tangent_pairing(np.abs(d), np.abs(u.data), G16)
