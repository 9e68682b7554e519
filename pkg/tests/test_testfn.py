"""Cutoff profile, composite inequality, scaling law and critical budget."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levy_fujita.solver import SolverConfig, run
from levy_fujita.spectral_field import Field, Grid, fractional_laplacian
from levy_fujita.testfn import (
    TestFunctionConfig,
    budget_snapshot_times,
    composite_inequality_violation,
    critical_budget,
    ell,
    psi,
    psi_derivative,
    scaling_law_fit,
    spatial_cutoff,
    testfn_grid as cutoff_grid,
    young_constant,
)

R_LIST = np.geomspace(1.0, 100.0, 6)


def operator_peak(grid, cfg):
    return float(np.max(np.abs(fractional_laplacian(spatial_cutoff(grid, cfg), cfg.alpha).values)))


class TestPsi:
    @pytest.mark.parametrize("r,expected", [(0.0, 1.0), (0.5, 1.0), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0), (3.0, 0.0)])
    def test_values(self, r, expected):
        assert psi(r) == pytest.approx(expected, abs=1e-15)

    def test_rejects_negative_radius(self):
        with pytest.raises(ValueError):
            psi(-0.1)

    def test_nonincreasing(self):
        v = psi(np.linspace(0, 3, 10_000))
        assert np.all(np.diff(v) <= 0)

    @given(st.floats(0, 1))
    def test_symmetric_about_midpoint(self, s):
        assert psi(1.5 - s / 2) + psi(1.5 + s / 2) == pytest.approx(1.0, abs=1e-14)

    def test_derivative_matches_central_difference(self):
        r = np.linspace(1.05, 1.95, 37)
        h = 1e-6
        fd = (psi(r + h) - psi(r - h)) / (2 * h)
        np.testing.assert_allclose(psi_derivative(r), fd, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    @pytest.mark.parametrize("r0", [1.0, 2.0])
    def test_derivatives_vanish_at_matching_points(self, order, r0):
        h = 1e-3
        # one-sided stencils reaching into (1, 2) from the flat side
        side = 1 if r0 == 1.0 else -1
        k = np.arange(order + 1)
        samples = psi(r0 + side * k * h)
        coeffs = np.array([(-1) ** (order - j) * math.comb(order, j) for j in k])
        assert abs(coeffs @ samples) / h**order < 1e-6


class TestEll:
    @pytest.mark.parametrize("p,expected", [(2, 3), (1.5, 4), (3, 2.5)])
    def test_values(self, p, expected):
        assert ell(p) == expected

    def test_limit_two(self):
        assert ell(1e9) == pytest.approx(2.0, abs=1e-8)

    @pytest.mark.parametrize("p", [1.0, 0.5])
    def test_rejects(self, p):
        with pytest.raises(ValueError):
            ell(p)

    @given(st.floats(1.0001, 1e6))
    def test_above_two_and_conjugate(self, p):
        l = ell(p)
        assert l > 2
        assert 1 / p + 1 / (l - 1) == pytest.approx(1.0, rel=1e-12)


class TestYoungConstant:
    @given(a=st.floats(0, 10), b=st.floats(0, 10), p=st.floats(1.2, 4), eps=st.floats(0.05, 5))
    def test_inequality_holds(self, a, b, p, eps):
        assert a * b <= eps * a**p + young_constant(p, eps) * b ** (p / (p - 1)) + 1e-9 * (1 + a * b)

    def test_sharp_at_optimum(self):
        p, eps, b = 2.0, 0.25, 1.0
        a = (b / (p * eps)) ** (1 / (p - 1))  # maximizer of a b - eps a^p
        assert a * b - eps * a**p == pytest.approx(young_constant(p, eps) * b**2, rel=1e-14)


class TestConfig:
    def test_properties(self):
        cfg = TestFunctionConfig(1.0, 1.5)
        assert cfg.ell == 4
        assert cfg.scaling_exponent == -1

    @pytest.mark.parametrize("kw", [dict(alpha=2.5, p=2), dict(alpha=1, p=1), dict(alpha=1, p=2, R=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TestFunctionConfig(**kw)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.5, 2.0])
    @pytest.mark.parametrize("dim", [1, 2, 3])
    @pytest.mark.parametrize("factor", [0.5, 1.0, 1.5])
    def test_exponent_sign_tracks_critical_power(self, alpha, dim, factor):
        p = 1 + factor * alpha / dim
        s = TestFunctionConfig(alpha, p, dim=dim).scaling_exponent
        if factor < 1:
            assert s < 0
        elif factor == 1:
            assert s == pytest.approx(0.0, abs=1e-12)
        else:
            assert s > 0


class TestCompositeInequality:
    @pytest.mark.parametrize("alpha,l,rel", [(2.0, 3, 1e-6), (2.0, 4, 1e-6), (1.0, 3, 1e-4), (1.0, 4, 1e-4)])
    def test_violation_below_ringing_tolerance(self, alpha, l, rel):
        cfg = TestFunctionConfig(alpha, 2.0)
        g = cutoff_grid(cfg, 1024)
        assert composite_inequality_violation(g, cfg, l) <= rel * operator_peak(g, cfg)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_equality_at_l_one(self, alpha):
        cfg = TestFunctionConfig(alpha, 2.0)
        g = cutoff_grid(cfg, 256)
        assert abs(composite_inequality_violation(g, cfg, 1.0)) <= 1e-14 * operator_peak(g, cfg)

    @pytest.mark.parametrize("alpha,l", [(1.0, 3), (1.0, 4), (2.0, 3), (2.0, 4)])
    def test_positive_part_shrinks_under_refinement(self, alpha, l):
        cfg = TestFunctionConfig(alpha, 2.0)
        floor = 1e-10
        prev = None
        for n in (128, 256, 512, 1024):
            g = cutoff_grid(cfg, n)
            v = max(composite_inequality_violation(g, cfg, l), 0.0) / operator_peak(g, cfg)
            if prev is not None and prev > floor:
                assert v <= prev / 2
            prev = v

    def test_two_dimensional(self):
        cfg = TestFunctionConfig(1.5, 2.0, dim=2)
        g = cutoff_grid(cfg, 128)
        assert composite_inequality_violation(g, cfg) <= 1e-4 * operator_peak(g, cfg)

    def test_rejects_coarse_grid(self):
        cfg = TestFunctionConfig(1.0, 2.0)
        with pytest.raises(ValueError, match="at least 128 points"):
            composite_inequality_violation(cutoff_grid(cfg, 64), cfg)

    def test_rejects_support_outside_torus(self):
        cfg = TestFunctionConfig(1.0, 2.0, R=4.0)
        with pytest.raises(ValueError, match="does not fit"):
            composite_inequality_violation(Grid(1, 1024, 12.0), cfg)


class TestScalingLaw:
    @pytest.mark.parametrize("dim,alpha,p,theory", [
        (1, 1.0, 1.5, -1.0),
        (1, 1.0, 2.0, 0.0),
        (2, 2.0, 2.0, 0.0),
        (1, 2.0, 2.0, 0.0 + 1 + 2 - 2 * 2),
        (2, 1.5, 2.0, 0.5),
    ])
    def test_fit_matches_theory(self, dim, alpha, p, theory):
        fit = scaling_law_fit(TestFunctionConfig(alpha, p, dim=dim), R_LIST)
        assert fit.theory == pytest.approx(theory, abs=1e-12)
        assert fit.fitted_exponent == pytest.approx(theory, abs=0.1)
        assert len(fit.rows) == len(R_LIST)

    def test_rows_hold_both_terms(self):
        fit = scaling_law_fit(TestFunctionConfig(1.0, 1.5), R_LIST, points_per_axis=512)
        for R, space, time, total in fit.rows:
            assert space > 0 and time > 0
            assert total == space + time

    @pytest.mark.parametrize("R_list", [[1, 2, 4, 8], [1, 1.5, 2, 3, 4, 5]])
    def test_rejects_short_range(self, R_list):
        with pytest.raises(ValueError, match="1.5 decades"):
            scaling_law_fit(TestFunctionConfig(1.0, 2.0), R_list)


@pytest.fixture(scope="module")
def critical_run():
    """Absorbing run at the critical power for alpha = 2, N = 1 (p = 3)."""
    R = 2.0
    grid = Grid.from_spacing(1, R / 64, 8 * 4 * R)
    x = grid.axis
    u0 = Field(grid, np.exp(-x**2 / 2) / math.sqrt(2 * math.pi))
    t_end = 2 * R**2
    cfg = SolverConfig(2.0, 3.0, lam=-1, t_end=t_end, dt_max=t_end / 256,
                       snapshot_times=budget_snapshot_times(R, 2.0))
    return run(cfg, u0), R


class TestCriticalBudget:
    def test_default_eps_is_half_inverse_ell(self, critical_run):
        res, R = critical_run
        cfg = TestFunctionConfig(2.0, 3.0, R=R)
        default = critical_budget(res, cfg)
        explicit = critical_budget(res, cfg, eps=1 / (2 * cfg.ell))
        assert default == explicit

    def test_second_term_quarters_when_b_doubles(self, critical_run):
        res, R = critical_run
        rows = critical_budget(res, TestFunctionConfig(2.0, 3.0, R=R), B_list=(1.0, 2.0, 4.0))
        # |Lambda phi1|^(3/2) has kinks where the operator changes sign, so the
        # grid quadrature is only algebraically accurate
        for a, b in zip(rows, rows[1:]):
            assert b.rhs_term2 == pytest.approx(a.rhs_term2 / 4, rel=1e-4)

    def test_estimate_holds(self, critical_run):
        res, R = critical_run
        for row in critical_budget(res, TestFunctionConfig(2.0, 3.0, R=R), B_list=(1.0, 2.0, 4.0)):
            assert row.rhs_term1 > 0 and row.rhs_term2 > 0
            assert row.lhs <= row.rhs

    def test_rejects_missing_snapshots(self, critical_run):
        res, R = critical_run
        with pytest.raises(ValueError, match="snapshot"):
            critical_budget(res, TestFunctionConfig(2.0, 3.0, R=R / 2))

    def test_rejects_noncritical_power(self, critical_run):
        res, R = critical_run
        with pytest.raises(ValueError, match="p = p_c"):
            critical_budget(res, TestFunctionConfig(2.0, 2.0, R=R))

    def test_rejects_oversized_dilation(self, critical_run):
        res, R = critical_run
        with pytest.raises(ValueError, match="does not fit"):
            critical_budget(res, TestFunctionConfig(2.0, 3.0, R=R), B_list=(16.0,))
