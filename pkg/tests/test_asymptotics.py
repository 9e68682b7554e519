"""Mass traces, dichotomy classification, decay bound H and profile gaps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sint

from levy_fujita.asymptotics import (
    TRACE_COLUMNS,
    MassTrace,
    critical_exponent,
    decay_bound_H,
    estimate_mass_limit,
    integral_of_H,
    mass_identity_residual,
    scaled_profile_gap,
    small_data_mass_bound,
)
from levy_fujita.solver import SolverConfig, run
from levy_fujita.spectral_field import Field, Grid, lp_norm
from levy_fujita.stable_kernel import KernelSpec, heat_semigroup_apply, kernel_grid

# Unit-mass, unit-variance Gaussian in 1D with alpha = 1, p = 3:
# ||u0||_3^3 = 1/(2 pi sqrt 3) and ||P_1(.,1)||_3^3 = 3/(8 pi^2).
LP0 = (1 / (2 * math.pi * math.sqrt(3))) ** (1 / 3)
C3 = (3 / (8 * math.pi**2)) ** (1 / 3)
H_INTEGRAL = 2 * math.sqrt(3 / (8 * math.pi**2) / (2 * math.pi * math.sqrt(3)))  # a = 2: 2 sqrt(AB)


def geometric_times(t0=1.0, t1=1e4, ratio=1.1):
    n = int(math.ceil(math.log(t1 / t0) / math.log(ratio)))
    return np.geomspace(t0, t1, n + 1)


class TestCriticalExponent:
    @pytest.mark.parametrize("alpha,dim,expected", [(1, 1, 2), (2, 1, 3), (2, 2, 2), (0.5, 2, 1.25)])
    def test_values(self, alpha, dim, expected):
        assert critical_exponent(alpha, dim) == expected

    def test_rejects_alpha(self):
        with pytest.raises(ValueError):
            critical_exponent(3.0, 1)


class TestDecayBound:
    def test_time_zero_uses_data_norm(self):
        assert decay_bound_H(0.0, 3, 1, 1, 1.0, LP0, C3) == pytest.approx(LP0**3)

    def test_large_time_decays_to_zero(self):
        assert decay_bound_H(1e8, 3, 1, 1, 1.0, LP0, C3) < 1e-16

    def test_homogeneity_in_the_data(self):
        h = decay_bound_H(0.7, 2, 1, 1, 1.0, LP0, C3)
        scaled = decay_bound_H(0.7, 2, 1, 1, 0.5, 0.5 * LP0, C3)
        assert scaled == pytest.approx(0.25 * h, rel=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(t1=st.floats(0, 100), t2=st.floats(0, 100))
    def test_nonincreasing(self, t1, t2):
        lo, hi = sorted((t1, t2))
        assert decay_bound_H(hi, 3, 1, 1, 1.0, LP0, C3) <= decay_bound_H(lo, 3, 1, 1, 1.0, LP0, C3)

    def test_continuous_at_crossover(self):
        t_star = (C3**3 / LP0**3) ** 0.5
        left = decay_bound_H(t_star * (1 - 1e-9), 3, 1, 1, 1.0, LP0, C3)
        right = decay_bound_H(t_star * (1 + 1e-9), 3, 1, 1, 1.0, LP0, C3)
        assert left == pytest.approx(right, rel=1e-8)

    def test_integral_closed_form(self):
        assert integral_of_H(3, 1, 1, 1.0, LP0, C3) == pytest.approx(H_INTEGRAL, rel=1e-14)
        assert H_INTEGRAL == pytest.approx(0.1181749722449287, rel=1e-14)

    @pytest.mark.parametrize("p,alpha,dim", [(3, 1, 1), (2.5, 1.5, 2), (4, 2, 1)])
    def test_integral_matches_quadrature(self, p, alpha, dim):
        closed = integral_of_H(p, alpha, dim, 1.3, 0.6, 0.4)
        H = lambda t: decay_bound_H(t, p, alpha, dim, 1.3, 0.6, 0.4)
        t_star = ((0.4**p * 1.3**p) / 0.6**p) ** (alpha / (dim * (p - 1)))
        numeric = sint.quad(H, 0, t_star, epsrel=1e-12)[0] + sint.quad(H, t_star, np.inf, epsrel=1e-12)[0]
        assert closed == pytest.approx(numeric, rel=1e-9)

    @pytest.mark.parametrize("p", [1.5, 2.0])
    def test_integral_diverges_at_or_below_critical(self, p):
        with pytest.raises(ValueError, match="integral diverges"):
            integral_of_H(p, 1, 1, 1.0, LP0, C3)


class TestSmallDataBound:
    @pytest.mark.parametrize("eps,expected", [
        (1.0, 1 - H_INTEGRAL),
        (0.5, 0.5 * (1 - 0.25 * H_INTEGRAL)),
        (0.05, 0.05 * (1 - 0.0025 * H_INTEGRAL)),
    ])
    def test_values(self, eps, expected):
        assert small_data_mass_bound(eps, 3, 1, 1, 1.0, LP0, C3) == pytest.approx(expected, rel=1e-14)

    def test_vanishing_eps_recovers_full_mass(self):
        eps = 1e-4
        assert small_data_mass_bound(eps, 3, 1, 1, 1.0, LP0, C3) / eps == pytest.approx(1.0, abs=1e-8)

    def test_rejects_critical_power(self):
        with pytest.raises(ValueError, match="integral diverges"):
            small_data_mass_bound(0.1, 2, 1, 1, 1.0, LP0, C3)

    @pytest.mark.parametrize("eps", [0.0, 1.5])
    def test_rejects_eps_out_of_range(self, eps):
        with pytest.raises(ValueError):
            small_data_mass_bound(eps, 3, 1, 1, 1.0, LP0, C3)


class TestMassTrace:
    def test_times_must_increase(self):
        tr = MassTrace()
        tr.append(1.0, 1, 1, 1, 0, 0, 0)
        with pytest.raises(ValueError):
            tr.append(1.0, 1, 1, 1, 0, 0, 0)

    def test_csv_round_trip(self, tmp_path):
        tr = MassTrace()
        tr.append(0.0, 1.0, 0.4, 0.5, 0.0, 0.0, 0.0)
        tr.append(0.1, 0.99999999999999, 1 / 3, 0.5, 1e-14, 2.5e-300, 0.1)
        path = tmp_path / "trace.csv"
        tr.write_csv(path)
        text = path.read_bytes()
        assert text.startswith(b"t,mass,linf,l2,absorbed,clamped,dt\n")
        assert b"\r" not in text
        back = MassTrace.read_csv(path)
        np.testing.assert_allclose(np.array(back.rows), np.array(tr.rows), rtol=1e-14)

    def test_columns(self):
        tr = MassTrace.from_function([1, 2, 3], lambda t: 1 / t)
        assert TRACE_COLUMNS[1] == "mass"
        np.testing.assert_allclose(tr.mass, [1, 0.5, 1 / 3])

    def test_read_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,mass\n0,1\n")
        with pytest.raises(ValueError, match="header"):
            MassTrace.read_csv(path)

    def test_mass_identity_residual(self):
        tr = MassTrace()
        tr.append(0.0, 2.0, 1, 1, 0.0, 0, 0)
        tr.append(1.0, 1.5, 1, 1, 0.5 + 1e-9, 0, 0)
        assert mass_identity_residual(tr) == pytest.approx(0.5e-9, rel=1e-6)
        src = MassTrace()
        src.append(0.0, 2.0, 1, 1, 0.0, 0, 0)
        src.append(1.0, 4.0, 1, 1, 2.0, 0, 0)
        assert mass_identity_residual(src, lam=1) == 0.0


class TestEstimateMassLimit:
    def test_plateau(self):
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(), lambda t: 0.5 + 1 / t))
        assert v.regime == "positive_limit"
        assert v.M_inf_estimate == pytest.approx(0.5, abs=1e-3)
        assert v.evidence.extrapolated == pytest.approx(0.5, abs=1e-9)
        assert v.evidence.fit_window == pytest.approx((1e3, 1e4), rel=1e-6)

    def test_power_decay(self):
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(), lambda t: t**-0.3))
        assert v.regime == "vanishing"
        assert v.M_inf_estimate == 0.0
        assert v.evidence.plateau_rate == pytest.approx(-0.3, abs=1e-9)

    def test_constant(self):
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(), lambda t: 0.25))
        assert v.regime == "positive_limit"
        assert v.M_inf_estimate == 0.25

    def test_slow_logarithmic_decay_is_inconclusive(self):
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(), lambda t: 1 / (1 + 0.02 * math.log(t))))
        assert v.regime == "inconclusive"
        assert "rate" in v.diagnostic

    def test_short_trace_is_inconclusive(self):
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(1, 50), lambda t: 1.0))
        assert v.regime == "inconclusive"
        assert "t_hi/t_lo" in v.diagnostic

    def test_mass_reaching_zero(self):
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(1, 1e3), lambda t: max(0.0, 1 - t / 500)))
        assert v.regime == "vanishing"

    @settings(max_examples=40, deadline=None)
    @given(m=st.floats(0.01, 10), frac=st.floats(0, 1))
    def test_positive_limit_implies_positive_estimate(self, m, frac):
        b = frac * m  # keeps the final-decade loss below 0.1%
        v = estimate_mass_limit(MassTrace.from_function(geometric_times(), lambda t: m + b / t))
        assert v.regime == "positive_limit"
        assert v.M_inf_estimate > 0


class TestScaledProfileGap:
    def test_exact_profile_has_zero_gap(self):
        g = Grid(1, 512, 64.0)
        u = kernel_grid(KernelSpec(1.0, 1), g, 2.0).scale(0.7)
        for q in (1, 2, math.inf):
            assert scaled_profile_gap(u, 0.7, 2.0, q, 1.0) <= 1e-10

    @pytest.mark.filterwarnings("ignore:kernel at t")
    def test_linear_flow_gap_decreases(self):
        g = Grid(1, 8192, 4096.0)
        u0 = Field(g, np.where(np.abs(g.axis - 3) <= 1, 1.0, 0.0))
        u0 = u0.scale(1 / (g.cell_volume * u0.values.sum()))
        gaps = [scaled_profile_gap(heat_semigroup_apply(u0, t, 1.0), 1.0, t, 1, 1.0) for t in (1, 4, 16, 64)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_interpolation_between_q1_and_qinf(self):
        # ||f||_2 <= ||f||_1^{1/2} ||f||_inf^{1/2}, with the t-weights matching exactly
        g = Grid(1, 4096, 1024.0)
        u0 = Field(g, np.exp(-((g.axis - 1) ** 2) / 8))
        u0 = u0.scale(1 / (g.cell_volume * u0.values.sum()))
        res = run(SolverConfig(1.0, 3.0, lam=-1, t_end=10.0, snapshot_times=(10.0,)), u0)
        t, u = res.snapshots[-1]
        m = res.trace.mass[-1]
        g1 = scaled_profile_gap(u, m, t, 1, 1.0)
        g2 = scaled_profile_gap(u, m, t, 2, 1.0)
        ginf = scaled_profile_gap(u, m, t, math.inf, 1.0)
        assert g2 <= math.sqrt(g1 * ginf) * (1 + 1e-12)

    @pytest.mark.parametrize("t,q", [(0.0, 1), (1.0, 0.5)])
    def test_rejects_bad_arguments(self, t, q):
        g = Grid(1, 64, 16.0)
        with pytest.raises(ValueError):
            scaled_profile_gap(Field.constant(g, 1.0), 1.0, t, q, 1.0)


def test_sup_and_l2_norms_obey_linear_decay_along_absorbing_run():
    g = Grid(1, 4096, 2048.0)
    u0 = Field(g, np.exp(-g.axis**2 / 2) / math.sqrt(2 * math.pi))
    res = run(SolverConfig(1.0, 2.0, lam=-1, t_end=50.0, snapshot_times=(1.0, 5.0, 50.0)), u0)
    from levy_fujita.stable_kernel import kernel_lq_constant

    for t, u in res.snapshots:
        for m in (2, math.inf):
            bound = kernel_lq_constant(1.0, 1, m) * t ** (-(1 - (0 if m == math.inf else 1 / m))) * 1.0
            assert lp_norm(u, m) <= bound * (1 + 1e-9)
