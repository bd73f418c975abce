"""Tests for the log-domain quadrature of the A, B and C integral families."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from epfrag.errors import DomainError
from epfrag.oracle import naive_log_integral, naive_moments
from epfrag.quadrature import (
    IntegrandKernel,
    LogValue,
    QuadConfig,
    integral_A,
    integral_B,
    integral_C,
    log_mgf_gap_B,
    mean_var_A,
    mean_var_C,
    moment_ratios_C,
)

LOGISTIC = IntegrandKernel.LOGISTIC
POISSON = IntegrandKernel.POISSON

# pi * e * erfc(1), computed once with mpmath at 30 digits.
A_FIXTURE_0 = 1.3432934216467351
SQRT_PI = math.sqrt(math.pi)


def _rel(v: LogValue, family, params):
    lm, sgn = naive_log_integral(family, params)
    return abs(v.sign * math.exp(v.log_magnitude - lm) - sgn)


class TestConfigAndLogValue:
    def test_defaults(self):
        cfg = QuadConfig()
        assert (cfg.rel_tol, cfg.abs_tol, cfg.max_doublings, cfg.initial_nodes, cfg.tail_halfwidth_sigmas) == (
            1e-10,
            1e-300,
            15,
            129,
            12,
        )

    @pytest.mark.parametrize(
        "kw", [{"rel_tol": 0.0}, {"initial_nodes": 32}, {"initial_nodes": 64}, {"max_doublings": 0}]
    )
    def test_invalid_config(self, kw):
        with pytest.raises(DomainError):
            QuadConfig(**kw)

    def test_logvalue_zero(self):
        z = LogValue.from_float(0.0)
        assert z.sign == 0 and z.value == 0.0

    def test_logvalue_round_trip(self):
        assert LogValue.from_float(-2.5).value == pytest.approx(-2.5, rel=1e-15)


class TestIntegralA:
    def test_closed_form_p0(self):
        v = integral_A(0, 0, 1, 0, 1, 1)
        assert v.value == pytest.approx(math.pi * math.e * special.erfc(1.0), rel=1e-12)
        assert v.value == pytest.approx(A_FIXTURE_0, rel=1e-12)

    def test_closed_form_p2(self):
        v = integral_A(2, 0, 1, 0, 1, 1)
        assert v.value == pytest.approx(SQRT_PI - A_FIXTURE_0, rel=1e-10)

    @pytest.mark.parametrize("r,t,u", [(1.0, 1.0, 1.0), (0.3, 2.0, 0.5), (2.0, 0.1, 3.0)])
    def test_odd_integrand_vanishes(self, r, t, u):
        v1 = integral_A(1, 0, r, 0, t, u)
        v0 = integral_A(0, 0, r, 0, t, u)
        assert v1.sign == 0 or abs(v1.value) < 1e-14 * v0.value

    def test_gaussian_case_u_zero(self):
        q, r = 1.3, 0.7
        v = integral_A(0, q, r, 0, 1, 0)
        assert v.log_magnitude == pytest.approx(0.5 * math.log(math.pi / r) + q * q / (4 * r), rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            integral_A(0, 0, -1, 0, 1, 1)
        with pytest.raises(DomainError):
            integral_A(0, 0, 1, 2, 1, 1)  # t <= s^2/4
        with pytest.raises(DomainError):
            integral_A(-1, 0, 1, 0, 1, 1)

    def test_overflow_shift(self):
        """Shifting q by 600 would overflow a direct evaluation; the log value stays exact."""
        q0, r, s, t, u = 0.4, 1.5, 0.3, 2.0, 1.2
        mu = 600.0 / (2 * r)
        big = integral_A(0, q0 + 600.0, r, s, t, u)
        inner = integral_A(0, q0, r, s + 2 * mu, mu * mu + s * mu + t, u)
        assert math.isfinite(big.log_magnitude)
        expected = (q0 + 600.0) * mu - r * mu * mu + inner.log_magnitude
        assert big.log_magnitude == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 2),
        st.floats(-4, 4),
        st.floats(0.1, 3),
        st.floats(-2, 2),
        st.floats(0.1, 4),
        st.floats(0.0, 4),
    )
    def test_against_oracle(self, p, q, r, s, dt, u):
        params = (p, q, r, s, s * s / 4 + dt, u)
        v = integral_A(*params)
        lm, sgn = naive_log_integral("A", params)
        # Relative to the p = 0 magnitude, which is safe under cancellation at p = 1.
        l0, _ = naive_log_integral("A", (0,) + params[1:])
        diff = abs(v.sign * math.exp(v.log_magnitude - l0) - sgn * math.exp(lm - l0))
        assert diff < 1e-8


class TestIntegralB:
    def test_substitution_identity(self):
        v = integral_B(0, 1, 1, 0, 1, 1)
        # int_0^inf e^{-w}/(1 + w) dw = e E1(1)
        expected = math.e * special.exp1(1.0)
        assert v.value == pytest.approx(expected, rel=1e-10)
        half_line, _ = integrate.quad(lambda w: math.exp(-w) / (1 + w), 0, np.inf, epsabs=0, epsrel=1e-13)
        assert v.value == pytest.approx(half_line, rel=1e-8)

    def test_against_oracle(self):
        assert _rel(integral_B(0, 2, 1, 0, 1, 0.5), "B", (0, 2, 1, 0, 1, 0.5)) < 1e-6

    def test_monotone_in_r(self):
        assert integral_B(0, 1, 2, 0, 1, 1).value < integral_B(0, 1, 1, 0, 1, 1).value

    @pytest.mark.parametrize(
        "params",
        [(0, 0.0, 1, 0, 1, 1), (0, 1, 0, 0, 1, 1), (0, 1, 1, -1, 1, 1), (0, 1, 1, 0, 0, 1), (0, 1, 1, 0, 1, 0)],
    )
    def test_domain(self, params):
        with pytest.raises(DomainError):
            integral_B(*params)

    def test_log_mgf_gap_matches_ratios(self):
        q, r, s, t, u = 2.5, 1.5, 0.7, 1.3, 0.8
        mean, gap = log_mgf_gap_B(q, r, s, t, u)
        # E e^x under the B density equals B(0, q + 1, ...)/B(0, q, ...) by the substitution w = e^x.
        log_e_exp = integral_B(0, q + 1, r, s, t, u).log_magnitude - integral_B(0, q, r, s, t, u).log_magnitude
        e_x = integral_B(1, q, r, s, t, u) / integral_B(0, q, r, s, t, u)
        assert mean == pytest.approx(e_x, rel=1e-10)
        assert gap == pytest.approx(log_e_exp - e_x, rel=1e-8)
        assert gap > 0


class TestIntegralC:
    def test_logistic_reflection(self):
        a = integral_C(LOGISTIC, 0, 0.3, 1.0)
        b = integral_C(LOGISTIC, 0, 0.7, 1.0)
        assert a.log_magnitude == pytest.approx(b.log_magnitude, rel=1e-10, abs=1e-12)

    def test_logistic_oracle(self):
        assert _rel(integral_C(LOGISTIC, 0, 0.5, 0.5), "C_logistic", (0, 0.5, 0.5)) < 1e-8

    def test_poisson_oracle(self):
        assert _rel(integral_C(POISSON, 1, 3, 1), "C_poisson", (1, 3, 1)) < 1e-8

    def test_p_range(self):
        with pytest.raises(DomainError):
            integral_C(LOGISTIC, 3, 0.0, 1.0)

    def test_r_positive(self):
        with pytest.raises(DomainError):
            integral_C(POISSON, 0, 0.0, 0.0)

    @pytest.mark.parametrize("kernel,q,r", [(LOGISTIC, 1.5, 1.0), (POISSON, 2.0, 1.0)])
    def test_moment_ratios_oracle(self, kernel, q, r):
        m1, m2 = moment_ratios_C(kernel, q, r)
        b = (lambda x: np.log1p(np.exp(x))) if kernel is LOGISTIC else np.exp
        _, o1, o2 = naive_moments(lambda x: q * x - r * x * x - b(x), q / (2 * r), [lambda x: x, lambda x: x * x])
        np.testing.assert_allclose([m1, m2], [o1, o2], rtol=1e-8, atol=1e-10)

    def test_jensen_logistic(self):
        m1, m2 = moment_ratios_C(LOGISTIC, 0.5, 0.5)
        assert m2 > m1 * m1


class TestMomentHelpers:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.05, 3), st.sampled_from([LOGISTIC, POISSON]))
    def test_jensen_C(self, q, r, kernel):
        _, var = mean_var_C(kernel, q, r)
        assert var > 0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.05, 3), st.floats(-2, 2), st.floats(0.05, 3), st.floats(0, 4))
    def test_jensen_A(self, q, r, s, dt, u):
        _, var = mean_var_A(q, r, s, s * s / 4 + dt, u)
        assert var > 0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.2, 10), st.floats(0.1, 10), st.floats(0, 5), st.floats(0.1, 5), st.floats(0.1, 5))
    def test_jensen_B(self, q, r, s, t, u):
        _, gap = log_mgf_gap_B(q, r, s, t, u)
        assert gap > 0

    def test_mean_var_A_matches_integrals(self):
        args = (0.8, 0.9, -0.4, 1.5, 1.7)
        mean, var = mean_var_A(*args)
        i0, i1, i2 = (integral_A(p, *args) for p in range(3))
        assert mean == pytest.approx(i1 / i0, rel=1e-10)
        assert var == pytest.approx(i2 / i0 - (i1 / i0) ** 2, rel=1e-8)


class TestDoublingConvergence:
    @pytest.mark.parametrize(
        "fn",
        [
            lambda cfg: integral_A(0, 0.3, 0.2, 1.0, 3.0, 2.0, cfg),
            lambda cfg: integral_B(2, 1.5, 0.7, 1.0, 2.0, 0.5, cfg),
            lambda cfg: integral_C(LOGISTIC, 2, -1.0, 0.05, cfg),
        ],
    )
    def test_halving_tolerance(self, fn):
        coarse = fn(QuadConfig(rel_tol=1e-6))
        fine = fn(QuadConfig(rel_tol=5e-7))
        assert abs(fine.log_magnitude - coarse.log_magnitude) < 1e-6
