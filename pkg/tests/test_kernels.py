"""Tests for the projection helper functions (alpha, beta, g, G and H functions)."""

import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from epfrag import kernels
from epfrag.errors import DomainError, MomentDomainError
from epfrag.expfam import INV_CHISQ, NORMAL, NatParam, in_natural_domain, inv_logmdigamma
from epfrag.kernels import (
    G_IG1,
    G_IG2,
    G_IG3,
    G_N,
    H_generic,
    H_logistic,
    H_poisson,
    H_probit,
    alpha_fn,
    beta_args,
    beta_fn,
    g_fn,
    norm_phi_Phi_identities,
    zeta_prime,
)
from epfrag.oracle import naive_log_integral, tilted_projection_oracle
from epfrag.quadrature import IntegrandKernel, integral_A


def _random_gaussian_inputs(rng):
    a = np.array([rng.uniform(-2, 2), -rng.uniform(0.1, 3)])
    b = np.array([-rng.uniform(1.2, 6), -rng.uniform(0.1, 5)])
    return a, b, float(rng.normal(scale=1.5))


def _random_iterated_inputs(rng):
    s = np.array([-rng.uniform(1.2, 6), -rng.uniform(0.1, 5)])
    a = np.array([-rng.uniform(1.2, 4), -rng.uniform(0.1, 5)])
    return s, a


class TestZetaPrime:
    def test_zero(self):
        assert zeta_prime(0.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)

    def test_far_left_tail(self):
        z = zeta_prime(-40.0)
        assert z == pytest.approx(40.0249688472, abs=1e-9)
        # The commonly quoted 4-decimal figure 40.02499 is within 3e-5.
        assert z == pytest.approx(40.02499, abs=3e-5)
        assert 40.0 < z < 40.0 + 1 / 40.0

    def test_matches_high_precision(self):
        mpmath.mp.dps = 50
        for x in (-300.0, -40.0, -8.0, -6.0001, -5.9999, -1.0, 0.5, 5.0):
            exact = mpmath.npdf(x) / mpmath.ncdf(x)
            assert zeta_prime(x) == pytest.approx(float(exact), rel=1e-12)

    def test_monotone(self):
        assert zeta_prime(-1.0) > zeta_prime(0.0) > zeta_prime(1.0)
        xs = np.linspace(-60, 10, 2001)
        vals = np.array([zeta_prime(x) for x in xs])
        assert np.all(vals > 0)
        assert np.all(np.diff(vals) < 0)

    def test_exceeds_minus_x(self):
        for x in np.linspace(-100, -0.01, 500):
            assert zeta_prime(x) > -x

    def test_branches_agree_at_switch(self):
        assert zeta_prime(-6.0) == pytest.approx(zeta_prime(np.nextafter(-6.0, -7.0)), rel=1e-12)


class TestAlphaBeta:
    def test_odd_alpha(self):
        v = alpha_fn(1, [0, -1], [-1.5, -0.5], [1, 0, 0])
        assert v.sign == 0 or abs(v.value) < 1e-14

    def test_alpha_closed_form(self):
        v = alpha_fn(0, [0, -1], [-1.5, -0.5], [1, 0, 0])
        assert v.value == pytest.approx(1.343293, abs=1e-6)

    def test_alpha_matches_direct_gaussian_call(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a, b, y = _random_gaussian_inputs(rng)
            for k in range(3):
                lhs = alpha_fn(k, a, b, [1, y, y * y])
                rhs = integral_A(k, a[0], -a[1], -2 * y, y * y - 2 * b[1], -b[0] - 0.5)
                assert lhs.sign == rhs.sign
                assert lhs.log_magnitude == pytest.approx(rhs.log_magnitude, rel=1e-12, abs=1e-12)

    def test_beta_rejects_b2_zero(self):
        with pytest.raises(DomainError):
            beta_fn(0, 0, 1.0, 0.5, [-1, -1], [-2, 0.0], [1, 0, 1])

    def test_domain_error_names_arguments(self):
        with pytest.raises(DomainError, match="integral arguments"):
            alpha_fn(0, [0, -1], [-1.5, -0.5], [1, 0, -5])

    def test_beta_against_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            a = np.array([-rng.uniform(1, 4), -rng.uniform(0.1, 3)])
            b = np.array([-rng.uniform(1.2, 4), -rng.uniform(0.1, 3)])
            y = rng.normal()
            c = [1.0, y, y * y]
            l, v, w = 0.0, -2 * b[1], 0.5
            k = int(rng.integers(0, 3))
            val = beta_fn(k, l, v, w, a, b, c)
            params = (k,) + beta_args(l, v, w, a, b, c)
            lm, sgn = naive_log_integral("B", params)
            l0, _ = naive_log_integral("B", (0,) + params[1:])
            assert abs(val.sign * math.exp(val.log_magnitude - l0) - sgn * math.exp(lm - l0)) < 1e-6

    def test_beta_jensen(self):
        args = (0.0, 1.3, 0.5, [-2.0, -1.0], [-2.5, -0.8], [1.0, 0.4, 0.16])
        b0, b1, b2 = (beta_fn(k, *args) for k in range(3))
        assert b2 / b0 > (b1 / b0) ** 2


class TestG:
    def test_g_matches_componentwise(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            a = np.array([-rng.uniform(1, 4), -rng.uniform(0.1, 3)])
            b = np.array([-rng.uniform(1.2, 4), -rng.uniform(0.1, 3)])
            y = rng.normal()
            c = [1.0, y, y * y]
            l, v, w = 0.0, -2 * b[1], 0.5
            arg = (
                beta_fn(0, l + 1, v, w, a, b, c).log_magnitude
                - beta_fn(0, l - 1, v, w, a, b, c).log_magnitude
                - beta_fn(1, l - 1, v, w, a, b, c) / beta_fn(0, l - 1, v, w, a, b, c)
            )
            g = g_fn(l, v, w, a, b, c)
            assert g == pytest.approx(inv_logmdigamma(arg), rel=1e-8)
            assert 1 / (2 * arg) < g < 1 / arg

    def test_g_moment_domain_error(self, monkeypatch):
        monkeypatch.setattr(kernels, "log_mgf_gap_B", lambda *a, **k: (0.0, -1e-3))
        with pytest.raises(MomentDomainError):
            g_fn(0.0, 1.0, 0.5, [-2.0, -1.0], [-2.0, -1.0], [1.0, 0.0, 0.0])


class TestGaussianProjections:
    def test_G_N_against_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a, b, y = _random_gaussian_inputs(rng)
            out = G_N(a, b, [1, y, y * y])
            ref = tilted_projection_oracle("gaussian_to_alpha", {"alpha": a, "sigsq": b}, {"y": y})
            np.testing.assert_allclose(out, ref, atol=1e-6)
            assert in_natural_domain(NatParam(NORMAL, out + a))

    def test_G_N_sharp_variance(self):
        kappa, s0, y = 1e6, 0.7, 1.3
        b = [-kappa / 2 - 1, -kappa * s0 / 2]
        out = G_N([0.2, -0.4], b, [1, y, y * y])
        np.testing.assert_allclose(out, [y / s0, -0.5 / s0], atol=1e-4)

    def test_G_N_domain(self):
        with pytest.raises(DomainError):
            G_N([0, 0.0], [-2, -1], [1, 0, 0])

    def test_G_IG1_against_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a, b, y = _random_gaussian_inputs(rng)
            out = G_IG1(b, a, [1, y, y * y])
            ref = tilted_projection_oracle("gaussian_to_sigsq", {"alpha": a, "sigsq": b}, {"y": y})
            np.testing.assert_allclose(out, ref, atol=1e-6)
            assert in_natural_domain(NatParam(INV_CHISQ, out + b))

    def test_G_IG1_domain(self):
        with pytest.raises(DomainError):
            G_IG1([-2, -1], [0, -1], [0, 0, 0])


class TestIteratedProjection:
    def test_l_one_reduction(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            s, a = _random_iterated_inputs(rng)
            k = rng.uniform(1, 4)
            np.testing.assert_allclose(G_IG3(s, a, k, 1.0), G_IG2(s, a, k), rtol=1e-13, atol=1e-14)

    @pytest.mark.parametrize("nu", [1.0, 2.0, 5.0])
    def test_against_oracle(self, nu):
        rng = np.random.default_rng(42)
        for _ in range(8):
            s, a = _random_iterated_inputs(rng)
            data = {"nu": nu, "coupling": nu}
            out_s = G_IG3(s, a, nu + 2, nu)
            out_a = G_IG3(a, s, nu, nu)
            np.testing.assert_allclose(out_s, tilted_projection_oracle("iterated_to_sigsq", {"sigsq": s, "a": a}, data), atol=1e-6)
            np.testing.assert_allclose(out_a, tilted_projection_oracle("iterated_to_a", {"sigsq": s, "a": a}, data), atol=1e-6)

    def test_l_domain(self):
        with pytest.raises(DomainError):
            G_IG3([-2, -1], [-2, -1], 3.0, 0.0)


class TestH:
    def test_logistic_oracle(self):
        a = [0.0, -0.5]
        np.testing.assert_allclose(H_logistic(a, 1), tilted_projection_oracle("logistic", {"a": a}, {"y": 1}), atol=1e-8)

    def test_logistic_reflection(self):
        h1, h0 = H_logistic([0.0, -0.5], 1), H_logistic([0.0, -0.5], 0)
        assert h0[0] == pytest.approx(-h1[0], abs=1e-12)
        assert h0[1] == pytest.approx(h1[1], rel=1e-10)

    def test_poisson_oracle(self):
        a = [0.0, -0.5]
        np.testing.assert_allclose(H_poisson(a, 3), tilted_projection_oracle("poisson", {"a": a}, {"y": 3}), atol=1e-8)

    def test_generic_is_named_kernel(self):
        np.testing.assert_array_equal(H_generic(IntegrandKernel.POISSON, [0.3, -0.2], 2), H_poisson([0.3, -0.2], 2))

    def test_probit_fixture(self):
        # phi(x) Phi(x) tilted density: mean 1/sqrt(pi), variance 1 - 1/pi.
        m, v = 1 / math.sqrt(math.pi), 1 - 1 / math.pi
        expected = np.array([m / v, -0.5 / v]) - np.array([0.0, -0.5])
        np.testing.assert_allclose(H_probit([0, -0.5], 1), expected, rtol=1e-12)
        np.testing.assert_allclose(H_probit([0, -0.5], 1), [0.8276, -0.2335], atol=1e-3)
        np.testing.assert_allclose(H_probit([0, -0.5], 0), [-0.8276, -0.2335], atol=1e-3)

    def test_probit_against_quadrature(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            a = np.array([rng.uniform(-3, 3), -rng.uniform(0.05, 3)])
            y = int(rng.integers(0, 2))
            np.testing.assert_allclose(H_probit(a, y), tilted_projection_oracle("probit", {"a": a}, {"y": y}), atol=1e-6)

    def test_probit_domain(self):
        with pytest.raises(DomainError):
            H_probit([0, 0.1], 1)
        with pytest.raises(DomainError):
            H_probit([0, -0.5], 2)

    def test_outputs_are_proper(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = np.array([rng.uniform(-2, 2), -rng.uniform(0.1, 2)])
            for h in (H_logistic(a, 1), H_poisson(a, 2), H_probit(a, 0)):
                assert in_natural_domain(NatParam(NORMAL, h + a))


class TestNormalIntegralIdentities:
    def test_standard(self):
        I0, I1, I2 = norm_phi_Phi_identities(0.0, 1.0)
        assert I0 == pytest.approx(0.5, rel=1e-15)
        assert I1 == pytest.approx(norm.pdf(0) / math.sqrt(2), rel=1e-14)
        assert I1 == pytest.approx(0.2820948, abs=1e-7)
        assert I2 == pytest.approx(0.5, rel=1e-15)

    def test_b_zero(self):
        I0, I1, I2 = norm_phi_Phi_identities(0.7, 0.0)
        assert (I0, I1, I2) == pytest.approx((norm.cdf(0.7), 0.0, norm.cdf(0.7)), rel=1e-15)

    def test_against_quadrature(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            a, b = rng.normal(scale=2), rng.normal(scale=2)
            for p, val in enumerate(norm_phi_Phi_identities(a, b)):
                ref, _ = integrate.quad(lambda x: norm.cdf(a + b * x) * norm.pdf(x) * x**p, -40, 40, epsabs=1e-14, epsrel=1e-13, limit=200)
                assert val == pytest.approx(ref, rel=1e-10, abs=1e-12)
