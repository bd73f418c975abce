"""Tests for the brute-force reference computations."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from epfrag.errors import ContractError, DomainError
from epfrag.oracle import (
    Grid1D,
    Grid2D,
    accuracy,
    glm_log_posterior,
    grid_posterior,
    linear_model_log_posterior,
    logistic_regression_log_posterior,
    naive_integral,
    naive_log_integral,
    naive_moments,
    normal_mean_log_posterior,
    random_tuples,
    tilted_projection_oracle,
)

# 100 (1 - int |phi(x) - phi(x - 1)| / 2) from a 2e5-node trapezoid on [-12, 13].
ACCURACY_SHIFTED_NORMALS = 61.707507791039205


class TestNaiveIntegrals:
    def test_closed_form(self):
        assert naive_integral("A", (0, 0, 1, 0, 1, 1)) == pytest.approx(math.pi * math.e * math.erfc(1), abs=1e-6)

    def test_odd(self):
        assert abs(naive_integral("A", (1, 0, 1, 0, 1, 1))) < 1e-10

    def test_gaussian_moments(self):
        logz, m1, m2 = naive_moments(lambda x: -0.5 * (x - 2.0) ** 2, 2.0, [lambda x: x, lambda x: x * x])
        assert logz == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-10)
        assert m1 == pytest.approx(2.0, abs=1e-10)
        assert m2 - m1**2 == pytest.approx(1.0, abs=1e-8)

    def test_log_integral_sign(self):
        lm, sgn = naive_log_integral("A", (1, -1.0, 1.0, 0.0, 1.0, 1.0))
        assert sgn == -1
        assert lm == pytest.approx(math.log(-naive_integral("A", (1, -1.0, 1.0, 0.0, 1.0, 1.0))), rel=1e-12)

    def test_domains(self):
        with pytest.raises(DomainError):
            naive_integral("A", (0, 0, -1, 0, 1, 1))
        with pytest.raises(DomainError):
            naive_integral("B", (0, -1, 1, 0, 1, 1))

    def test_random_tuples_in_domain(self):
        rng = np.random.default_rng(42)
        for fam in ("A", "B", "C_logistic", "C_poisson"):
            for t in random_tuples(fam, 5, rng):
                assert t[0] in (0, 1, 2)
                assert math.isfinite(naive_log_integral(fam, t)[0])


class TestTiltedOracle:
    def test_probit_fixture(self):
        out = tilted_projection_oracle("probit", {"a": [0.0, -0.5]}, {"y": 1})
        np.testing.assert_allclose(out, [0.8276, -0.2335], atol=1e-4)

    def test_logistic_mirror(self):
        o1 = tilted_projection_oracle("logistic", {"a": [0.0, -0.5]}, {"y": 1})
        o0 = tilted_projection_oracle("logistic", {"a": [0.0, -0.5]}, {"y": 0})
        assert o1[0] == pytest.approx(-o0[0], abs=1e-10)
        assert o1[1] == pytest.approx(o0[1], rel=1e-8)

    def test_gaussian_sharp_sigma(self):
        kappa, s0, y = 1e6, 0.5, 1.0
        out = tilted_projection_oracle(
            "gaussian_to_alpha", {"alpha": [0.0, -0.5], "sigsq": [-kappa / 2 - 1, -kappa * s0 / 2]}, {"y": y}
        )
        np.testing.assert_allclose(out, [y / s0, -0.5 / s0], atol=1e-3)

    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            tilted_projection_oracle("student", {"a": [0.0, -0.5]}, {"y": 1})


class TestGridPosterior:
    def test_logistic_mass(self):
        rng = np.random.default_rng(42)
        X = np.column_stack([np.ones(50), rng.normal(size=50)])
        y = (rng.uniform(size=50) < 0.5).astype(float)
        g = grid_posterior(logistic_regression_log_posterior(X, y, 100.0), [(-3, 3), (-3, 3)], n=401)
        assert isinstance(g, Grid2D)
        assert g.mass == pytest.approx(1.0, abs=1e-8)
        assert g.marginal(0).mass == pytest.approx(1.0, abs=1e-8)

    def test_conjugate_normal(self):
        rng = np.random.default_rng(42)
        y = rng.normal(1.0, 2.0, size=20)
        sigsq, mu0, s0 = 4.0, 0.0, 10.0
        prec = 1 / s0 + y.size / sigsq
        m, v = (mu0 / s0 + y.sum() / sigsq) / prec, 1 / prec
        g = grid_posterior(normal_mean_log_posterior(y, sigsq, mu0, s0), [(m - 12 * v**0.5, m + 12 * v**0.5)], n=4001)
        np.testing.assert_allclose(g.density, norm.pdf(g.x, m, v**0.5), atol=1e-8 / v**0.5)
        assert g.mean() == pytest.approx(m, abs=1e-10)

    def test_three_parameters(self):
        with pytest.raises(ContractError):
            grid_posterior(lambda a, b, c: a, [(0, 1)] * 3)

    def test_bad_bounds(self):
        with pytest.raises(ContractError):
            grid_posterior(lambda a: a, [(1, 0)])

    def test_glm_matches_logistic(self):
        rng = np.random.default_rng(42)
        X = np.column_stack([np.ones(30), rng.normal(size=30)])
        y = (rng.uniform(size=30) < 0.5).astype(float)
        b0, b1 = np.meshgrid(np.linspace(-2, 2, 7), np.linspace(-2, 2, 5), indexing="ij")
        ref = logistic_regression_log_posterior(X, y, 100.0)(b0, b1)
        got = glm_log_posterior(X, y, "logistic", [0, 0], 100.0 * np.eye(2))(b0, b1)
        np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_glm_dimension(self):
        with pytest.raises(ContractError):
            glm_log_posterior(np.ones((3, 3)), np.ones(3), "poisson", np.zeros(3), np.eye(3))

    def test_linear_model_half_cauchy_prior(self):
        # With no data the v-marginal is the Half-Cauchy(A) prior on sigma mapped to log sigma^2.
        lp = linear_model_log_posterior(np.zeros(0), np.zeros(0), 1.0, 2.0)
        v = np.linspace(-6, 6, 5)
        sigma = np.exp(v / 2)
        ref = np.log(2 / (math.pi * 2.0 * (1 + sigma**2 / 4.0))) + np.log(sigma / 2)
        diff = lp(np.zeros_like(v), v) - ref
        np.testing.assert_allclose(diff, diff[0], atol=1e-12)


class TestAccuracy:
    def test_identical(self):
        x = np.linspace(-5, 5, 101)
        g = Grid1D(x, norm.pdf(x))
        assert accuracy(g, g) == 100.0

    def test_disjoint(self):
        x = np.linspace(-1, 11, 4001)
        p = Grid1D(x, norm.pdf(x, 0.0, 0.1))
        q = Grid1D(x, norm.pdf(x, 10.0, 0.1))
        assert accuracy(q, p) == pytest.approx(0.0, abs=1e-9)

    def test_shifted_normals(self):
        x = np.linspace(-12, 13, 200001)
        val = accuracy(Grid1D(x, norm.pdf(x - 1)), Grid1D(x, norm.pdf(x)))
        assert val == pytest.approx(ACCURACY_SHIFTED_NORMALS, abs=1e-9)
        # 100 (2 - 2 Phi(1/2)) in closed form.
        assert val == pytest.approx(100 * (2 - 2 * norm.cdf(0.5)), abs=1e-6)

    def test_refinement_stable(self):
        vals = []
        for n in (2001, 4001):
            x = np.linspace(-12, 13, n)
            vals.append(accuracy(Grid1D(x, norm.pdf(x - 1)), Grid1D(x, norm.pdf(x))))
        assert abs(vals[0] - vals[1]) < 0.01

    def test_mismatched_grid(self):
        with pytest.raises(ContractError):
            accuracy(Grid1D(np.linspace(0, 1, 5), np.ones(5)), Grid1D(np.linspace(0, 1, 6), np.ones(6)))
