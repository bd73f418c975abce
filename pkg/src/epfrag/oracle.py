"""Brute-force reference computations used to validate the engine.

Nothing here shares code with :mod:`epfrag.quadrature` or :mod:`epfrag.kernels`.
Integrals are plain midpoint Riemann sums with 2e5 nodes on a wide window, in
the log domain. Tilted densities are written out from their analytic
derivations rather than composed from the integral families. Gradient
inversions use scipy's digamma and a bracketing root finder.
Dense grids provide exact posteriors for models with at most two free
parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .errors import ContractError, DomainError, MomentDomainError

__all__ = [
    "naive_integral",
    "naive_log_integral",
    "naive_moments",
    "tilted_projection_oracle",
    "Grid1D",
    "Grid2D",
    "grid_posterior",
    "accuracy",
    "logistic_regression_log_posterior",
    "linear_model_log_posterior",
    "normal_mean_log_posterior",
    "glm_log_posterior",
    "random_tuples",
]

N_NODES = 200_000
HALF_WIDTH_SIGMAS = 20.0
# The fixed window is widened until the log-integrand has fallen this far.
MIN_DROP = 40.0
_SCAN_HALF_RANGE = 300.0
_SCAN_POINTS = 120_001

LogFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Naive Riemann integration
# ---------------------------------------------------------------------------


def _eval(logf: LogFn, x) -> np.ndarray:
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        v = np.asarray(logf(np.asarray(x, dtype=float)), dtype=float)
    return np.where(np.isnan(v), -np.inf, v)


def _locate(logf: LogFn, guess: float) -> tuple[float, float]:
    """Mode and half-width-at-drop-1/2 scale of a unimodal log-integrand."""
    xs = np.linspace(guess - _SCAN_HALF_RANGE, guess + _SCAN_HALF_RANGE, _SCAN_POINTS)
    ls = _eval(logf, xs)
    i = int(np.argmax(ls))
    if not np.isfinite(ls[i]):
        raise DomainError("integrand vanishes on the scan range")
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]
    res = optimize.minimize_scalar(
        lambda z: -float(_eval(logf, [z])[0]), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12 * max(1.0, abs(xs[i]))},
    )
    mode = float(res.x)
    top = float(_eval(logf, [mode])[0])

    def drop(d):
        return float(_eval(logf, [mode + d])[0]) - (top - 0.5)

    widths = []
    for sgn in (1.0, -1.0):
        d = 1e-8
        while drop(sgn * d) > 0 and d < 1e6:
            d *= 2.0
        if d >= 1e6:
            raise DomainError("integrand does not decay")
        widths.append(optimize.brentq(lambda z: drop(sgn * z), d / 2.0 if d > 1e-8 else 0.0, d))
    return mode, max(min(widths), 1e-300)


def _nodes(logf: LogFn, guess: float) -> tuple[np.ndarray, np.ndarray]:
    mode, sd = _locate(logf, guess)
    top = float(_eval(logf, [mode])[0])
    lo, hi = mode - HALF_WIDTH_SIGMAS * sd, mode + HALF_WIDTH_SIGMAS * sd
    step = HALF_WIDTH_SIGMAS * sd
    for _ in range(200):
        if float(_eval(logf, [lo])[0]) < top - MIN_DROP:
            break
        lo -= step
        step *= 1.5
    step = HALF_WIDTH_SIGMAS * sd
    for _ in range(200):
        if float(_eval(logf, [hi])[0]) < top - MIN_DROP:
            break
        hi += step
        step *= 1.5
    h = (hi - lo) / N_NODES
    x = lo + h * (np.arange(N_NODES) + 0.5)
    return x, _eval(logf, x) + math.log(h)


def naive_moments(logf: LogFn, guess: float = 0.0, funcs: Sequence[Callable] = ()) -> tuple:
    """Log normalizer and ``E g(x)`` for each ``g`` in ``funcs`` under ``exp(logf)``."""
    x, lw = _nodes(logf, guess)
    M = np.max(lw)
    w = np.exp(lw - M)
    Z = np.sum(w)
    return (M + math.log(Z),) + tuple(float(np.sum(w * g(x)) / Z) for g in funcs)


def _family_logf(family: str, params) -> tuple[LogFn, int, float]:
    family = family.upper()
    if family == "A":
        p, q, r, s, t, u = params
        if not (r > 0 and t > s * s / 4 and u >= 0):
            raise DomainError("A family domain violated")
        return (lambda x: q * x - r * x * x - u * np.log(x * x + s * x + t)), p, q / (2 * r)
    if family == "B":
        p, q, r, s, t, u = params
        if not (q > 0 and r > 0 and s >= 0 and t > 0 and u > 0):
            raise DomainError("B family domain violated")

        def f(x):
            e = np.exp(x)
            return q * x - r * e - s * e / (t + e) - u * np.log(t + e)

        return f, p, math.log(q / r)
    if family in ("C_LOGISTIC", "C_POISSON"):
        p, q, r = params
        if not r > 0:
            raise DomainError("C family domain violated")
        if family == "C_LOGISTIC":
            return (lambda x: q * x - r * x * x - np.log1p(np.exp(x))), p, q / (2 * r)
        return (lambda x: q * x - r * x * x - np.exp(x)), p, q / (2 * r)
    raise ContractError(f"unknown integral family {family!r}")


def naive_log_integral(family: str, params) -> tuple[float, int]:
    """``(log|I|, sign I)`` by a 2e5-node midpoint rule.

    Parameters
    ----------
    family : {"A", "B", "C_logistic", "C_poisson"}
    params : tuple
        ``(p, q, r, s, t, u)`` for A and B, ``(p, q, r)`` for the C families.
    """
    logf, p, guess = _family_logf(family, params)
    x, lw = _nodes(logf, guess)
    M = np.max(lw)
    w = np.exp(lw - M) * x**p
    S = float(np.sum(w))
    if S == 0.0:
        return -math.inf, 0
    return float(M) + math.log(abs(S)), 1 if S > 0 else -1


def naive_integral(family: str, params) -> float:
    """Plain-float version of :func:`naive_log_integral`."""
    lm, sgn = naive_log_integral(family, params)
    return sgn * math.exp(lm) if sgn else 0.0


# ---------------------------------------------------------------------------
# Tilted-density projections
# ---------------------------------------------------------------------------


def _normal_projection(logf: LogFn, guess: float) -> np.ndarray:
    _, m = naive_moments(logf, guess, [lambda x: x])
    _, v = naive_moments(logf, guess, [lambda x: (x - m) ** 2])
    if not v > 0:
        raise MomentDomainError("oracle: non-positive variance")
    return np.array([m / v, -0.5 / v])


def _invchisq_projection(logf_v: LogFn, guess: float) -> np.ndarray:
    """Project a density on ``v = log(x)`` (Jacobian included) onto Inverse Chi-Squared."""
    _, Ev = naive_moments(logf_v, guess, [lambda v: v])
    _, centred = naive_moments(logf_v, guess, [lambda v: np.exp(-(v - Ev))])
    tau2 = math.exp(-Ev) * centred
    y = math.log(centred)  # = E log x + log E(1/x)
    if not y > 0:
        raise MomentDomainError("oracle: Inverse Chi-Squared moments not realizable")
    # Solve log(g) - digamma(g) = y with the bracket (1/(2y), 1/y).
    fn = lambda g: math.log(g) - special.digamma(g) - y
    g = optimize.brentq(fn, 0.5 / y * (1 - 1e-12), 1.0 / y * (1 + 1e-12), xtol=1e-300, rtol=1e-15)
    return np.array([-g - 1.0, -g / tau2])


def _log_ndtr(x):
    return special.log_ndtr(x)


def tilted_projection_oracle(kind: str, incoming: dict, data: dict | None = None) -> np.ndarray:
    """Exact-tilted-density projection minus the incoming message.

    Parameters
    ----------
    kind : str
        One of ``"logistic"``, ``"probit"``, ``"poisson"`` (incoming ``a``,
        data ``y``); ``"gaussian_to_alpha"``, ``"gaussian_to_sigsq"``
        (incoming ``alpha`` and ``sigsq``, data ``y``); ``"iterated_to_sigsq"``,
        ``"iterated_to_a"`` (incoming ``sigsq`` and ``a``, data ``nu`` and
        ``coupling``). ``coupling`` is ``c`` in the factor
        ``(c/a)^{nu/2} x^{-nu/2-1} exp{-c/(a x)}`` and defaults to ``nu/2``.
    incoming : dict
        Natural parameters of the stochastic-node-to-factor messages.
    data : dict
        Fragment constants.

    Returns
    -------
    ndarray
        Natural parameter of the factor-to-node message (undamped).
    """
    data = data or {}
    if kind in ("logistic", "probit", "poisson"):
        a1, a2 = np.asarray(incoming["a"], dtype=float)
        y = float(data["y"])
        if not a2 < 0:
            raise DomainError("oracle: incoming Normal message must be proper")
        if kind == "logistic":
            logf = lambda x: (a1 + y) * x + a2 * x * x - np.logaddexp(0.0, x)
        elif kind == "poisson":
            logf = lambda x: (a1 + y) * x + a2 * x * x - np.exp(x)
        else:
            sgn = 2.0 * y - 1.0
            logf = lambda x: a1 * x + a2 * x * x + _log_ndtr(sgn * x)
        return _normal_projection(logf, -a1 / (2 * a2)) - np.array([a1, a2])

    if kind in ("gaussian_to_alpha", "gaussian_to_sigsq"):
        a1, a2 = np.asarray(incoming["alpha"], dtype=float)
        s1, s2 = np.asarray(incoming["sigsq"], dtype=float)
        y = float(data["y"])
        if kind == "gaussian_to_alpha":
            # integral over sigma^2 of N(y; alpha, sigma^2) sigma^(2 s1) exp(s2/sigma^2)
            logf = lambda x: a1 * x + a2 * x * x + (s1 + 0.5) * np.log(0.5 * (y - x) ** 2 - s2)
            return _normal_projection(logf, y) - np.array([a1, a2])

        # integral over alpha of N(y; alpha, e^v) exp(a1 alpha + a2 alpha^2), in v = log sigma^2
        def logf(v):
            ivar = np.exp(-v)
            P = ivar - 2.0 * a2
            L = y * ivar + a1
            return (s1 + 0.5) * v + s2 * ivar - 0.5 * np.log(P) + L * L / (2 * P) - 0.5 * y * y * ivar

        return _invchisq_projection(logf, 0.0) - np.array([s1, s2])

    if kind in ("iterated_to_sigsq", "iterated_to_a"):
        s1, s2 = np.asarray(incoming["sigsq"], dtype=float)
        b1, b2 = np.asarray(incoming["a"], dtype=float)
        nu = float(data["nu"])
        c = float(data.get("coupling", nu / 2.0))
        if kind == "iterated_to_sigsq":
            # x^(s1 - nu/2 - 1) (c/x - b2)^(b1 - nu/2 + 1) exp(s2/x), x = e^v, times Jacobian e^v
            logf = lambda v: (s1 - nu / 2.0) * v + (b1 - nu / 2.0 + 1.0) * np.log(
                c * np.exp(-v) - b2
            ) + s2 * np.exp(-v)
            return _invchisq_projection(logf, 0.0) - np.array([s1, s2])
        logf = lambda v: (b1 - nu / 2.0 + 1.0) * v + (s1 - nu / 2.0) * np.log(
            c * np.exp(-v) - s2
        ) + b2 * np.exp(-v)
        return _invchisq_projection(logf, 0.0) - np.array([b1, b2])

    raise ContractError(f"unknown tilted density kind {kind!r}")


# ---------------------------------------------------------------------------
# Dense-grid posteriors and the accuracy score
# ---------------------------------------------------------------------------


def _trap(y: np.ndarray, x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.trapezoid(y, x, axis=axis) if hasattr(np, "trapezoid") else np.trapz(y, x, axis=axis)


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Density values on an equispaced 1-d grid."""

    x: np.ndarray
    density: np.ndarray

    @property
    def mass(self) -> float:
        return float(_trap(self.density, self.x))

    def mean(self) -> float:
        return float(_trap(self.x * self.density, self.x) / self.mass)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Normalized joint density on a product grid (``density[i, j]`` at ``(x[i], y[j])``)."""

    x: np.ndarray
    y: np.ndarray
    density: np.ndarray

    @property
    def mass(self) -> float:
        return float(_trap(_trap(self.density, self.y, axis=1), self.x))

    def marginal(self, axis: int) -> Grid1D:
        if axis == 0:
            return Grid1D(self.x, _trap(self.density, self.y, axis=1))
        if axis == 1:
            return Grid1D(self.y, _trap(self.density, self.x, axis=0))
        raise ContractError("axis must be 0 or 1")


def grid_posterior(log_density: Callable, bounds: Sequence[tuple[float, float]], n: int = 2001):
    """Normalized posterior on a dense grid.

    Parameters
    ----------
    log_density : callable
        Vectorized unnormalized log posterior taking one array per parameter.
    bounds : sequence of (low, high)
        One pair per free parameter; at most two parameters are supported.
    n : int
        Nodes per axis.

    Returns
    -------
    Grid1D or Grid2D
    """
    bounds = list(bounds)
    if len(bounds) == 0 or len(bounds) > 2:
        raise ContractError(f"grid posteriors support 1 or 2 free parameters, got {len(bounds)}")
    for lo, hi in bounds:
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ContractError(f"invalid grid bounds ({lo}, {hi})")
    axes = [np.linspace(lo, hi, n) for lo, hi in bounds]
    if len(axes) == 1:
        lp = np.asarray(log_density(axes[0]), dtype=float)
        dens = np.exp(lp - np.max(lp))
        g = Grid1D(axes[0], dens)
        return Grid1D(axes[0], dens / g.mass)
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    lp = np.asarray(log_density(X, Y), dtype=float)
    dens = np.exp(lp - np.max(lp))
    g = Grid2D(axes[0], axes[1], dens)
    return Grid2D(axes[0], axes[1], dens / g.mass)


def accuracy(q: Grid1D, p: Grid1D) -> float:
    """``100 (1 - 0.5 int |q - p|)`` by the trapezoid rule, clamped to [0, 100]."""
    if q.x.shape != p.x.shape or not np.array_equal(q.x, p.x):
        raise ContractError("accuracy requires both densities on the same grid")
    l1 = float(_trap(np.abs(q.density - p.density), q.x))
    return float(min(100.0, max(0.0, 100.0 * (1.0 - 0.5 * l1))))


def logistic_regression_log_posterior(X, y, sigsq_beta: float, chunk: int = 64):
    """Log posterior of a two-coefficient logistic regression with ``N(0, sigsq_beta I)`` prior."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ContractError("grid logistic posterior supports exactly two coefficients")

    def logpost(b0, b1):
        out = np.empty(np.shape(b0))
        flat0, flat1, flat = b0.reshape(-1), b1.reshape(-1), out.reshape(-1)
        for i in range(0, flat0.size, chunk * 1024):
            B = np.stack([flat0[i : i + chunk * 1024], flat1[i : i + chunk * 1024]])
            eta = X @ B
            flat[i : i + chunk * 1024] = (y @ eta) - np.logaddexp(0.0, eta).sum(axis=0)
        return out - (b0 * b0 + b1 * b1) / (2.0 * sigsq_beta)

    return logpost


def linear_model_log_posterior(x, y, sigsq_beta: float, A: float):
    """Log posterior of ``(beta, v = log sigma^2)`` for ``y = x beta + e``.

    Uses a ``N(0, sigsq_beta)`` prior on beta and a Half-Cauchy(A) prior on
    sigma, i.e. ``p(sigma^2) ∝ (sigma^2)^{-1/2} / (1 + sigma^2/A^2)``. The
    auxiliary variable has been integrated out analytically. The Jacobian of
    ``v = log sigma^2`` is included.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.size
    Sxx, Sxy, Syy = float(x @ x), float(x @ y), float(y @ y)

    def logpost(beta, v):
        sse = Syy - 2.0 * beta * Sxy + beta * beta * Sxx
        s2 = np.exp(v)
        loglik = -0.5 * n * v - sse / (2.0 * s2)
        logprior = -beta * beta / (2.0 * sigsq_beta) - 0.5 * v - np.log1p(s2 / (A * A)) + v
        return loglik + logprior

    return logpost


def normal_mean_log_posterior(y, sigsq: float, mu0: float, sigsq0: float):
    """Log posterior of a Normal mean with known variance and ``N(mu0, sigsq0)`` prior."""
    y = np.asarray(y, dtype=float).reshape(-1)

    def logpost(m):
        return -((y.size * m * m - 2.0 * m * y.sum()) / (2.0 * sigsq)) - (m - mu0) ** 2 / (2.0 * sigsq0)

    return logpost


def glm_log_posterior(X, y, likelihood: str, mu_beta, Sigma_beta, chunk: int = 65536, sigsq: float | None = None):
    """Log posterior of a GLM with one or two coefficients and a Normal prior.

    Parameters
    ----------
    X : ndarray, shape (n, d)
        Design matrix with ``d`` in (1, 2).
    y : ndarray
        Responses.
    likelihood : {"logistic", "probit", "poisson", "gaussian"}
    mu_beta, Sigma_beta : array_like
        Prior mean and covariance.
    sigsq : float, optional
        Known residual variance; required for ``"gaussian"``.

    Returns
    -------
    callable
        Vectorized log density taking ``d`` coefficient arrays.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    d = X.shape[1]
    if d not in (1, 2):
        raise ContractError(f"grid GLM posterior supports 1 or 2 coefficients, got {d}")
    mu = np.asarray(mu_beta, dtype=float).reshape(d)
    P = np.linalg.inv(np.asarray(Sigma_beta, dtype=float).reshape(d, d))
    if likelihood == "logistic":
        ll = lambda eta: y @ eta - np.logaddexp(0.0, eta).sum(axis=0)
    elif likelihood == "probit":
        sgn = (2.0 * y - 1.0)[:, None]
        ll = lambda eta: special.log_ndtr(sgn * eta).sum(axis=0)
    elif likelihood == "poisson":
        ll = lambda eta: y @ eta - np.exp(eta).sum(axis=0)
    elif likelihood == "gaussian":
        if sigsq is None or not sigsq > 0:
            raise ContractError("gaussian grid posterior needs a positive known variance")
        ll = lambda eta: -(((y[:, None] - eta) ** 2).sum(axis=0)) / (2.0 * sigsq)
    else:
        raise ContractError(f"unsupported likelihood {likelihood!r}")

    def logpost(*b):
        shape = np.shape(b[0])
        B = np.stack([np.asarray(bi, dtype=float).reshape(-1) for bi in b])
        out = np.empty(B.shape[1])
        for i in range(0, B.shape[1], chunk):
            out[i : i + chunk] = ll(X @ B[:, i : i + chunk])
        D = B - mu[:, None]
        out -= 0.5 * np.einsum("ik,ij,jk->k", D, P, D)
        return out.reshape(shape)

    return logpost


def random_tuples(family: str, count: int, rng: np.random.Generator) -> list[tuple]:
    """Random parameter tuples inside the domain of an integral family.

    For ``p = 1`` tuples whose integral nearly cancels (``|I_1|`` below a tenth
    of ``sqrt(I_0 I_2)``) are redrawn so that relative errors stay meaningful.
    """
    out: list[tuple] = []
    fam = family.upper()
    while len(out) < count:
        p = int(rng.integers(0, 3))
        if fam == "A":
            s = rng.uniform(-3, 3)
            params = (p, rng.uniform(-5, 5), rng.uniform(0.05, 3), s, s * s / 4 + rng.uniform(0.05, 5), rng.uniform(0, 5))
        elif fam == "B":
            params = (p, rng.uniform(0.2, 10), rng.uniform(0.1, 10), rng.uniform(0, 5), rng.uniform(0.1, 5), rng.uniform(0.1, 5))
        elif fam in ("C_LOGISTIC", "C_POISSON"):
            params = (p, rng.uniform(-5, 5), rng.uniform(0.05, 3))
        else:
            raise ContractError(f"unknown integral family {family!r}")
        if p == 1:
            i0 = naive_log_integral(family, (0,) + params[1:])[0]
            i1 = naive_log_integral(family, params)[0]
            i2 = naive_log_integral(family, (2,) + params[1:])[0]
            if i1 < math.log(0.1) + 0.5 * (i0 + i2):
                continue
        out.append(params)
    return out
