"""Explicit projection functions used by the fragment updates.

These are the compositions of the integral families with the Normal and
Inverse Chi-Squared gradient inverses:

* ``alpha_fn`` / ``beta_fn``: argument maps into the A and B families;
* ``g_fn``: the inverse of log - digamma applied to a ratio of B integrals;
* ``G_N``, ``G_IG1``, ``G_IG2``, ``G_IG3``: projections for the Gaussian
  likelihood and iterated Inverse Chi-Squared fragments;
* ``H_generic`` (``H_logistic``, ``H_poisson``) and the closed-form
  ``H_probit``: projections for the GLM likelihood fragments;
* ``zeta_prime``: ``phi(x)/Phi(x)`` with a continued-fraction tail.

Each ``G``/``H`` function returns the *difference* between the projected
natural parameter and its first argument, i.e. the factor-to-node message.

The ratio-of-integrals definitions are evaluated from centered moments of one
node set rather than as quotients of separately computed integrals. The two
are mathematically identical, but the centered form keeps full relative
accuracy when the tilted density is concentrated.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import DomainError, MomentDomainError
from .expfam import inv_logmdigamma
from .quadrature import (
    IntegrandKernel,
    LogValue,
    QuadConfig,
    integral_A,
    integral_B,
    log_mgf_gap_B,
    mean_var_A,
    mean_var_C,
)

__all__ = [
    "zeta_prime",
    "alpha_args",
    "beta_args",
    "alpha_fn",
    "beta_fn",
    "g_fn",
    "G_N",
    "G_IG1",
    "G_IG2",
    "G_IG3",
    "H_generic",
    "H_logistic",
    "H_poisson",
    "H_probit",
    "norm_phi_Phi_identities",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# Below this point phi/Phi is computed from the Mills-ratio continued fraction.
_ZETA_SWITCH = -6.0
_CF_TERMS = 120


def _vec(x, n: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != n:
        raise DomainError(f"{name} must have length {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} must be finite, got {v}")
    return v


# ---------------------------------------------------------------------------
# zeta'
# ---------------------------------------------------------------------------


def zeta_prime(x: float) -> float:
    """``phi(x)/Phi(x)``, the derivative of ``log{2 Phi(x)}``.

    For ``x < -6`` the inverse Mills ratio is evaluated by the continued
    fraction ``t + 1/(t + 2/(t + 3/(t + ...)))`` with ``t = -x``, which avoids
    the ratio of two tiny numbers.
    """
    x = float(x)
    if x >= _ZETA_SWITCH:
        return math.exp(-0.5 * x * x - _LOG_SQRT_2PI - float(log_ndtr(x)))
    t = -x
    f = t
    for k in range(_CF_TERMS, 0, -1):
        f = t + k / f
    return f


# ---------------------------------------------------------------------------
# alpha and beta argument maps
# ---------------------------------------------------------------------------


def alpha_args(a, b, c) -> tuple[float, float, float, float, float]:
    """A-family arguments ``(q, r, s, t, u)`` for ``alpha(k, a, b, c)``."""
    a1, a2 = _vec(a, 2, "a")
    b1, b2 = _vec(b, 2, "b")
    c1, c2, c3 = _vec(c, 3, "c")
    if c1 == 0:
        raise DomainError("alpha: c1 must be non-zero")
    return a1, -a2, -2.0 * c2 / c1, (c3 - 2.0 * b2) / c1, (c1 - 2.0 * b1 - 2.0) / 2.0


def beta_args(l, v, w, a, b, c) -> tuple[float, float, float, float, float]:
    """B-family arguments ``(q, r, s, t, u)`` for ``beta(k, l, v, w, a, b, c)``."""
    a1, a2 = _vec(a, 2, "a")
    b1, b2 = _vec(b, 2, "b")
    c1, c2, c3 = _vec(c, 3, "c")
    if c1 == 0:
        raise DomainError("beta: c1 must be non-zero")
    if b2 == 0:
        raise DomainError("beta: b2 must be non-zero (s-argument undefined at b2 = 0)")
    q = (l + c1 - 1.0) / 2.0 - a1
    r = (c1 * c3 - c2 * c2) / (2.0 * c1) - a2
    s = -b2 * (c2 / c1 + b1 / (2.0 * b2)) ** 2
    return q, r, s, float(v), float(w)


def _reraise(err: DomainError, fn: str, names, values):
    detail = ", ".join(f"{n}={v:.6g}" for n, v in zip(names, values))
    raise DomainError(f"{fn}: {err} [integral arguments {detail}]") from err


def alpha_fn(k, a, b, c, cfg: QuadConfig | None = None) -> LogValue:
    """``A(k, a1, -a2, -2c2/c1, (c3 - 2b2)/c1, (c1 - 2b1 - 2)/2)``."""
    if not _vec(a, 2, "a")[1] < 0:
        raise DomainError("alpha: a2 must be negative")
    args = alpha_args(a, b, c)
    try:
        return integral_A(k, *args, cfg=cfg)
    except DomainError as err:
        _reraise(err, "alpha", "qrstu", args)


def beta_fn(k, l, v, w, a, b, c, cfg: QuadConfig | None = None) -> LogValue:
    """``B(k, (l + c1 - 1)/2 - a1, (c1 c3 - c2^2)/(2 c1) - a2, -b2 (c2/c1 + b1/(2 b2))^2, v, w)``."""
    args = beta_args(l, v, w, a, b, c)
    try:
        return integral_B(k, *args, cfg=cfg)
    except DomainError as err:
        _reraise(err, "beta", "qrstu", args)


def _g_and_log_ratio(l, v, w, a, b, c, cfg) -> tuple[float, float]:
    """``g`` and ``log{beta(0, l+1)/beta(0, l-1)}`` from one node set.

    Under the density proportional to the ``beta(0, l-1, ...)`` integrand,
    ``beta(0, l+1)/beta(0, l-1) = E e^x`` and ``beta(1, l-1)/beta(0, l-1) = E x``,
    so the argument of (log - digamma)^{-1} is ``log E e^x - E x``.
    """
    args = beta_args(l - 1.0, v, w, a, b, c)
    try:
        mean, gap = log_mgf_gap_B(*args, cfg=cfg)
    except DomainError as err:
        _reraise(err, "beta", "qrstu", args)
    if not gap > 0 or not math.isfinite(gap):
        raise MomentDomainError(
            f"g: argument of inverse log - digamma is {gap!r} (must be > 0); "
            "quadrature is inconsistent"
        )
    return inv_logmdigamma(gap), mean + gap


def g_fn(l, v, w, a, b, c, cfg: QuadConfig | None = None) -> float:
    """``(log - digamma)^{-1}(log{beta(0,l+1)/beta(0,l-1)} - beta(1,l-1)/beta(0,l-1))``."""
    return _g_and_log_ratio(l, v, w, a, b, c, cfg)[0]


# ---------------------------------------------------------------------------
# G functions
# ---------------------------------------------------------------------------


def G_N(a, b, c, cfg: QuadConfig | None = None) -> np.ndarray:
    """Normal projection of the alpha-tilted density, minus ``a``.

    Equals ``[alpha2/alpha0 - (alpha1/alpha0)^2]^{-1} [alpha1/alpha0; -1/2] - a``.
    """
    a = _vec(a, 2, "a")
    if not a[1] < 0:
        raise DomainError("G_N: a2 must be negative")
    args = alpha_args(a, b, c)
    try:
        mean, var = mean_var_A(*args, cfg=cfg)
    except DomainError as err:
        _reraise(err, "alpha", "qrstu", args)
    if not var > 0:
        raise MomentDomainError("G_N: alpha moment ratios lie outside the realizable set")
    return np.array([mean / var, -0.5 / var]) - a


def G_IG1(a, b, c, cfg: QuadConfig | None = None) -> np.ndarray:
    """Inverse Chi-Squared projection for the Gaussian likelihood fragment, minus ``a``."""
    a = _vec(a, 2, "a")
    b = _vec(b, 2, "b")
    c = _vec(c, 3, "c")
    if not c[0] > 0:
        raise DomainError("G_IG1: c1 must be positive")
    if not b[1] < 0:
        raise DomainError("G_IG1: b2 must be negative")
    v, w = -2.0 * b[1] / c[0], 0.5
    g, log_ratio = _g_and_log_ratio(0.0, v, w, a, b, c, cfg)
    # beta(0,-1)/beta(0,1) is the reciprocal of beta(0,1)/beta(0,-1).
    return np.array([-1.0 - g, -g * math.exp(-log_ratio)]) - a


_TWO_ZERO_ZERO = np.array([2.0, 0.0, 0.0])


def G_IG3(a, b, k, l, cfg: QuadConfig | None = None) -> np.ndarray:
    """Inverse Chi-Squared projection for the iterated fragment, minus ``a``.

    Uses ``g(k-2, -b2/l, l - k/2 - b1, a, [0; b2], [2; 0; 0])`` and the ratio
    ``beta(0, k-3, ...)/beta(0, k-1, ...)``.
    """
    a = _vec(a, 2, "a")
    b1, b2 = _vec(b, 2, "b")
    k, l = float(k), float(l)
    if not l > 0:
        raise DomainError(f"G_IG3: l must be positive, got {l!r}")
    if not b2 < 0:
        raise DomainError("G_IG3: b2 must be negative")
    v, w = -b2 / l, l - k / 2.0 - b1
    g, log_ratio = _g_and_log_ratio(k - 2.0, v, w, a, np.array([0.0, b2]), _TWO_ZERO_ZERO, cfg)
    return np.array([-1.0 - g, -g * math.exp(-log_ratio)]) - a


def G_IG2(a, b, k, cfg: QuadConfig | None = None) -> np.ndarray:
    """Half-Cauchy special case: ``G_IG3`` with ``l = 1`` written out directly."""
    a = _vec(a, 2, "a")
    b1, b2 = _vec(b, 2, "b")
    if not b2 < 0:
        raise DomainError("G_IG2: b2 must be negative")
    k = float(k)
    g, log_ratio = _g_and_log_ratio(
        k - 2.0, -b2, 1.0 - k / 2.0 - b1, a, np.array([0.0, b2]), _TWO_ZERO_ZERO, cfg
    )
    return np.array([-1.0 - g, -g * math.exp(-log_ratio)]) - a


# ---------------------------------------------------------------------------
# H functions
# ---------------------------------------------------------------------------


def H_generic(kernel, a, y, cfg: QuadConfig | None = None) -> np.ndarray:
    """Normal projection of ``exp{(a1 + y) x + a2 x^2 - b(x)}``, minus ``a``."""
    a = _vec(a, 2, "a")
    if not a[1] < 0:
        raise DomainError("H: a2 must be negative")
    mean, var = mean_var_C(kernel, a[0] + float(y), -a[1], cfg)
    if not var > 0:
        raise MomentDomainError("H: C moment ratios violate Jensen's inequality")
    return np.array([mean / var, -0.5 / var]) - a


def H_logistic(a, y, cfg: QuadConfig | None = None) -> np.ndarray:
    """:func:`H_generic` with ``b(x) = log(1 + e^x)``."""
    return H_generic(IntegrandKernel.LOGISTIC, a, y, cfg)


def H_poisson(a, y, cfg: QuadConfig | None = None) -> np.ndarray:
    """:func:`H_generic` with ``b(x) = e^x``."""
    return H_generic(IntegrandKernel.POISSON, a, y, cfg)


def H_probit(a, y) -> np.ndarray:
    """Closed-form Normal projection of ``Phi((2y - 1) x) exp(a1 x + a2 x^2)``, minus ``a``.

    Parameters
    ----------
    a : array_like, shape (2,)
        Incoming Normal natural parameter with ``a2 < 0``.
    y : {0, 1}
        Binary response.
    """
    a1, a2 = _vec(a, 2, "a")
    if not a2 < 0:
        raise DomainError("H_probit: a2 must be negative")
    if y not in (0, 1):
        raise DomainError(f"H_probit: y must be 0 or 1, got {y!r}")
    sgn = 2.0 * y - 1.0
    root = math.sqrt(2.0 * a2 * (2.0 * a2 - 1.0))
    r = sgn * a1 / root
    zp = zeta_prime(r)
    denom = 1.0 - 2.0 * a2 - zp * (r + zp)
    out = np.array([a1 * (1.0 - 2.0 * a2) + sgn * zp * root, a2 * (1.0 - 2.0 * a2)]) / denom
    return out - np.array([a1, a2])


def norm_phi_Phi_identities(a: float, b: float) -> tuple[float, float, float]:
    """``int Phi(a + b x) phi(x) x^p dx`` for ``p = 0, 1, 2`` in closed form."""
    a, b = float(a), float(b)
    s = math.sqrt(b * b + 1.0)
    h = a / s
    Ph = float(ndtr(h))
    ph = math.exp(-0.5 * h * h - _LOG_SQRT_2PI)
    return Ph, b / s * ph, Ph - a * b * b / s**3 * ph
