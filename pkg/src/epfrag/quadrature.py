"""Log-domain quadrature for the non-analytic integral families.

Three families of one-dimensional integrals over the real line appear in the
fragment updates::

    A(p,q,r,s,t,u) = int x^p exp(q x - r x^2) / (x^2 + s x + t)^u dx
    B(p,q,r,s,t,u) = int x^p exp{q x - r e^x - s e^x/(t + e^x)} / (t + e^x)^u dx
    C_b(p,q,r)     = int x^p exp{q x - r x^2 - b(x)} dx,  b(x) = log(1+e^x) or e^x

All are evaluated the same way. Safeguarded Newton finds the mode of the
log-integrand. A window of ``tail_halfwidth_sigmas`` local standard deviations
is placed around it and widened until the integrand has decayed by at least
``exp(-50)`` at both ends. The composite trapezoid rule is then applied with
interval doubling until successive estimates agree to ``rel_tol``. The
integrand is evaluated as ``exp(log f - M)``, where ``M`` is its maximum on the
grid, so values never overflow. Results are returned as :class:`LogValue`.

Besides the raw integrals, the module provides the normalized moments of the
corresponding tilted densities (mean and variance, or the gap
``log E e^x - E x``). These are computed on one node set and centered to avoid
cancellation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError, NumericError

__all__ = [
    "QuadConfig",
    "LogValue",
    "IntegrandKernel",
    "integral_A",
    "integral_B",
    "integral_C",
    "moment_ratios_C",
    "mean_var_A",
    "mean_var_C",
    "log_mgf_gap_B",
]

# Required decay (in log units) of every integrand at both window ends.
_TAIL_DROP = 50.0
_MAX_WINDOW_GROWTH = 60
_MAX_NEWTON = 200


@dataclass(frozen=True)
class QuadConfig:
    """Tuning constants for the adaptive trapezoid rule.

    Attributes
    ----------
    rel_tol : float
        Stop doubling once successive estimates differ by less than
        ``rel_tol`` times the integral of the absolute integrand.
    abs_tol : float
        Magnitudes below this floor are reported as exact zeros.
    max_doublings : int
        Maximum number of interval halvings before giving up.
    initial_nodes : int
        Odd number of nodes on the first pass.
    tail_halfwidth_sigmas : float
        Initial half-width of the window in local standard deviations.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-300
    max_doublings: int = 15
    initial_nodes: int = 129
    tail_halfwidth_sigmas: float = 12.0

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.initial_nodes < 33 or self.initial_nodes % 2 == 0:
            raise DomainError("initial_nodes must be odd and at least 33")
        if self.max_doublings < 1:
            raise DomainError("max_doublings must be at least 1")
        if not self.tail_halfwidth_sigmas > 0:
            raise DomainError("tail_halfwidth_sigmas must be positive")


DEFAULT_CONFIG = QuadConfig()


@dataclass(frozen=True)
class LogValue:
    """A real number stored as ``sign * exp(log_magnitude)``.

    ``sign == 0`` denotes an exact zero, in which case ``log_magnitude`` is
    ``-inf`` and carries no information.
    """

    log_magnitude: float
    sign: int

    @classmethod
    def from_float(cls, x: float) -> "LogValue":
        if x == 0:
            return cls(-math.inf, 0)
        return cls(math.log(abs(x)), 1 if x > 0 else -1)

    @property
    def value(self) -> float:
        """Plain float (may overflow to ``inf`` or underflow to 0)."""
        if self.sign == 0:
            return 0.0
        with np.errstate(over="ignore"):
            return self.sign * float(np.exp(self.log_magnitude))

    def __truediv__(self, other: "LogValue") -> float:
        """Ratio of two log values as a plain float."""
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero LogValue")
        if self.sign == 0:
            return 0.0
        return self.sign * other.sign * math.exp(self.log_magnitude - other.log_magnitude)


class IntegrandKernel(enum.Enum):
    """The function ``b`` in the C family."""

    LOGISTIC = "logistic"  # b(x) = log(1 + e^x)
    POISSON = "poisson"  # b(x) = e^x


# ---------------------------------------------------------------------------
# Log-integrands (the p = 0 part) with analytic first and second derivatives
# ---------------------------------------------------------------------------


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


class _LogIntegrand:
    """Base class: ``log f(x) = const + log(x)`` with derivatives for Newton."""

    const = 0.0
    start = 0.0
    scale = 1.0

    def log(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def log_rel(self, x: np.ndarray, x0: float) -> np.ndarray:
        """``log f(x) - log f(x0)``.

        Subclasses rearrange the difference so that large terms cancel
        analytically; otherwise a log-integrand of size L carries an absolute
        rounding error of about ``L * eps`` at every node.
        """
        return self.log(x) - float(self.log(np.array([x0]))[0])

    def d1(self, x: float) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def d2(self, x: float) -> float:  # pragma: no cover - abstract
        raise NotImplementedError


class _FamilyA(_LogIntegrand):
    # x^2 + s x + t = (x + s/2)^2 + c with c = t - s^2/4 > 0; the constant
    # -u log c is split off so the remaining log1p term stays well conditioned.
    def __init__(self, q, r, s, t, u):
        self.q, self.r, self.u = q, r, u
        self.h = 0.5 * s
        self.c = t - 0.25 * s * s
        self.const = -u * math.log(self.c)
        self.start = q / (2.0 * r)
        self.scale = 1.0 / math.sqrt(2.0 * r)

    def log(self, x):
        z = x + self.h
        return self.q * x - self.r * x * x - self.u * np.log1p(z * z / self.c)

    def log_rel(self, x, x0):
        d = x - x0
        z, z0 = x + self.h, x0 + self.h
        return (self.q - self.r * (2.0 * x0 + d)) * d - self.u * (
            np.log1p(z * z / self.c) - math.log1p(z0 * z0 / self.c)
        )

    def d1(self, x):
        z = x + self.h
        return self.q - 2.0 * self.r * x - 2.0 * self.u * z / (z * z + self.c)

    def d2(self, x):
        z = x + self.h
        D = z * z + self.c
        return -2.0 * self.r - 2.0 * self.u * (self.c - z * z) / (D * D)


class _FamilyB(_LogIntegrand):
    def __init__(self, q, r, s, t, u):
        self.q, self.r, self.s, self.u = q, r, s, u
        self.logt = math.log(t)
        self.start = math.log(q / r)
        self.scale = 1.0 / math.sqrt(q)

    def log(self, x):
        with np.errstate(over="ignore"):
            e = np.exp(x)
        return (
            self.q * x
            - self.r * e
            - self.s * expit(x - self.logt)
            - self.u * np.logaddexp(self.logt, x)
        )

    def log_rel(self, x, x0):
        d = x - x0
        with np.errstate(over="ignore"):
            return (
                self.q * d
                - self.r * math.exp(x0) * np.expm1(d)
                - self.s * (expit(x - self.logt) - expit(x0 - self.logt))
                - self.u * (np.logaddexp(self.logt, x) - np.logaddexp(self.logt, x0))
            )

    def _sig(self, x):
        z = x - self.logt
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        ez = math.exp(z)
        return ez / (1.0 + ez)

    def d1(self, x):
        sg = self._sig(x)
        return self.q - self.r * _safe_exp(x) - self.s * sg * (1.0 - sg) - self.u * sg

    def d2(self, x):
        sg = self._sig(x)
        v = sg * (1.0 - sg)
        return -self.r * _safe_exp(x) - self.s * v * (1.0 - 2.0 * sg) - self.u * v


class _FamilyC(_LogIntegrand):
    def __init__(self, kernel: IntegrandKernel, q, r):
        self.kernel, self.q, self.r = kernel, q, r
        self.scale = 1.0 / math.sqrt(2.0 * r)
        if kernel is IntegrandKernel.LOGISTIC:
            self.start = (q - 0.5) / (2.0 * r)
        else:
            self.start = min(q / (2.0 * r), math.log(max(q, 1.0)))

    def log(self, x):
        base = self.q * x - self.r * x * x
        if self.kernel is IntegrandKernel.LOGISTIC:
            return base - np.logaddexp(0.0, x)
        with np.errstate(over="ignore"):
            return base - np.exp(x)

    def log_rel(self, x, x0):
        d = x - x0
        base = (self.q - self.r * (2.0 * x0 + d)) * d
        if self.kernel is IntegrandKernel.LOGISTIC:
            return base - (np.logaddexp(0.0, x) - np.logaddexp(0.0, x0))
        with np.errstate(over="ignore"):
            return base - math.exp(x0) * np.expm1(d)

    def _bprime(self, x):
        if self.kernel is IntegrandKernel.LOGISTIC:
            if x >= 0:
                return 1.0 / (1.0 + math.exp(-x))
            ex = math.exp(x)
            return ex / (1.0 + ex)
        return _safe_exp(x)

    def d1(self, x):
        return self.q - 2.0 * self.r * x - self._bprime(x)

    def d2(self, x):
        if self.kernel is IntegrandKernel.LOGISTIC:
            sg = self._bprime(x)
            return -2.0 * self.r - sg * (1.0 - sg)
        return -2.0 * self.r - _safe_exp(x)


# ---------------------------------------------------------------------------
# Mode finding and the adaptive trapezoid core
# ---------------------------------------------------------------------------


def _find_mode(f: _LogIntegrand) -> float:
    """Root of ``f.d1`` where it changes sign from + to -, by safeguarded Newton."""
    x = f.start
    g = f.d1(x)
    if g == 0.0:
        return x
    step = f.scale
    if g > 0.0:
        lo, hi = x, x + step
        for _ in range(_MAX_NEWTON):
            if f.d1(hi) <= 0.0:
                break
            lo, step = hi, 2.0 * step
            hi = lo + step
        else:
            raise NumericError("could not bracket the mode of the integrand")
    else:
        lo, hi = x - step, x
        for _ in range(_MAX_NEWTON):
            if f.d1(lo) >= 0.0:
                break
            hi, step = lo, 2.0 * step
            lo = hi - step
        else:
            raise NumericError("could not bracket the mode of the integrand")
    x = 0.5 * (lo + hi) if not lo <= x <= hi else x
    for _ in range(_MAX_NEWTON):
        g = f.d1(x)
        if g == 0.0:
            return x
        if g > 0.0:
            lo = x
        else:
            hi = x
        h2 = f.d2(x)
        x_new = x - g / h2 if h2 < 0.0 else math.nan
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4.0 * np.finfo(float).eps * max(1.0, abs(x)):
            return x_new
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)):
            return 0.5 * (lo + hi)
        x = x_new
    raise NumericError("mode search did not converge")


# A probe maps nodes x to (log|g(x)|, sign g(x)); the integral of f * g is
# accumulated for every probe on the shared node set.
Probe = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


def _power_probe(p: int, center: float = 0.0) -> Probe:
    def probe(x):
        z = x - center
        if p == 0:
            return np.zeros_like(z), np.ones_like(z)
        with np.errstate(divide="ignore"):
            logabs = p * np.log(np.abs(z))
        return logabs, np.sign(z) ** p

    return probe


def _exp_probe(center: float) -> Probe:
    def probe(x):
        return x - center, np.ones_like(x)

    return probe


@dataclass
class _Grid:
    x: np.ndarray
    logf: np.ndarray  # log-integrand at nodes minus its value at the mode
    logw: np.ndarray  # logf + log of trapezoid weights
    const: float
    sums: list  # per probe: LogValue of the integral (constant excluded)


def _probe_sums(logw, x, probes):
    out = []
    for probe in probes:
        logabs, sgn = probe(x)
        L = logw + logabs
        M = np.max(L)
        if not np.isfinite(M):
            out.append((M, 0.0, 0.0))
            continue
        e = np.exp(L - M)
        out.append((float(M), float(np.dot(sgn, e)), float(np.sum(e))))
    return out


def _tails_ok(logf_x, x, probes, side):
    """Whether every probe-weighted integrand has decayed enough at the given end."""
    idx = 0 if side == "lo" else -1
    for probe in probes:
        logabs, _ = probe(x)
        L = logf_x + logabs
        top = np.max(L)
        if L[idx] > top - _TAIL_DROP:
            return False
    return True


def _integrate(f: _LogIntegrand, probes: Sequence[Probe], cfg: QuadConfig) -> _Grid:
    mode = _find_mode(f)
    # Integrate exp{log f(x) - log f(mode)} and carry log f(mode) in the constant.
    const = f.const + float(f.log(np.array([mode]))[0])
    curv = f.d2(mode)
    sd = 1.0 / math.sqrt(-curv) if curv < 0 and math.isfinite(curv) else f.scale
    half = cfg.tail_halfwidth_sigmas * sd
    lo, hi = mode - half, mode + half
    n = cfg.initial_nodes

    # Widen the window until all integrands are negligible at both ends.
    grow_lo = grow_hi = half
    for _ in range(_MAX_WINDOW_GROWTH):
        x = np.linspace(lo, hi, n)
        with np.errstate(over="ignore", invalid="ignore"):
            lf = f.log_rel(x, mode)
        if np.any(np.isnan(lf)):
            raise NumericError("integrand evaluated to NaN")
        ok_lo = _tails_ok(lf, x, probes, "lo")
        ok_hi = _tails_ok(lf, x, probes, "hi")
        if ok_lo and ok_hi:
            break
        if not ok_lo:
            lo -= grow_lo
            grow_lo *= 2.0
        if not ok_hi:
            hi += grow_hi
            grow_hi *= 2.0
    else:
        raise NumericError("integrand does not decay; the integral may diverge")

    def weights(lf_, n_):
        h = (hi - lo) / (n_ - 1)
        lw = lf_ + math.log(h)
        lw[0] -= math.log(2.0)
        lw[-1] -= math.log(2.0)
        return lw

    logw = weights(lf, n)
    prev = _probe_sums(logw, x, probes)
    for _ in range(cfg.max_doublings):
        mid = 0.5 * (x[:-1] + x[1:])
        with np.errstate(over="ignore", invalid="ignore"):
            lf_mid = f.log_rel(mid, mode)
        if np.any(np.isnan(lf_mid)):
            raise NumericError("integrand evaluated to NaN")
        n = 2 * n - 1
        x_new = np.empty(n)
        x_new[0::2], x_new[1::2] = x, mid
        lf_new = np.empty(n)
        lf_new[0::2], lf_new[1::2] = lf, lf_mid
        x, lf = x_new, lf_new
        logw = weights(lf, n)
        cur = _probe_sums(logw, x, probes)
        converged = True
        for (M0, S0, _), (M1, S1, A1) in zip(prev, cur):
            if A1 == 0.0:
                continue
            diff = S1 - S0 * math.exp(M0 - M1) if math.isfinite(M0) else S1
            if abs(diff) > cfg.rel_tol * A1:
                converged = False
                break
        if converged:
            sums = []
            for M, S, _ in cur:
                if S == 0.0 or not math.isfinite(M) or M + math.log(abs(S)) + const < math.log(
                    cfg.abs_tol
                ):
                    sums.append(LogValue(-math.inf, 0))
                else:
                    sums.append(LogValue(float(M) + math.log(abs(S)), 1 if S > 0 else -1))
            return _Grid(x=x, logf=lf, logw=logw, const=const, sums=sums)
        prev = cur
    last = [LogValue(M + math.log(abs(S)), 1 if S > 0 else -1) if S else None for M, S, _ in prev]
    raise NumericError(
        f"quadrature did not converge after {cfg.max_doublings} doublings; "
        f"last estimates {last} and {cur}"
    )


def _with_const(v: LogValue, const: float) -> LogValue:
    if v.sign == 0:
        return v
    return LogValue(v.log_magnitude + const, v.sign)


def _normalized_weights(grid: _Grid) -> np.ndarray:
    w = np.exp(grid.logw - np.max(grid.logw))
    return w / np.sum(w)


# ---------------------------------------------------------------------------
# Argument checking
# ---------------------------------------------------------------------------


def _finite(**kw):
    for k, v in kw.items():
        if not math.isfinite(v):
            raise DomainError(f"argument {k} must be finite, got {v!r}")


def _check_p(p):
    if int(p) != p or p < 0:
        raise DomainError(f"argument p must be a non-negative integer, got {p!r}")
    return int(p)


def _make_A(q, r, s, t, u) -> _FamilyA:
    q, r, s, t, u = map(float, (q, r, s, t, u))
    _finite(q=q, r=r, s=s, t=t, u=u)
    if not r > 0:
        raise DomainError(f"A family needs r > 0, got r={r!r}")
    if not t > 0.25 * s * s:
        raise DomainError(f"A family needs t > s^2/4, got s={s!r}, t={t!r}")
    if not u >= 0:
        raise DomainError(f"A family needs u >= 0, got u={u!r}")
    return _FamilyA(q, r, s, t, u)


def _make_B(q, r, s, t, u) -> _FamilyB:
    q, r, s, t, u = map(float, (q, r, s, t, u))
    _finite(q=q, r=r, s=s, t=t, u=u)
    if not q > 0:
        raise DomainError(f"B family needs q > 0 for convergence at -inf, got q={q!r}")
    if not r > 0:
        raise DomainError(f"B family needs r > 0, got r={r!r}")
    if not s >= 0:
        raise DomainError(f"B family needs s >= 0, got s={s!r}")
    if not t > 0:
        raise DomainError(f"B family needs t > 0, got t={t!r}")
    if not u > 0:
        raise DomainError(f"B family needs u > 0, got u={u!r}")
    return _FamilyB(q, r, s, t, u)


def _make_C(kernel, q, r) -> _FamilyC:
    kernel = IntegrandKernel(kernel)
    q, r = float(q), float(r)
    _finite(q=q, r=r)
    if not r > 0:
        raise DomainError(f"C family needs r > 0, got r={r!r}")
    return _FamilyC(kernel, q, r)


# ---------------------------------------------------------------------------
# Public integrals
# ---------------------------------------------------------------------------


def integral_A(p, q, r, s, t, u, cfg: QuadConfig | None = None) -> LogValue:
    """``int x^p exp(q x - r x^2) / (x^2 + s x + t)^u dx`` as a :class:`LogValue`.

    Parameters
    ----------
    p : int
        Non-negative power of ``x``.
    q, r, s, t, u : float
        ``r > 0``, ``t > s^2/4``, ``u >= 0`` (``u = 0`` gives a Gaussian integral).
    cfg : QuadConfig, optional
    """
    p = _check_p(p)
    f = _make_A(q, r, s, t, u)
    grid = _integrate(f, [_power_probe(p)], cfg or DEFAULT_CONFIG)
    return _with_const(grid.sums[0], grid.const)


def integral_B(p, q, r, s, t, u, cfg: QuadConfig | None = None) -> LogValue:
    """``int x^p exp{q x - r e^x - s e^x/(t+e^x)} / (t+e^x)^u dx`` as a :class:`LogValue`.

    Requires ``q > 0``, ``r > 0``, ``s >= 0``, ``t > 0`` and ``u > 0``.
    """
    p = _check_p(p)
    f = _make_B(q, r, s, t, u)
    grid = _integrate(f, [_power_probe(p)], cfg or DEFAULT_CONFIG)
    return _with_const(grid.sums[0], grid.const)


def integral_C(kernel, p, q, r, cfg: QuadConfig | None = None) -> LogValue:
    """``int x^p exp{q x - r x^2 - b(x)} dx`` for ``p`` in {0, 1, 2}."""
    p = _check_p(p)
    if p > 2:
        raise DomainError(f"C family is defined here for p in (0, 1, 2), got {p}")
    f = _make_C(kernel, q, r)
    grid = _integrate(f, [_power_probe(p)], cfg or DEFAULT_CONFIG)
    return _with_const(grid.sums[0], grid.const)


def _mean_var(f: _LogIntegrand, cfg: QuadConfig) -> tuple[float, float]:
    center = _find_mode(f)
    grid = _integrate(f, [_power_probe(k, center) for k in (0, 1, 2)], cfg)
    w = _normalized_weights(grid)
    z = grid.x - center
    m = float(np.dot(w, z))
    var = float(np.dot(w, (z - m) ** 2))
    return center + m, var


def mean_var_A(q, r, s, t, u, cfg: QuadConfig | None = None) -> tuple[float, float]:
    """Mean and variance of the density proportional to the p = 0 A-integrand."""
    return _mean_var(_make_A(q, r, s, t, u), cfg or DEFAULT_CONFIG)


def mean_var_C(kernel, q, r, cfg: QuadConfig | None = None) -> tuple[float, float]:
    """Mean and variance of the density proportional to the p = 0 C-integrand."""
    return _mean_var(_make_C(kernel, q, r), cfg or DEFAULT_CONFIG)


def moment_ratios_C(kernel, q, r, cfg: QuadConfig | None = None) -> tuple[float, float]:
    """``(C(1,q,r)/C(0,q,r), C(2,q,r)/C(0,q,r))`` from a single node set.

    The ratios are formed from centered moments, so ``m2 > m1^2`` holds
    whenever the variance is positive.
    """
    mean, var = mean_var_C(kernel, q, r, cfg)
    return mean, var + mean * mean


def log_mgf_gap_B(q, r, s, t, u, cfg: QuadConfig | None = None) -> tuple[float, float]:
    """Mean ``E x`` and gap ``log E e^x - E x`` under the p = 0 B-density.

    In terms of the B family, ``E x = B(1,q,...)/B(0,q,...)`` and
    ``log E e^x = log{B(0,q+1,...)/B(0,q,...)}``. The gap is positive by
    Jensen's inequality. It is computed as ``log1p(E[expm1(x - E x)])`` so
    that small gaps from concentrated densities keep full relative accuracy.
    """
    cfg = cfg or DEFAULT_CONFIG
    f = _make_B(q, r, s, t, u)
    center = _find_mode(f)
    grid = _integrate(
        f, [_power_probe(0), _power_probe(1, center), _exp_probe(center)], cfg
    )
    w = _normalized_weights(grid)
    z = grid.x - center
    m = float(np.dot(w, z))
    with np.errstate(over="ignore"):
        gap = math.log1p(float(np.dot(w, np.expm1(z - m))))
    return center + m, gap
