"""Exponential-family natural parameters, conversions and log-partition gradients.

Every message in the engine is a :class:`NatParam`: a natural-parameter
vector tagged with the family it belongs to. The families are

* univariate Normal, ``T(x) = (x, x^2)``;
* multivariate Normal of dimension ``d``, ``T(x) = (x, vec(x x^T))`` with the
  second block stored as a full column-major ``d*d`` vector;
* Inverse Chi-Squared, ``T(x) = (log x, 1/x)``;
* Inverse Wishart of dimension ``d``, ``T(X) = (log|X|, vec(X^{-1}))``;
* Moon Rock, ``T(x) = (x log x - log Gamma(x), x)`` (type-level only).

Kullback-Leibler projection onto the Normal and Inverse Chi-Squared families
reduces to inverting the gradient of the log-partition function; both
directions are provided in closed form, the Inverse Chi-Squared inverse
relying on a bracketed Newton inversion of ``log(x) - digamma(x)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, MomentDomainError, NumericError

__all__ = [
    "FamilyKind",
    "FamilyTag",
    "NatParam",
    "MomentVector",
    "CommonNormal",
    "CommonMVN",
    "CommonInvChiSq",
    "NORMAL",
    "INV_CHISQ",
    "vec",
    "unvec",
    "digamma",
    "trigamma",
    "logmdigamma",
    "inv_logmdigamma",
    "log_partition_normal",
    "log_partition_invchisq",
    "normal_common_to_natural",
    "normal_natural_to_common",
    "mvn_common_to_natural",
    "mvn_natural_to_common",
    "invchisq_common_to_natural",
    "invchisq_natural_to_common",
    "grad_A_normal",
    "inv_grad_A_normal",
    "grad_A_invchisq",
    "inv_grad_A_invchisq",
    "in_natural_domain",
    "in_moment_domain",
]

EULER_GAMMA = 0.57721566490153286061


# ---------------------------------------------------------------------------
# Family tags and parameter containers
# ---------------------------------------------------------------------------


class FamilyKind(enum.Enum):
    UNIVARIATE_NORMAL = "UnivariateNormal"
    MULTIVARIATE_NORMAL = "MultivariateNormal"
    INVERSE_CHI_SQUARED = "InverseChiSquared"
    INVERSE_WISHART = "InverseWishart"
    MOON_ROCK = "MoonRock"


_DIMENSIONED = (FamilyKind.MULTIVARIATE_NORMAL, FamilyKind.INVERSE_WISHART)


@dataclass(frozen=True)
class FamilyTag:
    """Identifies an exponential family (and its dimension where relevant).

    Parameters
    ----------
    kind : FamilyKind
    d : int
        Dimension; must be 1 for the scalar families.
    """

    kind: FamilyKind
    d: int = 1

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ContractError(f"family dimension must be a positive integer, got {self.d!r}")
        if self.kind not in _DIMENSIONED and self.d != 1:
            raise ContractError(f"{self.kind.value} has no dimension parameter")

    @classmethod
    def normal(cls) -> "FamilyTag":
        return cls(FamilyKind.UNIVARIATE_NORMAL)

    @classmethod
    def mvn(cls, d: int) -> "FamilyTag":
        return cls(FamilyKind.MULTIVARIATE_NORMAL, int(d))

    @classmethod
    def invchisq(cls) -> "FamilyTag":
        return cls(FamilyKind.INVERSE_CHI_SQUARED)

    @classmethod
    def inverse_wishart(cls, d: int) -> "FamilyTag":
        return cls(FamilyKind.INVERSE_WISHART, int(d))

    @classmethod
    def moon_rock(cls) -> "FamilyTag":
        return cls(FamilyKind.MOON_ROCK)

    @property
    def eta_length(self) -> int:
        if self.kind is FamilyKind.MULTIVARIATE_NORMAL:
            return self.d + self.d * self.d
        if self.kind is FamilyKind.INVERSE_WISHART:
            return 1 + self.d * self.d
        return 2

    def __str__(self) -> str:
        if self.kind in _DIMENSIONED:
            return f"{self.kind.value}({self.d})"
        return self.kind.value


NORMAL = FamilyTag.normal()
INV_CHISQ = FamilyTag.invchisq()


@dataclass(frozen=True, eq=False)
class NatParam:
    """Natural-parameter vector tagged with its exponential family.

    Properness is *not* enforced here: expectation propagation routinely
    passes improper messages. Use :func:`in_natural_domain` to check.
    """

    family: FamilyTag
    eta: np.ndarray = field(repr=True)

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(-1)
        if eta.size != self.family.eta_length:
            raise ContractError(
                f"{self.family} natural parameter needs length {self.family.eta_length}, "
                f"got {eta.size}"
            )
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def zeros(cls, family: FamilyTag) -> "NatParam":
        return cls(family, np.zeros(family.eta_length))

    def __add__(self, other: "NatParam") -> "NatParam":
        _check_same_family(self, other)
        return NatParam(self.family, self.eta + other.eta)

    def __sub__(self, other: "NatParam") -> "NatParam":
        _check_same_family(self, other)
        return NatParam(self.family, self.eta - other.eta)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NatParam):
            return NotImplemented
        return self.family == other.family and np.array_equal(self.eta, other.eta)

    def __hash__(self):
        return hash((self.family, self.eta.tobytes()))

    @property
    def first(self) -> np.ndarray:
        """First block of the natural parameter (``eta_1``)."""
        if self.family.kind is FamilyKind.MULTIVARIATE_NORMAL:
            return self.eta[: self.family.d]
        return self.eta[:1]

    @property
    def second(self) -> np.ndarray:
        """Second block of the natural parameter (``eta_2``)."""
        if self.family.kind is FamilyKind.MULTIVARIATE_NORMAL:
            return self.eta[self.family.d :]
        return self.eta[1:]


def _check_same_family(p: NatParam, q: NatParam) -> None:
    if p.family != q.family:
        raise ContractError(f"family mismatch: {p.family} vs {q.family}")


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Expected sufficient statistic ``E T(x)`` for some density."""

    family: FamilyTag
    tau: np.ndarray

    def __post_init__(self):
        tau = np.array(self.tau, dtype=float).reshape(-1)
        if tau.size != self.family.eta_length:
            raise ContractError(
                f"{self.family} moment vector needs length {self.family.eta_length}, got {tau.size}"
            )
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class CommonNormal:
    mu: float
    sigsq: float


@dataclass(frozen=True, eq=False)
class CommonMVN:
    mu: np.ndarray
    Sigma: np.ndarray


@dataclass(frozen=True)
class CommonInvChiSq:
    """Inverse Chi-Squared with density proportional to ``x^(-kappa/2-1) exp(-lambda/(2x))``."""

    kappa: float
    lam: float


# ---------------------------------------------------------------------------
# vec helpers (column-major)
# ---------------------------------------------------------------------------


def vec(M: np.ndarray) -> np.ndarray:
    """Stack the columns of ``M`` into a vector."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec` for a square ``d x d`` matrix."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if d is None:
        d = int(round(math.sqrt(v.size)))
    if d * d != v.size:
        raise ContractError(f"cannot reshape vector of length {v.size} to a square matrix")
    return v.reshape((d, d), order="F")


# ---------------------------------------------------------------------------
# Digamma, trigamma and log - digamma
# ---------------------------------------------------------------------------

# Coefficients B_{2k}/(2k) of x^{-2k} in log(x) - digamma(x) - 1/(2x), k = 1..7.
_LMD_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# Below this argument the recurrence psi(x) = psi(x + 1) - 1/x is used to shift
# into the asymptotic regime; at 10 the first neglected term is below 1e-15.
_ASYMPTOTIC_FROM = 10.0


def _lmd_series(x: float) -> float:
    """Asymptotic expansion of log(x) - digamma(x), accurate for x >= 10."""
    z = 1.0 / (x * x)
    s = 0.0
    for c in reversed(_LMD_COEF):
        s = (s + c) * z
    return 0.5 / x + s


def _lmd_series_deriv(x: float) -> float:
    """Derivative of :func:`_lmd_series`."""
    z = 1.0 / (x * x)
    s = 0.0
    for k in range(len(_LMD_COEF), 0, -1):
        s = (s - 2 * k * _LMD_COEF[k - 1]) * z
    return s / x - 0.5 / (x * x)


def _check_positive(x: float, name: str) -> float:
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"{name} must be finite and > 0, got {x!r}")
    return x


def logmdigamma(x: float) -> float:
    """Evaluate ``log(x) - digamma(x)`` for ``x > 0`` without cancellation.

    Parameters
    ----------
    x : float
        Positive argument.

    Returns
    -------
    float
        Strictly positive value, decreasing in ``x``; behaves like
        ``1/(2x)`` for large ``x`` and ``1/x`` for small ``x``.
    """
    x = _check_positive(x, "x")
    if x >= _ASYMPTOTIC_FROM:
        return _lmd_series(x)
    n = int(math.ceil(_ASYMPTOTIC_FROM - x))
    shifted = x + n
    acc = 0.0
    for k in range(n):
        acc += 1.0 / (x + k)
    return acc - math.log1p(n / x) + _lmd_series(shifted)


def _logmdigamma_deriv(x: float) -> float:
    if x >= _ASYMPTOTIC_FROM:
        return _lmd_series_deriv(x)
    n = int(math.ceil(_ASYMPTOTIC_FROM - x))
    acc = 0.0
    for k in range(n):
        acc -= 1.0 / (x + k) ** 2
    return acc + n / (x * (x + n)) + _lmd_series_deriv(x + n)


def digamma(x: float) -> float:
    """Digamma function for ``x > 0`` (recurrence shift plus asymptotic series)."""
    x = _check_positive(x, "x")
    return math.log(x) - logmdigamma(x)


def trigamma(x: float) -> float:
    """Trigamma function for ``x > 0``."""
    x = _check_positive(x, "x")
    return 1.0 / x - _logmdigamma_deriv(x)


def inv_logmdigamma(y: float, max_iter: int = 200) -> float:
    """Invert ``log(x) - digamma(x) = y`` for ``y > 0``.

    The root is bracketed by ``(1/(2y), 1/y)`` (Guo and Qi's bounds).
    Newton's method starts at the geometric mean ``1/(y sqrt 2)`` and falls
    back to bisection whenever a step leaves the current bracket.

    Parameters
    ----------
    y : float
        Positive target value.
    max_iter : int
        Iteration cap; exceeding it raises :class:`NumericError`.

    Returns
    -------
    float
        ``x`` with ``logmdigamma(x) = y`` to about machine precision.
    """
    y = _check_positive(y, "y")
    lo, hi = 0.5 / y, 1.0 / y
    x = 1.0 / (y * math.sqrt(2.0))
    for _ in range(max_iter):
        f = logmdigamma(x) - y
        if f == 0.0:
            return x
        # logmdigamma is decreasing: f > 0 means x lies left of the root.
        if f > 0.0:
            lo = x
        else:
            hi = x
        step = f / _logmdigamma_deriv(x)
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 2.0 * np.finfo(float).eps * x:
            return x_new
        if hi - lo <= 2.0 * np.finfo(float).eps * hi:
            return 0.5 * (lo + hi)
        x = x_new
    raise NumericError(f"inverse of log - digamma did not converge for y={y!r}")


# ---------------------------------------------------------------------------
# Log-partition functions
# ---------------------------------------------------------------------------


def log_partition_normal(eta) -> float:
    """``A(eta) = -eta1^2/(4 eta2) - log(-2 eta2)/2`` for the univariate Normal."""
    e1, e2 = np.asarray(eta, dtype=float)
    if not e2 < 0:
        raise DomainError("Normal log-partition requires eta2 < 0")
    return -0.25 * e1 * e1 / e2 - 0.5 * math.log(-2.0 * e2)


def log_partition_invchisq(eta) -> float:
    """``A(eta) = (eta1 + 1) log(-eta2) + log Gamma(-eta1 - 1)`` for Inverse Chi-Squared."""
    e1, e2 = np.asarray(eta, dtype=float)
    if not (e1 < -1 and e2 < 0):
        raise DomainError("Inverse Chi-Squared log-partition requires eta1 < -1, eta2 < 0")
    return (e1 + 1.0) * math.log(-e2) + math.lgamma(-e1 - 1.0)


# ---------------------------------------------------------------------------
# Common <-> natural conversions
# ---------------------------------------------------------------------------


def _require_family(p: NatParam, kind: FamilyKind) -> None:
    if p.family.kind is not kind:
        raise ContractError(f"expected {kind.value}, got {p.family}")


def normal_common_to_natural(c: CommonNormal) -> NatParam:
    """Natural parameters ``(mu/sigsq, -1/(2 sigsq))`` of a Normal."""
    sigsq = float(c.sigsq)
    if not sigsq > 0 or not math.isfinite(sigsq):
        raise DomainError(f"Normal variance must be positive, got {sigsq!r}")
    return NatParam(NORMAL, (c.mu / sigsq, -0.5 / sigsq))


def normal_natural_to_common(p: NatParam) -> CommonNormal:
    _require_family(p, FamilyKind.UNIVARIATE_NORMAL)
    e1, e2 = p.eta
    if not e2 < 0:
        raise DomainError(f"improper Normal natural parameter: eta2 = {e2!r} >= 0")
    return CommonNormal(mu=-e1 / (2.0 * e2), sigsq=-1.0 / (2.0 * e2))


def _spd_inverse(S: np.ndarray, what: str) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"{what} must be square, got shape {S.shape}")
    scale = max(np.abs(S).max(), np.finfo(float).tiny)
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise DomainError(f"{what} is not symmetric")
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(S)
        raise NumericError(f"{what} is not positive definite (condition estimate {cond:.3g})")
    cond = (np.diag(L).max() / np.diag(L).min()) ** 2
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise NumericError(f"{what} is numerically singular (condition estimate {cond:.3g})")
    Linv = np.linalg.inv(L)
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def mvn_common_to_natural(c: CommonMVN) -> NatParam:
    """``[Sigma^{-1} mu; -vec(Sigma^{-1})/2]`` for a multivariate Normal."""
    mu = np.asarray(c.mu, dtype=float).reshape(-1)
    Sigma = np.atleast_2d(np.asarray(c.Sigma, dtype=float))
    if Sigma.shape != (mu.size, mu.size):
        raise ContractError(f"Sigma shape {Sigma.shape} does not match mean length {mu.size}")
    P = _spd_inverse(Sigma, "Sigma")
    return NatParam(FamilyTag.mvn(mu.size), np.concatenate([P @ mu, -0.5 * vec(P)]))


def mvn_natural_to_common(p: NatParam) -> CommonMVN:
    _require_family(p, FamilyKind.MULTIVARIATE_NORMAL)
    M = unvec(p.second, p.family.d)
    try:
        Sigma = _spd_inverse(-2.0 * M, "-2 vec^{-1}(eta2)")
    except NumericError as err:
        raise DomainError(f"improper multivariate Normal natural parameter: {err}") from err
    return CommonMVN(mu=Sigma @ p.first, Sigma=Sigma)


def invchisq_common_to_natural(c: CommonInvChiSq) -> NatParam:
    """``(-kappa/2 - 1, -lambda/2)`` for Inverse-Chi-Squared(kappa, lambda)."""
    if not (c.kappa > 0 and c.lam > 0):
        raise DomainError(f"Inverse Chi-Squared needs kappa > 0 and lambda > 0, got {c}")
    return NatParam(INV_CHISQ, (-0.5 * c.kappa - 1.0, -0.5 * c.lam))


def invchisq_natural_to_common(p: NatParam) -> CommonInvChiSq:
    _require_family(p, FamilyKind.INVERSE_CHI_SQUARED)
    e1, e2 = p.eta
    if not (e1 < -1 and e2 < 0):
        raise DomainError(f"improper Inverse Chi-Squared natural parameter {tuple(p.eta)}")
    return CommonInvChiSq(kappa=-2.0 * e1 - 2.0, lam=-2.0 * e2)


# ---------------------------------------------------------------------------
# Gradient of the log-partition function and its inverse
# ---------------------------------------------------------------------------


def grad_A_normal(p: NatParam) -> MomentVector:
    """Mean parameter ``(E x, E x^2)`` of a proper Normal natural parameter."""
    _require_family(p, FamilyKind.UNIVARIATE_NORMAL)
    e1, e2 = p.eta
    if not e2 < 0:
        raise DomainError(f"improper Normal natural parameter: eta2 = {e2!r} >= 0")
    return MomentVector(NORMAL, (-e1 / (2.0 * e2), (e1 * e1 - 2.0 * e2) / (4.0 * e2 * e2)))


def inv_grad_A_normal(m: MomentVector) -> NatParam:
    """Natural parameter of the Normal with ``(E x, E x^2) = tau``."""
    t1, t2 = m.tau
    var = t2 - t1 * t1
    if not var > 0:
        raise MomentDomainError(
            f"Normal moments {tuple(m.tau)} lie outside the realizable set (tau2 <= tau1^2)"
        )
    return NatParam(NORMAL, (t1 / var, -0.5 / var))


def grad_A_invchisq(p: NatParam) -> MomentVector:
    """Mean parameter ``(E log x, E 1/x)`` of a proper Inverse Chi-Squared."""
    _require_family(p, FamilyKind.INVERSE_CHI_SQUARED)
    e1, e2 = p.eta
    if not (e1 < -1 and e2 < 0):
        raise DomainError(f"improper Inverse Chi-Squared natural parameter {tuple(p.eta)}")
    return MomentVector(INV_CHISQ, (math.log(-e2) - digamma(-e1 - 1.0), (e1 + 1.0) / e2))


def inv_grad_A_invchisq(m: MomentVector) -> NatParam:
    """Natural parameter of the Inverse Chi-Squared with ``(E log x, E 1/x) = tau``."""
    t1, t2 = m.tau
    if not (t2 > 0 and t1 + math.log(t2) > 0):
        raise MomentDomainError(
            f"Inverse Chi-Squared moments {tuple(m.tau)} lie outside the realizable set "
            "(tau2 <= exp(-tau1))"
        )
    g = inv_logmdigamma(t1 + math.log(t2))
    return NatParam(INV_CHISQ, (-g - 1.0, -g / t2))


# ---------------------------------------------------------------------------
# Membership predicates
# ---------------------------------------------------------------------------


def _negative_definite(M: np.ndarray) -> bool:
    if not np.all(np.isfinite(M)):
        return False
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > 1e-12 * scale:
        return False
    try:
        np.linalg.cholesky(-0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        return False
    return True


def in_natural_domain(p: NatParam) -> bool:
    """Whether ``p`` lies in the natural parameter space of its family."""
    eta = p.eta
    if not np.all(np.isfinite(eta)):
        return False
    kind, d = p.family.kind, p.family.d
    if kind is FamilyKind.UNIVARIATE_NORMAL:
        return bool(eta[1] < 0)
    if kind is FamilyKind.INVERSE_CHI_SQUARED:
        return bool(eta[0] < -1 and eta[1] < 0)
    if kind is FamilyKind.MULTIVARIATE_NORMAL:
        return _negative_definite(unvec(eta[d:], d))
    if kind is FamilyKind.INVERSE_WISHART:
        # kappa > d - 1 translates to eta1 = -(kappa + d + 1)/2 < -d.
        return bool(eta[0] < -(d + 1) / 2 - (d - 1) / 2) and _negative_definite(unvec(eta[1:], d))
    if kind is FamilyKind.MOON_ROCK:
        return bool(eta[0] >= 0 and eta[0] + eta[1] < 0)
    raise ContractError(f"unknown family {p.family}")  # pragma: no cover


def in_moment_domain(m: MomentVector) -> bool:
    """Whether ``m`` lies in the interior of the realizable expectations."""
    tau = m.tau
    if not np.all(np.isfinite(tau)):
        return False
    kind, d = m.family.kind, m.family.d
    if kind is FamilyKind.UNIVARIATE_NORMAL:
        return bool(tau[1] > tau[0] ** 2)
    if kind is FamilyKind.INVERSE_CHI_SQUARED:
        return bool(tau[1] > math.exp(-tau[0]))
    if kind is FamilyKind.MULTIVARIATE_NORMAL:
        mu = tau[:d]
        C = unvec(tau[d:], d) - np.outer(mu, mu)
        return _negative_definite(-C)
    raise ContractError(f"no moment-domain predicate for {m.family}")
