"""Fragment updates: incoming messages in, damped outgoing messages out.

A fragment is a factor together with its neighbouring stochastic nodes. Each
update function takes the stochastic-node-to-factor natural parameters (and
the factor's previous outgoing messages), computes the new factor-to-node
messages, and damps them as ``eps * old + (1 - eps) * new``.

The nine fragment kinds are:

==========================  ==============================  =======================
data class                  neighbours (in order)           update
==========================  ==============================  =======================
``GaussianPrior``           theta (MVN)                     ``gaussian_prior_update``
``InverseWishartPrior``     Theta (Inv-chi^2 / Inv-Wishart) ``inverse_wishart_prior_update``
``IteratedInvChiSq``        sigma^2, a (Inv-chi^2)          ``iter_invchisq_update``
``LinComb``                 alpha (Normal), theta (MVN)     ``lin_comb_update``
``MultLinComb``             alpha (MVN), theta (MVN)        ``mult_lin_comb_update``
``GaussianLik``             alpha (Normal), sigma^2         ``gaussian_lik_update``
``LogisticLik``             alpha (Normal)                  ``logistic_update``
``ProbitLik``               alpha (Normal)                  ``probit_update``
``PoissonLik``              alpha (Normal)                  ``poisson_update``
==========================  ==============================  =======================

:func:`update` dispatches on the data class and is what the scheduler calls.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DomainError, NumericError
from .expfam import (
    INV_CHISQ,
    NORMAL,
    CommonMVN,
    FamilyKind,
    FamilyTag,
    NatParam,
    mvn_common_to_natural,
    unvec,
    vec,
)
from .quadrature import QuadConfig

__all__ = [
    "GaussianPrior",
    "InverseWishartPrior",
    "IteratedInvChiSq",
    "LinComb",
    "MultLinComb",
    "GaussianLik",
    "LogisticLik",
    "ProbitLik",
    "PoissonLik",
    "FragmentData",
    "damp",
    "gaussian_prior_update",
    "inverse_wishart_prior_update",
    "iter_invchisq_update",
    "lin_comb_update",
    "mult_lin_comb_update",
    "gaussian_lik_update",
    "logistic_update",
    "probit_update",
    "poisson_update",
    "update",
]


# ---------------------------------------------------------------------------
# Fragment data
# ---------------------------------------------------------------------------


def _frozen_array(x, ndim: int) -> np.ndarray:
    a = np.array(x, dtype=float)
    if ndim == 1:
        a = a.reshape(-1)
    elif ndim == 2:
        a = np.atleast_2d(a)
    if not np.all(np.isfinite(a)):
        raise DomainError("fragment data must be finite")
    a.setflags(write=False)
    return a


def _check_spd(M: np.ndarray, name: str) -> None:
    if M.shape[0] != M.shape[1]:
        raise ContractError(f"{name} must be square, got {M.shape}")
    if np.abs(M - M.T).max() > 1e-12 * max(np.abs(M).max(), 1e-300):
        raise DomainError(f"{name} must be symmetric")


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """``theta ~ N(mu_theta, Sigma_theta)``."""

    mu_theta: np.ndarray
    Sigma_theta: np.ndarray

    def __post_init__(self):
        mu = _frozen_array(self.mu_theta, 1)
        S = _frozen_array(self.Sigma_theta, 2)
        if S.shape != (mu.size, mu.size):
            raise ContractError(f"Sigma_theta shape {S.shape} does not match mu length {mu.size}")
        _check_spd(S, "Sigma_theta")
        object.__setattr__(self, "mu_theta", mu)
        object.__setattr__(self, "Sigma_theta", S)

    @property
    def signature(self):
        return (FamilyTag.mvn(self.mu_theta.size),)


@dataclass(frozen=True, eq=False)
class InverseWishartPrior:
    """``Theta ~ Inverse-Wishart(kappa, Lambda)``; an Inverse Chi-Squared when ``d = 1``."""

    kappa: float
    Lambda: np.ndarray

    def __post_init__(self):
        L = _frozen_array(self.Lambda, 2)
        _check_spd(L, "Lambda")
        d = L.shape[0]
        if not float(self.kappa) > d - 1:
            raise DomainError(f"Inverse Wishart prior needs kappa > d - 1 = {d - 1}, got {self.kappa!r}")
        try:
            np.linalg.cholesky(L)
        except np.linalg.LinAlgError:
            raise DomainError("Lambda must be positive definite") from None
        object.__setattr__(self, "Lambda", L)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def signature(self):
        d = self.Lambda.shape[0]
        return (INV_CHISQ if d == 1 else FamilyTag.inverse_wishart(d),)


@dataclass(frozen=True)
class IteratedInvChiSq:
    """``sigma^2 | a ~ Inverse-chi^2(nu, nu/a)``, linking ``sigma^2`` and ``a``."""

    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise DomainError(f"nu must be positive, got {self.nu!r}")

    @property
    def signature(self):
        return (INV_CHISQ, INV_CHISQ)


@dataclass(frozen=True, eq=False)
class LinComb:
    """Derived variable ``alpha = a^T theta``."""

    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen_array(self.a, 1))

    @property
    def signature(self):
        return (NORMAL, FamilyTag.mvn(self.a.size))


@dataclass(frozen=True, eq=False)
class MultLinComb:
    """Derived vector ``alpha = A^T theta`` with ``A`` of shape ``(d, d')``."""

    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen_array(self.A, 2))

    @property
    def signature(self):
        d, dp = self.A.shape
        return (FamilyTag.mvn(dp), FamilyTag.mvn(d))


@dataclass(frozen=True)
class GaussianLik:
    """``y | alpha, sigma^2 ~ N(alpha, sigma^2)``."""

    y: float

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise DomainError("Gaussian response must be finite")

    @property
    def signature(self):
        return (NORMAL, INV_CHISQ)


def _binary(y):
    if y not in (0, 1):
        raise DomainError(f"binary response must be 0 or 1, got {y!r}")
    return int(y)


@dataclass(frozen=True)
class LogisticLik:
    """``y | alpha ~ Bernoulli(1/(1 + e^{-alpha}))``."""

    y: int

    def __post_init__(self):
        object.__setattr__(self, "y", _binary(self.y))

    @property
    def signature(self):
        return (NORMAL,)


@dataclass(frozen=True)
class ProbitLik:
    """``y | alpha ~ Bernoulli(Phi(alpha))``."""

    y: int

    def __post_init__(self):
        object.__setattr__(self, "y", _binary(self.y))

    @property
    def signature(self):
        return (NORMAL,)


@dataclass(frozen=True)
class PoissonLik:
    """``y | alpha ~ Poisson(e^alpha)``."""

    y: int

    def __post_init__(self):
        if not (float(self.y) == int(self.y) and self.y >= 0):
            raise DomainError(f"Poisson response must be a non-negative integer, got {self.y!r}")
        object.__setattr__(self, "y", int(self.y))

    @property
    def signature(self):
        return (NORMAL,)


FragmentData = (
    GaussianPrior
    | InverseWishartPrior
    | IteratedInvChiSq
    | LinComb
    | MultLinComb
    | GaussianLik
    | LogisticLik
    | ProbitLik
    | PoissonLik
)

PRIOR_KINDS = (GaussianPrior, InverseWishartPrior)


# ---------------------------------------------------------------------------
# Damping
# ---------------------------------------------------------------------------


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"damping factor must lie in [0, 1), got {eps!r}")
    return eps


def damp(eta_old: NatParam, eta_new: NatParam, eps: float) -> NatParam:
    """``eps * eta_old + (1 - eps) * eta_new``."""
    eps = _check_eps(eps)
    if eta_old.family != eta_new.family:
        raise ContractError(f"cannot damp across families {eta_old.family} and {eta_new.family}")
    if eps == 0.0:
        return eta_new
    return NatParam(eta_new.family, eps * eta_old.eta + (1.0 - eps) * eta_new.eta)


def _require(p: NatParam, family: FamilyTag, what: str) -> None:
    if p.family != family:
        raise ContractError(f"{what} must be {family}, got {p.family}")


# ---------------------------------------------------------------------------
# Prior fragments (stateless)
# ---------------------------------------------------------------------------


def gaussian_prior_update(data: GaussianPrior) -> NatParam:
    """``[Sigma^{-1} mu; -vec(Sigma^{-1})/2]``."""
    return mvn_common_to_natural(CommonMVN(data.mu_theta, data.Sigma_theta))


def inverse_wishart_prior_update(data: InverseWishartPrior) -> NatParam:
    """``[-(kappa + d + 1)/2; -vec(Lambda)/2]``."""
    d = data.Lambda.shape[0]
    eta = np.concatenate([[-0.5 * (data.kappa + d + 1)], -0.5 * vec(data.Lambda)])
    return NatParam(data.signature[0], eta)


# ---------------------------------------------------------------------------
# Iterated Inverse Chi-Squared
# ---------------------------------------------------------------------------


def iter_invchisq_update(
    nu: float,
    in_sigsq: NatParam,
    in_a: NatParam,
    old_out: Sequence[NatParam],
    eps: float,
    cfg: QuadConfig | None = None,
) -> tuple[NatParam, NatParam]:
    """Messages to ``sigma^2`` and ``a`` from ``p(sigma^2 | a) = Inverse-chi^2(nu, nu/a)``.

    The factor density is ``{nu/(2a)}^{nu/2}/Gamma(nu/2) x^{-nu/2-1} exp{-nu/(2 a x)}``.
    ``G_IG3(., .; nu+2, nu)`` and ``G_IG3(., .; nu, nu)`` project for the coupling
    ``exp{-nu/(a' x)}``. Here ``a' = 2a``, so the ``a`` messages are mapped to the
    ``a'`` scale (second natural parameter doubled) before the call. The message
    back to ``a`` is mapped out again (second natural parameter halved).

    Parameters
    ----------
    nu : float
        Degrees of freedom of the implied Half-t prior on ``sigma``.
    in_sigsq, in_a : NatParam
        Messages from ``sigma^2`` and ``a`` to the factor.
    old_out : pair of NatParam
        Current messages from the factor to ``sigma^2`` and ``a``.
    eps : float
        Damping factor in [0, 1).
    """
    if not (math.isfinite(nu) and nu > 0):
        raise DomainError(f"nu must be positive, got {nu!r}")
    eps = _check_eps(eps)
    _require(in_sigsq, INV_CHISQ, "sigma^2 message")
    _require(in_a, INV_CHISQ, "a message")
    s = in_sigsq.eta
    a_scaled = in_a.eta * np.array([1.0, 2.0])
    to_sigsq = kernels.G_IG3(s, a_scaled, nu + 2.0, nu, cfg)
    to_a_scaled = kernels.G_IG3(a_scaled, s, nu, nu, cfg)
    to_a = to_a_scaled * np.array([1.0, 0.5])
    return (
        damp(old_out[0], NatParam(INV_CHISQ, to_sigsq), eps),
        damp(old_out[1], NatParam(INV_CHISQ, to_a), eps),
    )


# ---------------------------------------------------------------------------
# Linear combination fragments
# ---------------------------------------------------------------------------


def _second_block_matrix(p: NatParam) -> np.ndarray:
    M = unvec(p.second, p.family.d)
    return 0.5 * (M + M.T)


def lin_comb_update(
    a, in_alpha: NatParam, in_theta: NatParam, old_out: Sequence[NatParam], eps: float
) -> tuple[NatParam, NatParam]:
    """Messages to ``alpha`` and ``theta`` from ``delta(alpha - a^T theta)``."""
    eps = _check_eps(eps)
    a = np.asarray(a, dtype=float).reshape(-1)
    _require(in_alpha, NORMAL, "alpha message")
    _require(in_theta, FamilyTag.mvn(a.size), "theta message")
    try:
        omega = np.linalg.solve(_second_block_matrix(in_theta), a)
    except np.linalg.LinAlgError as err:
        raise NumericError(f"linear combination: singular theta precision block ({err})") from err
    k = float(omega @ a)
    if k == 0.0 or not math.isfinite(k):
        raise NumericError("linear combination: omega^T a is zero")
    to_alpha = (1.0 / k) * np.array([omega @ in_theta.first, 1.0])
    e1, e2 = in_alpha.eta
    to_theta = np.concatenate([a * e1, np.kron(a, a) * e2])
    return (
        damp(old_out[0], NatParam(NORMAL, to_alpha), eps),
        damp(old_out[1], NatParam(in_theta.family, to_theta), eps),
    )


def mult_lin_comb_update(
    A, in_alpha: NatParam, in_theta: NatParam, old_out: Sequence[NatParam], eps: float
) -> tuple[NatParam, NatParam]:
    """Messages to ``alpha`` and ``theta`` from ``delta(alpha - A^T theta)``."""
    eps = _check_eps(eps)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d, dp = A.shape
    _require(in_alpha, FamilyTag.mvn(dp), "alpha message")
    _require(in_theta, FamilyTag.mvn(d), "theta message")
    try:
        Omega = np.linalg.solve(_second_block_matrix(in_theta), A)
        K_inv = np.linalg.inv(Omega.T @ A)
    except np.linalg.LinAlgError as err:
        raise NumericError(f"multivariate linear combination: singular matrix ({err})") from err
    if not np.all(np.isfinite(K_inv)):
        raise NumericError("multivariate linear combination: singular Omega^T A")
    to_alpha = np.concatenate([K_inv @ (Omega.T @ in_theta.first), vec(K_inv)])
    to_theta = np.concatenate([A @ in_alpha.first, np.kron(A, A) @ in_alpha.second])
    return (
        damp(old_out[0], NatParam(in_alpha.family, to_alpha), eps),
        damp(old_out[1], NatParam(in_theta.family, to_theta), eps),
    )


# ---------------------------------------------------------------------------
# Likelihood fragments
# ---------------------------------------------------------------------------


def gaussian_lik_update(
    y: float,
    in_alpha: NatParam,
    in_sigsq: NatParam,
    old_out: Sequence[NatParam],
    eps: float,
    cfg: QuadConfig | None = None,
) -> tuple[NatParam, NatParam]:
    """Messages to ``alpha`` and ``sigma^2`` from ``N(y; alpha, sigma^2)``."""
    eps = _check_eps(eps)
    _require(in_alpha, NORMAL, "alpha message")
    _require(in_sigsq, INV_CHISQ, "sigma^2 message")
    c = np.array([1.0, y, y * y])
    to_alpha = kernels.G_N(in_alpha.eta, in_sigsq.eta, c, cfg)
    to_sigsq = kernels.G_IG1(in_sigsq.eta, in_alpha.eta, c, cfg)
    return (
        damp(old_out[0], NatParam(NORMAL, to_alpha), eps),
        damp(old_out[1], NatParam(INV_CHISQ, to_sigsq), eps),
    )


def _glm_update(fn, y, in_alpha, old_out, eps):
    eps = _check_eps(eps)
    _require(in_alpha, NORMAL, "alpha message")
    old = old_out[0] if isinstance(old_out, (tuple, list)) else old_out
    return damp(old, NatParam(NORMAL, fn(in_alpha.eta, y)), eps)


def logistic_update(y, in_alpha: NatParam, old_out, eps: float, cfg=None) -> NatParam:
    """Message to ``alpha`` from a logistic likelihood factor."""
    return _glm_update(lambda a, yy: kernels.H_logistic(a, yy, cfg), _binary(y), in_alpha, old_out, eps)


def probit_update(y, in_alpha: NatParam, old_out, eps: float) -> NatParam:
    """Message to ``alpha`` from a probit likelihood factor (closed form)."""
    return _glm_update(kernels.H_probit, _binary(y), in_alpha, old_out, eps)


def poisson_update(y, in_alpha: NatParam, old_out, eps: float, cfg=None) -> NatParam:
    """Message to ``alpha`` from a Poisson likelihood factor."""
    return _glm_update(lambda a, yy: kernels.H_poisson(a, yy, cfg), y, in_alpha, old_out, eps)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


@functools.singledispatch
def update(data, incoming: Sequence[NatParam], old_out: Sequence[NatParam], eps: float, cfg=None):
    """Run the update for ``data`` with messages ordered as the fragment's neighbours.

    Returns a tuple of new factor-to-node messages in the same order.
    """
    raise ContractError(f"no update registered for {type(data).__name__}")


def _damped_prior(msg: NatParam, old_out, eps) -> tuple[NatParam]:
    # Prior messages are constant; damping only matters if the old message differs.
    old = old_out[0] if old_out else None
    return (msg if old is None else damp(old, msg, eps),)


@update.register
def _(data: GaussianPrior, incoming, old_out, eps, cfg=None):
    return _damped_prior(gaussian_prior_update(data), old_out, eps)


@update.register
def _(data: InverseWishartPrior, incoming, old_out, eps, cfg=None):
    return _damped_prior(inverse_wishart_prior_update(data), old_out, eps)


@update.register
def _(data: IteratedInvChiSq, incoming, old_out, eps, cfg=None):
    return iter_invchisq_update(data.nu, incoming[0], incoming[1], old_out, eps, cfg)


@update.register
def _(data: LinComb, incoming, old_out, eps, cfg=None):
    return lin_comb_update(data.a, incoming[0], incoming[1], old_out, eps)


@update.register
def _(data: MultLinComb, incoming, old_out, eps, cfg=None):
    return mult_lin_comb_update(data.A, incoming[0], incoming[1], old_out, eps)


@update.register
def _(data: GaussianLik, incoming, old_out, eps, cfg=None):
    return gaussian_lik_update(data.y, incoming[0], incoming[1], old_out, eps, cfg)


@update.register
def _(data: LogisticLik, incoming, old_out, eps, cfg=None):
    return (logistic_update(data.y, incoming[0], old_out[0], eps, cfg),)


@update.register
def _(data: ProbitLik, incoming, old_out, eps, cfg=None):
    return (probit_update(data.y, incoming[0], old_out[0], eps),)


@update.register
def _(data: PoissonLik, incoming, old_out, eps, cfg=None):
    return (poisson_update(data.y, incoming[0], old_out[0], eps, cfg),)
