"""Factor-graph builders for Bayesian linear models and GLMM/GAMMs.

Node and factor identifiers follow a fixed naming scheme so that results can be
read back by name:

* linear model: ``"beta"``, ``("alpha", i)``, ``"sigsq"``, ``"a"``;
* GLMM: ``"beta"`` (fixed effects, fed by the Gaussian prior), ``"theta"``
  (stacked ``(beta, u_grp, u_spl)``), ``("alpha", l)``, ``("u_grp", i)``,
  ``("u_spl", k)``, and ``"sigsq_<part>"``/``"a_<part>"`` for
  ``part`` in ``grp``, ``spl``, ``eps``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DomainError
from .expfam import (
    INV_CHISQ,
    NORMAL,
    CommonMVN,
    CommonNormal,
    FamilyKind,
    FamilyTag,
    NatParam,
    mvn_common_to_natural,
    mvn_natural_to_common,
    normal_common_to_natural,
    normal_natural_to_common,
)
from .fragments import (
    GaussianLik,
    GaussianPrior,
    InverseWishartPrior,
    IteratedInvChiSq,
    LinComb,
    LogisticLik,
    MultLinComb,
    PoissonLik,
    ProbitLik,
)
from .graph import FactorGraph, FitResult

__all__ = [
    "Dataset",
    "Priors",
    "SplineTerm",
    "ModelSpec",
    "DesignMatrices",
    "TransformRecord",
    "LIKELIHOODS",
    "build_linear_model",
    "design_matrices",
    "build_glmm",
    "spline_basis",
    "standardize",
    "destandardize",
    "simulate_glmm",
]

LIKELIHOODS = ("gaussian", "logistic", "probit", "poisson")


# ---------------------------------------------------------------------------
# Data and specification
# ---------------------------------------------------------------------------


class Dataset:
    """Named real-valued columns of equal length.

    Parameters
    ----------
    columns : mapping of str to array_like
        Column name to values.
    """

    def __init__(self, columns: Mapping[str, Sequence[float]]):
        cols = {}
        n = None
        for name, values in columns.items():
            arr = np.asarray(values, dtype=float).reshape(-1)
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ContractError(f"column {name!r} has {arr.size} rows, expected {n}")
            cols[str(name)] = arr
        self._cols = cols
        self.n = 0 if n is None else n

    @property
    def columns(self) -> list[str]:
        return list(self._cols)

    def __contains__(self, name) -> bool:
        return name in self._cols

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._cols[name]
        except KeyError:
            raise ContractError(f"missing column {name!r}") from None

    def with_columns(self, **updates) -> "Dataset":
        cols = dict(self._cols)
        cols.update(updates)
        return Dataset(cols)

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Read a CSV with a header row. Lines starting with ``#`` are skipped."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
        if not rows:
            raise ContractError(f"{path}: no header row")
        header, body = rows[0], [r for r in rows[1:] if r]
        cols: dict[str, list[float]] = {h.strip(): [] for h in header}
        names = list(cols)
        for lineno, row in enumerate(body, start=2):
            if len(row) != len(names):
                raise ContractError(f"{path}: row {lineno} has {len(row)} fields, expected {len(names)}")
            for name, cell in zip(names, row):
                try:
                    cols[name].append(float(cell))
                except ValueError:
                    raise ContractError(f"{path}: column {name!r}, row {lineno}: not a number: {cell!r}") from None
        return cls(cols)

    def to_csv(self, path_or_file, header_lines: Sequence[str] = ()) -> None:
        """Write a CSV; ``header_lines`` become leading ``#`` comment lines."""
        if hasattr(path_or_file, "write"):
            self._write_csv(path_or_file, header_lines)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self._write_csv(fh, header_lines)

    def _write_csv(self, fh, header_lines) -> None:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns)
        for i in range(self.n):
            w.writerow([repr(float(self._cols[c][i])) for c in self.columns])


# Shape of the Inverse-chi^2 prior that pins a known residual variance. Its
# relative spread is sqrt(2/kappa), about 0.4%. Much larger values put the
# sigma^2 naturals near kappa/2, where rounding in the message updates exceeds
# the default convergence tolerance.
KNOWN_VARIANCE_KAPPA = 1e5


@dataclass(frozen=True)
class Priors:
    """Hyperparameters. ``Sigma_beta`` defaults to ``1e10 I`` and ``mu_beta`` to zero.

    ``sigsq_eps`` fixes the residual variance of a Gaussian model. It is
    imposed through an Inverse-chi^2 prior with ``kappa = 1e5`` concentrated
    at the given value, in place of the Half-t chain scaled by ``A_eps``.
    """

    mu_beta: np.ndarray | None = None
    Sigma_beta: np.ndarray | None = None
    A_grp: float = 1e5
    A_spl: float = 1e5
    A_eps: float = 1e5
    nu: float = 1.0
    sigsq_eps: float | None = None

    def __post_init__(self):
        for name in ("A_grp", "A_spl", "A_eps", "nu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"prior scale {name} must be positive, got {v!r}")
        if self.sigsq_eps is not None and not (math.isfinite(self.sigsq_eps) and self.sigsq_eps > 0):
            raise DomainError(f"known residual variance sigsq_eps must be positive, got {self.sigsq_eps!r}")

    def beta_prior(self, d: int) -> GaussianPrior:
        mu = np.zeros(d) if self.mu_beta is None else np.asarray(self.mu_beta, dtype=float)
        S = 1e10 * np.eye(d) if self.Sigma_beta is None else np.asarray(self.Sigma_beta, dtype=float)
        if mu.shape != (d,) or S.shape != (d, d):
            raise ContractError(f"beta prior must have dimension {d}")
        return GaussianPrior(mu, S)


@dataclass(frozen=True)
class SplineTerm:
    column: str
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ContractError(f"spline needs K >= 2 knots, got {self.K!r}")


@dataclass(frozen=True)
class ModelSpec:
    """A GLMM/GAMM specification.

    Parameters
    ----------
    likelihood : {'gaussian', 'logistic', 'probit', 'poisson'}
    response : str
        Response column.
    fixed_effects : sequence of str
        Predictor columns entering linearly.
    intercept : bool
        Prepend an intercept column to the fixed-effects design.
    group : str, optional
        Column of group labels for a random intercept.
    spline : SplineTerm, optional
        Column and knot count for a penalized truncated-line spline.
    priors : Priors
    standardize : bool
        Centre and scale continuous predictors (and a Gaussian response) before fitting.
    """

    likelihood: str
    response: str
    fixed_effects: tuple = ()
    intercept: bool = True
    group: str | None = None
    spline: SplineTerm | None = None
    priors: Priors = field(default_factory=Priors)
    standardize: bool = False

    def __post_init__(self):
        if self.likelihood not in LIKELIHOODS:
            raise ContractError(f"unsupported likelihood {self.likelihood!r}; choose from {LIKELIHOODS}")
        object.__setattr__(self, "fixed_effects", tuple(self.fixed_effects))
        if isinstance(self.spline, Mapping):
            object.__setattr__(self, "spline", SplineTerm(**self.spline))
        if isinstance(self.priors, Mapping):
            object.__setattr__(self, "priors", Priors(**self.priors))
        if self.priors.sigsq_eps is not None:
            if self.likelihood != "gaussian":
                raise ContractError("priors.sigsq_eps only applies to a gaussian likelihood")
            if self.standardize:
                raise ContractError("priors.sigsq_eps is in data units; it cannot be combined with standardize")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        known = {"likelihood", "response", "fixed_effects", "intercept", "group", "spline", "priors", "standardize"}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown model field(s): {sorted(unknown)}")
        for req in ("likelihood", "response"):
            if req not in d:
                raise ContractError(f"model field {req!r} is required")
        return cls(**d)

    @property
    def d_beta(self) -> int:
        return len(self.fixed_effects) + int(self.intercept)

    def validate(self, data: Dataset) -> None:
        cols = [self.response, *self.fixed_effects]
        if self.group:
            cols.append(self.group)
        if self.spline:
            cols.append(self.spline.column)
        for c in cols:
            if c not in data:
                raise ContractError(f"missing column {c!r}")
            if not np.all(np.isfinite(data[c])):
                raise ContractError(f"column {c!r} has missing or non-finite values")
        y = data[self.response]
        if self.likelihood in ("logistic", "probit") and not np.all((y == 0) | (y == 1)):
            raise ContractError(f"response column {self.response!r} must be 0/1 for a {self.likelihood} model")
        if self.likelihood == "poisson" and not np.all((y >= 0) & (y == np.round(y))):
            raise ContractError(f"response column {self.response!r} must hold non-negative integers")
        if self.d_beta == 0:
            raise ContractError("model needs at least one fixed effect or an intercept")
        if data.n == 0:
            raise ContractError("dataset has no rows")


# ---------------------------------------------------------------------------
# Design
# ---------------------------------------------------------------------------


def spline_basis(x, K: int, knots=None) -> tuple[np.ndarray, np.ndarray]:
    """Truncated-line basis ``z_k(x) = max(x - kappa_k, 0)``.

    Knots sit at the ``k/(K+1)`` sample quantiles of ``x`` unless given.

    Returns
    -------
    Z : ndarray, shape (n, K)
    knots : ndarray, shape (K,)
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if int(K) != K or K < 2:
        raise ContractError(f"spline needs K >= 2, got {K!r}")
    if knots is None:
        if np.unique(x).size < K + 2:
            raise ContractError(f"spline with K={K} needs at least {K + 2} distinct x values")
        knots = np.quantile(x, np.arange(1, K + 1) / (K + 1))
    knots = np.asarray(knots, dtype=float)
    return np.maximum(x[:, None] - knots[None, :], 0.0), knots


@dataclass(frozen=True)
class DesignMatrices:
    X: np.ndarray
    Z_grp: np.ndarray
    Z_spl: np.ndarray
    knots: np.ndarray
    group_levels: np.ndarray

    @property
    def d_beta(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Z_grp.shape[1]

    @property
    def K(self) -> int:
        return self.Z_spl.shape[1]

    @property
    def Z(self) -> np.ndarray:
        return np.hstack([self.Z_grp, self.Z_spl])

    @property
    def C(self) -> np.ndarray:
        return np.hstack([self.X, self.Z_grp, self.Z_spl])

    def row(self, ell: int) -> np.ndarray:
        """``c_ell``, the ``ell``-th row of ``C``."""
        return self.C[ell]

    def E_beta(self) -> np.ndarray:
        """Selector with the ``d_beta`` identity on top and zeros below."""
        E = np.zeros((self.d_beta + self.m + self.K, self.d_beta))
        E[: self.d_beta] = np.eye(self.d_beta)
        return E

    def e(self, r: int) -> np.ndarray:
        """Unit vector picking coordinate ``r`` (0-based) of the stacked ``(beta, u)``."""
        v = np.zeros(self.d_beta + self.m + self.K)
        v[r] = 1.0
        return v


def design_matrices(spec: ModelSpec, data: Dataset, knots=None) -> DesignMatrices:
    spec.validate(data)
    n = data.n
    cols = [np.ones(n)] if spec.intercept else []
    cols += [data[c] for c in spec.fixed_effects]
    X = np.column_stack(cols)
    if spec.group:
        levels, idx = np.unique(data[spec.group], return_inverse=True)
        Z_grp = np.zeros((n, levels.size))
        Z_grp[np.arange(n), idx] = 1.0
    else:
        levels, Z_grp = np.array([]), np.zeros((n, 0))
    if spec.spline:
        Z_spl, knots = spline_basis(data[spec.spline.column], spec.spline.K, knots)
    else:
        Z_spl, knots = np.zeros((n, 0)), np.array([])
    return DesignMatrices(X, Z_grp, Z_spl, knots, levels)


def _aux_prior(A: float) -> InverseWishartPrior:
    # a ~ Inverse-chi^2(1, 1/A^2); with the iterated fragment this makes sigma ~ Half-t(nu, A).
    return InverseWishartPrior(1.0, [[1.0 / A**2]])


def _add_variance_chain(g: FactorGraph, part: str, nu: float, A: float) -> None:
    g.add_node(f"sigsq_{part}", INV_CHISQ)
    g.add_node(f"a_{part}", INV_CHISQ)
    g.add_factor(f"iter_{part}", IteratedInvChiSq(nu), [f"sigsq_{part}", f"a_{part}"])
    g.add_factor(f"aux_prior_{part}", _aux_prior(A), [f"a_{part}"])


def build_linear_model(X, y, sigsq_beta: float, A: float, nu: float = 1.0) -> FactorGraph:
    """``y_i ~ N(x_i^T beta, sigma^2)``, ``beta ~ N(0, sigsq_beta I)``, ``sigma ~ Half-t(nu, A)``.

    The graph has a Gaussian prior on ``beta``, one linear-combination and one
    Gaussian likelihood factor per observation, an iterated Inverse-chi^2
    factor linking ``sigma^2`` and the auxiliary ``a``, and an
    Inverse-chi^2(1, 1/A^2) prior on ``a``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size and X.shape[1] == y.size and X.shape[0] == 1:
        X = X.T
    n, p = X.shape
    if n == 0 or y.size != n:
        raise ContractError(f"X has {n} rows but y has {y.size} entries")
    if not (sigsq_beta > 0 and A > 0):
        raise DomainError("sigsq_beta and A must be positive")
    if np.linalg.matrix_rank(X) < p:
        warnings.warn("X is not of full column rank", RuntimeWarning, stacklevel=2)
    g = FactorGraph()
    g.add_node("beta", FamilyTag.mvn(p))
    g.add_node("sigsq", INV_CHISQ)
    g.add_node("a", INV_CHISQ)
    g.add_factor("prior_beta", GaussianPrior(np.zeros(p), sigsq_beta * np.eye(p)), ["beta"])
    g.add_factor("aux_prior", _aux_prior(A), ["a"])
    for i in range(n):
        g.add_node(("alpha", i), NORMAL)
        g.add_factor(("lincomb", i), LinComb(X[i]), [("alpha", i), "beta"])
        g.add_factor(("lik", i), GaussianLik(float(y[i])), [("alpha", i), "sigsq"])
    g.add_factor("iter", IteratedInvChiSq(nu), ["sigsq", "a"])
    return g


_LIK = {"logistic": LogisticLik, "probit": ProbitLik, "poisson": PoissonLik}


def build_glmm(spec: ModelSpec, data: Dataset, design: DesignMatrices | None = None) -> FactorGraph:
    """Derived-variable factor graph for a GLMM/GAMM with random intercepts and a spline.

    The Gaussian prior on ``beta`` reaches the stacked ``theta = (beta, u)``
    through a multivariate linear-combination selector. Each observation has a
    linear-combination factor with row ``c_l`` feeding its likelihood factor.
    Each random-effect coordinate has a linear-combination factor with a unit
    selector feeding a Gaussian factor with ``y = 0`` tied to that component's
    variance. Each variance component carries an iterated Inverse-chi^2 factor
    and an auxiliary prior.
    """
    D = design or design_matrices(spec, data)
    pri = spec.priors
    d, m, K = D.d_beta, D.m, D.K
    y = data[spec.response]
    g = FactorGraph()
    g.add_node("beta", FamilyTag.mvn(d))
    g.add_node("theta", FamilyTag.mvn(d + m + K))
    g.add_factor("prior_beta", pri.beta_prior(d), ["beta"])
    g.add_factor("select_beta", MultLinComb(D.E_beta()), ["beta", "theta"])

    gaussian = spec.likelihood == "gaussian"
    if gaussian and pri.sigsq_eps is not None:
        g.add_node("sigsq_eps", INV_CHISQ)
        kappa = KNOWN_VARIANCE_KAPPA
        g.add_factor("known_sigsq_eps", InverseWishartPrior(kappa, [[kappa * pri.sigsq_eps]]), ["sigsq_eps"])
    elif gaussian:
        _add_variance_chain(g, "eps", pri.nu, pri.A_eps)
    C = D.C
    for ell in range(data.n):
        g.add_node(("alpha", ell), NORMAL)
        g.add_factor(("lincomb", ell), LinComb(C[ell]), [("alpha", ell), "theta"])
        if gaussian:
            g.add_factor(("lik", ell), GaussianLik(float(y[ell])), [("alpha", ell), "sigsq_eps"])
        else:
            g.add_factor(("lik", ell), _LIK[spec.likelihood](y[ell]), [("alpha", ell)])

    for part, count, offset, A in (("grp", m, d, pri.A_grp), ("spl", K, d + m, pri.A_spl)):
        if count == 0:
            continue
        _add_variance_chain(g, part, pri.nu, A)
        for i in range(count):
            g.add_node((f"u_{part}", i), NORMAL)
            g.add_factor((f"lincomb_{part}", i), LinComb(D.e(offset + i)), [(f"u_{part}", i), "theta"])
            g.add_factor((f"ranef_{part}", i), GaussianLik(0.0), [(f"u_{part}", i), f"sigsq_{part}"])
    return g


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformRecord:
    """Centring/scaling applied before fitting.

    ``columns`` maps each transformed column to ``(mean, sd)``; ``response`` is
    ``(mean, sd)`` for a standardized Gaussian response, else ``(0, 1)``.
    """

    spec: ModelSpec
    columns: dict
    response: tuple = (0.0, 1.0)

    def scale(self, column: str) -> tuple[float, float]:
        return self.columns.get(column, (0.0, 1.0))


def _is_continuous(x: np.ndarray) -> bool:
    return np.unique(x).size > 2


def standardize(data: Dataset, spec: ModelSpec) -> tuple[Dataset, TransformRecord]:
    """Centre and scale continuous predictors, and the response of a Gaussian model.

    Binary predictors are left alone. Raises ContractError for a constant column.
    """
    spec.validate(data)
    cols = list(spec.fixed_effects)
    if spec.spline:
        cols.append(spec.spline.column)
    rec: dict[str, tuple[float, float]] = {}
    updates = {}
    for c in dict.fromkeys(cols):
        x = data[c]
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        if sd == 0.0:
            raise ContractError(f"column {c!r} is constant and cannot be standardized")
        if not _is_continuous(x):
            continue
        mu = float(np.mean(x))
        rec[c] = (mu, sd)
        updates[c] = (x - mu) / sd
    resp = (0.0, 1.0)
    if spec.likelihood == "gaussian":
        y = data[spec.response]
        sd = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
        if sd == 0.0:
            raise ContractError(f"response column {spec.response!r} is constant")
        resp = (float(np.mean(y)), sd)
        updates[spec.response] = (y - resp[0]) / sd
    return data.with_columns(**updates), TransformRecord(spec, rec, resp)


def _beta_map(rec: TransformRecord) -> tuple[np.ndarray, np.ndarray]:
    """``beta_orig = T beta_std + t``."""
    spec = rec.spec
    my, sy = rec.response
    d = spec.d_beta
    T = np.zeros((d, d))
    t = np.zeros(d)
    off = int(spec.intercept)
    if spec.intercept:
        T[0, 0] = sy
        t[0] = my
    for j, c in enumerate(spec.fixed_effects):
        mu, sd = rec.scale(c)
        T[off + j, off + j] = sy / sd
        if spec.intercept:
            T[0, off + j] = -sy * mu / sd
    if not spec.intercept and (my != 0.0 or any(rec.scale(c)[0] != 0.0 for c in spec.fixed_effects)):
        raise ContractError("destandardizing centred predictors needs an intercept")
    return T, t


def _affine_mvn(p: NatParam, T: np.ndarray, t: np.ndarray) -> NatParam:
    c = mvn_natural_to_common(p)
    S = T @ c.Sigma @ T.T
    return mvn_common_to_natural(CommonMVN(T @ c.mu + t, 0.5 * (S + S.T)))


def _affine_normal(p: NatParam, scale: float, shift: float) -> NatParam:
    c = normal_natural_to_common(p)
    return normal_common_to_natural(CommonNormal(scale * c.mu + shift, scale**2 * c.sigsq))


def _scale_invchisq(p: NatParam, c: float) -> NatParam:
    # x' = c x maps Inverse-chi^2(kappa, lambda) to Inverse-chi^2(kappa, c lambda).
    return NatParam(p.family, [p.eta[0], c * p.eta[1]])


def destandardize(fit: FitResult, rec: TransformRecord, n_groups: int = 0, n_knots: int = 0) -> FitResult:
    """Map posteriors of a fit on standardized data back to the original units.

    Fixed effects (``beta`` and the leading block of ``theta``) go through the
    affine map implied by the centring. Random effects, linear predictors and
    variance parameters are rescaled by the response scale. Spline
    coefficients are also divided by the spline column's scale. Auxiliary
    ``a`` nodes scale inversely to their variance.
    """
    T, t = _beta_map(rec)
    my, sy = rec.response
    sx = rec.scale(rec.spec.spline.column)[1] if rec.spec.spline else 1.0
    var_scale = {"eps": sy**2, "grp": sy**2, "spl": (sy / sx) ** 2}
    out = {}
    for nid, p in fit.posteriors.items():
        if nid == "beta":
            out[nid] = _affine_mvn(p, T, t)
        elif nid == "theta":
            d = T.shape[0]
            u = p.family.d - d
            if u != n_groups + n_knots:
                raise ContractError(f"theta has {u} random-effect coordinates, expected {n_groups}+{n_knots}")
            TT = np.zeros((d + u, d + u))
            TT[:d, :d] = T
            TT[d : d + n_groups, d : d + n_groups] = sy * np.eye(n_groups)
            TT[d + n_groups :, d + n_groups :] = (sy / sx) * np.eye(n_knots)
            out[nid] = _affine_mvn(p, TT, np.concatenate([t, np.zeros(u)]))
        elif isinstance(nid, tuple) and nid[0] == "alpha":
            out[nid] = _affine_normal(p, sy, my)
        elif isinstance(nid, tuple) and nid[0] == "u_grp":
            out[nid] = _affine_normal(p, sy, 0.0)
        elif isinstance(nid, tuple) and nid[0] == "u_spl":
            out[nid] = _affine_normal(p, sy / sx, 0.0)
        elif isinstance(nid, str) and nid.startswith("sigsq_"):
            out[nid] = _scale_invchisq(p, var_scale[nid[6:]])
        elif isinstance(nid, str) and nid.startswith("a_"):
            out[nid] = _scale_invchisq(p, 1.0 / var_scale[nid[2:]])
        else:
            out[nid] = p
    return replace(fit, posteriors=out)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def simulate_glmm(
    m: int = 20,
    n_i: int = 5,
    beta=(-0.5, 1.0),
    sigma_grp: float = 0.8,
    smooth=None,
    likelihood: str = "logistic",
    seed: int = 42,
) -> tuple[Dataset, dict]:
    """Random-intercept data with one linear and one smooth predictor.

    Rows carry ``group``, ``x`` (linear), ``age`` (smooth) and ``y``. The
    linear predictor is ``beta[0] + beta[1] x + f(age) + u_group``, with ``f``
    defaulting to ``0.5 sin(2 pi age)`` on ``age ~ U(0, 1)``.

    Returns
    -------
    data : Dataset
    truth : dict
        Generating values.
    """
    if likelihood not in LIKELIHOODS:
        raise ContractError(f"unsupported likelihood {likelihood!r}")
    rng = np.random.default_rng(seed)
    f = smooth or (lambda a: 0.5 * np.sin(2 * np.pi * a))
    beta = np.asarray(beta, dtype=float)
    group = np.repeat(np.arange(1, m + 1), n_i).astype(float)
    x = rng.normal(size=m * n_i)
    age = rng.uniform(size=m * n_i)
    u = rng.normal(scale=sigma_grp, size=m)
    eta = beta[0] + beta[1] * x + f(age) + u[group.astype(int) - 1]
    if likelihood == "logistic":
        y = (rng.uniform(size=eta.size) < expit(eta)).astype(float)
    elif likelihood == "probit":
        y = (eta + rng.normal(size=eta.size) > 0).astype(float)
    elif likelihood == "poisson":
        y = rng.poisson(np.exp(eta)).astype(float)
    else:
        y = eta + rng.normal(size=eta.size)
    truth = {"beta": beta.tolist(), "sigma_grp": sigma_grp, "likelihood": likelihood, "seed": seed}
    return Dataset({"group": group, "x": x, "age": age, "y": y}), truth
