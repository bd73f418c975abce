"""Command-line interface: ``epfrag {fit, simulate, accuracy, quadcheck}``.

Exit codes: 0 success (``fit``: converged), 2 ran but did not converge or a
check failed, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import invgamma, norm

from . import oracle
from .errors import ContractError, EPError
from .expfam import FamilyKind, NatParam
from .graph import EPConfig, FailurePolicy, FitResult, Schedule, run
from .models import (
    Dataset,
    ModelSpec,
    build_glmm,
    design_matrices,
    destandardize,
    simulate_glmm,
    standardize,
)
from .quadrature import IntegrandKernel, integral_A, integral_B, integral_C

__all__ = ["main", "RunConfig", "fit_model", "fit_document", "dumps", "quadcheck_battery"]

logger = logging.getLogger("epfrag")

SCHEDULES = {"sequential": Schedule.DETERMINISTIC_SEQUENTIAL, "parallel": Schedule.PARALLEL_SWEEP}
POLICIES = {"keep": FailurePolicy.KEEP_OLD_MESSAGE, "abort": FailurePolicy.ABORT}
DENSITY_POINTS = 201


@dataclass
class RunConfig:
    data_path: str | None = None
    model_path: str | None = None
    output_path: str | None = None
    epsilon: float | None = None
    max_iterations: int | None = None
    tol: float | None = None
    schedule: str | None = None
    on_update_failure: str | None = None
    seed: int = 42

    def ep_config(self, base: dict | None = None) -> EPConfig:
        kw = dict(base or {})
        unknown = set(kw) - {"epsilon", "max_iterations", "tol", "schedule", "on_update_failure"}
        if unknown:
            raise ContractError(f"unknown ep field(s): {sorted(unknown)}")
        for name in ("epsilon", "max_iterations", "tol", "schedule", "on_update_failure"):
            v = getattr(self, name)
            if v is not None:
                kw[name] = v
        if "schedule" in kw:
            kw["schedule"] = _choice(SCHEDULES, kw["schedule"], "schedule")
        if "on_update_failure" in kw:
            kw["on_update_failure"] = _choice(POLICIES, kw["on_update_failure"], "on_update_failure")
        return EPConfig(**kw)


def _choice(table, value, field):
    if isinstance(value, (Schedule, FailurePolicy)):
        return value
    try:
        return table[str(value)]
    except KeyError:
        raise ContractError(f"{field} must be one of {sorted(table)}, got {value!r}") from None


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_json_str(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in seq) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    return _json_str(str(obj))


def _json_str(s: str) -> str:
    import json

    return json.dumps(s)


def _node_name(nid) -> str:
    return nid if isinstance(nid, str) else "_".join(str(p) for p in nid)


def _node_document(p: NatParam) -> dict:
    kind = p.family.kind
    doc: dict = {"family": str(p.family), "natural": p.eta.tolist()}
    if kind is FamilyKind.MULTIVARIATE_NORMAL:
        from .expfam import mvn_natural_to_common

        c = mvn_natural_to_common(p)
        sd = np.sqrt(np.diag(c.Sigma))
        doc["common"] = {"mean": c.mu.tolist(), "covariance": c.Sigma.tolist()}
        doc["density"] = [_normal_density(c.mu[i], sd[i]) for i in range(c.mu.size)]
    elif kind is FamilyKind.UNIVARIATE_NORMAL:
        from .expfam import normal_natural_to_common

        c = normal_natural_to_common(p)
        doc["common"] = {"mean": c.mu, "variance": c.sigsq}
        doc["density"] = [_normal_density(c.mu, math.sqrt(c.sigsq))]
    elif kind is FamilyKind.INVERSE_CHI_SQUARED:
        from .expfam import invchisq_natural_to_common

        c = invchisq_natural_to_common(p)
        doc["common"] = {"kappa": c.kappa, "lambda": c.lam}
        doc["density"] = [_invchisq_density(c.kappa, c.lam)]
    return doc


def _normal_density(mu: float, sd: float) -> dict:
    x = np.linspace(mu - 5 * sd, mu + 5 * sd, DENSITY_POINTS)
    return {"x": x.tolist(), "density": norm.pdf(x, mu, sd).tolist()}


def _invchisq_density(kappa: float, lam: float) -> dict:
    # Grid over log(sigma^2) spanning +-6 approximate SDs of the log.
    centre = math.log(lam / kappa)
    half = 6.0 * math.sqrt(2.0 / kappa) + 0.5
    v = np.linspace(centre - half, centre + half, DENSITY_POINTS)
    x = np.exp(v)
    return {"x": x.tolist(), "density": invgamma.pdf(x, kappa / 2, scale=lam / 2).tolist()}


REPORTED_PREFIXES = ("beta", "theta", "sigsq_", "a_")


def fit_document(fit: FitResult, spec: ModelSpec | None = None) -> dict:
    """Schema-stable summary of a fit (fixed effects, stacked effects, variance parameters)."""
    params = {}
    for nid, p in fit.posteriors.items():
        if isinstance(nid, str) and nid.startswith(REPORTED_PREFIXES):
            params[_node_name(nid)] = _node_document(p)
    names = []
    if spec is not None:
        names = (["(Intercept)"] if spec.intercept else []) + list(spec.fixed_effects)
    return {
        "converged": bool(fit.converged),
        "iterations_used": int(fit.iterations_used),
        "failure_count": int(fit.failure_count),
        "max_change_trace": [float(c) for c in fit.max_change_trace],
        "fixed_effect_names": names,
        "parameters": params,
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def load_model(path) -> tuple[ModelSpec, dict]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ContractError(f"{path}: model file must be a mapping")
    doc = dict(doc)
    ep = doc.pop("ep", None) or {}
    if not isinstance(ep, dict):
        raise ContractError(f"{path}: field 'ep' must be a mapping")
    return ModelSpec.from_dict(doc), ep


def fit_model(spec: ModelSpec, data: Dataset, cfg: EPConfig) -> FitResult:
    """Build the GLMM graph, run EP and (if requested) map back to original units."""
    if spec.standardize:
        data_s, rec = standardize(data, spec)
        D = design_matrices(spec, data_s)
        fit = run(build_glmm(spec, data_s, D), cfg)
        return destandardize(fit, rec, D.m, D.K)
    return run(build_glmm(spec, data), cfg)


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_fit(cfg: RunConfig) -> int:
    if not cfg.data_path or not cfg.model_path:
        raise ContractError("fit needs --data and --model")
    spec, ep = load_model(cfg.model_path)
    data = Dataset.from_csv(cfg.data_path)
    ep_cfg = cfg.ep_config(ep)
    fit = fit_model(spec, data, ep_cfg)
    doc = fit_document(fit, spec)
    _write(cfg.output_path, dumps(doc) + "\n")
    if not fit.converged:
        logger.warning("not converged after %d iterations", fit.iterations_used)
    return 0 if fit.converged else 2


def cmd_simulate(cfg: RunConfig, m: int = 20, n_i: int = 5, likelihood: str = "logistic") -> int:
    data, truth = simulate_glmm(m=m, n_i=n_i, likelihood=likelihood, seed=cfg.seed)
    header = [f"generating values: {k}={v}" for k, v in truth.items()]
    header.append("smooth effect: f(age) = 0.5*sin(2*pi*age)")
    data.to_csv(cfg.output_path if cfg.output_path not in (None, "-") else sys.stdout, header)
    return 0


def _grid_oracle(spec: ModelSpec, data: Dataset, fit: FitResult):
    """Grid posterior and the parameter labels for models with at most two free parameters."""
    if spec.group or spec.spline:
        raise ContractError("accuracy needs a model without random effects or splines")
    D = design_matrices(spec, data)
    X, y = D.X, data[spec.response]
    d = D.d_beta
    prior = spec.priors.beta_prior(d)
    beta = fit.common("beta")
    sd = np.sqrt(np.diag(beta.Sigma))
    names = (["(Intercept)"] if spec.intercept else []) + list(spec.fixed_effects)
    known = spec.priors.sigsq_eps
    if spec.likelihood == "gaussian" and known is None:
        if d != 1:
            raise ContractError(f"accuracy for a Gaussian model supports one coefficient plus sigma^2, got {d}")
        if np.any(prior.mu_theta != 0):
            raise ContractError("accuracy for a Gaussian model needs a zero prior mean")
        lp = oracle.linear_model_log_posterior(X[:, 0], y, float(prior.Sigma_theta[0, 0]), spec.priors.A_eps)
        s = fit.common("sigsq_eps")
        centre, half = math.log(s.lam / s.kappa), 12.0 * math.sqrt(2.0 / s.kappa) + 0.5
        bounds = [(beta.mu[0] - 12 * sd[0], beta.mu[0] + 12 * sd[0]), (centre - half, centre + half)]
        return oracle.grid_posterior(lp, bounds), names + ["log(sigsq_eps)"]
    if d > 2:
        raise ContractError(f"accuracy supports at most two free parameters, model has {d}")
    lp = oracle.glm_log_posterior(X, y, spec.likelihood, prior.mu_theta, prior.Sigma_theta, sigsq=known)
    bounds = [(beta.mu[i] - 12 * sd[i], beta.mu[i] + 12 * sd[i]) for i in range(d)]
    return oracle.grid_posterior(lp, bounds), names


def accuracy_report(spec: ModelSpec, data: Dataset, fit: FitResult) -> dict:
    """Per-parameter accuracy of the EP marginals against the dense-grid posterior."""
    grid, names = _grid_oracle(spec, data, fit)
    beta = fit.common("beta")
    marginals = [grid] if isinstance(grid, oracle.Grid1D) else [grid.marginal(0), grid.marginal(1)]
    out = {}
    for i, (name, M) in enumerate(zip(names, marginals)):
        if name == "log(sigsq_eps)":
            s = fit.common("sigsq_eps")
            x = np.exp(M.x)
            q = invgamma.pdf(x, s.kappa / 2, scale=s.lam / 2) * x
        else:
            q = norm.pdf(M.x, beta.mu[i], math.sqrt(beta.Sigma[i, i]))
        out[name] = oracle.accuracy(oracle.Grid1D(M.x, q), M)
    return out


def cmd_accuracy(cfg: RunConfig) -> int:
    if not cfg.data_path or not cfg.model_path:
        raise ContractError("accuracy needs --data and --model")
    spec, ep = load_model(cfg.model_path)
    if spec.standardize:
        raise ContractError("accuracy compares on the fitted scale; set standardize: false")
    data = Dataset.from_csv(cfg.data_path)
    # Validate the parameter count before spending time on the fit.
    unknown_variance = spec.likelihood == "gaussian" and spec.priors.sigsq_eps is None
    if spec.group or spec.spline or spec.d_beta > 2 or (unknown_variance and spec.d_beta != 1):
        raise ContractError("accuracy supports models with at most two free parameters")
    fit = fit_model(spec, data, cfg.ep_config(ep))
    report = accuracy_report(spec, data, fit)
    for name, acc in report.items():
        print(f"{name}: {acc:.2f}%")
    if cfg.output_path:
        Path(cfg.output_path).write_text(dumps({"converged": fit.converged, "accuracy": report}) + "\n")
    return 0 if fit.converged else 2


def quadcheck_battery(count: int = 50, seed: int = 42) -> dict:
    """Max relative error of each integral family against the naive oracle."""
    rng = np.random.default_rng(seed)
    out = {}
    for fam in ("A", "B", "C_logistic", "C_poisson"):
        worst = 0.0
        for p in oracle.random_tuples(fam, count, rng):
            if fam == "A":
                v = integral_A(*p)
            elif fam == "B":
                v = integral_B(*p)
            else:
                v = integral_C(IntegrandKernel(fam[2:].lower()), *p)
            lm, sgn = oracle.naive_log_integral(fam, p)
            rel = abs(v.sign * math.exp(v.log_magnitude - lm) - sgn)
            worst = max(worst, rel)
        out[fam] = worst
    return out


def cmd_quadcheck(cfg: RunConfig, count: int = 50, threshold: float = 1e-6) -> int:
    errs = quadcheck_battery(count, cfg.seed)
    for fam, e in errs.items():
        print(f"{fam}: max relative error {e:.3e}")
    ok = all(e < threshold for e in errs.values())
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epfrag", description="Expectation propagation for GLMMs via factor graph fragments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def ep_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--out")
        p.add_argument("--eps", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--schedule", choices=sorted(SCHEDULES))
        p.add_argument("--on-failure", choices=sorted(POLICIES))

    ep_flags(sub.add_parser("fit", help="fit a model by EP and write a JSON summary"))
    ep_flags(sub.add_parser("accuracy", help="compare EP marginals with a dense-grid posterior"))
    sim = sub.add_parser("simulate", help="write simulated random-intercept data as CSV")
    sim.add_argument("--out")
    sim.add_argument("--seed", type=int, default=42)
    sim.add_argument("--groups", type=int, default=20)
    sim.add_argument("--per-group", type=int, default=5)
    sim.add_argument("--likelihood", default="logistic", choices=["gaussian", "logistic", "probit", "poisson"])
    qc = sub.add_parser("quadcheck", help="check quadrature against the naive oracle")
    qc.add_argument("--seed", type=int, default=42)
    qc.add_argument("--count", type=int, default=50)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    cfg = RunConfig(
        data_path=getattr(args, "data", None),
        model_path=getattr(args, "model", None),
        output_path=getattr(args, "out", None),
        epsilon=getattr(args, "eps", None),
        max_iterations=getattr(args, "max_iter", None),
        tol=getattr(args, "tol", None),
        schedule=getattr(args, "schedule", None),
        on_update_failure=getattr(args, "on_failure", None),
        seed=getattr(args, "seed", 42),
    )
    try:
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "accuracy":
            return cmd_accuracy(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.groups, args.per_group, args.likelihood)
        return cmd_quadcheck(cfg, args.count)
    except (EPError, OSError, yaml.YAMLError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
