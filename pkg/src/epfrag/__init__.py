"""Expectation propagation on factor graphs built from reusable fragments.

Modules
-------
expfam
    Exponential-family parameterizations and gradient maps.
quadrature
    Log-domain adaptive quadrature for the integral families behind the updates.
kernels
    Projection helpers (G and H functions) built on the quadrature.
fragments
    The nine fragment updates and damping.
graph
    Factor graphs, message store and the EP loop.
models
    Builders for linear models and GLMM/GAMMs.
oracle
    Independent brute-force references and dense-grid posteriors.
cli
    Command-line front end.
"""

from .errors import (
    ContractError,
    DomainError,
    EPError,
    ImproperPosteriorError,
    MomentDomainError,
    NumericError,
    UpdateFailure,
)
from .expfam import FamilyKind, FamilyTag, NatParam
from .graph import EPConfig, FactorGraph, FailurePolicy, FitResult, Schedule, run
from .models import Dataset, ModelSpec, Priors, SplineTerm, build_glmm, build_linear_model

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DomainError",
    "EPError",
    "ImproperPosteriorError",
    "MomentDomainError",
    "NumericError",
    "UpdateFailure",
    "FamilyKind",
    "FamilyTag",
    "NatParam",
    "EPConfig",
    "FactorGraph",
    "FailurePolicy",
    "FitResult",
    "Schedule",
    "run",
    "Dataset",
    "ModelSpec",
    "Priors",
    "SplineTerm",
    "build_glmm",
    "build_linear_model",
]
