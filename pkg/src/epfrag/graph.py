"""Factor graphs, the message store and the damped EP iteration.

Only factor-to-stochastic-node messages are stored. A stochastic-node-to-factor
message is the sum of the natural parameters of the node's other incoming
messages, and :func:`stoch_to_factor` recomputes it on demand from the store.

Examples
--------
>>> from epfrag.fragments import GaussianPrior
>>> g = FactorGraph()
>>> node = g.add_node("theta", FamilyTag.mvn(1))
>>> factor = g.add_factor("prior", GaussianPrior([1.0], [[2.0]]), ["theta"])
>>> run(g, EPConfig(max_iterations=3)).posteriors["theta"].eta.round(12).tolist()
[0.5, -0.25]
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np

from . import fragments as frag
from .errors import ContractError, EPError, ImproperPosteriorError, UpdateFailure
from .expfam import (
    FamilyKind,
    FamilyTag,
    NatParam,
    in_natural_domain,
    invchisq_natural_to_common,
    mvn_natural_to_common,
    normal_natural_to_common,
    vec,
)
from .quadrature import QuadConfig

__all__ = [
    "StochasticNode",
    "FactorNode",
    "FactorGraph",
    "MessageStore",
    "Schedule",
    "FailurePolicy",
    "EPConfig",
    "FitResult",
    "initial_message",
    "initialize",
    "stoch_to_factor",
    "sweep",
    "run",
    "posterior",
]

logger = logging.getLogger(__name__)

NodeId = Hashable
FactorId = Hashable


@dataclass(frozen=True)
class StochasticNode:
    id: NodeId
    family: FamilyTag

    @property
    def dim(self) -> int:
        return self.family.d


@dataclass(frozen=True)
class FactorNode:
    id: FactorId
    fragment: object
    neighbors: tuple


class FactorGraph:
    """Stochastic nodes plus factor nodes, with conjugacy checked on insertion.

    Derived-variable (Dirac delta) factors are ordinary factors here. Factors are
    updated in insertion order.
    """

    def __init__(self):
        self.nodes: dict[NodeId, StochasticNode] = {}
        self.factors: dict[FactorId, FactorNode] = {}
        self._adjacent: dict[NodeId, list[FactorId]] = {}

    def add_node(self, node_id: NodeId, family: FamilyTag) -> StochasticNode:
        if node_id in self.nodes:
            raise ContractError(f"duplicate stochastic node id {node_id!r}")
        node = StochasticNode(node_id, family)
        self.nodes[node_id] = node
        self._adjacent[node_id] = []
        return node

    def add_factor(self, factor_id: FactorId, fragment, neighbors: Iterable[NodeId]) -> FactorNode:
        if factor_id in self.factors:
            raise ContractError(f"duplicate factor id {factor_id!r}")
        neighbors = tuple(neighbors)
        signature = fragment.signature
        if len(neighbors) != len(signature):
            raise ContractError(
                f"{type(fragment).__name__} factor {factor_id!r} needs {len(signature)} neighbours, "
                f"got {len(neighbors)}"
            )
        if len(set(neighbors)) != len(neighbors):
            raise ContractError(f"factor {factor_id!r} lists a neighbour twice")
        for nid, fam in zip(neighbors, signature):
            if nid not in self.nodes:
                raise ContractError(f"factor {factor_id!r} refers to unknown node {nid!r}")
            if self.nodes[nid].family != fam:
                raise ContractError(
                    f"factor {factor_id!r} ({type(fragment).__name__}) requires node {nid!r} "
                    f"to be {fam}, but it is {self.nodes[nid].family}"
                )
        factor = FactorNode(factor_id, fragment, neighbors)
        self.factors[factor_id] = factor
        for nid in neighbors:
            self._adjacent[nid].append(factor_id)
        return factor

    def adjacent(self, node_id: NodeId) -> tuple:
        """Factors incident to ``node_id``, in insertion order."""
        return tuple(self._adjacent[node_id])

    def count_factors(self) -> dict[str, int]:
        """Number of factors per fragment kind."""
        counts: dict[str, int] = {}
        for f in self.factors.values():
            name = type(f.fragment).__name__
            counts[name] = counts.get(name, 0) + 1
        return counts

    def __repr__(self):
        return f"FactorGraph({len(self.nodes)} nodes, {len(self.factors)} factors)"


class MessageStore:
    """Factor-to-node messages, held as one row per incident factor for each node."""

    def __init__(self, graph: FactorGraph):
        self._graph = graph
        self._rows: dict[NodeId, np.ndarray] = {}
        self._index: dict[tuple, tuple] = {}
        for nid, node in graph.nodes.items():
            adj = graph.adjacent(nid)
            self._rows[nid] = np.zeros((len(adj), node.family.eta_length))
            for k, fid in enumerate(adj):
                self._index[(fid, nid)] = (nid, k)

    @property
    def graph(self) -> FactorGraph:
        return self._graph

    def get(self, factor_id: FactorId, node_id: NodeId) -> NatParam:
        nid, k = self._edge(factor_id, node_id)
        return NatParam(self._graph.nodes[nid].family, self._rows[nid][k])

    def set(self, factor_id: FactorId, node_id: NodeId, msg: NatParam) -> None:
        nid, k = self._edge(factor_id, node_id)
        if msg.family != self._graph.nodes[nid].family:
            raise ContractError(
                f"message family {msg.family} does not match node {nid!r} ({self._graph.nodes[nid].family})"
            )
        self._rows[nid][k] = msg.eta

    def _edge(self, factor_id, node_id):
        try:
            return self._index[(factor_id, node_id)]
        except KeyError:
            raise ContractError(f"no edge between factor {factor_id!r} and node {node_id!r}") from None

    def node_messages(self, node_id: NodeId) -> np.ndarray:
        """Read-only view of all messages into ``node_id`` (one row per factor)."""
        v = self._rows[node_id].view()
        v.setflags(write=False)
        return v

    def copy(self) -> "MessageStore":
        new = MessageStore.__new__(MessageStore)
        new._graph = self._graph
        new._index = self._index
        new._rows = {k: v.copy() for k, v in self._rows.items()}
        return new

    def __eq__(self, other):
        # Stores from separately built but identical graphs compare equal.
        if not isinstance(other, MessageStore):
            return NotImplemented
        if self._index != other._index:
            return False
        return all(np.array_equal(self._rows[k], other._rows[k]) for k in self._rows)


class Schedule(enum.Enum):
    DETERMINISTIC_SEQUENTIAL = "sequential"
    PARALLEL_SWEEP = "parallel"


class FailurePolicy(enum.Enum):
    ABORT = "abort"
    KEEP_OLD_MESSAGE = "keep"


@dataclass(frozen=True)
class EPConfig:
    """Settings for the EP loop.

    Parameters
    ----------
    epsilon : float
        Damping factor in [0, 1).
    max_iterations : int
        Maximum number of sweeps. Zero returns the initial posteriors.
    tol : float
        Stop once the largest infinity-norm change of any message is below this.
    schedule : Schedule
        ``DETERMINISTIC_SEQUENTIAL`` updates factors in order, each seeing the
        latest messages. ``PARALLEL_SWEEP`` has every update read a snapshot
        taken at the start of the sweep.
    on_update_failure : FailurePolicy
        ``KEEP_OLD_MESSAGE`` leaves the factor's messages unchanged and counts
        the failure. ``ABORT`` raises :class:`UpdateFailure`.
    quad : QuadConfig, optional
        Quadrature settings passed to fragments that integrate numerically.
    """

    epsilon: float = 0.1
    max_iterations: int = 1000
    tol: float = 1e-8
    schedule: Schedule = Schedule.DETERMINISTIC_SEQUENTIAL
    on_update_failure: FailurePolicy = FailurePolicy.KEEP_OLD_MESSAGE
    quad: QuadConfig | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ContractError(f"epsilon must lie in [0, 1), got {self.epsilon!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ContractError(f"max_iterations must be a non-negative integer, got {self.max_iterations!r}")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ContractError(f"tol must be positive, got {self.tol!r}")
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        object.__setattr__(self, "on_update_failure", FailurePolicy(self.on_update_failure))


@dataclass
class FitResult:
    posteriors: dict
    converged: bool
    iterations_used: int
    max_change_trace: list = field(default_factory=list)
    failure_count: int = 0
    messages: MessageStore | None = None

    def common(self, node_id):
        """Common parameters of a node's posterior."""
        return _to_common(self.posteriors[node_id])

    def mean(self, node_id):
        """Posterior mean (Normal/MVN) or ``lambda/(kappa-2)`` (Inverse-chi^2, kappa > 2)."""
        p = self.posteriors[node_id]
        c = _to_common(p)
        if p.family.kind is FamilyKind.INVERSE_CHI_SQUARED:
            return c.lam / (c.kappa - 2.0) if c.kappa > 2 else math.inf
        return c.mu

    def variance(self, node_id):
        p = self.posteriors[node_id]
        c = _to_common(p)
        if p.family.kind is FamilyKind.UNIVARIATE_NORMAL:
            return c.sigsq
        if p.family.kind is FamilyKind.MULTIVARIATE_NORMAL:
            return np.diag(c.Sigma).copy()
        if p.family.kind is FamilyKind.INVERSE_CHI_SQUARED:
            if c.kappa <= 4:
                return math.inf
            return 2.0 * c.lam**2 / ((c.kappa - 2.0) ** 2 * (c.kappa - 4.0))
        raise ContractError(f"variance not available for {p.family}")


def _to_common(p: NatParam):
    kind = p.family.kind
    if kind is FamilyKind.UNIVARIATE_NORMAL:
        return normal_natural_to_common(p)
    if kind is FamilyKind.MULTIVARIATE_NORMAL:
        return mvn_natural_to_common(p)
    if kind is FamilyKind.INVERSE_CHI_SQUARED:
        return invchisq_natural_to_common(p)
    raise ContractError(f"no common parameterization implemented for {p.family}")


# ---------------------------------------------------------------------------
# Message passing
# ---------------------------------------------------------------------------


def initial_message(family: FamilyTag) -> NatParam:
    """Weak proper starting message: N(0, 100), N(0, 100 I) or Inverse-chi^2(1, 1)."""
    kind = family.kind
    if kind is FamilyKind.UNIVARIATE_NORMAL:
        return NatParam(family, [0.0, -0.005])
    if kind is FamilyKind.MULTIVARIATE_NORMAL:
        return NatParam(family, np.concatenate([np.zeros(family.d), -0.005 * vec(np.eye(family.d))]))
    if kind is FamilyKind.INVERSE_CHI_SQUARED:
        return NatParam(family, [-1.5, -0.5])
    if kind is FamilyKind.INVERSE_WISHART:
        d = family.d
        return NatParam(family, np.concatenate([[-0.5 * (2 * d + 1)], -0.5 * vec(np.eye(d))]))
    raise ContractError(f"no initial message defined for {family}")


def initialize(graph: FactorGraph) -> MessageStore:
    """Exact messages from prior fragments, weak proper messages everywhere else."""
    store = MessageStore(graph)
    for fid, factor in graph.factors.items():
        if isinstance(factor.fragment, frag.PRIOR_KINDS):
            (msg,) = frag.update(factor.fragment, (), (), 0.0)
            store.set(fid, factor.neighbors[0], msg)
        else:
            for nid in factor.neighbors:
                store.set(fid, nid, initial_message(graph.nodes[nid].family))
    return store


def stoch_to_factor(node_id: NodeId, factor_id: FactorId, store: MessageStore) -> NatParam:
    """Sum of the messages into ``node_id`` from every factor except ``factor_id``."""
    nid, k = store._edge(factor_id, node_id)
    rows = store._rows[nid]
    if rows.shape[0] == 1:
        eta = np.zeros(rows.shape[1])
    else:
        eta = rows[:k].sum(axis=0) + rows[k + 1 :].sum(axis=0)
    return NatParam(store.graph.nodes[nid].family, eta)


def posterior(store: MessageStore, node_id: NodeId) -> NatParam:
    """Sum of all factor-to-node messages into ``node_id``."""
    return NatParam(store.graph.nodes[node_id].family, store._rows[node_id].sum(axis=0))


def _update_factor(factor: FactorNode, read: MessageStore, cfg: EPConfig):
    incoming = [stoch_to_factor(nid, factor.id, read) for nid in factor.neighbors]
    old = [read.get(factor.id, nid) for nid in factor.neighbors]
    out = frag.update(factor.fragment, incoming, old, cfg.epsilon, cfg.quad)
    for msg in out:
        if not np.all(np.isfinite(msg.eta)):
            raise EPError(f"non-finite message from factor {factor.id!r}")
    return old, out


def sweep(graph: FactorGraph, store: MessageStore, cfg: EPConfig, iteration: int = 0):
    """Update every factor once.

    Returns
    -------
    store : MessageStore
        The updated store. The input store is modified in place under the
        sequential schedule and left untouched under the parallel schedule.
    max_change : float
        Largest infinity-norm change over all factor-to-node messages.
    failures : int
        Number of factor updates that failed and kept their old messages.
    """
    parallel = cfg.schedule is Schedule.PARALLEL_SWEEP
    read = store
    write = store.copy() if parallel else store
    max_change = 0.0
    failures = 0
    for factor in graph.factors.values():
        try:
            old, out = _update_factor(factor, read, cfg)
        except (EPError, ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
            if cfg.on_update_failure is FailurePolicy.ABORT:
                raise UpdateFailure(factor.id, iteration, err) from err
            failures += 1
            logger.debug("update of factor %r failed at sweep %d: %s", factor.id, iteration, err)
            continue
        for nid, o, n in zip(factor.neighbors, old, out):
            change = float(np.max(np.abs(n.eta - o.eta)))
            if change > max_change:
                max_change = change
            write.set(factor.id, nid, n)
    if failures:
        logger.warning("%d factor update(s) failed in sweep %d; old messages kept", failures, iteration)
    return write, max_change, failures


def run(graph: FactorGraph, cfg: EPConfig | None = None) -> FitResult:
    """Iterate sweeps until the largest message change drops below ``cfg.tol``.

    Raises
    ------
    ImproperPosteriorError
        If the iteration converged but some node's posterior is improper.
    """
    cfg = cfg or EPConfig()
    store = initialize(graph)
    trace: list[float] = []
    failures = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        store, change, fails = sweep(graph, store, cfg, it)
        trace.append(change)
        failures += fails
        if change < cfg.tol:
            converged = True
            break
    posts = {nid: posterior(store, nid) for nid in graph.nodes}
    if converged:
        bad = [nid for nid, p in posts.items() if not in_natural_domain(p)]
        if bad:
            raise ImproperPosteriorError(bad)
    return FitResult(
        posteriors=posts,
        converged=converged,
        iterations_used=it if cfg.max_iterations else 0,
        max_change_trace=trace,
        failure_count=failures,
        messages=store,
    )
