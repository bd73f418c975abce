"""Exception hierarchy shared by all modules."""


class EPError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EPError, ValueError):
    """An argument lies outside the domain of an operation."""


class MomentDomainError(DomainError):
    """A moment vector lies outside the set of realizable expectations."""


class NumericError(EPError, ArithmeticError):
    """A numerical procedure failed (singular matrix, non-convergence, ...)."""


class ContractError(EPError, ValueError):
    """Inputs violate a structural contract (shapes, families, counts)."""


class ImproperPosteriorError(EPError):
    """One or more posteriors are improper after convergence.

    Attributes
    ----------
    nodes : list of str
        Identifiers of the offending stochastic nodes.
    """

    def __init__(self, nodes):
        self.nodes = list(nodes)
        super().__init__("improper posterior at nodes: " + ", ".join(map(str, self.nodes)))


class UpdateFailure(EPError):
    """A fragment update failed inside the message-passing loop."""

    def __init__(self, factor_id, iteration, cause):
        self.factor_id = factor_id
        self.iteration = iteration
        self.cause = cause
        super().__init__(
            f"update of factor {factor_id!r} failed at iteration {iteration}: {cause}"
        )
