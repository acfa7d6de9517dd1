"""Exception types shared across the library."""


class CbflabError(Exception):
    """Base class for all library errors."""


class ConfigurationError(CbflabError):
    """Bad dimensions, invalid parameters, or violated call preconditions."""


class NumericDomainError(CbflabError):
    """Non-finite values produced where finite reals are required."""


class InternalInconsistencyError(CbflabError):
    """A state the theory says cannot happen (e.g. no region matches)."""


class OracleInfeasibleError(CbflabError):
    """The enumeration oracle found no feasible active-set candidate."""


class ScenarioError(CbflabError):
    """Unknown scenario name, malformed document, or failed sanity check."""


class NominalRejectedError(CbflabError):
    """A candidate nominal controller violated the CLF condition on a sample."""


class BoundUnavailableError(CbflabError):
    """The confinement bound cannot be evaluated (non-finite ratio bound)."""


class EstimateUnavailableError(CbflabError):
    """A sampled estimate could not be formed (empty usable sample)."""


class IndeterminateError(CbflabError):
    """A geometric test could not be decided (e.g. vanishing gradient)."""
