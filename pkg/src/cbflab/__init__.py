"""CLF-CBF quadratic-program safety filtering, equilibrium analysis, and
closed-loop simulation tools."""

__version__ = "0.1.0"

from .core import (
    CertificatePair,
    ComparisonFunction,
    DynamicsModel,
    LieData,
    ScalarCertificate,
    lie_data,
)
from .equilibria import (
    EquilibriumKind,
    EquilibriumReport,
    EquilibriumSearch,
    InteriorCertificate,
    SearchGrid,
    SupRatioEstimate,
    boundary_persistence_check,
    closed_loop_residual,
    confinement_bound,
    find_equilibria,
    interior_certificate,
    sup_ratio_estimate,
)
from .errors import (
    BoundUnavailableError,
    CbflabError,
    ConfigurationError,
    EstimateUnavailableError,
    IndeterminateError,
    InternalInconsistencyError,
    NominalRejectedError,
    NumericDomainError,
    OracleInfeasibleError,
    ScenarioError,
)
from .modified import (
    LipschitzReport,
    NominalController,
    RoaEstimate,
    TransformedModel,
    estimate_roa,
    filtered_control,
    lipschitz_precondition,
    sontag_nominal,
    transform,
)
from .oracle import enumerate_candidates, kkt_residual, solve_oracle
from .qp import QPSolution, RegionTag, classify_region, solve
from .scenarios import Scenario, load, registry_names, ring_starts
from .simulate import IntegratorConfig, TerminalFlag, Trajectory, batch, integrate

__all__ = [
    "__version__",
    "BoundUnavailableError",
    "CbflabError",
    "CertificatePair",
    "ComparisonFunction",
    "ConfigurationError",
    "DynamicsModel",
    "EquilibriumKind",
    "EquilibriumReport",
    "EquilibriumSearch",
    "EstimateUnavailableError",
    "IndeterminateError",
    "IntegratorConfig",
    "InteriorCertificate",
    "InternalInconsistencyError",
    "LieData",
    "LipschitzReport",
    "NominalController",
    "NominalRejectedError",
    "NumericDomainError",
    "OracleInfeasibleError",
    "QPSolution",
    "RegionTag",
    "RoaEstimate",
    "ScalarCertificate",
    "Scenario",
    "ScenarioError",
    "SearchGrid",
    "SupRatioEstimate",
    "TerminalFlag",
    "Trajectory",
    "TransformedModel",
    "batch",
    "boundary_persistence_check",
    "classify_region",
    "closed_loop_residual",
    "confinement_bound",
    "enumerate_candidates",
    "estimate_roa",
    "filtered_control",
    "find_equilibria",
    "integrate",
    "interior_certificate",
    "kkt_residual",
    "lie_data",
    "lipschitz_precondition",
    "load",
    "registry_names",
    "ring_starts",
    "solve",
    "solve_oracle",
    "sontag_nominal",
    "sup_ratio_estimate",
    "transform",
]
