"""Energy transport along a chain of two-level emitters in a thermal bath."""

__version__ = "0.1.0"

from .coupling import (
    ChainConfig,
    CouplingTables,
    EmitterParams,
    SingularGeometryError,
    build_coupling_tables,
    chain_from_gaps,
    displaced_chain,
    gamma0,
    gamma_jk,
    lambda_jk,
    thermal_occupation,
)
from .flux import (
    EfficiencyResult,
    FluxReport,
    UndefinedEfficiencyError,
    delta_fluxes,
    efficiency,
    flux_report,
    time_resolved_efficiency,
)
from .lindblad import Liouvillian, assemble_liouvillian, build_hamiltonian, ladder_ops
from .solvers import SolverError, StiffnessError, evolve, gibbs_state, steady_state

__all__ = [
    "ChainConfig",
    "CouplingTables",
    "EmitterParams",
    "SingularGeometryError",
    "build_coupling_tables",
    "chain_from_gaps",
    "displaced_chain",
    "gamma0",
    "gamma_jk",
    "lambda_jk",
    "thermal_occupation",
    "EfficiencyResult",
    "FluxReport",
    "UndefinedEfficiencyError",
    "delta_fluxes",
    "efficiency",
    "flux_report",
    "time_resolved_efficiency",
    "Liouvillian",
    "assemble_liouvillian",
    "build_hamiltonian",
    "ladder_ops",
    "SolverError",
    "StiffnessError",
    "evolve",
    "gibbs_state",
    "steady_state",
]
