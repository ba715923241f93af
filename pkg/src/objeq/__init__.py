"""Equilibration and objectivity of measurement records in closed quantum systems."""

from . import equilibration, errors, hamiltonians, objectivity, qops, states
from .equilibration import (
    check_observable_bound,
    check_subsystem_bound,
    conditional_equilibrium,
    effective_dimension,
    finite_time_average,
    pinch,
    von_neumann_equilibrium,
)
from .hamiltonians import (
    ConditionalHamiltonianSpec,
    StarHamiltonianSpec,
    VonNeumannSpec,
    assemble,
    diagnose_spectrum,
    random_branch_ensemble,
)
from .objectivity import (
    MacroPartition,
    check_faithfulness,
    conditional_env_states,
    cq_distance,
    eta,
    fidelity_lower_bound,
    gamma,
    macro_fidelity_matrix,
    objectivity_report,
    sbs_deviation,
    verify_cq_commutation,
)
from .qops import fidelity, hermitian_eig, mutual_information, partial_trace, tensor, trace_distance
from .states import DensityMatrix, HilbertFactorization, PointerBasis, product_state, random_density

__version__ = "0.1.0"

__all__ = [
    "equilibration",
    "errors",
    "hamiltonians",
    "objectivity",
    "qops",
    "states",
    "assemble",
    "check_faithfulness",
    "check_observable_bound",
    "check_subsystem_bound",
    "conditional_env_states",
    "conditional_equilibrium",
    "ConditionalHamiltonianSpec",
    "cq_distance",
    "DensityMatrix",
    "diagnose_spectrum",
    "effective_dimension",
    "eta",
    "fidelity",
    "fidelity_lower_bound",
    "finite_time_average",
    "gamma",
    "hermitian_eig",
    "HilbertFactorization",
    "macro_fidelity_matrix",
    "MacroPartition",
    "mutual_information",
    "objectivity_report",
    "partial_trace",
    "pinch",
    "PointerBasis",
    "product_state",
    "random_branch_ensemble",
    "random_density",
    "sbs_deviation",
    "StarHamiltonianSpec",
    "tensor",
    "trace_distance",
    "verify_cq_commutation",
    "von_neumann_equilibrium",
    "VonNeumannSpec",
]
