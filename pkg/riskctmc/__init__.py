"""
riskctmc - time-consistent coherent risk evaluation of cost processes on
continuous-time finite-state Markov chains.
"""

__version__ = "1.0.0"
__license__ = "MIT"

from riskctmc.markov_core import (
    CostSpec,
    GeneratorSchedule,
    MarkovModel,
    SignedKernel,
    StateSpace,
    transition_matrix,
)
from riskctmc.risk_mappings import RiskMappingSpec, RiskVariant, sigma_eval
from riskctmc.backward_solver import ValueFunction, solve_ode
from riskctmc.discrete_approx import convergence_study, dp_recursion
from riskctmc.model_io import load_model

__all__ = [
    "CostSpec",
    "GeneratorSchedule",
    "MarkovModel",
    "SignedKernel",
    "StateSpace",
    "transition_matrix",
    "RiskMappingSpec",
    "RiskVariant",
    "sigma_eval",
    "ValueFunction",
    "solve_ode",
    "convergence_study",
    "dp_recursion",
    "load_model",
]
