"""Stochastic-action particle mechanics: sampling, wave propagation, trajectories, statistics."""
__version__ = "0.1.0"

from .action import HamiltonianSpec, StochasticParams, compound, verify_factorization
from .errors import (ConfigurationError, DegenerateStateError, DomainError, EmptyEnsembleError,
                     InsufficientSamplesError, NumericalError, StochQuantError)
from .kernels import BACKEND
from .madelung import decompose
from .numerics import SpatialGrid
from .scenarios import Scenario, list_scenarios, load_config, preset
from .solver import WaveFunction, build_hamiltonian, evolve
from .trajectories import run_ensemble

__all__ = [
    "BACKEND", "ConfigurationError", "DegenerateStateError", "DomainError", "EmptyEnsembleError",
    "HamiltonianSpec", "InsufficientSamplesError", "NumericalError", "Scenario", "SpatialGrid",
    "StochQuantError", "StochasticParams", "WaveFunction", "build_hamiltonian", "compound", "decompose",
    "evolve", "list_scenarios", "load_config", "preset", "run_ensemble", "verify_factorization",
    "__version__",
]
