"""Cat-state W-state transfer between resonator pairs through a driven qutrit."""

__version__ = "0.1.0"

from .analysis import SimulationResult, TransferFailure, extract_phases, fidelity, heisenberg_swap_check, observables
from .hamiltonians import (
    ConditionError,
    DerivedCouplings,
    DispersiveWarning,
    ParameterError,
    SystemParams,
    TimeDependentH,
    build_effective_H2,
    build_full_H,
    build_H0,
    build_H_prime,
    build_He,
    validate_conditions,
)
from .hilbert import HilbertLayout, QuantumState, SparseOperator
from .kernels import BACKEND
from .states import CatParams, TruncationError, WStateSpec, cat_state, ideal_target, w_state

__all__ = [
    "BACKEND",
    "CatParams",
    "ConditionError",
    "DerivedCouplings",
    "DispersiveWarning",
    "HilbertLayout",
    "ParameterError",
    "QuantumState",
    "SimulationResult",
    "SparseOperator",
    "SystemParams",
    "TimeDependentH",
    "TransferFailure",
    "TruncationError",
    "WStateSpec",
    "build_H0",
    "build_H_prime",
    "build_He",
    "build_effective_H2",
    "build_full_H",
    "cat_state",
    "extract_phases",
    "fidelity",
    "heisenberg_swap_check",
    "ideal_target",
    "observables",
    "validate_conditions",
    "w_state",
]
