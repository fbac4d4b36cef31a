"""Open-system simulation of sideband cooling through a frequency-converting coupling.

The target resonator (mode ``a``) is coupled to a fast, strongly damped
auxiliary oscillator (mode ``b``). Modules:

``fock``      truncated two-mode Fock space, operators and states
``model``     parameters, Hamiltonians in three frames, thermal dissipators
``lindblad``  master-equation propagation and steady states
``mcwf``      quantum-trajectory ensembles
``langevin``  linear moment equations and closed forms
``cli``       scenario runner
"""

from .fock import DensityOperator, FockSpace, JointState, fock_state, product_state, thermal_state
from .lindblad import propagate, steady_state
from .model import (CouplingParams, DriveParams, ModeParams, build_model, estimate_cooling,
                    thermal_occupation)

__all__ = [
    "CouplingParams", "DensityOperator", "DriveParams", "FockSpace", "JointState", "ModeParams",
    "build_model", "estimate_cooling", "fock_state", "product_state", "propagate", "steady_state",
    "thermal_occupation", "thermal_state",
]
