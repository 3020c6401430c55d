"""Numerical lab for Boltzmann spatial random permutations on lattice boxes."""
import os as _os

# the TBB threading layer is not installed here; pick a layer that is
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .core import LatticeBox, ModelParams, Permutation, cycle_lengths, displacement_profile, energy
from .errors import InvalidInputError, NumericalDegeneracyError, SizeLimitError, SolverFailureError

__version__ = "0.1.0"

__all__ = [
    "LatticeBox",
    "ModelParams",
    "Permutation",
    "cycle_lengths",
    "displacement_profile",
    "energy",
    "InvalidInputError",
    "NumericalDegeneracyError",
    "SizeLimitError",
    "SolverFailureError",
]
