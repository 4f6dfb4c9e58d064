"""Semiclassical dynamics and thermodynamics of Hofstadter bands with first-order
geometric corrections, plus finite-lattice oracles that test them."""
from .errors import (AdmissibilityError, ConfigError, DegeneracyError, DegenerateFormError,
                     GapError, HofscError, NumericError)
from .lattice_model import FiniteLattice, FluxRational, PotentialSpec, bloch_matrix
from .band_geometry import band_data, berry_curvature, chern_number, magnetic_moment
from .classical_core import ClassicalSystem
from .flow import flow_map, integrate

__version__ = "0.1.0"
