"""Critical random matrix ensembles and their eigenfunction multifractal dimensions."""

__version__ = "0.1.0"

from .ensembles import EnsembleSpec, Kind, MatrixSample, element_abs_sum, sample
from .moments import MomentRecord, estimate_moments, moment_of_vector, solvable_moments
from .scaling import DimensionEstimate, SymmetryReport, fit_dimension, fit_g_slope, symmetry_residuals
from .spectral import EigenSystem, EnergyWindow, density_of_states, diagonalize, perturbative_eigvec, select_window
