"""Photon correlations of a weakly driven two-mode optomechanical system."""

__version__ = "0.1.0"

from .fock import DensityMatrix, HilbertSpace, QOperator, annihilation, creation, expectation, make_space, number
from .model import SystemParams, hamiltonian, liouvillian, reflected_operator
from .steady import SteadyObservables, observables, solve, steady_state, sweep
from .regression import CorrelationSeries, classical_bounds, conditional_state, default_tau_grid, g2_tau
from .analytic import (
    closed_form_observables,
    conditional_g2_tau,
    simplified_observables,
    steady_amplitudes,
    thermal_observables,
    two_photon_rabi,
)

__all__ = [
    "DensityMatrix", "HilbertSpace", "QOperator", "annihilation", "creation", "expectation", "make_space", "number",
    "SystemParams", "hamiltonian", "liouvillian", "reflected_operator",
    "SteadyObservables", "observables", "solve", "steady_state", "sweep",
    "CorrelationSeries", "classical_bounds", "conditional_state", "default_tau_grid", "g2_tau",
    "closed_form_observables", "conditional_g2_tau", "simplified_observables", "steady_amplitudes",
    "thermal_observables", "two_photon_rabi",
]
