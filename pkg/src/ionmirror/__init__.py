"""Quantum-circuit simulation of a trapped ion in front of a mirror.

The ion, a driving laser slice and a delay loop of field qubits evolve under
small-time-step interaction unitaries; measuring the returning field qubit
each step yields photon clicks whose rate shows an interference fringe as a
function of the mirror distance.
"""

__version__ = "0.1.0"

from .analysis import FitResult, fit_sinusoid, pearson
from .circuit import Circuit, build_time_step, gate_census
from .experiment import (
    ExperimentConfig,
    SweepResult,
    run_trajectory,
    sweep_distance,
    time_averaged_population,
)
from .gates import PhysicalCouplings
from .kernel import available_backends, default_backend

__all__ = [
    "Circuit",
    "ExperimentConfig",
    "FitResult",
    "PhysicalCouplings",
    "SweepResult",
    "available_backends",
    "build_time_step",
    "default_backend",
    "fit_sinusoid",
    "gate_census",
    "pearson",
    "run_trajectory",
    "sweep_distance",
    "time_averaged_population",
]
