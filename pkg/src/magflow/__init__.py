"""Periodic orbits of magnetic flows near symplectic minimum submanifolds.

Modules: :mod:`~magflow.symplectic` (fibre linear algebra),
:mod:`~magflow.geometry` (charts, fields, fibre data),
:mod:`~magflow.dynamics` (flow, rescaling, limit), :mod:`~magflow.orbits`
(shooting and census), :mod:`~magflow.predictions` (orbit-count bounds)
and :mod:`~magflow.cli`.
"""
__version__ = "0.1.0"

from .dynamics import PhaseState, RescaleConfig, Trajectory, hamiltonian_field, integrate, limiting_field
from .geometry import BaseManifold, TwistedPhaseSpace, eigenvalue_field, fibre_data, hamiltonian
from .orbits import OrbitRecord, SearchConfig, find_orbit, orbit_census
from .predictions import bound_magnetic, bound_main, bound_stable_set, per_class_bound
from .symplectic import classify_resonance, symplectic_complement, williamson

__all__ = [
    "BaseManifold",
    "OrbitRecord",
    "PhaseState",
    "RescaleConfig",
    "SearchConfig",
    "Trajectory",
    "TwistedPhaseSpace",
    "bound_magnetic",
    "bound_main",
    "bound_stable_set",
    "classify_resonance",
    "eigenvalue_field",
    "fibre_data",
    "find_orbit",
    "hamiltonian",
    "hamiltonian_field",
    "integrate",
    "limiting_field",
    "orbit_census",
    "per_class_bound",
    "symplectic_complement",
    "williamson",
]
