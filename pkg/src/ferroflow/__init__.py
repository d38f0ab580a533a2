"""Mixed finite element solver for the Shliomis ferrofluid model on the unit cube."""

from .diagnostics import EnergyRecord, ErrorReport, convergence_orders, energy, error_norms
from .mesh import Mesh, build_uniform_mesh
from .params import ModelParams, SchemeParams
from .stepper import Discretization, SimState, Stepper, run

__version__ = "0.1.0"

__all__ = [
    "Discretization", "EnergyRecord", "ErrorReport", "Mesh", "ModelParams", "SchemeParams",
    "SimState", "Stepper", "build_uniform_mesh", "convergence_orders", "energy",
    "error_norms", "run",
]
