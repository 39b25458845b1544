"""Singular-diffusion (total-variation flow) simulator with expansion noise.

Subpackages: grid (discrete calculus), noise (expansion Wiener process),
regularization (Yosida/envelope maps), solver (time stepping), analysis
(Monte Carlo certificates), cli (experiment front end).
"""

from .grid import Grid, ScalarField, VectorField
from .noise import BrownianPath, NoiseModel, build_noise
from .regularization import Regularization
from .solver import SolverParams, Trajectory, solve

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "BrownianPath",
    "NoiseModel",
    "build_noise",
    "Regularization",
    "SolverParams",
    "Trajectory",
    "solve",
]

__version__ = "0.1.0"
