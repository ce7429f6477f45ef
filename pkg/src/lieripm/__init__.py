"""Trajectory optimization for rigid bodies on SO(3) x R^3 with a Riemannian interior point method."""

from .lie import exp_so3, hat, log_so3, vee
from .nlp import NLPProblem, VariableLayout
from .ripm import SolverOptions, TOLERANCE_PRESETS, solve
from .scenarios import ScenarioConfig, convergence_sweep, drone_docking, manipulator

__version__ = "0.1.0"
