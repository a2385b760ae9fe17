"""Grid-forming control laws, their weighted blend and the tools to tune it."""

from .artifacts import __version__
from .blend import (
    BlendWeights,
    ObjectiveSpec,
    brute_force_weights,
    check_feasible,
    objective_mse,
    optimize_weights,
    project_to_feasible,
)
from .network import Event, GridParams, ScenarioSpec, UnitSpec, run_simulation

__all__ = [
    "__version__",
    "BlendWeights",
    "Event",
    "GridParams",
    "ObjectiveSpec",
    "ScenarioSpec",
    "UnitSpec",
    "brute_force_weights",
    "check_feasible",
    "objective_mse",
    "optimize_weights",
    "project_to_feasible",
    "run_simulation",
]
