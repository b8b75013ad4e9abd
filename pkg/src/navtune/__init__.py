"""navtune: learn per-context parameters for a sampling-based local planner
from a single teleoperated demonstration, and switch them online."""

__version__ = "0.1.0"

from .world import Action, LaserScan, RobotState, ScanConfig, SimConfig, WorldMap
from .dwa import DEFAULT_BOUNDS, DEFAULT_PARAMS, ParamBounds, PlannerParams

__all__ = [
    "Action", "LaserScan", "RobotState", "ScanConfig", "SimConfig", "WorldMap",
    "DEFAULT_BOUNDS", "DEFAULT_PARAMS", "ParamBounds", "PlannerParams",
    "__version__",
]
