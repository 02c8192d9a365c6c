"""On-demand horizon-based multi-robot coverage path planning."""
from .planner import CoveragePlanner, HorizonResult, Mode
from .robots import Motion, Orientation, RobotKind, State
from .workspace import GroundTruthMap, WorkspaceView, load_map

__all__ = [
    "CoveragePlanner",
    "GroundTruthMap",
    "HorizonResult",
    "Mode",
    "Motion",
    "Orientation",
    "RobotKind",
    "State",
    "WorkspaceView",
    "load_map",
]
__version__ = "0.1.0"
