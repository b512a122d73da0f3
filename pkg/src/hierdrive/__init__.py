"""hierdrive: hierarchical BEV-to-intent driving planner on a synthetic world."""

__version__ = "0.1.0"

from .config import TrainConfig
from .planner import IntentAnchorSet, PlanOutput
from .scenes import Scene, build_dataset, load_scenes, save_scenes
from .worlds import generate_scene

__all__ = [
    "TrainConfig",
    "IntentAnchorSet",
    "PlanOutput",
    "Scene",
    "build_dataset",
    "generate_scene",
    "load_scenes",
    "save_scenes",
    "__version__",
]
