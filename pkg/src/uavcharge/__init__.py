"""uavcharge: deterministic simulator and optimization library for a
three-tier UAV charging network (towers -> charging drones -> MBS drones).
"""

from . import cli, core, matching, metrics, powerctl, simengine

__version__ = "0.1.0"

__all__ = ["cli", "core", "matching", "metrics", "powerctl", "simengine", "__version__"]
