"""Deterministic multi-robot spill coverage simulator.

Robot teams locate closed spill regions, gather through limited-range
wireless links, and erode the spills by tracking their boundaries with
bounded-speed unicycle robots, using only local sensing.
"""

from .control import ControlGains, RobotState, TrackingMode
from .geometry import SpillBoundary, Workspace, circle_boundary, ellipse_boundary, polygon_boundary
from .kinematics import ActuatorLimits, Pose, VelocityCommand
from .scenario import ScenarioConfig, ScenarioError, StopCondition, parse_scenario
from .sensing import VisionConfig

__all__ = [
    "ActuatorLimits",
    "ControlGains",
    "Pose",
    "RobotState",
    "ScenarioConfig",
    "ScenarioError",
    "SpillBoundary",
    "StopCondition",
    "TrackingMode",
    "VelocityCommand",
    "VisionConfig",
    "Workspace",
    "circle_boundary",
    "ellipse_boundary",
    "parse_scenario",
    "polygon_boundary",
]

__version__ = "0.1.0"
