"""Scenario files: schema, validation, and construction of run inputs.

A scenario is a single YAML document with nested sections. Parsing is strict
by default: unknown keys and constraint violations are collected with their
field paths and reported together, so a bad file fails loudly and completely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .control import ControlGains, spill_speed_bound
from .geometry import (
    SpillBoundary,
    Workspace,
    circle_boundary,
    ellipse_boundary,
    polygon_boundary,
)
from .kinematics import ActuatorLimits


class ScenarioError(ValueError):
    """Carries every violation found in a scenario file."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n" + "\n".join(f"  {v}" for v in self.violations))


@dataclass
class StopCondition:
    area_fraction: float = 0.01  # stop when area falls to this share of initial
    k_max: int = 1000

    def __post_init__(self):
        if not 0 < self.area_fraction < 1:
            raise ValueError("area_fraction must lie in (0, 1)")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


@dataclass
class SpillSpec:
    kind: str  # circle | ellipse | polygon
    center: list | None = None
    radius: float | None = None
    semi_axes: list | None = None
    angle: float = 0.0
    vertices: list | None = None
    velocity: list = field(default_factory=lambda: [0.0, 0.0])

    def build(self, resolution: float) -> SpillBoundary:
        if self.kind == "circle":
            return circle_boundary(self.center, self.radius, resolution)
        if self.kind == "ellipse":
            return ellipse_boundary(self.center, self.semi_axes, self.angle, resolution)
        return polygon_boundary(self.vertices, resolution)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "velocity": list(self.velocity)}
        if self.kind == "circle":
            out["center"] = list(self.center)
            out["radius"] = self.radius
        elif self.kind == "ellipse":
            out["center"] = list(self.center)
            out["semi_axes"] = list(self.semi_axes)
            out["angle"] = self.angle
        else:
            out["vertices"] = [list(v) for v in self.vertices]
        return out


@dataclass
class ScenarioConfig:
    bounds: list
    dock: list
    spills: list  # of SpillSpec
    robot_count: int
    robot_radius: float
    poses: list | None  # [[x, y, theta], ...] or None for random-walk placement
    vision_range: float
    comm_range: float
    operation_range: float
    capacity: float
    accel_max: float
    tread_width: float
    cycle: float
    fov_half_angle: float
    fot_half_angle: float
    gains: ControlGains
    stop: StopCondition
    seed: int
    promote_radius: float
    graph_rebuild_every: int
    placement_budget: int

    @property
    def resolution(self) -> float:
        return self.operation_range / 10.0

    @property
    def v_max(self) -> float:
        return self.capacity / self.operation_range

    def limits(self) -> ActuatorLimits:
        return ActuatorLimits(
            capacity=self.capacity,
            operation_range=self.operation_range,
            accel_max=self.accel_max,
            tread_width=self.tread_width,
            cycle=self.cycle,
            fov_half_angle=self.fov_half_angle,
        )

    def build_workspace(self) -> Workspace:
        spills = [s.build(self.resolution) for s in self.spills]
        return Workspace(tuple(self.bounds), spills, np.asarray(self.dock))

    def spill_velocities(self) -> list:
        return [np.asarray(s.velocity, dtype=float) for s in self.spills]

    def max_spill_speed(self) -> float:
        """Validation cap on boundary drift: visible within one cycle and
        slower than the robots, otherwise coverage cannot make progress."""
        vision_bound = spill_speed_bound(
            self.fov_half_angle, self.fot_half_angle, self.vision_range, self.cycle
        )
        return min(vision_bound, self.v_max)

    def to_dict(self) -> dict:
        g = self.gains
        return {
            "workspace": {"bounds": list(self.bounds), "dock": list(self.dock)},
            "spills": [s.to_dict() for s in self.spills],
            "robots": {
                "count": self.robot_count,
                "radius": self.robot_radius,
                "poses": None if self.poses is None else [list(p) for p in self.poses],
            },
            "ranges": {
                "vision": self.vision_range,
                "comm": self.comm_range,
                "operation": self.operation_range,
            },
            "limits": {
                "capacity": self.capacity,
                "accel_max": self.accel_max,
                "tread_width": self.tread_width,
                "cycle": self.cycle,
                "fov_half_angle": self.fov_half_angle,
                "fot_half_angle": self.fot_half_angle,
            },
            "gains": {
                "goal_gain": g.goal_gain,
                "repulse_gain": g.repulse_gain,
                "gap_gain": g.gap_gain,
                "kp": g.kp,
                "kd": g.kd,
                "goal_tolerance": g.goal_tolerance,
                "idle_fraction": g.idle_fraction,
                "lookahead": g.lookahead,
                "speed_gain": g.speed_gain,
                "steer_gain": g.steer_gain,
                "repulse_cap": g.repulse_cap,
            },
            "stop": {"area_fraction": self.stop.area_fraction, "k_max": self.stop.k_max},
            "engine": {
                "promote_radius": self.promote_radius,
                "graph_rebuild_every": self.graph_rebuild_every,
                "placement_budget": self.placement_budget,
            },
            "seed": self.seed,
        }


_SECTION_KEYS = {
    "workspace": {"bounds", "dock"},
    "robots": {"count", "radius", "poses"},
    "ranges": {"vision", "comm", "operation"},
    "limits": {"capacity", "accel_max", "tread_width", "cycle", "fov_half_angle", "fot_half_angle"},
    "gains": {
        "goal_gain",
        "repulse_gain",
        "gap_gain",
        "kp",
        "kd",
        "goal_tolerance",
        "idle_fraction",
        "lookahead",
        "speed_gain",
        "steer_gain",
        "repulse_cap",
    },
    "stop": {"area_fraction", "k_max"},
    "engine": {"promote_radius", "graph_rebuild_every", "placement_budget"},
}
_TOP_KEYS = set(_SECTION_KEYS) | {"spills", "seed"}
_SPILL_KEYS = {"kind", "center", "radius", "semi_axes", "angle", "vertices", "velocity"}


def parse_scenario(path, strict: bool = True) -> ScenarioConfig:
    """Load and fully validate a scenario file.

    Raises ScenarioError listing every violation with its field path.
    """
    raw = yaml.safe_load(Path(path).read_text())
    return scenario_from_dict(raw, strict=strict)


def scenario_from_dict(raw: dict, strict: bool = True) -> ScenarioConfig:
    errors: list = []
    if not isinstance(raw, dict):
        raise ScenarioError(["top level: expected a mapping"])

    if strict:
        for key in sorted(set(raw) - _TOP_KEYS):
            errors.append(f"{key}: unknown key")
        for section, allowed in _SECTION_KEYS.items():
            body = raw.get(section)
            if isinstance(body, dict):
                for key in sorted(set(body) - allowed):
                    errors.append(f"{section}.{key}: unknown key")

    def need(section, key, default=None, required=False):
        body = raw.get(section)
        if not isinstance(body, dict):
            if required:
                errors.append(f"{section}: missing section")
            return default
        if key not in body:
            if required:
                errors.append(f"{section}.{key}: missing")
            return default
        return body[key]

    bounds = need("workspace", "bounds", required=True)
    dock = need("workspace", "dock", required=True)
    if bounds is not None and (not isinstance(bounds, list) or len(bounds) != 4):
        errors.append("workspace.bounds: expected [xmin, ymin, xmax, ymax]")
        bounds = None
    if dock is not None and (not isinstance(dock, list) or len(dock) != 2):
        errors.append("workspace.dock: expected [x, y]")
        dock = None

    spills_raw = raw.get("spills")
    spills: list = []
    if not isinstance(spills_raw, list) or not spills_raw:
        errors.append("spills: expected a non-empty list")
    else:
        for i, s in enumerate(spills_raw):
            spec = _parse_spill(s, i, errors, strict)
            if spec is not None:
                spills.append(spec)

    count = need("robots", "count", required=True)
    radius = need("robots", "radius", 0.005)
    poses = need("robots", "poses")
    if count is not None and (not isinstance(count, int) or count < 1):
        errors.append("robots.count: expected a positive integer")
        count = None
    if not isinstance(radius, (int, float)) or radius <= 0:
        errors.append("robots.radius: expected a positive number")
        radius = 0.005
    if poses is not None:
        if not isinstance(poses, list) or any(not isinstance(p, list) or len(p) != 3 for p in poses):
            errors.append("robots.poses: expected a list of [x, y, theta]")
            poses = None
        elif count is not None and len(poses) != count:
            errors.append(f"robots.poses: {len(poses)} poses for {count} robots")

    vision = _positive(need("ranges", "vision", required=True), "ranges.vision", errors)
    comm = _positive(need("ranges", "comm", required=True), "ranges.comm", errors)
    operation = _positive(need("ranges", "operation", required=True), "ranges.operation", errors)

    capacity = _positive(need("limits", "capacity", required=True), "limits.capacity", errors)
    accel = _positive(need("limits", "accel_max", 0.1), "limits.accel_max", errors)
    tread = _positive(need("limits", "tread_width", 0.05), "limits.tread_width", errors)
    cycle = _positive(need("limits", "cycle", 0.033), "limits.cycle", errors)
    fov = _positive(need("limits", "fov_half_angle", math.pi / 4), "limits.fov_half_angle", errors)
    fot = _positive(need("limits", "fot_half_angle", math.pi / 36), "limits.fot_half_angle", errors)

    if vision is not None and operation is not None and operation > vision:
        errors.append("ranges.operation: must not exceed ranges.vision")
    if fov is not None and fot is not None and not fot < fov <= math.pi:
        errors.append("limits.fot_half_angle: need fot < fov <= pi")

    v_max = capacity / operation if capacity and operation else None

    gains_raw = raw.get("gains") or {}
    gain_kwargs = {}
    if isinstance(gains_raw, dict):
        for key in _SECTION_KEYS["gains"]:
            if key in gains_raw:
                gain_kwargs[key] = gains_raw[key]
    defaults = {}
    if v_max is not None and vision is not None:
        defaults = {
            "gap_gain": v_max / vision,
            "speed_gain": v_max,
            "repulse_range": vision,
            # arrival must land inside the boundary-contact threshold (one
            # resolution step), or navigation parks short of the boundary
            "goal_tolerance": min(radius, operation / 20.0),
            "lookahead": operation / 10.0 if operation else 0.009,
        }
    gains = None
    try:
        gains = ControlGains(**{**defaults, **gain_kwargs})
    except (TypeError, ValueError) as exc:
        errors.append(f"gains: {exc}")

    stop_raw = raw.get("stop") or {}
    stop = None
    try:
        stop = StopCondition(
            area_fraction=stop_raw.get("area_fraction", 0.01),
            k_max=stop_raw.get("k_max", 1000),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"stop: {exc}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errors.append("seed: expected a non-negative integer")
        seed = 0

    promote = need("engine", "promote_radius", 4.0 * radius)
    rebuild = need("engine", "graph_rebuild_every", 10)
    budget = need("engine", "placement_budget", 600)
    promote = _positive(promote, "engine.promote_radius", errors)
    if not isinstance(rebuild, int) or rebuild < 1:
        errors.append("engine.graph_rebuild_every: expected a positive integer")
        rebuild = 10
    if not isinstance(budget, int) or budget < 1:
        errors.append("engine.placement_budget: expected a positive integer")
        budget = 600

    if errors:
        raise ScenarioError(errors)

    config = ScenarioConfig(
        bounds=list(bounds),
        dock=list(dock),
        spills=spills,
        robot_count=count,
        robot_radius=float(radius),
        poses=poses,
        vision_range=float(vision),
        comm_range=float(comm),
        operation_range=float(operation),
        capacity=float(capacity),
        accel_max=float(accel),
        tread_width=float(tread),
        cycle=float(cycle),
        fov_half_angle=float(fov),
        fot_half_angle=float(fot),
        gains=gains,
        stop=stop,
        seed=seed,
        promote_radius=float(promote),
        graph_rebuild_every=rebuild,
        placement_budget=budget,
    )
    _validate_world(config, errors)
    if errors:
        raise ScenarioError(errors)
    return config


def _parse_spill(s, index: int, errors: list, strict: bool):
    prefix = f"spills[{index}]"
    if not isinstance(s, dict):
        errors.append(f"{prefix}: expected a mapping")
        return None
    if strict:
        for key in sorted(set(s) - _SPILL_KEYS):
            errors.append(f"{prefix}.{key}: unknown key")
    kind = s.get("kind")
    if kind not in ("circle", "ellipse", "polygon"):
        errors.append(f"{prefix}.kind: expected circle, ellipse, or polygon")
        return None
    velocity = s.get("velocity", [0.0, 0.0])
    if not isinstance(velocity, list) or len(velocity) != 2:
        errors.append(f"{prefix}.velocity: expected [vx, vy]")
        velocity = [0.0, 0.0]
    if kind == "circle":
        if not _is_point(s.get("center")):
            errors.append(f"{prefix}.center: expected [x, y]")
            return None
        if not isinstance(s.get("radius"), (int, float)) or s["radius"] <= 0:
            errors.append(f"{prefix}.radius: expected a positive number")
            return None
        return SpillSpec("circle", center=s["center"], radius=float(s["radius"]), velocity=velocity)
    if kind == "ellipse":
        if not _is_point(s.get("center")):
            errors.append(f"{prefix}.center: expected [x, y]")
            return None
        axes = s.get("semi_axes")
        if not _is_point(axes) or min(axes) <= 0:
            errors.append(f"{prefix}.semi_axes: expected two positive numbers")
            return None
        return SpillSpec(
            "ellipse",
            center=s["center"],
            semi_axes=axes,
            angle=float(s.get("angle", 0.0)),
            velocity=velocity,
        )
    vertices = s.get("vertices")
    if not isinstance(vertices, list) or len(vertices) < 3 or any(not _is_point(v) for v in vertices):
        errors.append(f"{prefix}.vertices: expected at least three [x, y] points")
        return None
    return SpillSpec("polygon", vertices=vertices, velocity=velocity)


def _is_point(v) -> bool:
    return isinstance(v, list) and len(v) == 2 and all(isinstance(c, (int, float)) for c in v)


def _positive(value, path: str, errors: list):
    if value is None:
        return None
    if not isinstance(value, (int, float)) or value <= 0:
        errors.append(f"{path}: expected a positive number")
        return None
    return float(value)


def _validate_world(config: ScenarioConfig, errors: list):
    try:
        workspace = config.build_workspace()
    except ValueError as exc:
        errors.append(f"workspace: {exc}")
        return
    xmin, ymin, xmax, ymax = config.bounds
    for i, spill in enumerate(workspace.spills):
        v = spill.vertices
        if np.any(v[:, 0] < xmin) or np.any(v[:, 0] > xmax) or np.any(v[:, 1] < ymin) or np.any(v[:, 1] > ymax):
            errors.append(f"spills[{i}]: extends outside the workspace bounds")
    cap = config.max_spill_speed()
    for i, vel in enumerate(config.spill_velocities()):
        speed = float(np.linalg.norm(vel))
        if speed > cap + 1e-12:
            errors.append(f"spills[{i}].velocity: speed {speed:.6g} exceeds the drift cap {cap:.6g}")
    if config.poses is not None:
        for i, p in enumerate(config.poses):
            if not workspace.inside((p[0], p[1])):
                errors.append(f"robots.poses[{i}]: outside the workspace")
            for j, spill in enumerate(workspace.spills):
                # standing exactly on the boundary is legal; strictly inside is not
                if spill.contains((p[0], p[1])) and spill.nearest_point((p[0], p[1]))[1] > 1e-9:
                    errors.append(f"robots.poses[{i}]: inside spill {j + 1}")


def dump_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)
