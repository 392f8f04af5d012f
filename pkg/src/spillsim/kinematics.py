"""Unicycle integration under speed, acceleration, and turn-rate bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValueError("pose fields must be finite")
        self.theta = wrap_angle(self.theta)

    @property
    def position(self):
        return (self.x, self.y)

    def heading_vector(self):
        return (math.cos(self.theta), math.sin(self.theta))


@dataclass
class VelocityCommand:
    u: float = 0.0  # linear input, m/s
    w: float = 0.0  # angular input, rad/s


@dataclass
class ActuatorLimits:
    """Physical limits shared by all robots.

    capacity is the material-processing rate (m^2/s); with an operation range
    (sweep depth) of ``operation_range`` it bounds the linear speed at
    capacity / operation_range. The turn rate is bounded so one control cycle
    never rotates past a full field of view.
    """

    capacity: float  # m^2/s
    operation_range: float  # m, depth swept on the robot's left
    accel_max: float  # m/s^2
    tread_width: float  # m, wheel separation
    cycle: float  # s, control period
    fov_half_angle: float  # rad

    def __post_init__(self):
        for name in ("capacity", "operation_range", "accel_max", "tread_width", "cycle", "fov_half_angle"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def v_max(self) -> float:
        return self.capacity / self.operation_range

    @property
    def omega_max(self) -> float:
        return 2.0 * self.fov_half_angle / self.cycle

    def turn_resolution(self, w: float) -> float:
        """Angle swept in one cycle at angular rate w."""
        return w * self.cycle


def step_unicycle(pose: Pose, command: VelocityCommand, cycle: float) -> Pose:
    """Explicit first-order step of the unicycle model over one cycle."""
    if not (math.isfinite(command.u) and math.isfinite(command.w)):
        raise ValueError("command must be finite")
    return Pose(
        pose.x + command.u * math.cos(pose.theta) * cycle,
        pose.y + command.u * math.sin(pose.theta) * cycle,
        wrap_angle(pose.theta + command.w * cycle),
    )


def wheel_speeds(command: VelocityCommand, tread_width: float) -> tuple[float, float]:
    """Split a body command into (right, left) wheel speeds."""
    if tread_width <= 0:
        raise ValueError("tread width must be positive")
    half = 0.5 * command.w * tread_width
    return command.u + half, command.u - half


def body_command(v_right: float, v_left: float, tread_width: float) -> VelocityCommand:
    """Forward transform: wheel speeds back to a body command."""
    return VelocityCommand(0.5 * (v_right + v_left), (v_right - v_left) / tread_width)


def clamp_command(
    command: VelocityCommand,
    previous: VelocityCommand,
    limits: ActuatorLimits,
) -> VelocityCommand:
    """Apply speed, acceleration, and turn-rate bounds, preserving sign.

    The acceleration bound is applied to the linear input relative to the
    command realized on the previous cycle; the angular rate has no
    acceleration limit, only the magnitude bound.
    """
    u = command.u
    v_max = limits.v_max
    if abs(u) > v_max:
        u = math.copysign(v_max, u)
    max_delta = limits.accel_max * limits.cycle
    delta = u - previous.u
    if abs(delta) > max_delta:
        u = previous.u + math.copysign(max_delta, delta)
    w = command.w
    if abs(w) > limits.omega_max:
        w = math.copysign(limits.omega_max, w)
    return VelocityCommand(u, w)
