"""Per-robot hybrid controller.

Three states drive each robot: gathering toward a rendezvous parent,
searching for the boundary, and tracking it while eroding. Searching
navigation runs on an attractive/repulsive potential field; boundary
acquisition follows a rotate-scan-align procedure; tracking follows the
leading robot through a clamped arc-gap law with a dead-zone PD for heading
corrections. All functions here are local: they see one robot's pose,
observations, and gains, never the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .kinematics import ActuatorLimits, Pose, VelocityCommand, wrap_angle
from .sensing import BoundaryObservation, Sector, VisionConfig, classify_sector


class RobotState(Enum):
    RENDEZVOUS = "rendezvous"
    SEARCHING = "searching"
    TRACKING = "tracking"


class TrackingMode(Enum):
    NORMAL = "normal"
    IDLE = "idle"


# the only legal transitions of the hybrid state machine
ALLOWED_TRANSITIONS = {
    (RobotState.RENDEZVOUS, RobotState.SEARCHING),
    (RobotState.SEARCHING, RobotState.TRACKING),
    (RobotState.TRACKING, RobotState.SEARCHING),
}


@dataclass
class SearchFlags:
    on_the_boundary: bool = False
    boundary_within_fov: bool = False
    tracking_enable: bool = False
    no_boundary_detected: bool = False

    def clear(self):
        self.on_the_boundary = False
        self.boundary_within_fov = False
        self.tracking_enable = False
        self.no_boundary_detected = False


@dataclass
class ControlGains:
    """Scaling factors of the controller, all overridable per scenario."""

    goal_gain: float = 1.0  # attractive field toward the navigation goal
    repulse_gain: float = 0.01  # repulsive field around tracking robots
    gap_gain: float = 1.0  # speed per meter of arc gap to the leader
    kp: float = 2.0  # heading PD, proportional
    kd: float = 0.1  # heading PD, derivative
    repulse_range: float = 1.0  # influence radius of the repulsive field
    goal_tolerance: float = 0.005  # navigation dead zone
    idle_fraction: float = 0.5  # idle when this close (x comm range) to a busy root
    lookahead: float = 0.009  # offset of the steering point on the boundary
    speed_gain: float = 0.01  # linear speed scale while searching
    steer_gain: float = 2.0  # heading alignment rate while searching
    repulse_cap: float = 1e6  # ceiling on one repulsive gradient magnitude

    def __post_init__(self):
        for name in (
            "goal_gain",
            "repulse_gain",
            "gap_gain",
            "kp",
            "repulse_range",
            "goal_tolerance",
            "idle_fraction",
            "lookahead",
            "speed_gain",
            "steer_gain",
            "repulse_cap",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"gain {name} must be strictly positive")
        if self.kd < 0:
            raise ValueError("gain kd must be non-negative")
        if not 0 < self.idle_fraction < 1:
            raise ValueError("idle_fraction must lie in (0, 1)")


@dataclass
class ControllerContext:
    """Per-robot scratch carried between ticks."""

    flags: SearchFlags = field(default_factory=SearchFlags)
    scan_remaining: float | None = None  # rad left of the in-place scan
    scan_seen_any: bool = False
    theta_e_prev: float = 0.0
    last_fot_u: float = 0.0

    def start_scan(self):
        self.scan_remaining = 2.0 * math.pi
        self.scan_seen_any = False


# -- searching potential field ---------------------------------------


def searching_field(q, goal, repulsor_positions, gains: ControlGains):
    """Potential and gradient of the searching navigation field.

    The attractive half pulls toward the goal; each robot currently in
    tracking repels inside the influence radius. The repulsive gradient
    magnitude is capped so near-contact configurations stay finite.

    Returns:
        (potential, gradient) with gradient the true ascent direction.
    """
    q = np.asarray(q, dtype=float)
    goal = np.asarray(goal, dtype=float)
    diff = q - goal
    potential = 0.5 * gains.goal_gain * float(diff @ diff)
    gradient = gains.goal_gain * diff
    d0 = gains.repulse_range
    for rp in repulsor_positions:
        offset = q - np.asarray(rp, dtype=float)
        rho = float(np.linalg.norm(offset))
        if rho > d0 or rho == 0.0:
            continue
        inv = 1.0 / rho - 1.0 / d0
        potential += 0.5 * gains.repulse_gain * inv * inv
        mag = gains.repulse_gain * inv / (rho * rho)
        mag = min(mag, gains.repulse_cap)
        gradient = gradient - mag * (offset / rho)
    return potential, gradient


def searching_field_hessian(q, goal, repulsor_positions, gains: ControlGains) -> np.ndarray:
    """Second derivatives of the searching field (for the heading feed-forward)."""
    q = np.asarray(q, dtype=float)
    h = gains.goal_gain * np.eye(2)
    d0 = gains.repulse_range
    for rp in repulsor_positions:
        offset = q - np.asarray(rp, dtype=float)
        rho = float(np.linalg.norm(offset))
        if rho > d0 or rho == 0.0:
            continue
        e = offset / rho
        inv = 1.0 / rho - 1.0 / d0
        u_prime = -gains.repulse_gain * inv / (rho * rho)
        u_second = gains.repulse_gain * (1.0 / rho**4 + 2.0 * inv / rho**3)
        h += u_second * np.outer(e, e) + (u_prime / rho) * (np.eye(2) - np.outer(e, e))
    return h


def searching_command(
    pose: Pose,
    goal,
    repulsor_positions,
    gains: ControlGains,
    limits: ActuatorLimits,
) -> VelocityCommand:
    """Navigation command toward a goal across the searching field.

    Linear speed saturates with distance; the angular input aligns the
    heading with the field's descent direction plus its motion-induced
    rotation rate. A vanishing total gradient away from the goal (a transient
    saddle between repulsors) falls back to the pure attractive direction.
    """
    q = np.array([pose.x, pose.y])
    goal = np.asarray(goal, dtype=float)
    dist = float(np.linalg.norm(goal - q))
    if dist < gains.goal_tolerance:
        return VelocityCommand(0.0, 0.0)
    u = gains.speed_gain * math.tanh(dist * dist)
    _, grad = searching_field(q, goal, repulsor_positions, gains)
    grad_norm_sq = float(grad @ grad)
    if grad_norm_sq < 1e-18:
        grad = gains.goal_gain * (q - goal)
        grad_norm_sq = float(grad @ grad)
    descent = math.atan2(-grad[1], -grad[0])
    hess = searching_field_hessian(q, goal, repulsor_positions, gains)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    # rate of the field direction seen while moving at u along the heading;
    # invariant under the ascent/descent sign choice
    phi_dot = (
        (hess[1, 0] * c + hess[1, 1] * s) * grad[0] - (hess[0, 0] * c + hess[0, 1] * s) * grad[1]
    ) / grad_norm_sq * u
    w = -gains.steer_gain * wrap_angle(pose.theta - descent) + phi_dot
    return VelocityCommand(u, w)


# -- boundary acquisition ---------------------------------------------


@dataclass
class StepDecision:
    """Outcome of one controller tick."""

    command: VelocityCommand
    next_state: RobotState | None = None  # transition request, engine commits
    mode: TrackingMode = TrackingMode.NORMAL
    erode: bool = False
    task_complete: bool = False
    goal: np.ndarray | None = None
    promoted_parent: int | None = None


def search_init_tick(
    ctx: ControllerContext,
    observation: BoundaryObservation,
    vision: VisionConfig,
    limits: ActuatorLimits,
) -> StepDecision | None:
    """One tick of the in-place initialization scan.

    Rotates counterclockwise one resolution step per tick for up to a full
    turn, setting the flags the searching algorithm branches on. Returns the
    command for this tick, or None once the scan has resolved and the main
    searching logic should run instead.
    """
    if ctx.scan_remaining is None:
        return None
    if observation.on_boundary:
        ctx.flags.on_the_boundary = True
        ctx.scan_seen_any = True  # contact counts as detection
        if observation.spill_on_left and abs(observation.steering_bearing) <= vision.fot_half_angle:
            ctx.flags.tracking_enable = True
            ctx.scan_remaining = None
            return StepDecision(VelocityCommand(0.0, 0.0), next_state=RobotState.TRACKING)
        if observation.visible:
            ctx.flags.boundary_within_fov = True
            ctx.scan_remaining = None
            return None
        # contact without sight: leave the blind scan to the alignment logic,
        # which can steer from the contact tangent alone
        ctx.scan_remaining = None
        return None
    elif observation.visible:
        ctx.flags.boundary_within_fov = True
        ctx.scan_seen_any = True
        ctx.scan_remaining = None
        return None
    if ctx.scan_remaining <= 0.0:
        if not ctx.scan_seen_any:
            ctx.flags.no_boundary_detected = True
            ctx.scan_remaining = None
            return StepDecision(VelocityCommand(0.0, 0.0), task_complete=True)
        ctx.scan_remaining = None
        return None
    step = limits.omega_max * limits.cycle
    ctx.scan_remaining -= step
    return StepDecision(VelocityCommand(0.0, limits.omega_max))


def search_step(
    pose: Pose,
    ctx: ControllerContext,
    observation: BoundaryObservation,
    repulsor_positions,
    vision: VisionConfig,
    gains: ControlGains,
    limits: ActuatorLimits,
) -> StepDecision:
    """One searching tick: navigate to the boundary, then align with it.

    Off the boundary the robot navigates to the nearest visible point. On the
    boundary it stops and re-orients: spill on the right means it faces the
    wrong way around and spins counterclockwise past the boundary; spill on
    the left brings the PD alignment until the boundary direction enters the
    tracking dead zone, which arms tracking.
    """
    init = search_init_tick(ctx, observation, vision, limits)
    if init is not None:
        return init

    if observation.on_boundary:
        # the contact tangent steers here whether or not the boundary is
        # also in sight: the hull touches the material it must follow
        ctx.flags.on_the_boundary = True
        ctx.flags.boundary_within_fov = observation.visible
        if not observation.spill_on_left:
            # wrong way around: one open-loop CCW step past the FOV
            ctx.flags.boundary_within_fov = False
            return StepDecision(VelocityCommand(0.0, limits.omega_max))
        theta_e = -observation.tangent_bearing
        if abs(observation.tangent_bearing) <= vision.fot_half_angle:
            ctx.flags.tracking_enable = True
            ctx.theta_e_prev = theta_e
            return StepDecision(VelocityCommand(0.0, 0.0), next_state=RobotState.TRACKING)
        w = angular_pd(theta_e, ctx.theta_e_prev, Sector.LEFT_FOV, gains, limits)
        ctx.theta_e_prev = theta_e
        return StepDecision(VelocityCommand(0.0, w))

    ctx.flags.on_the_boundary = False
    if observation.visible:
        ctx.flags.boundary_within_fov = True
        goal = observation.nearest_point
        cmd = searching_command(pose, goal, repulsor_positions, gains, limits)
        return StepDecision(cmd, goal=np.asarray(goal, dtype=float))
    # boundary lost entirely: scan again; a blank full turn ends the task
    ctx.flags.boundary_within_fov = False
    ctx.start_scan()
    tick = search_init_tick(ctx, observation, vision, limits)
    return tick if tick is not None else StepDecision(VelocityCommand(0.0, 0.0))


# -- alignment and tracking -------------------------------------------


def angular_pd(
    theta_e_now: float,
    theta_e_prev: float,
    sector: Sector,
    gains: ControlGains,
    limits: ActuatorLimits,
) -> float:
    """Discrete PD on the heading error; zero inside the tracking dead zone.

    The output magnitude is clamped to the turn-rate bound, preserving sign.
    """
    if sector == Sector.FOT:
        return 0.0
    w = -gains.kp * theta_e_now - (gains.kd / limits.cycle) * (theta_e_now - theta_e_prev)
    if abs(w) > limits.omega_max:
        w = math.copysign(limits.omega_max, w)
    return w


def velocity_to_command(v, vartheta: float, lookahead: float) -> VelocityCommand:
    """Invert the steering-point map: desired velocity to a body command.

    ``v`` is the desired velocity of the boundary steering point expressed in
    the robot body frame; ``vartheta`` is the angle between the heading and
    the field direction.
    """
    if lookahead <= 0:
        raise ValueError("lookahead offset must be positive")
    c, s = math.cos(vartheta), math.sin(vartheta)
    u = v[0] * c + v[1] * s
    w = (-v[0] * s + v[1] * c) / lookahead
    return VelocityCommand(u, w)


def tracking_command(
    gap: float,
    vartheta: float,
    gains: ControlGains,
    limits: ActuatorLimits,
) -> VelocityCommand:
    """Forward command along the boundary from the virtual gap to the leader.

    Speed grows linearly with the gap and saturates at the speed bound; the
    desired velocity points along the boundary direction and is converted to
    a body command through the steering-point transform.
    """
    speed = min(gains.gap_gain * gap, limits.v_max)
    v_body = (speed * math.cos(vartheta), speed * math.sin(vartheta))
    return velocity_to_command(v_body, vartheta, gains.lookahead)


def mode_select(position, busy_root_positions, gains: ControlGains, comm_range: float) -> TrackingMode:
    """Idle near a static rendezvous root that still has gathering children.

    Idle robots keep tracking but do not erode, so the boundary stays where
    the root can see it; the threshold is inclusive.
    """
    position = np.asarray(position, dtype=float)
    radius = gains.idle_fraction * comm_range
    for root in busy_root_positions:
        if float(np.linalg.norm(position - np.asarray(root, dtype=float))) <= radius:
            return TrackingMode.IDLE
    return TrackingMode.NORMAL


def track_step(
    pose: Pose,
    ctx: ControllerContext,
    observation: BoundaryObservation,
    gap: float,
    busy_root_positions,
    vision: VisionConfig,
    gains: ControlGains,
    limits: ActuatorLimits,
    comm_range: float,
) -> StepDecision:
    """One tracking tick.

    Boundary in the tracking dead zone: advance by the gap law and erode
    (normal mode only). Boundary in the FOV but outside the dead zone:
    PD heading correction with the linear speed held from the last dead-zone
    tick, bled off at the acceleration limit. Neither in sight nor under the
    hull: tracking failed, fall back to searching.
    """
    lost_sight = not observation.visible and not observation.on_boundary
    drifted_off = not observation.on_boundary and observation.distance > 2.0 * vision.snap_tol
    if lost_sight or drifted_off:
        ctx.start_scan()
        return StepDecision(VelocityCommand(0.0, 0.0), next_state=RobotState.SEARCHING)
    bearing = observation.steering_bearing
    if observation.on_boundary:
        sector = Sector.FOT if abs(bearing) <= vision.fot_half_angle else Sector.LEFT_FOV
    else:
        sector = classify_sector(bearing, vision)
    if sector == Sector.FOT and observation.spill_on_left:
        cmd = tracking_command(gap, observation.tangent_bearing, gains, limits)
        ctx.last_fot_u = cmd.u
        ctx.theta_e_prev = -bearing
        mode = mode_select((pose.x, pose.y), busy_root_positions, gains, comm_range)
        return StepDecision(cmd, mode=mode, erode=mode == TrackingMode.NORMAL)
    theta_e = -bearing
    w = angular_pd(theta_e, ctx.theta_e_prev, sector if sector != Sector.FOT else Sector.LEFT_FOV, gains, limits)
    ctx.theta_e_prev = theta_e
    ctx.last_fot_u = max(0.0, ctx.last_fot_u - limits.accel_max * limits.cycle)
    return StepDecision(VelocityCommand(ctx.last_fot_u, w))


# -- dynamic spills ----------------------------------------------------


def dynamic_goal(pose: Pose, bearing: float, distance: float) -> np.ndarray:
    """Chase point on a moving boundary seen at a bearing and range."""
    angle = bearing + pose.theta
    return np.array([pose.x + distance * math.cos(angle), pose.y + distance * math.sin(angle)])


def spill_speed_bound(
    fov_half_angle: float,
    vartheta: float,
    vision_range: float,
    cycle: float,
) -> float:
    """Fastest boundary drift that cannot escape the FOV within one cycle."""
    left = (fov_half_angle - vartheta) * vision_range / cycle
    right = (fov_half_angle + vartheta) * vision_range / cycle
    return min(left, right)
