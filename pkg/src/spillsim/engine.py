"""Simulation loop: placement, the per-tick pipeline, and termination.

Tick phases, in order: snapshot, sensing, controller dispatch, collision
priority (tracking commands pass untouched; searching robots are repelled by
trackers; gathering robots by both), command clamping, integration, overlap
resolution, erosion along realized displacements, dynamic spill drift,
transition commit, metrics. Identical scenario and seed give bit-identical
traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.ops import unary_union

from . import control, metrics, rendezvous, sensing
from .control import ControllerContext, RobotState, StepDecision, TrackingMode
from .geometry import sweep_rectangle
from .kinematics import Pose, VelocityCommand, clamp_command, step_unicycle, wrap_angle
from .scenario import ScenarioConfig


@dataclass(eq=False)
class RobotRecord:
    id: int
    pose: Pose
    command: VelocityCommand
    state: RobotState
    ctx: ControllerContext
    spill_index: int | None = None
    parent: int | None = None
    tree_root: int | None = None
    mode: TrackingMode = TrackingMode.NORMAL
    cumulative_distance: float = 0.0
    stranded: bool = False
    task_complete: bool = False
    reached_root: bool = False
    backoff_until: int = 0
    conflict_ticks: int = 0
    blocked_ticks: int = 0
    escape_until: int = 0
    escape_heading: float = 0.0
    last_motion: np.ndarray | None = None

    def position(self) -> np.ndarray:
        return np.array([self.pose.x, self.pose.y])


@dataclass(eq=False)
class SpillTracker:
    boundary: object
    initial_area: float
    initial_perimeter: float
    centroid: np.ndarray  # frozen initial centroid (drifts with a moving spill)
    velocity: np.ndarray
    k_stop: int | None = None
    split_events: int = 0


@dataclass(eq=False)
class SimulationState:
    config: ScenarioConfig
    k: int
    robots: list
    spills: list  # of SpillTracker
    graph: rendezvous.ConnectivityGraph
    assignment: rendezvous.Assignment
    trees: list
    rendezvous_points: list
    rng: np.random.Generator
    records: list = field(default_factory=list)
    pose_rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    record_poses: bool = False
    workspace: object = None

    def robot(self, robot_id: int) -> RobotRecord:
        return self.robots[robot_id - 1]

    def tree_of(self, root_id: int):
        for tree in self.trees:
            if tree.root == root_id:
                return tree
        return None


def init(config: ScenarioConfig, seed: int | None = None, record_poses: bool = False) -> SimulationState:
    """Seeded initial state: placement, election, assignment, trees."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    workspace = config.build_workspace()
    vision = _vision(config)

    if config.poses is not None:
        poses = [Pose(*p) for p in config.poses]
    else:
        poses = _random_walk_placement(config, workspace, rng)

    robots = [
        RobotRecord(
            id=i + 1,
            pose=poses[i],
            command=VelocityCommand(0.0, 0.0),
            state=RobotState.RENDEZVOUS,
            ctx=ControllerContext(),
        )
        for i in range(config.robot_count)
    ]

    spills = [
        SpillTracker(
            boundary=b,
            initial_area=b.area,
            initial_perimeter=b.perimeter,
            centroid=metrics.polygon_centroid(b.vertices),
            velocity=vel,
        )
        for b, vel in zip(workspace.spills, config.spill_velocities())
    ]

    # election: whoever sees a boundary right after placement becomes a root
    visible = {}
    target_spill = {}
    for robot in robots:
        best = None
        for idx, tracker in enumerate(spills):
            obs = sensing.observe_boundary(robot.pose, vision, tracker.boundary)
            if obs.visible and (best is None or obs.distance < best[0]):
                best = (obs.distance, idx)
        visible[robot.id] = best is not None
        if best is not None:
            target_spill[robot.id] = best[1]

    points = rendezvous.select_rendezvous_points(visible)
    positions = {r.id: r.position() for r in robots}
    graph = rendezvous.build_graph(positions, config.comm_range)
    assignment = rendezvous.assign(graph, points, {p: target_spill[p] for p in points})
    trees = rendezvous.build_trees(graph, assignment)

    state = SimulationState(
        config=config,
        k=0,
        robots=robots,
        spills=spills,
        graph=graph,
        assignment=assignment,
        trees=trees,
        rendezvous_points=points,
        rng=rng,
        record_poses=record_poses,
        workspace=workspace,
    )
    for idx in range(len(spills)):
        if not any(target_spill.get(p) == idx for p in points):
            state.events.append((0, f"spill {idx + 1} uncovered: no robot sees it"))

    for robot in robots:
        point = assignment.target.get(robot.id)
        if point is None:
            robot.stranded = True
            state.events.append((0, f"robot {robot.id} stranded: no rendezvous point reachable"))
            continue
        robot.spill_index = assignment.spill_of_point[point]
        robot.tree_root = point
        tree = state.tree_of(point)
        robot.parent = tree.parent.get(robot.id)
        if robot.id == point and not tree.children_of(robot.id):
            _enter_searching(robot)

    _record_metrics(state)
    _check_stop(state)
    if record_poses:
        _record_poses(state)
    return state


def _vision(config: ScenarioConfig) -> sensing.VisionConfig:
    return sensing.VisionConfig(
        vision_range=config.vision_range,
        fov_half_angle=config.fov_half_angle,
        fot_half_angle=config.fot_half_angle,
        snap_tol=config.resolution,
    )


def _enter_searching(robot: RobotRecord):
    robot.state = RobotState.SEARCHING
    robot.ctx.flags.clear()
    robot.ctx.start_scan()


def _random_walk_placement(config: ScenarioConfig, workspace, rng) -> list:
    """Seeded random walk from the dock, one robot at a time.

    Each walk stops at the first boundary sighting (the robot then faces what
    it saw) or when the step budget runs out; walks never step into a spill
    and stay inside the workspace. Final positions keep robots apart.
    """
    placed: list = []
    poses: list = []
    step = min(0.8 * config.vision_range, 0.15)
    detect = 0.8 * config.vision_range
    min_gap = 2.0 * config.robot_radius + 1e-3

    def nearest_boundary(pos):
        best = None
        for tracker in workspace.spills:
            point, dist, _ = tracker.nearest_point(pos)
            if best is None or dist < best[1]:
                best = (point, dist)
        return best

    for i in range(config.robot_count):
        pose = None
        for _ in range(40):
            pos = np.asarray(config.dock, dtype=float).copy()
            heading = float(rng.uniform(-math.pi, math.pi))
            sighted = None
            for _ in range(config.placement_budget):
                heading += float(rng.uniform(-0.5 * math.pi, 0.5 * math.pi))
                cand = pos + step * np.array([math.cos(heading), math.sin(heading)])
                cand = workspace.clamp(cand)
                if any(t.contains(cand) for t in workspace.spills):
                    continue
                pos = cand
                point, dist = nearest_boundary(pos)
                if dist <= detect and all(float(np.linalg.norm(pos - q)) >= min_gap for q in placed):
                    sighted = point
                    break
            if any(t.contains(pos) for t in workspace.spills):
                continue
            if any(float(np.linalg.norm(pos - q)) < min_gap for q in placed):
                continue
            if sighted is not None:
                heading = math.atan2(sighted[1] - pos[1], sighted[0] - pos[0])
            pose = Pose(float(pos[0]), float(pos[1]), heading)
            break
        if pose is None:
            raise RuntimeError(f"could not place robot {i + 1} after 40 walks")
        placed.append(np.array([pose.x, pose.y]))
        poses.append(pose)
    return poses


# -- tick pipeline -----------------------------------------------------


def tick(state: SimulationState):
    """Advance the simulation one control cycle in place."""
    config = state.config
    vision = _vision(config)
    limits = config.limits()
    gains = config.gains
    state.k += 1

    positions = {r.id: r.position() for r in state.robots}
    prev_poses = {r.id: r.pose for r in state.robots}

    # sensing over each robot's assigned spill
    observations = {}
    for robot in state.robots:
        spill = state.spills[robot.spill_index].boundary if robot.spill_index is not None else None
        observations[robot.id] = sensing.observe_boundary(robot.pose, vision, spill)

    gaps = _leader_gaps(state, positions)
    tracking_positions = [positions[r.id] for r in state.robots if r.state == RobotState.TRACKING]
    searching_positions = [positions[r.id] for r in state.robots if r.state == RobotState.SEARCHING]
    busy_roots = _busy_root_positions(state, positions)

    decisions: dict = {}
    for robot in state.robots:
        obs = observations[robot.id]
        if robot.stranded or robot.task_complete:
            decisions[robot.id] = StepDecision(VelocityCommand(0.0, 0.0))
        elif robot.state == RobotState.RENDEZVOUS:
            decisions[robot.id] = _rendezvous_decision(
                state, robot, obs, positions, tracking_positions, searching_positions, vision
            )
        elif robot.state == RobotState.SEARCHING:
            if state.k < robot.backoff_until:
                decisions[robot.id] = StepDecision(VelocityCommand(0.0, 0.0))
            elif state.k < robot.escape_until and not obs.on_boundary:
                # walk out of a standoff on a fresh heading, then search again
                w = 2.0 * wrap_angle(robot.escape_heading - robot.pose.theta)
                decisions[robot.id] = StepDecision(VelocityCommand(limits.v_max, w))
            else:
                robot.escape_until = 0
                decisions[robot.id] = control.search_step(
                    robot.pose, robot.ctx, obs, tracking_positions, vision, gains, limits
                )
        else:
            decisions[robot.id] = control.track_step(
                robot.pose,
                robot.ctx,
                obs,
                gaps.get(robot.id, vision.vision_range),
                busy_roots,
                vision,
                gains,
                limits,
                config.comm_range,
            )

    # clamp, integrate, reflect at walls
    for robot in state.robots:
        cmd = clamp_command(decisions[robot.id].command, robot.command, limits)
        decisions[robot.id].command = cmd
        robot.pose = _reflect_walls(state, step_unicycle(robot.pose, cmd, limits.cycle))

    # erosion along the integrated displacement, batched per spill; this runs
    # before overlap holds so that two robots ramming each other through a
    # thin remnant wall still grind it away instead of deadlocking on it
    rect_by_spill: dict = {}
    for robot in state.robots:
        decision = decisions[robot.id]
        if robot.state != RobotState.TRACKING or not decision.erode:
            continue
        before = prev_poses[robot.id]
        rect = sweep_rectangle(
            (before.x, before.y),
            (robot.pose.x, robot.pose.y),
            config.operation_range,
            back_margin=config.resolution,
        )
        if rect is not None:
            rect_by_spill.setdefault(robot.spill_index, []).append(rect)
    for idx, rects in sorted(rect_by_spill.items()):
        tracker = state.spills[idx]
        if tracker.boundary.is_empty:
            continue
        result = tracker.boundary.subtract_region(unary_union(rects))
        if result.split:
            tracker.split_events += 1
            state.events.append((state.k, f"spill {idx + 1} split; tracking largest component"))
        tracker.boundary = result.boundary

    _resolve_overlaps(state, prev_poses)

    # dynamic spill drift
    cap = config.max_spill_speed()
    for tracker in state.spills:
        if float(np.linalg.norm(tracker.velocity)) > 0:
            tracker.boundary = tracker.boundary.translate(tracker.velocity, limits.cycle, cap)
            tracker.centroid = tracker.centroid + tracker.velocity * limits.cycle

    # commit: distances, commands, backoff, transitions, promotions
    for robot in state.robots:
        decision = decisions[robot.id]
        before = prev_poses[robot.id]
        motion = np.array([robot.pose.x - before.x, robot.pose.y - before.y])
        robot.cumulative_distance += float(np.linalg.norm(motion))
        robot.command = decision.command
        _update_backoff(state, robot, motion, decision.command.u)
        robot.last_motion = motion
        if decision.task_complete:
            robot.task_complete = True
        if decision.promoted_parent is not None:
            robot.parent = decision.promoted_parent
        if decision.next_state is not None and decision.next_state != robot.state:
            edge = (robot.state, decision.next_state)
            if edge not in control.ALLOWED_TRANSITIONS:
                raise RuntimeError(f"illegal transition {edge} for robot {robot.id}")
            if decision.next_state == RobotState.SEARCHING:
                _enter_searching(robot)
            else:
                robot.state = decision.next_state
                robot.ctx.last_fot_u = 0.0
        robot.mode = decision.mode if robot.state == RobotState.TRACKING else TrackingMode.NORMAL

    if config.graph_rebuild_every > 0 and state.k % config.graph_rebuild_every == 0:
        _rescue_stranded(state)

    _record_metrics(state)
    _check_stop(state)
    if state.record_poses:
        _record_poses(state)


def _rendezvous_decision(
    state, robot, obs, positions, tracking_positions, searching_positions, vision
) -> StepDecision:
    config = state.config
    tree = state.tree_of(robot.tree_root)
    active_children = [
        r.id
        for r in state.robots
        if r.state == RobotState.RENDEZVOUS and not r.stranded and r.parent == robot.id and r.id != robot.id
    ]
    root = state.robot(robot.tree_root)
    root_boundary_point = None
    if robot.parent == robot.tree_root and not obs.visible:
        root_obs = sensing.observe_boundary(root.pose, vision, state.spills[root.spill_index].boundary)
        if root_obs.nearest_point is not None:
            root_boundary_point = np.asarray(root_obs.nearest_point, dtype=float)

    decision = rendezvous.rendezvous_step(
        robot_id=robot.id,
        position=positions[robot.id],
        tree=tree,
        current_parent=robot.parent,
        positions=positions,
        active_children=active_children,
        comm_range=config.comm_range,
        promote_radius=config.promote_radius,
        sees_boundary=obs.visible,
        root_boundary_point=root_boundary_point,
    )
    if decision.switch_to_searching:
        return StepDecision(VelocityCommand(0.0, 0.0), next_state=RobotState.SEARCHING)

    goal = decision.goal
    # a blind leaf that has reached its root keeps pressing toward the root's
    # sighting (relayed over the tree link) until its own vision picks it up
    if robot.parent == robot.tree_root and not active_children:
        gap_to_root = float(np.linalg.norm(positions[robot.id] - positions[robot.tree_root]))
        if gap_to_root <= config.promote_radius:
            robot.reached_root = True
        if robot.reached_root and root_boundary_point is not None:
            goal = root_boundary_point

    if robot.id == robot.tree_root:
        tracker = state.spills[robot.spill_index]
        if float(np.linalg.norm(tracker.velocity)) > 0:
            herd_goal = rendezvous.herd(
                positions[robot.id],
                tracker.boundary,
                config.vision_range,
                [positions[c] for c in active_children],
                config.comm_range,
                step=config.v_max * config.cycle,
            )
            if float(np.linalg.norm(herd_goal - positions[robot.id])) > 1e-12:
                goal = herd_goal

    if goal is None:
        return StepDecision(VelocityCommand(0.0, 0.0))
    repulsors = tracking_positions + searching_positions
    cmd = control.searching_command(robot.pose, goal, repulsors, config.gains, config.limits())
    out = StepDecision(cmd, goal=goal)
    out.promoted_parent = decision.promoted_parent
    return out


def _leader_gaps(state: SimulationState, positions) -> dict:
    """Virtual arc gap to the leading robot for every tracking robot."""
    gaps: dict = {}
    vision_range = state.config.vision_range
    by_spill: dict = {}
    for robot in state.robots:
        if robot.state == RobotState.TRACKING and robot.spill_index is not None:
            by_spill.setdefault(robot.spill_index, []).append(robot)
    for idx, robots in sorted(by_spill.items()):
        boundary = state.spills[idx].boundary
        if boundary.is_empty or boundary.perimeter <= 0:
            for robot in robots:
                gaps[robot.id] = vision_range
            continue
        if len(robots) == 1:
            gaps[robots[0].id] = vision_range
            continue
        arcs = {r.id: boundary.arc_coordinate(positions[r.id]) for r in robots}
        perimeter = boundary.perimeter
        for robot in robots:
            best = None
            for other in robots:
                if other.id == robot.id:
                    continue
                gap = sensing.arc_gap(perimeter, arcs[robot.id], arcs[other.id])
                if best is None or gap < best:
                    best = gap
            gaps[robot.id] = min(best, vision_range)
    return gaps


def _busy_root_positions(state: SimulationState, positions) -> list:
    """Static rendezvous roots that still have gathering children."""
    out = []
    for point in state.rendezvous_points:
        root = state.robot(point)
        if root.state != RobotState.RENDEZVOUS or root.stranded:
            continue
        if any(
            r.state == RobotState.RENDEZVOUS and not r.stranded and r.parent == point and r.id != point
            for r in state.robots
        ):
            out.append(positions[point])
    return out


def _reflect_walls(state: SimulationState, pose: Pose) -> Pose:
    xmin, ymin, xmax, ymax = state.config.bounds
    x, y, theta = pose.x, pose.y, pose.theta
    bounced = False
    if x < xmin or x > xmax:
        x = min(max(x, xmin), xmax)
        theta = math.pi - theta
        bounced = True
    if y < ymin or y > ymax:
        y = min(max(y, ymin), ymax)
        theta = -theta
        bounced = True
    return Pose(x, y, theta) if bounced else pose


def _resolve_overlaps(state: SimulationState, prev_poses):
    """Hold the approaching members of any overlapping pair in place.

    Halting undoes translation only (in-place rotation cannot cause overlap),
    and only for robots whose own motion closed the gap; a robot moving away
    from the contact keeps its escape. Reverting only ever restores positions
    that were mutually clear last tick, so the scan reaches a fixed point in
    at most N passes.
    """
    floor = 2.0 * state.config.robot_radius
    reverted: set = set()
    for _ in range(len(state.robots)):
        changed = False
        for i in range(len(state.robots)):
            for j in range(i + 1, len(state.robots)):
                a, b = state.robots[i], state.robots[j]
                d = math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y)
                if d >= floor:
                    continue
                pair_changed = False
                for r, other in ((a, b), (b, a)):
                    before = prev_poses[r.id]
                    if r.id in reverted or (r.pose.x == before.x and r.pose.y == before.y):
                        continue
                    step = (r.pose.x - before.x, r.pose.y - before.y)
                    toward = (other.pose.x - before.x, other.pose.y - before.y)
                    if step[0] * toward[0] + step[1] * toward[1] > 0.0:
                        r.pose = Pose(before.x, before.y, r.pose.theta)
                        reverted.add(r.id)
                        pair_changed = True
                if pair_changed:
                    state.events.append((state.k, f"overlap averted: robots {a.id},{b.id} held"))
                    changed = True
        if not changed:
            return


def _update_backoff(state: SimulationState, robot: RobotRecord, motion: np.ndarray, commanded_u: float):
    """Stop-and-resume deadlock relief for searching robots.

    Two stall signatures: commanded headings flipping back and forth between
    ticks, and commanded forward motion with no realized displacement (held
    at the collision floor against a parked robot). Both trigger a short
    random pause; a persistent block adds a random-heading escape walk.
    """
    if robot.state != RobotState.SEARCHING:
        robot.conflict_ticks = 0
        robot.blocked_ticks = 0
        return
    moved = float(np.linalg.norm(motion))
    if abs(commanded_u) > 1e-9 and moved < 0.1 * abs(commanded_u) * state.config.cycle:
        robot.blocked_ticks += 1
    else:
        robot.blocked_ticks = 0
    if robot.blocked_ticks >= 12:
        robot.backoff_until = state.k + 1 + int(state.rng.integers(1, 6))
        robot.escape_heading = float(state.rng.uniform(-math.pi, math.pi))
        robot.escape_until = robot.backoff_until + int(state.rng.integers(20, 61))
        robot.blocked_ticks = 0
        state.events.append((state.k, f"robot {robot.id} blocked; escape walk"))
        return
    if robot.last_motion is None:
        return
    a = robot.last_motion
    na = float(np.linalg.norm(a))
    if na < 1e-12 or moved < 1e-12:
        return
    if float(a @ motion) / (na * moved) < -0.9:
        robot.conflict_ticks += 1
    else:
        robot.conflict_ticks = 0
    if robot.conflict_ticks >= 10:
        robot.backoff_until = state.k + 1 + int(state.rng.integers(1, 6))
        robot.conflict_ticks = 0


def _rescue_stranded(state: SimulationState):
    """Adopt stranded robots that sit within comm range of an assigned one."""
    positions = {r.id: r.position() for r in state.robots}
    for robot in state.robots:
        if not robot.stranded:
            continue
        best = None
        for other in state.robots:
            if other.stranded or other.spill_index is None or other.id == robot.id:
                continue
            d = float(np.linalg.norm(positions[robot.id] - positions[other.id]))
            if d <= state.config.comm_range and (best is None or d < best[0]):
                best = (d, other)
        if best is None:
            continue
        _, host = best
        robot.stranded = False
        robot.spill_index = host.spill_index
        robot.tree_root = host.tree_root if host.tree_root is not None else host.id
        robot.parent = host.id
        state.events.append((state.k, f"robot {robot.id} rescued via robot {host.id}"))


def check_termination_local(robot: RobotRecord) -> bool:
    """A robot is locally done when a full blank scan found no boundary."""
    return robot.ctx.flags.no_boundary_detected


def _record_metrics(state: SimulationState):
    spill_rows = []
    for idx, tracker in enumerate(state.spills):
        assigned = [r for r in state.robots if r.spill_index == idx]
        positions = [r.position() for r in assigned]
        spill_rows.append(
            metrics.SpillMetrics(
                spill_id=idx + 1,
                area=tracker.boundary.area,
                perimeter=tracker.boundary.perimeter,
                lyapunov=metrics.lyapunov(positions, tracker.centroid),
                robot_count=len(assigned),
                k_stop=tracker.k_stop,
            )
        )
    counts = {"tracking": 0, "searching": 0, "rendezvous": 0}
    for robot in state.robots:
        counts[robot.state.value] += 1
    state.records.append(
        metrics.MetricsRecord(
            iteration=state.k,
            spills=spill_rows,
            cumulative_distance=sum(r.cumulative_distance for r in state.robots),
            state_counts=counts,
        )
    )


def _record_poses(state: SimulationState):
    for robot in state.robots:
        state.pose_rows.append(
            (state.k, robot.id, robot.pose.x, robot.pose.y, robot.pose.theta, robot.state.value)
        )


def _check_stop(state: SimulationState):
    for idx, tracker in enumerate(state.spills):
        if tracker.k_stop is None and tracker.boundary.area <= state.config.stop.area_fraction * tracker.initial_area:
            tracker.k_stop = state.k
            if state.records:
                state.records[-1].spills[idx].k_stop = state.k


def run(state: SimulationState) -> metrics.RunSummary:
    """Tick until every spill is below threshold or the budget is exhausted."""
    k_max = state.config.stop.k_max
    while state.k < k_max and not all(t.k_stop is not None for t in state.spills):
        tick(state)
    return summarize(state)


def summarize(state: SimulationState) -> metrics.RunSummary:
    rows = []
    for idx, tracker in enumerate(state.spills):
        assigned = [r for r in state.robots if r.spill_index == idx]
        points = [p for p in state.rendezvous_points if state.robot(p).spill_index == idx]
        rows.append(
            {
                "spill_id": idx + 1,
                "residual_area": tracker.boundary.area,
                "completeness": metrics.completeness(tracker.boundary.area, tracker.initial_area),
                "allocated_robots": len(assigned),
                "rendezvous_points": points,
                "k_stop": tracker.k_stop,
                "distance_total": sum(r.cumulative_distance for r in assigned),
            }
        )
    return metrics.RunSummary(
        iterations=state.k,
        spill_rows=rows,
        all_complete=all(t.k_stop is not None for t in state.spills),
    )
