"""Geometric sensing oracle.

Stands in for the vision pipeline: classifies where the boundary sits in a
robot's field of view (FOV) and field of tracking (FOT), and measures the
arc-length gap to the leading robot. Controllers only ever see the outputs
defined here, never global coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import OffBoundaryError, SpillBoundary
from .kinematics import Pose, wrap_angle


@dataclass
class VisionConfig:
    vision_range: float  # m
    fov_half_angle: float  # rad, FOV spans [-fov, fov] about the heading
    fot_half_angle: float  # rad, tracking dead zone inside the FOV
    snap_tol: float  # m, "sitting on the boundary" threshold

    def __post_init__(self):
        if not (0 < self.fot_half_angle < self.fov_half_angle <= math.pi):
            raise ValueError("need 0 < fot_half_angle < fov_half_angle <= pi")
        if self.vision_range <= 0 or self.snap_tol <= 0:
            raise ValueError("vision_range and snap_tol must be positive")


class Sector(Enum):
    FOT = "fot"
    LEFT_FOV = "left_fov"
    RIGHT_FOV = "right_fov"
    OUTSIDE = "outside"


def classify_sector(bearing: float, vision: VisionConfig) -> Sector:
    """Place a wrapped bearing into the FOT / signed FOV / outside sectors.

    The FOV edge is inclusive: bearing == fov_half_angle is still in the FOV.
    """
    mag = abs(bearing)
    if mag <= vision.fot_half_angle:
        return Sector.FOT
    if mag <= vision.fov_half_angle:
        return Sector.LEFT_FOV if bearing > 0 else Sector.RIGHT_FOV
    return Sector.OUTSIDE


@dataclass
class BoundaryObservation:
    visible: bool
    bearing: float = 0.0  # of the nearest visible point, relative to heading
    nearest_point: np.ndarray | None = None
    distance: float = math.inf
    on_boundary: bool = False
    spill_on_left: bool = False
    tangent_bearing: float = 0.0  # CCW boundary direction relative to heading
    boundary_direction: float = 0.0  # same, in the world frame

    @property
    def steering_bearing(self) -> float:
        """Bearing used for FOV/FOT classification and alignment.

        On the boundary the relevant angle is the travel direction error to
        the CCW tangent; off the boundary it is the line of sight to the
        nearest visible point.
        """
        return self.tangent_bearing if self.on_boundary else self.bearing


@dataclass
class LeaderObservation:
    leader_id: int | None
    gap: float  # virtual arc gap, always in [0, vision_range]
    raw_gap: float = 0.0  # unclamped CCW arc distance (vision_range if unknown)


def observe_boundary(pose: Pose, vision: VisionConfig, spill: SpillBoundary) -> BoundaryObservation:
    """Classify the spill boundary relative to one robot.

    The boundary is visible when some boundary point lies within the vision
    range and inside the FOV sector. "On the boundary" is a contact test
    (distance below snap_tol) independent of the FOV: a robot standing on the
    boundary but facing away from where it runs is on it yet does not see it.
    """
    if spill is None or spill.is_empty:
        return BoundaryObservation(visible=False)
    q = np.array([pose.x, pose.y])
    point, distance, tangent = spill.nearest_point(q)
    on_boundary = distance <= vision.snap_tol

    if on_boundary:
        # the contact zone has no meaningful line of sight; look where the
        # boundary extends beyond it
        best_point, best_dist, bearing = _nearest_in_sector(pose, vision, spill, min_dist=vision.snap_tol)
        visible = best_point is not None
    else:
        bearing = _bearing(pose, point)
        if distance <= vision.vision_range and abs(bearing) <= vision.fov_half_angle:
            visible = True
            best_point, best_dist = point, distance
        else:
            best_point, best_dist, bearing = _nearest_in_sector(pose, vision, spill)
            visible = best_point is not None
            if visible:
                _, _, tangent = spill.nearest_point(best_point)

    if not visible:
        return BoundaryObservation(
            visible=False,
            nearest_point=point,
            distance=distance,
            on_boundary=on_boundary,
            spill_on_left=abs(wrap_angle(tangent - pose.theta)) <= 0.5 * math.pi,
            tangent_bearing=wrap_angle(tangent - pose.theta),
            boundary_direction=tangent,
        )

    tangent_bearing = wrap_angle(tangent - pose.theta)
    # the interior always lies left of the CCW tangent, so it is left of the
    # robot exactly when the heading points along (not against) the tangent;
    # unlike a probe point this also holds on arbitrarily thin remnants
    spill_on_left = abs(tangent_bearing) <= 0.5 * math.pi
    return BoundaryObservation(
        visible=True,
        bearing=bearing,
        nearest_point=best_point,
        distance=best_dist,
        on_boundary=on_boundary,
        spill_on_left=spill_on_left,
        tangent_bearing=tangent_bearing,
        boundary_direction=tangent,
    )


def _bearing(pose: Pose, point) -> float:
    return wrap_angle(math.atan2(point[1] - pose.y, point[0] - pose.x) - pose.theta)


def _nearest_in_sector(pose: Pose, vision: VisionConfig, spill: SpillBoundary, min_dist: float = 0.0):
    """Nearest boundary vertex inside the FOV cone and range; None if none.

    Vertices are spaced at most one resolution step apart, so vertex search
    matches a continuous search to within half a step.
    """
    q = np.array([pose.x, pose.y])
    rel = spill.vertices - q
    dist = np.linalg.norm(rel, axis=1)
    bearings = np.arctan2(rel[:, 1], rel[:, 0]) - pose.theta
    bearings = (bearings + np.pi) % (2.0 * np.pi) - np.pi
    ok = (dist <= vision.vision_range) & (np.abs(bearings) <= vision.fov_half_angle) & (dist > min_dist)
    if not np.any(ok):
        return None, math.inf, 0.0
    idx = np.nonzero(ok)[0]
    k = idx[int(np.argmin(dist[idx]))]
    return spill.vertices[k].copy(), float(dist[k]), float(bearings[k])


def leader_arc_distance(
    spill: SpillBoundary,
    q_i,
    q_leader,
    vision: VisionConfig,
    leader_id: int | None = None,
) -> LeaderObservation:
    """Virtual arc gap from a follower to its leading robot.

    The raw gap is the CCW arc length from the follower to the leader with
    wrap-around; gaps beyond the vision range (or an absent leader) saturate
    at the vision range.
    """
    _, d, _ = spill.nearest_point(np.asarray(q_i, dtype=float))
    if d > vision.snap_tol:
        raise OffBoundaryError(f"follower is {d:.6g} m off the boundary (tol {vision.snap_tol:.6g})")
    if q_leader is None:
        return LeaderObservation(None, vision.vision_range, vision.vision_range)
    s_i = spill.arc_coordinate(q_i)
    s_lead = spill.arc_coordinate(q_leader)
    gap = s_lead - s_i
    if gap < 0:
        gap += spill.perimeter
    return LeaderObservation(leader_id, min(gap, vision.vision_range), gap)


def arc_gap(perimeter: float, s_follower: float, s_leader: float) -> float:
    """Wrap-around CCW arc distance from follower to leader."""
    gap = s_leader - s_follower
    if gap < 0:
        gap += perimeter
    return gap
