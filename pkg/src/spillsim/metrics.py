"""Run evaluation: convergence, distance, completeness, and CSV emission."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FIXED_DECIMALS = 9  # all numeric CSV output uses this fixed precision


@dataclass
class SpillMetrics:
    spill_id: int  # 1-based
    area: float
    perimeter: float
    lyapunov: float
    robot_count: int
    k_stop: int | None = None


@dataclass
class MetricsRecord:
    iteration: int
    spills: list  # of SpillMetrics
    cumulative_distance: float
    state_counts: dict  # state name -> robot count

    @property
    def sum_lyapunov(self) -> float:
        return sum(s.lyapunov for s in self.spills)


def lyapunov(robot_positions, spill_centroid=None) -> float:
    """Convergence measure for the robots working one spill.

    Two or more robots: sum of pairwise distances. Exactly one robot: its
    distance to the spill's (frozen initial) centroid. No robots: zero.
    """
    pts = [np.asarray(p, dtype=float) for p in robot_positions]
    if len(pts) == 0:
        return 0.0
    if len(pts) == 1:
        if spill_centroid is None:
            return 0.0
        return float(np.linalg.norm(pts[0] - np.asarray(spill_centroid, dtype=float)))
    total = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            total += float(np.linalg.norm(pts[i] - pts[j]))
    return total


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    """Area centroid of a closed CCW polygon."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    if abs(area) < 1e-15:
        return v.mean(axis=0)
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return np.array([cx, cy])


def total_distance(pose_history) -> float:
    """Sum of per-tick displacements over all robots.

    ``pose_history``: iterable of (K, 2) arrays, one per robot.
    """
    total = 0.0
    for track in pose_history:
        track = np.asarray(track, dtype=float)
        if len(track) < 2:
            continue
        total += float(np.sum(np.linalg.norm(np.diff(track, axis=0), axis=1)))
    return total


def completeness(area: float, initial_area: float) -> float:
    """Percent of the spill removed so far."""
    if initial_area <= 0:
        return 100.0
    return 100.0 * (1.0 - area / initial_area)


@dataclass
class RunSummary:
    """End-of-run roll-up mirroring the per-spill result table."""

    iterations: int
    spill_rows: list = field(default_factory=list)  # dicts per spill
    all_complete: bool = False

    def format_text(self) -> str:
        lines = [f"iterations_run: {self.iterations}", f"all_spills_complete: {self.all_complete}"]
        for row in self.spill_rows:
            lines.append(f"spill {row['spill_id']}:")
            lines.append(f"  residual_area_m2: {row['residual_area']:.{FIXED_DECIMALS}f}")
            lines.append(f"  completeness_pct: {row['completeness']:.4f}")
            lines.append(f"  allocated_robots: {row['allocated_robots']}")
            points = ",".join(str(p) for p in row["rendezvous_points"])
            lines.append(f"  rendezvous_points: [{points}]")
            k_stop = row["k_stop"] if row["k_stop"] is not None else "none"
            lines.append(f"  k_stop: {k_stop}")
            lines.append(f"  distance_total_m: {row['distance_total']:.{FIXED_DECIMALS}f}")
        return "\n".join(lines) + "\n"


CSV_HEADER = (
    "iteration,spill_id,area,perimeter,lyapunov,sum_lyapunov,"
    "cumulative_distance,n_tracking,n_searching,n_rendezvous"
)


def metrics_csv_lines(records) -> list:
    """Fixed-decimal CSV rows for a sequence of MetricsRecord."""
    fmt = f"{{:.{FIXED_DECIMALS}f}}"
    lines = [CSV_HEADER]
    for rec in records:
        sum_l = rec.sum_lyapunov
        for sm in rec.spills:
            lines.append(
                ",".join(
                    [
                        str(rec.iteration),
                        str(sm.spill_id),
                        fmt.format(sm.area),
                        fmt.format(sm.perimeter),
                        fmt.format(sm.lyapunov),
                        fmt.format(sum_l),
                        fmt.format(rec.cumulative_distance),
                        str(rec.state_counts.get("tracking", 0)),
                        str(rec.state_counts.get("searching", 0)),
                        str(rec.state_counts.get("rendezvous", 0)),
                    ]
                )
            )
    return lines


POSES_HEADER = "iteration,robot_id,x,y,theta,state"


def poses_csv_lines(pose_rows) -> list:
    """Rows of (iteration, robot_id, x, y, theta, state_name)."""
    fmt = f"{{:.{FIXED_DECIMALS}f}}"
    lines = [POSES_HEADER]
    for iteration, robot_id, x, y, theta, state in pose_rows:
        lines.append(
            ",".join([str(iteration), str(robot_id), fmt.format(x), fmt.format(y), fmt.format(theta), state])
        )
    return lines
