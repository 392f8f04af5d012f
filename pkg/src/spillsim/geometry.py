"""Closed spill boundaries: local queries and swept-area erosion.

A spill is represented by the closed polyline of its boundary, ordered
counterclockwise so the spill interior lies on the left of the direction of
travel. All lengths are in meters. Boundaries are value objects: every
mutating operation returns a new boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Point, Polygon


class DegenerateBoundaryError(ValueError):
    """Raised when an operation needs a non-empty boundary."""


class OffBoundaryError(ValueError):
    """Raised when a point expected on the boundary is too far from it."""


def shoelace_area(vertices: np.ndarray) -> float:
    """Signed area of a closed polyline (positive for CCW order)."""
    if len(vertices) < 3:
        return 0.0
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _edge_lengths(vertices: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.roll(vertices, -1, axis=0) - vertices, axis=1)


@dataclass
class SpillBoundary:
    """Closed CCW boundary of one spill patch.

    Args:
        vertices: (N, 2) array of boundary vertices, CCW, not closed
            (the edge from the last vertex back to the first is implicit).
            Fewer than 3 vertices denotes an empty (fully covered) region.
        resolution: target vertex spacing h; consecutive spacing is kept in
            [h/10, h] by resampling after erosion.
        initial_area: area of the spill before any coverage; defaults to the
            area of ``vertices`` at construction.

    The first vertex is the arc-length reference point: arc coordinates are
    measured CCW from ``vertices[0]``.
    """

    vertices: np.ndarray
    resolution: float
    initial_area: float | None = None
    _cumlen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("boundary vertices must be finite")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if len(self.vertices) >= 3 and shoelace_area(self.vertices) < 0:
            self.vertices = self.vertices[::-1].copy()
        lengths = _edge_lengths(self.vertices) if len(self.vertices) else np.zeros(0)
        self._cumlen = np.concatenate([[0.0], np.cumsum(lengths)])
        if self.initial_area is None:
            self.initial_area = self.area
        self._poly = None

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3

    @property
    def reference_point(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros(2)
        return self.vertices[0]

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices) if not self.is_empty else 0.0

    @property
    def perimeter(self) -> float:
        return float(self._cumlen[-1]) if not self.is_empty else 0.0

    def as_polygon(self) -> Polygon:
        if self._poly is None:
            if self.is_empty:
                self._poly = Polygon()
            else:
                poly = Polygon(self.vertices)
                if not poly.is_valid:
                    poly = poly.buffer(0)
                    if isinstance(poly, MultiPolygon):
                        poly = max(poly.geoms, key=lambda p: p.area)
                self._poly = poly
                shapely.prepare(self._poly)
        return self._poly

    def _replace(self, vertices: np.ndarray) -> "SpillBoundary":
        return SpillBoundary(vertices, self.resolution, self.initial_area)

    # -- local queries ------------------------------------------------

    def nearest_point(self, q) -> tuple[np.ndarray, float, float]:
        """Closest boundary point to ``q``.

        Returns:
            (point, distance, tangent_direction) where tangent_direction is
            the world-frame angle of CCW travel at that point. Ties within
            1e-12 are broken by the lowest CCW arc-length coordinate.
        """
        if self.is_empty:
            raise DegenerateBoundaryError("empty boundary has no nearest point")
        q = np.asarray(q, dtype=float)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        ab = b - a
        len_sq = np.einsum("ij,ij->i", ab, ab)
        safe = np.where(len_sq == 0.0, 1.0, len_sq)
        t = np.clip(np.einsum("j,ij->i", q, ab) - np.einsum("ij,ij->i", a, ab), 0.0, safe) / safe
        proj = a + t[:, None] * ab
        d = np.linalg.norm(proj - q, axis=1)
        best = float(np.min(d))
        # lowest arc coordinate among the tied edges
        candidates = np.nonzero(d <= best + 1e-12)[0]
        arcs = self._cumlen[candidates] + t[candidates] * np.sqrt(safe[candidates])
        k = int(np.argmin(arcs))
        idx = int(candidates[k])
        point = proj[idx]
        # tangent of the edge holding the point; an exact end vertex uses the
        # outgoing edge so the cut-front corner reads as "ahead"
        edge = idx
        if t[idx] >= 1.0 - 1e-12:
            edge = (idx + 1) % len(a)
        tangent = float(np.arctan2(ab[edge][1], ab[edge][0]))
        return point, float(d[idx]), tangent

    def arc_coordinate(self, p) -> float:
        """CCW arc length from the reference point to boundary point ``p``."""
        if self.is_empty:
            raise DegenerateBoundaryError("empty boundary")
        p = np.asarray(p, dtype=float)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        ab = b - a
        len_sq = np.einsum("ij,ij->i", ab, ab)
        safe = np.where(len_sq == 0.0, 1.0, len_sq)
        t = np.clip(np.einsum("j,ij->i", p, ab) - np.einsum("ij,ij->i", a, ab), 0.0, safe) / safe
        proj = a + t[:, None] * ab
        d = np.linalg.norm(proj - p, axis=1)
        idx = int(np.argmin(d))
        s = float(self._cumlen[idx] + t[idx] * np.sqrt(safe[idx]))
        return s % self.perimeter if self.perimeter > 0 else 0.0

    def point_at_arc(self, s: float) -> np.ndarray:
        """Boundary point at CCW arc coordinate ``s`` from the reference point."""
        if self.is_empty:
            raise DegenerateBoundaryError("empty boundary")
        s = float(s) % self.perimeter
        idx = int(np.searchsorted(self._cumlen, s, side="right")) - 1
        idx = min(idx, len(self.vertices) - 1)
        a = self.vertices[idx]
        b = self.vertices[(idx + 1) % len(self.vertices)]
        seg = float(self._cumlen[idx + 1] - self._cumlen[idx])
        t = (s - self._cumlen[idx]) / seg if seg > 0 else 0.0
        return a + t * (b - a)

    def arc_length_between(self, p_a, p_b, snap_tol: float | None = None) -> float:
        """CCW arc length from ``p_a`` to ``p_b``, both on the boundary.

        Raises OffBoundaryError naming the offending point if either lies
        farther than ``snap_tol`` (default: the resolution) from the polyline.
        """
        tol = self.resolution if snap_tol is None else snap_tol
        for name, p in (("p_a", p_a), ("p_b", p_b)):
            _, d, _ = self.nearest_point(p)
            if d > tol:
                raise OffBoundaryError(f"{name} is {d:.6g} m off the boundary (tol {tol:.6g})")
        s_a = self.arc_coordinate(p_a)
        s_b = self.arc_coordinate(p_b)
        return (s_b - s_a) % self.perimeter

    def contains(self, q) -> bool:
        """Point-in-region test; boundary points count as interior."""
        if self.is_empty:
            return False
        return bool(self.as_polygon().covers(Point(float(q[0]), float(q[1]))))

    # -- motion and erosion -------------------------------------------

    def translate(self, velocity, dt: float, max_speed: float | None = None) -> "SpillBoundary":
        """Rigid translation by velocity·dt; rejects speeds above ``max_speed``."""
        velocity = np.asarray(velocity, dtype=float)
        speed = float(np.linalg.norm(velocity))
        if max_speed is not None and speed > max_speed + 1e-12:
            raise ValueError(f"spill speed {speed:.6g} m/s exceeds the allowed {max_speed:.6g} m/s")
        if self.is_empty:
            return self
        return self._replace(self.vertices + velocity * dt)

    def erode_swept(self, start, end, depth: float, back_margin: float = 0.0) -> "ErosionResult":
        """Remove the swept rectangle from ``start`` to ``end``, ``depth`` deep.

        The rectangle extends ``depth`` to the left of the start→end direction
        (into the interior for a CCW sweep) and optionally ``back_margin`` to
        the right, absorbing a sweep path that runs fractionally inside the
        boundary. Area never increases; a zero-length sweep is a no-op.
        """
        quad = sweep_rectangle(start, end, depth, back_margin)
        if quad is None or self.is_empty:
            return ErosionResult(self, [self], False)
        return self._rebuild(self.as_polygon().difference(quad))

    def subtract_region(self, region) -> "ErosionResult":
        """Remove an arbitrary already-built region (batched tick erosion)."""
        if self.is_empty or region.is_empty:
            return ErosionResult(self, [self], False)
        return self._rebuild(self.as_polygon().difference(region))

    def _rebuild(self, remainder) -> "ErosionResult":
        area_before = self.area
        parts = []
        if not remainder.is_empty:
            geoms = getattr(remainder, "geoms", [remainder])
            dust = (self.resolution / 10.0) ** 2
            parts = [g for g in geoms if isinstance(g, Polygon) and g.area > dust]
        if not parts:
            empty = self._replace(np.zeros((0, 2)))
            return ErosionResult(empty, [], False)
        parts.sort(key=lambda p: p.area, reverse=True)
        split = len(parts) > 1
        pieces = []
        for p in parts:
            p = _breach_holes(p, self.resolution)
            ring = np.asarray(p.exterior.coords[:-1], dtype=float)
            verts = _resample_ring(ring, self.resolution)
            # vertex merges must neither manufacture area nor pinch the ring
            # into a self-crossing (whose signed area under-reads and lets a
            # later rebuild "recover" material); fall back to the exact ring
            if len(verts) >= 3 and (
                shoelace_area(verts) > p.area + 1e-12 or not Polygon(verts).is_valid
            ):
                verts = _resample_ring(ring, self.resolution, merge=False)
            pieces.append(self._replace(_anchor_reference(verts, self.reference_point)))
        if pieces[0].area > area_before + 1e-12:
            verts = _resample_ring(
                np.asarray(parts[0].exterior.coords[:-1], dtype=float),
                self.resolution,
                merge=False,
            )
            pieces[0] = self._replace(_anchor_reference(verts, self.reference_point))
        return ErosionResult(pieces[0], pieces, split)


@dataclass
class ErosionResult:
    """Outcome of a swept-area subtraction."""

    boundary: SpillBoundary  # largest remaining component (empty if none)
    components: list  # all remaining components, largest first
    split: bool  # True when the subtraction broke the region apart


def _breach_holes(poly: Polygon, h: float) -> Polygon:
    """Open any enclosed pocket to the outside with a thin channel.

    A sweep can seal the mouth of a narrow exterior bay, leaving a region
    whose complement is enclosed. The boundary model is a single closed
    ring, so the sub-resolution neck is treated as breached: a channel one
    quarter-resolution wide is cut from the pocket to the exterior ring
    (strictly removing material, never adding it).
    """
    for _ in range(8):
        holes = [r for r in poly.interiors if Polygon(r).area > 0]
        if not holes:
            return poly
        hole = max(holes, key=lambda r: Polygon(r).area)
        hole_pt = np.asarray(hole.coords[0])
        ring = np.asarray(poly.exterior.coords[:-1])
        near = ring[int(np.argmin(np.linalg.norm(ring - hole_pt, axis=1)))]
        direction = near - hole_pt
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            direction, norm = np.array([1.0, 0.0]), 1.0
        d_hat = direction / norm
        n_hat = np.array([-d_hat[1], d_hat[0]]) * (h / 8.0)
        a = hole_pt - d_hat * h
        b = near + d_hat * h
        channel = Polygon([a - n_hat, b - n_hat, b + n_hat, a + n_hat])
        carved = poly.difference(channel)
        if carved.is_empty:
            return poly
        if isinstance(carved, MultiPolygon) or not isinstance(carved, Polygon):
            geoms = getattr(carved, "geoms", [carved])
            polys = [g for g in geoms if isinstance(g, Polygon)]
            if not polys:
                return poly
            carved = max(polys, key=lambda g: g.area)
        poly = carved
    return poly


def sweep_rectangle(start, end, depth: float, back_margin: float = 0.0):
    """Rectangle swept by a robot moving start→end covering ``depth`` on its left.

    Returns None for a zero-length sweep.
    """
    if depth <= 0:
        raise ValueError("erosion depth must be positive")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    sweep = end - start
    length = float(np.linalg.norm(sweep))
    if length < 1e-12:
        return None
    t_hat = sweep / length
    n_hat = np.array([-t_hat[1], t_hat[0]])  # left of travel
    return Polygon(
        [
            start - back_margin * n_hat,
            end - back_margin * n_hat,
            end + depth * n_hat,
            start + depth * n_hat,
        ]
    )


def _resample_ring(vertices: np.ndarray, h: float, merge: bool = True) -> np.ndarray:
    """Re-space a CCW ring so consecutive vertices sit within [h/10, h].

    Long edges are split exactly (area-neutral). Vertices closer than h/10 to
    their successor are merged only while the signed area does not grow, so
    erosion stays monotone.
    """
    if len(vertices) < 3:
        return vertices
    if shoelace_area(vertices) < 0:
        vertices = vertices[::-1]
    pts = list(vertices)
    out = [pts[0]]
    for p in pts[1:]:
        if np.linalg.norm(p - out[-1]) > 1e-12:
            out.append(p)
    while len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= 1e-12:
        out.pop()
    if merge:
        out = _merge_close(out, h / 10.0)
    if len(out) < 3:
        return np.asarray(out).reshape(-1, 2)
    result = []
    n = len(out)
    for i in range(n):
        a = out[i]
        b = out[(i + 1) % n]
        result.append(a)
        seg = float(np.linalg.norm(b - a))
        if seg > h:
            k = int(np.ceil(seg / h))
            for j in range(1, k):
                result.append(a + (b - a) * (j / k))
    return np.asarray(result)


def _merge_close(pts: list, min_gap: float) -> list:
    """Drop one vertex of each too-close pair, preferring area-shrinking drops."""
    changed = True
    while changed and len(pts) > 3:
        changed = False
        n = len(pts)
        for i in range(n):
            j = (i + 1) % n
            if np.linalg.norm(pts[j] - pts[i]) >= min_gap:
                continue
            prev = pts[(i - 1) % n]
            nxt = pts[(j + 1) % n]
            # dropping a vertex removes the triangle it spans; positive area
            # means the drop shrinks the region
            drop_i = _tri_area(prev, pts[i], pts[j])
            drop_j = _tri_area(pts[i], pts[j], nxt)
            victim = i if drop_i >= drop_j else j
            del pts[victim]
            changed = True
            break
    return pts


def _tri_area(a, b, c) -> float:
    return 0.5 * float((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


def _anchor_reference(vertices: np.ndarray, old_ref: np.ndarray) -> np.ndarray:
    """Rotate the ring so the vertex nearest the previous reference leads."""
    if len(vertices) < 3:
        return vertices
    idx = int(np.argmin(np.linalg.norm(vertices - old_ref, axis=1)))
    return np.roll(vertices, -idx, axis=0)


# -- constructors ------------------------------------------------------


def circle_boundary(center, radius: float, resolution: float) -> SpillBoundary:
    """Closed circle sampled so vertex spacing is at most the resolution."""
    n = max(16, int(np.ceil(2 * np.pi * radius / resolution)))
    ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])
    return SpillBoundary(pts, resolution)


def ellipse_boundary(center, semi_axes, angle: float, resolution: float) -> SpillBoundary:
    a, b = semi_axes
    n = max(16, int(np.ceil(2 * np.pi * max(a, b) / resolution)))
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    x = a * np.cos(t)
    y = b * np.sin(t)
    c, s = np.cos(angle), np.sin(angle)
    pts = np.column_stack([center[0] + c * x - s * y, center[1] + s * x + c * y])
    return SpillBoundary(pts, resolution)


def polygon_boundary(vertices, resolution: float) -> SpillBoundary:
    pts = _resample_ring(np.asarray(vertices, dtype=float), resolution, merge=False)
    return SpillBoundary(pts, resolution)


@dataclass
class Workspace:
    """Rectangular arena holding the spills and the dock."""

    bounds: tuple  # (xmin, ymin, xmax, ymax)
    spills: list
    dock: np.ndarray

    def __post_init__(self):
        self.dock = np.asarray(self.dock, dtype=float)
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("workspace bounds must be a non-empty rectangle")
        for i, spill in enumerate(self.spills):
            if spill.contains(self.dock):
                raise ValueError(f"dock lies inside spill {i + 1}")
        for i in range(len(self.spills)):
            for j in range(i + 1, len(self.spills)):
                if self.spills[i].as_polygon().intersects(self.spills[j].as_polygon()):
                    raise ValueError(f"spills {i + 1} and {j + 1} overlap")

    def inside(self, q) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= q[0] <= xmax and ymin <= q[1] <= ymax

    def clamp(self, q) -> np.ndarray:
        xmin, ymin, xmax, ymax = self.bounds
        return np.array([min(max(q[0], xmin), xmax), min(max(q[1], ymin), ymax)])
