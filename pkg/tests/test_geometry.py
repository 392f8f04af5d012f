import math

import numpy as np
import pytest
from shapely.geometry import Point

from spillsim.geometry import (
    OffBoundaryError,
    SpillBoundary,
    Workspace,
    circle_boundary,
    polygon_boundary,
    shoelace_area,
    sweep_rectangle,
)

H = 0.009


@pytest.fixture
def circle():
    return circle_boundary((0.0, 0.0), 0.1, H)


def test_circle_area_matches_reported_value(circle):
    assert circle.area == pytest.approx(0.0314, rel=0.005)


def test_circle_perimeter_matches_reported_value(circle):
    assert circle.perimeter == pytest.approx(0.6283, rel=0.005)


def test_degenerate_boundary_is_empty_region():
    b = SpillBoundary(np.array([[0.0, 0.0], [1.0, 0.0]]), H)
    assert b.is_empty
    assert b.area == 0.0
    assert b.perimeter == 0.0


def test_unit_square_area_and_perimeter():
    b = polygon_boundary([[0, 0], [1, 0], [1, 1], [0, 1]], 0.2)
    assert b.area == pytest.approx(1.0, abs=1e-12)
    assert b.perimeter == pytest.approx(4.0, abs=1e-12)


def test_cw_input_is_reoriented_ccw():
    b = SpillBoundary(np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=float), 0.5)
    assert shoelace_area(b.vertices) > 0


# -- arc length --------------------------------------------------------


def test_arc_length_coincident_points_is_zero(circle):
    p = circle.vertices[5]
    assert circle.arc_length_between(p, p) == pytest.approx(0.0, abs=1e-12)


def test_arc_length_quarter_circle(circle):
    # analytic quarter arc r*theta = 0.1 * pi/2
    p_a = (0.1, 0.0)
    p_b = (0.0, 0.1)
    assert circle.arc_length_between(p_a, p_b) == pytest.approx(0.1 * math.pi / 2, rel=0.01)


def test_arc_length_wraparound_complement(circle):
    p_a = (0.0, 0.1)
    p_b = (0.1, 0.0)
    expected = circle.perimeter - 0.1 * math.pi / 2
    assert circle.arc_length_between(p_a, p_b) == pytest.approx(expected, rel=0.01)


def test_arc_length_off_boundary_point_is_named():
    circle = circle_boundary((0.0, 0.0), 0.1, H)
    with pytest.raises(OffBoundaryError, match="p_b"):
        circle.arc_length_between((0.1, 0.0), (0.5, 0.5))


def test_arc_length_sum_is_perimeter(circle):
    rng = np.random.default_rng(7)
    for _ in range(20):
        sa, sb = rng.uniform(0, circle.perimeter, size=2)
        p_a = circle.point_at_arc(sa)
        p_b = circle.point_at_arc(sb)
        total = circle.arc_length_between(p_a, p_b) + circle.arc_length_between(p_b, p_a)
        assert total == pytest.approx(circle.perimeter, abs=2 * H)


# -- nearest point -----------------------------------------------------


def test_nearest_point_center_tie_breaks_to_lowest_arc(circle):
    # every edge midpoint ties at the apothem; the winner is the one with
    # the lowest arc coordinate, i.e. the midpoint of the first edge
    point, dist, _ = circle.nearest_point((0.0, 0.0))
    assert dist == pytest.approx(0.1, rel=0.01)
    first_edge = float(np.linalg.norm(circle.vertices[1] - circle.vertices[0]))
    assert circle.arc_coordinate(point) == pytest.approx(first_edge / 2, abs=1e-9)


def test_nearest_point_on_boundary_is_identity(circle):
    q = circle.vertices[10]
    point, dist, _ = circle.nearest_point(q)
    assert dist == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(point, q)


def test_nearest_point_outside_circle_projects_radially(circle):
    point, dist, _ = circle.nearest_point((0.25, 0.0))
    assert dist == pytest.approx(0.15, abs=1e-3)
    assert point[0] == pytest.approx(0.1, abs=1e-3)
    assert point[1] == pytest.approx(0.0, abs=5e-3)


def test_nearest_point_matches_bruteforce_over_edges(circle):
    rng = np.random.default_rng(3)
    verts = circle.vertices
    nxt = np.roll(verts, -1, axis=0)
    for _ in range(50):
        q = rng.uniform(-0.3, 0.3, size=2)
        _, dist, _ = circle.nearest_point(q)
        best = math.inf
        for a, b in zip(verts, nxt):
            ab = b - a
            t = np.clip(np.dot(q - a, ab) / np.dot(ab, ab), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(a + t * ab - q)))
        assert dist == pytest.approx(best, abs=1e-12)


def test_tangent_is_ccw_travel_direction(circle):
    _, _, tangent = circle.nearest_point((0.25, 0.0))
    # at angle 0 on a CCW circle the travel direction is +y
    assert tangent == pytest.approx(math.pi / 2, abs=0.1)


# -- containment -------------------------------------------------------


def test_contains_center_and_exterior(circle):
    assert circle.contains((0.0, 0.0))
    assert not circle.contains((0.2, 0.0))


def test_contains_boundary_point_is_interior(circle):
    assert circle.contains(circle.vertices[0])


# -- translation -------------------------------------------------------


def test_translate_zero_velocity_is_identity(circle):
    moved = circle.translate((0.0, 0.0), 0.1)
    assert np.allclose(moved.vertices, circle.vertices)


def test_translate_shifts_every_vertex(circle):
    moved = circle.translate((0.001, 0.0), 0.1)
    assert np.allclose(moved.vertices - circle.vertices, [1e-4, 0.0])


def test_translate_preserves_area_and_perimeter(circle):
    moved = circle.translate((0.004, -0.002), 0.5)
    assert moved.area == pytest.approx(circle.area, abs=1e-15)
    assert moved.perimeter == pytest.approx(circle.perimeter, abs=1e-12)


def test_translate_rejects_overspeed(circle):
    with pytest.raises(ValueError, match="exceeds"):
        circle.translate((1.0, 0.0), 0.1, max_speed=0.01)


# -- erosion -----------------------------------------------------------


def test_erode_zero_sweep_is_identity(circle):
    result = circle.erode_swept((0.1, 0.0), (0.1, 0.0), 0.09)
    assert result.boundary is circle
    assert not result.split


def test_erode_straight_edge_removes_rectangle():
    square = polygon_boundary([[0, 0], [1, 0], [1, 1], [0, 1]], H)
    length = 0.001  # one tick of travel at the speed bound
    result = square.erode_swept((0.5, 0.0), (0.5 + length, 0.0), 0.09)
    removed = square.area - result.boundary.area
    assert removed == pytest.approx(length * 0.09, rel=0.02)


def test_erode_monotone_non_increasing(circle):
    rng = np.random.default_rng(11)
    boundary = circle
    for _ in range(40):
        s = rng.uniform(0, boundary.perimeter)
        start = boundary.point_at_arc(s)
        end = boundary.point_at_arc(s + rng.uniform(0.0, 0.02))
        result = boundary.erode_swept(start, end, 0.03)
        assert result.boundary.area <= boundary.area + 1e-12
        boundary = result.boundary
        if boundary.is_empty:
            break


def test_full_perimeter_sweep_drives_area_to_zero_vs_grid_oracle():
    # depth beyond the radius walked around the circle must empty it; the
    # rasterized-grid oracle integrates the first lap's swept region
    circle = circle_boundary((0.0, 0.0), 0.05, 0.005)
    boundary = circle
    step = 0.01
    rects = []
    s = 0.0
    while s < circle.perimeter + step and not boundary.is_empty:
        start = circle.point_at_arc(s)
        end = circle.point_at_arc(s + step)
        rects.append((np.asarray(start), np.asarray(end)))
        boundary = boundary.erode_swept(start, end, 0.09).boundary
        s += step

    # grid oracle for the residue after one lap, cell size <= h/4
    cell = 0.005 / 8
    xs = np.arange(-0.06, 0.06, cell) + cell / 2
    grid = np.stack(np.meshgrid(xs, xs), axis=-1).reshape(-1, 2)
    inside = np.linalg.norm(grid, axis=1) <= 0.05
    covered = np.zeros(len(grid), dtype=bool)
    for start, end in rects:
        sw = end - start
        length = np.linalg.norm(sw)
        t_hat = sw / length
        n_hat = np.array([-t_hat[1], t_hat[0]])
        rel = grid - start
        u = rel @ t_hat
        v = rel @ n_hat
        covered |= (u >= 0) & (u <= length) & (v >= 0) & (v <= 0.09)
    oracle_residue = np.count_nonzero(inside & ~covered) * cell * cell
    assert boundary.area == pytest.approx(oracle_residue, abs=0.02 * circle.area)

    # keep tracking the remaining scraps: the region must vanish entirely
    s = 0.0
    for _ in range(2000):
        if boundary.is_empty:
            break
        start = boundary.point_at_arc(s)
        end = boundary.point_at_arc(s + step)
        boundary = boundary.erode_swept(start, end, 0.09).boundary
        s += step
    assert boundary.is_empty
    assert boundary.area == 0.0
    assert boundary.perimeter == 0.0


def test_erode_area_change_matches_grid_oracle_single_step():
    # a clean band cut straight through the disc: the removed area over all
    # remaining components matches the rasterized oracle
    circle = circle_boundary((0.0, 0.0), 0.1, H)
    start = np.array([-0.12, 0.04])
    end = np.array([0.12, 0.04])
    depth = 0.05
    result = circle.erode_swept(start, end, depth)
    assert result.split
    remaining = sum(c.area for c in result.components)

    cell = H / 8
    xs = np.arange(-0.11, 0.11, cell) + cell / 2
    grid = np.stack(np.meshgrid(xs, xs), axis=-1).reshape(-1, 2)
    inside = np.linalg.norm(grid, axis=1) <= 0.1
    in_rect = (grid[:, 0] >= -0.12) & (grid[:, 0] <= 0.12) & (grid[:, 1] >= 0.04) & (grid[:, 1] <= 0.09)
    oracle_removed = np.count_nonzero(inside & in_rect) * cell * cell
    removed = circle.area - remaining
    assert removed == pytest.approx(oracle_removed, rel=0.02)


def test_erode_split_keeps_components_and_flags():
    # a thin waist: cutting straight through it splits the region
    towers = polygon_boundary(
        [[0, 0], [0.4, 0], [0.4, 0.4], [0.25, 0.4], [0.25, 0.1], [0.15, 0.1], [0.15, 0.4], [0, 0.4]],
        0.02,
    )
    # sweep across the connecting bridge: interior below-left of the path
    result = towers.erode_swept((0.45, 0.11), (-0.05, 0.11), 0.12)
    assert result.split
    assert len(result.components) == 2
    assert result.boundary.area == max(c.area for c in result.components)


def test_resampled_spacing_within_bounds(circle):
    boundary = circle
    for i in range(20):
        s = 0.03 * i
        boundary = boundary.erode_swept(
            boundary.point_at_arc(s), boundary.point_at_arc(s + 0.02), 0.03
        ).boundary
    edges = np.linalg.norm(np.roll(boundary.vertices, -1, axis=0) - boundary.vertices, axis=1)
    assert edges.max() <= H + 1e-9
    assert edges.min() >= H / 10 - 1e-9


# -- workspace ---------------------------------------------------------


def test_workspace_rejects_dock_inside_spill(circle):
    with pytest.raises(ValueError, match="dock"):
        Workspace((-1, -1, 1, 1), [circle], np.array([0.0, 0.0]))


def test_workspace_rejects_overlapping_spills():
    a = circle_boundary((0.0, 0.0), 0.1, H)
    b = circle_boundary((0.05, 0.0), 0.1, H)
    with pytest.raises(ValueError, match="overlap"):
        Workspace((-1, -1, 1, 1), [a, b], np.array([0.9, 0.9]))


def test_workspace_accepts_valid_setup(circle):
    ws = Workspace((-1, -1, 1, 1), [circle], np.array([0.9, 0.9]))
    assert ws.inside((0.0, 0.0))
    assert not ws.inside((2.0, 0.0))
