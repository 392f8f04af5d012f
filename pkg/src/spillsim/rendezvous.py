"""Connectivity graph, rendezvous-point election, and hierarchical gathering.

Robots that cannot see a boundary follow shortest-path trees rooted at robots
that can. Edge weights are Euclidean distances (the signal-strength proxy);
every tie in the shortest-path computations is broken toward the lowest robot
id so runs are reproducible.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConnectivityGraph:
    """Undirected comm graph over robot ids; edge iff distance <= comm_range."""

    ids: list
    edges: dict = field(default_factory=dict)  # (i, j) with i < j -> weight

    @property
    def adjacency(self) -> dict:
        adj = {i: [] for i in self.ids}
        for (i, j), w in self.edges.items():
            adj[i].append((j, w))
            adj[j].append((i, w))
        for neighbors in adj.values():
            neighbors.sort()
        return adj

    def neighbors(self, i) -> list:
        return self.adjacency[i]


def build_graph(positions: dict, comm_range: float) -> ConnectivityGraph:
    """Graph over ``positions`` (id -> 2-vector); the range test is inclusive."""
    ids = sorted(positions)
    graph = ConnectivityGraph(ids)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            w = float(np.linalg.norm(np.asarray(positions[i]) - np.asarray(positions[j])))
            if w <= comm_range:
                graph.edges[(i, j)] = w
    return graph


def dijkstra(graph: ConnectivityGraph, source) -> tuple[dict, dict]:
    """Shortest path distances and predecessors from one source.

    Ties between equal-cost paths resolve toward the lower predecessor id
    (the heap orders by distance, then node, then predecessor).
    """
    adj = graph.adjacency
    dist: dict = {}
    pred: dict = {}
    heap = [(0.0, source, -1)]
    while heap:
        d, node, parent = heapq.heappop(heap)
        if node in dist:
            continue
        dist[node] = d
        pred[node] = None if parent == -1 else parent
        for neighbor, w in adj[node]:
            if neighbor not in dist:
                heapq.heappush(heap, (d + w, neighbor, node))
    return dist, pred


@dataclass
class Assignment:
    """Robot-to-rendezvous-point membership."""

    target: dict  # robot id -> rendezvous point id (absent if stranded)
    stranded: list  # robot ids in components with no rendezvous point
    spill_of_point: dict  # rendezvous point id -> spill index

    def membership_matrix(self, ids: list, n_spills: int) -> np.ndarray:
        """0/1 matrix, rows = robots (in ``ids`` order), columns = spills."""
        z = np.zeros((len(ids), n_spills), dtype=int)
        for row, i in enumerate(ids):
            point = self.target.get(i)
            if point is not None:
                z[row, self.spill_of_point[point]] = 1
        return z

    def robots_of_spill(self, spill_index: int) -> list:
        return sorted(i for i, p in self.target.items() if self.spill_of_point[p] == spill_index)


def select_rendezvous_points(visible: dict) -> list:
    """Rendezvous points are exactly the robots whose observation is visible.

    ``visible``: robot id -> bool from the first sensing pass.
    """
    return sorted(i for i, v in visible.items() if v)


def assign(graph: ConnectivityGraph, points: list, spill_of_point: dict) -> Assignment:
    """Map every robot to its shortest-path-nearest rendezvous point.

    Ties break toward the lowest point id. Robots in components containing no
    rendezvous point are reported stranded, not fatal.
    """
    if not points:
        return Assignment({}, list(graph.ids), dict(spill_of_point))
    best_dist = {}
    best_point = {}
    for point in sorted(points):
        dist, _ = dijkstra(graph, point)
        for node, d in dist.items():
            if node not in best_dist or d < best_dist[node] - 1e-15:
                best_dist[node] = d
                best_point[node] = point
    stranded = [i for i in graph.ids if i not in best_point]
    return Assignment(best_point, stranded, dict(spill_of_point))


@dataclass
class RendezvousTree:
    """Shortest-path tree hanging off one rendezvous point."""

    root: int
    parent: dict  # child id -> parent id (root maps to None)
    level: dict  # id -> hops from root

    @property
    def members(self) -> list:
        return sorted(self.parent)

    def children_of(self, node) -> list:
        return sorted(c for c, p in self.parent.items() if p == node)

    def edge_list(self) -> list:
        """(robot_id, parent_id, level) rows, root first."""
        rows = []
        for node in sorted(self.parent, key=lambda n: (self.level[n], n)):
            parent = self.parent[node]
            rows.append((node, parent if parent is not None else node, self.level[node]))
        return rows


def build_trees(graph: ConnectivityGraph, assignment: Assignment) -> list:
    """One Dijkstra predecessor tree per rendezvous point over its own robots.

    Predecessor chains are computed on the full graph and trimmed to the
    point's members: an off-member predecessor (possible only on an exact
    assignment tie) is skipped by walking the chain upward.
    """
    trees = []
    points = sorted(set(assignment.target.values()))
    for point in points:
        members = sorted(i for i, p in assignment.target.items() if p == point)
        member_set = set(members)
        _, pred = dijkstra(graph, point)
        parent = {}
        for node in members:
            if node == point:
                parent[node] = None
                continue
            cursor = pred.get(node)
            while cursor is not None and cursor not in member_set:
                cursor = pred.get(cursor)
            parent[node] = point if cursor is None else cursor
        level = {}
        for node in members:
            hops = 0
            cursor = node
            while parent[cursor] is not None:
                cursor = parent[cursor]
                hops += 1
            level[node] = hops
        trees.append(RendezvousTree(point, parent, level))
    return trees


@dataclass
class RendezvousDecision:
    """What a rendezvous robot should do this tick."""

    goal: np.ndarray | None  # position to walk toward (None: hold still)
    promoted_parent: int | None = None  # new parent id if promoting this tick
    switch_to_searching: bool = False
    hold_for_children: bool = False


def rendezvous_step(
    robot_id: int,
    position: np.ndarray,
    tree: RendezvousTree,
    current_parent: int | None,
    positions: dict,
    active_children: list,
    comm_range: float,
    promote_radius: float,
    sees_boundary: bool,
    root_boundary_point: np.ndarray | None = None,
) -> RendezvousDecision:
    """One hierarchical-rendezvous decision for a robot still gathering.

    The robot walks toward its current parent; once within the promotion
    radius it re-points at the next level up, provided the new parent is in
    comm range (otherwise the hop would break connectivity). A robot that
    sees the boundary switches to searching immediately. A leaf that reaches
    the root while still blind walks toward the root's sensed boundary point
    (relayed over the tree link) until its own vision picks the boundary up.
    Parents never move beyond comm range of an active child, and the root
    holds position while it still has active children. Robots with active
    children never abandon them, even when they already see the boundary.
    """
    if robot_id == tree.root:
        if active_children:
            return RendezvousDecision(None, hold_for_children=True)
        return RendezvousDecision(None, switch_to_searching=True)

    if sees_boundary and not active_children:
        return RendezvousDecision(None, switch_to_searching=True)

    if current_parent is None:
        current_parent = tree.parent.get(robot_id, tree.root)

    decision = RendezvousDecision(np.asarray(positions[current_parent], dtype=float))
    gap = float(np.linalg.norm(position - positions[current_parent]))
    if gap <= promote_radius:
        if current_parent == tree.root:
            if not active_children and root_boundary_point is not None:
                decision.goal = np.asarray(root_boundary_point, dtype=float)
        else:
            upper = tree.parent.get(current_parent)
            if upper is None:
                upper = tree.root
            if float(np.linalg.norm(position - positions[upper])) <= comm_range:
                decision.promoted_parent = upper
                decision.goal = np.asarray(positions[upper], dtype=float)

    # connectivity leash: wait when any active child is close to falling out
    for child in active_children:
        if float(np.linalg.norm(position - positions[child])) >= 0.95 * comm_range:
            decision.goal = None
            decision.hold_for_children = True
            break
    return decision


def herd(
    root_position: np.ndarray,
    spill,
    vision_range: float,
    child_positions: list,
    comm_range: float,
    step: float,
) -> np.ndarray:
    """Keep a rendezvous root in sight of a moving boundary.

    Returns the root's goal for this tick: toward the nearest boundary point
    whenever the boundary has drifted past 80% of the vision range, but never
    where a child would fall out of comm range. A root with no children does
    not herd (it is free to track).
    """
    root_position = np.asarray(root_position, dtype=float)
    if spill is None or spill.is_empty:
        return root_position
    point, distance, _ = spill.nearest_point(root_position)
    if distance <= 0.8 * vision_range:
        return root_position
    direction = point - root_position
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        return root_position
    candidate = root_position + direction / norm * min(step, norm)
    for child in child_positions:
        if float(np.linalg.norm(candidate - np.asarray(child))) > comm_range:
            return root_position
    return candidate
