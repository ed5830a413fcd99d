"""Feasibility pipeline for sampled trajectories.

Four stages, in order: (1) overwrite endpoints with the true robot/goal,
(2) project blocked interior waypoints to free space, (3) sparsify by a
minimum spacing, endpoints exempt, (4) splice grid shortest paths into any
remaining blocked segment.  Output vertices and segments are all free on
the robot-inflated grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import planning
from .planning import InvalidSourceError, UnreachableError, path_length  # re-export

PRUNE_DISTANCE_M = 0.25

SAMPLED = "sampled"
PROJECTED = "projected"
INSERTED = "inserted-by-repair"


@dataclass
class FeasiblePath:
    """Polyline in meters with one provenance flag per vertex."""

    points: np.ndarray  # (N, 2)
    provenance: list[str]

    def __post_init__(self):
        assert len(self.points) == len(self.provenance)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length_m(self) -> float:
        return path_length(self.points)


_PRIORITY = {INSERTED: 0, PROJECTED: 1, SAMPLED: 2}


def _dedupe(points: list[np.ndarray], prov: list[str]):
    """Drop exact consecutive duplicates; a repair splice can land exactly on
    an original vertex, in which case the original's provenance wins."""
    out_p, out_v = [points[0]], [prov[0]]
    for p, v in zip(points[1:], prov[1:]):
        if np.array_equal(p, out_p[-1]):
            if _PRIORITY[v] > _PRIORITY[out_v[-1]]:
                out_v[-1] = v
            continue
        out_p.append(p)
        out_v.append(v)
    return out_p, out_v


def postprocess(traj, robot, goal, grid: planning.OccupancyGrid,
                d_min: float = PRUNE_DISTANCE_M) -> FeasiblePath:
    """Raw trajectory (meters) -> collision-free polyline robot ... goal.

    The robot and goal must lie in free space of the (robot-inflated) grid;
    raises InvalidSourceError otherwise, and UnreachableError when the goal
    cannot be reached at all (callers fall back to a plain grid path).
    """
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] < 2 or traj.shape[1] != 2:
        raise ValueError(f"trajectory must be (N>=2, 2), got {traj.shape}")
    if not np.all(np.isfinite(traj)):
        raise ValueError("trajectory contains non-finite waypoints")
    robot = np.asarray(robot, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    for name, p in (("robot", robot), ("goal", goal)):
        if planning.blocked_at_point(grid, p):
            raise InvalidSourceError(f"{name} point {tuple(p)} is not in free space")

    # (1) endpoints, (2) projection of blocked interior waypoints
    points: list[np.ndarray] = [robot]
    prov: list[str] = [SAMPLED]
    for p in traj[1:-1]:
        if planning.blocked_at_point(grid, p):
            points.append(np.asarray(planning.project_to_free(grid, p)))
            prov.append(PROJECTED)
        else:
            points.append(p.copy())
            prov.append(SAMPLED)
    points.append(goal)
    prov.append(SAMPLED)

    # (3) sparsify: drop interior vertices closer than d_min to the last
    # kept vertex; endpoints always survive
    kept_p, kept_v = [points[0]], [prov[0]]
    for p, v in zip(points[1:-1], prov[1:-1]):
        if float(np.hypot(*(p - kept_p[-1]))) >= d_min:
            kept_p.append(p)
            kept_v.append(v)
    kept_p.append(points[-1])
    kept_v.append(prov[-1])
    kept_p, kept_v = _dedupe(kept_p, kept_v)

    # (4) repair: replace each blocked chord with the grid shortest path
    out_p, out_v = [kept_p[0]], [kept_v[0]]
    for p, v in zip(kept_p[1:], kept_v[1:]):
        if planning.segment_blocked(grid, out_p[-1], p):
            spliced = planning.shortest_path(grid, out_p[-1], p)
            for q in spliced:
                out_p.append(np.asarray(q, dtype=np.float64))
                out_v.append(INSERTED)
        out_p.append(p)
        out_v.append(v)
    out_p, out_v = _dedupe(out_p, out_v)
    return FeasiblePath(np.asarray(out_p), out_v)
