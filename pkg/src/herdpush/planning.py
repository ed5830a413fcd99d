"""Occupancy grids and shortest-path queries on them.

Distances are computed on an 8-connected grid with orthogonal cost
1/resolution and diagonal cost sqrt(2)/resolution. Internally every
relaxation tracks integer step counts (n_orth, n_diag) and recomputes the
float distance as n_orth*cw + n_diag*cd, so two different searches that
agree on step counts agree on the float distance bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


class PlanningError(Exception):
    pass


class InvalidSourceError(PlanningError):
    """Source point or cell lies inside an obstacle."""


class UnreachableError(PlanningError):
    """No collision-free path exists between the endpoints."""


class NoFreeSpaceError(PlanningError):
    """Grid has no unblocked cell to project onto."""


@dataclass(frozen=True)
class OccupancyGrid:
    """Axis-aligned grid over the workspace. blocked[i, j] covers the cell
    whose center is ((j+0.5)/resolution, (i+0.5)/resolution) in meters."""

    resolution: float  # cells per meter
    width_m: float
    height_m: float
    blocked: np.ndarray  # bool, shape (rows, cols), row index is y
    inflation_radius: float

    @property
    def rows(self) -> int:
        return self.blocked.shape[0]

    @property
    def cols(self) -> int:
        return self.blocked.shape[1]


def _rect_distance_sq(px: np.ndarray, py: np.ndarray, rect) -> np.ndarray:
    x0, y0, x1, y1 = rect
    dx = np.maximum(np.maximum(x0 - px, px - x1), 0.0)
    dy = np.maximum(np.maximum(y0 - py, py - y1), 0.0)
    return dx * dx + dy * dy


def build_grid(
    width_m: float,
    height_m: float,
    obstacles,
    inflation_radius: float = 0.0,
    resolution: float = 10.0,
) -> OccupancyGrid:
    """Rasterize rectangular obstacles, dilated by inflation_radius.

    A cell is blocked when its center is within inflation_radius of an
    obstacle rectangle or of the workspace boundary. With zero inflation
    only cells whose center lies inside a rectangle are blocked.
    """
    cols = int(round(width_m * resolution))
    rows = int(round(height_m * resolution))
    if cols <= 0 or rows <= 0:
        raise ValueError("workspace does not cover a single cell")
    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    px = (jj + 0.5) / resolution
    py = (ii + 0.5) / resolution
    blocked = np.zeros((rows, cols), dtype=bool)
    r2 = inflation_radius * inflation_radius
    for rect in obstacles:
        blocked |= _rect_distance_sq(px, py, rect) <= r2
    if inflation_radius > 0.0:
        margin = np.minimum(np.minimum(px, width_m - px), np.minimum(py, height_m - py))
        blocked |= margin < inflation_radius
    return OccupancyGrid(resolution, width_m, height_m, blocked, inflation_radius)


def block_discs(grid: OccupancyGrid, centers, radius: float) -> OccupancyGrid:
    """New grid with cells within radius of any center additionally blocked."""
    blocked = grid.blocked.copy()
    if len(centers):
        jj, ii = np.meshgrid(np.arange(grid.cols), np.arange(grid.rows))
        px = (jj + 0.5) / grid.resolution
        py = (ii + 0.5) / grid.resolution
        r2 = radius * radius
        for cx, cy in centers:
            dx = px - cx
            dy = py - cy
            blocked |= dx * dx + dy * dy <= r2
    return OccupancyGrid(grid.resolution, grid.width_m, grid.height_m, blocked, grid.inflation_radius)


def point_to_cell(grid: OccupancyGrid, point) -> tuple[int, int]:
    """Containing cell of a point, clamped to the grid bounds."""
    j = min(max(int(point[0] * grid.resolution), 0), grid.cols - 1)
    i = min(max(int(point[1] * grid.resolution), 0), grid.rows - 1)
    return i, j


def cell_center(grid: OccupancyGrid, i: int, j: int) -> tuple[float, float]:
    return (j + 0.5) / grid.resolution, (i + 0.5) / grid.resolution


def in_workspace(grid: OccupancyGrid, point) -> bool:
    return 0.0 <= point[0] < grid.width_m and 0.0 <= point[1] < grid.height_m


def blocked_at_point(grid: OccupancyGrid, point) -> bool:
    """True when the point is outside the workspace or in a blocked cell."""
    if not in_workspace(grid, point):
        return True
    i, j = point_to_cell(grid, point)
    return bool(grid.blocked[i, j])


# Neighbor table: 4 orthogonal moves first, then 4 diagonal moves. A
# diagonal move is legal only when both adjacent orthogonal cells are free
# (no corner cutting).
_OFFS = np.array(
    [[-1, 0], [1, 0], [0, -1], [0, 1], [-1, -1], [-1, 1], [1, -1], [1, 1]],
    dtype=np.int64,
)


@njit(cache=True)
def _spfa_kernel(blocked, si, sj, cw, cd):  # pragma: no cover - jitted
    rows, cols = blocked.shape
    n = rows * cols
    n_orth = np.full((rows, cols), -1, dtype=np.int64)
    n_diag = np.full((rows, cols), -1, dtype=np.int64)
    dist = np.full((rows, cols), np.inf, dtype=np.float64)
    parent = np.full((rows, cols), -1, dtype=np.int64)
    in_queue = np.zeros((rows, cols), dtype=np.uint8)
    queue = np.empty(n + 1, dtype=np.int64)
    head = 0
    tail = 0
    n_orth[si, sj] = 0
    n_diag[si, sj] = 0
    dist[si, sj] = 0.0
    queue[tail] = si * cols + sj
    tail += 1
    in_queue[si, sj] = 1
    offs = np.array(
        [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)],
        dtype=np.int64,
    )
    while head != tail:
        idx = queue[head]
        head += 1
        if head == n + 1:
            head = 0
        i = idx // cols
        j = idx % cols
        in_queue[i, j] = 0
        base_o = n_orth[i, j]
        base_d = n_diag[i, j]
        for k in range(8):
            di = offs[k, 0]
            dj = offs[k, 1]
            ni = i + di
            nj = j + dj
            if ni < 0 or ni >= rows or nj < 0 or nj >= cols:
                continue
            if blocked[ni, nj]:
                continue
            if k >= 4 and (blocked[i + di, j] or blocked[i, j + dj]):
                continue
            if k >= 4:
                cand_o = base_o
                cand_d = base_d + 1
            else:
                cand_o = base_o + 1
                cand_d = base_d
            cand = cand_o * cw + cand_d * cd
            if cand < dist[ni, nj]:
                dist[ni, nj] = cand
                n_orth[ni, nj] = cand_o
                n_diag[ni, nj] = cand_d
                parent[ni, nj] = idx
                if in_queue[ni, nj] == 0:
                    queue[tail] = ni * cols + nj
                    tail += 1
                    if tail == n + 1:
                        tail = 0
                    in_queue[ni, nj] = 1
    return dist, parent


@dataclass(frozen=True)
class DistanceField:
    """SPFA result: meters to the source from every cell, inf if unreachable."""

    source: tuple[int, int]
    dist: np.ndarray  # float64 (rows, cols)
    parent: np.ndarray  # int64 flat parent index, -1 at source/unreachable


def spfa_distance(grid: OccupancyGrid, source_cell: tuple[int, int]) -> DistanceField:
    si, sj = source_cell
    if not (0 <= si < grid.rows and 0 <= sj < grid.cols):
        raise InvalidSourceError(f"source cell {source_cell} outside grid")
    if grid.blocked[si, sj]:
        raise InvalidSourceError(f"source cell {source_cell} is blocked")
    cw = 1.0 / grid.resolution
    cd = math.sqrt(2.0) / grid.resolution
    dist, parent = _spfa_kernel(grid.blocked, si, sj, cw, cd)
    return DistanceField((si, sj), dist, parent)


def field_distance_at(field: DistanceField, grid: OccupancyGrid, point) -> float:
    """Distance at a point's cell; blocked or stranded points are projected
    to the nearest free cell first. Returns inf when nothing is reachable."""
    i, j = point_to_cell(grid, point)
    if not grid.blocked[i, j] and np.isfinite(field.dist[i, j]):
        return float(field.dist[i, j])
    free = project_to_free(grid, point)
    i, j = point_to_cell(grid, free)
    return float(field.dist[i, j])


def extract_path(field: DistanceField, grid: OccupancyGrid, dst_cell: tuple[int, int]) -> np.ndarray:
    """Cell-center polyline from the field source to dst_cell, shape (N, 2)."""
    di, dj = dst_cell
    if grid.blocked[di, dj] or not np.isfinite(field.dist[di, dj]):
        raise UnreachableError(f"cell {dst_cell} unreachable from {field.source}")
    cells = []
    idx = di * grid.cols + dj
    src_idx = field.source[0] * grid.cols + field.source[1]
    while idx != -1:
        cells.append(idx)
        if idx == src_idx:
            break
        idx = int(field.parent.flat[idx])
    cells.reverse()
    pts = np.empty((len(cells), 2), dtype=np.float64)
    for n, c in enumerate(cells):
        pts[n] = cell_center(grid, c // grid.cols, c % grid.cols)
    return pts


def shortest_path(grid: OccupancyGrid, src_point, dst_point) -> np.ndarray:
    """Shortest cell-center polyline between two points.

    The source must be in free space; a blocked destination is projected to
    the nearest free cell first. Raises UnreachableError when no path exists.
    """
    if blocked_at_point(grid, src_point):
        raise InvalidSourceError(f"source point {tuple(src_point)} is blocked")
    dst = dst_point
    if blocked_at_point(grid, dst):
        dst = project_to_free(grid, dst)
    field = spfa_distance(grid, point_to_cell(grid, src_point))
    return extract_path(field, grid, point_to_cell(grid, dst))


def project_to_free(grid: OccupancyGrid, point):
    """Point itself when already in free space, otherwise the center of the
    nearest free cell (Euclidean; row-major order breaks exact ties)."""
    if not blocked_at_point(grid, point):
        return (float(point[0]), float(point[1]))
    free_i, free_j = np.nonzero(~grid.blocked)
    if free_i.size == 0:
        raise NoFreeSpaceError("grid is fully blocked")
    cx = (free_j + 0.5) / grid.resolution
    cy = (free_i + 0.5) / grid.resolution
    d2 = (cx - point[0]) ** 2 + (cy - point[1]) ** 2
    k = int(np.argmin(d2))
    return float(cx[k]), float(cy[k])


def segment_cells(grid: OccupancyGrid, p, q) -> list[tuple[int, int]]:
    """Every cell the closed segment [p, q] touches (supercover traversal).

    Crossings within 1e-12 of a cell corner conservatively include both
    orthogonally adjacent cells.
    """
    cells = [point_to_cell(grid, p)]
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    length = math.hypot(dx, dy)
    if length == 0.0:
        return cells
    res = grid.resolution
    i, j = cells[0]
    ti, tj = point_to_cell(grid, q)
    step_j = 1 if dx > 0 else -1
    step_i = 1 if dy > 0 else -1
    # Parameter t in [0, 1] at which the ray crosses the next cell boundary
    # along each axis; inf when the ray is axis parallel.
    if dx != 0.0:
        nxt = (j + (1 if dx > 0 else 0)) / res
        t_max_x = (nxt - p[0]) / dx
        t_dx = (1.0 / res) / abs(dx)
    else:
        t_max_x = math.inf
        t_dx = math.inf
    if dy != 0.0:
        nxt = (i + (1 if dy > 0 else 0)) / res
        t_max_y = (nxt - p[1]) / dy
        t_dy = (1.0 / res) / abs(dy)
    else:
        t_max_y = math.inf
        t_dy = math.inf
    guard = 4 * (grid.rows + grid.cols) + 8
    for _ in range(guard):
        if (i, j) == (ti, tj):
            break
        if min(t_max_x, t_max_y) > 1.0 + 1e-12:
            break
        if abs(t_max_x - t_max_y) < 1e-12:
            # Corner crossing: include both side cells, then step diagonally.
            for ci, cj in ((i, j + step_j), (i + step_i, j)):
                if 0 <= ci < grid.rows and 0 <= cj < grid.cols:
                    cells.append((ci, cj))
            i += step_i
            j += step_j
            t_max_x += t_dx
            t_max_y += t_dy
        elif t_max_x < t_max_y:
            j += step_j
            t_max_x += t_dx
        else:
            i += step_i
            t_max_y += t_dy
        if not (0 <= i < grid.rows and 0 <= j < grid.cols):
            break
        cells.append((i, j))
    return cells


def segment_blocked(grid: OccupancyGrid, p, q) -> bool:
    """True when the segment leaves the workspace or touches a blocked cell."""
    if not (in_workspace(grid, p) and in_workspace(grid, q)):
        return True
    return any(grid.blocked[i, j] for i, j in segment_cells(grid, p, q))


def path_blocked(grid: OccupancyGrid, vertices) -> bool:
    pts = np.asarray(vertices, dtype=np.float64)
    return any(segment_blocked(grid, pts[k], pts[k + 1]) for k in range(len(pts) - 1))


def path_length(vertices) -> float:
    pts = np.asarray(vertices, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*(pts[1:] - pts[:-1]).T)))
