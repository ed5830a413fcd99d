"""Robot-centric state image and low-dimensional conditioning vector.

The state image samples world geometry analytically per pixel (no raster
rotation), so the frame is exactly translated to the robot and rotated so
the heading points up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import planning, world

FLOOR = 0.0
OBSTACLE = 0.25
RECEPTACLE = 0.5
BOX = 0.75
ROBOT = 1.0

MAP_SIZE = 96
M_PER_PX = 0.1
LOWDIM_SIZE = 26


@lru_cache(maxsize=4)
def _pixel_local_coords(size: int):
    """Local metric offsets of each pixel center: +y is the heading (up in
    the image), +x is the robot's right."""
    cols = np.arange(size)
    rows = np.arange(size)
    x_loc = (cols + 0.5 - size / 2) * M_PER_PX
    y_loc = (size / 2 - rows - 0.5) * M_PER_PX
    return np.meshgrid(x_loc, y_loc)


@lru_cache(maxsize=4)
def _footprint_mask(size: int, radius: float):
    xl, yl = _pixel_local_coords(size)
    return (xl * xl + yl * yl <= radius * radius).astype(np.float32)


def _sample_field(field: planning.DistanceField, grid: planning.OccupancyGrid, wx, wy, inside):
    """1 - d/d_max per pixel; unreachable and out-of-workspace pixels are 0."""
    jj = np.clip((wx * grid.resolution).astype(np.int64), 0, grid.cols - 1)
    ii = np.clip((wy * grid.resolution).astype(np.int64), 0, grid.rows - 1)
    d = field.dist[ii, jj]
    finite = np.isfinite(d)
    d_max = float(field.dist[np.isfinite(field.dist)].max())
    out = np.zeros(wx.shape, dtype=np.float32)
    if d_max > 0.0:
        np.divide(d, d_max, out=d, where=finite)
        out[finite & inside] = (1.0 - d[finite & inside]).astype(np.float32)
    else:
        out[finite & inside] = 1.0
    return out


def render_state(
    state: world.WorldState,
    grid_free: planning.OccupancyGrid,
    grid_inflated: planning.OccupancyGrid,
    robot_field: planning.DistanceField | None = None,
    receptacle_field: planning.DistanceField | None = None,
    size: int = MAP_SIZE,
) -> np.ndarray:
    """4-channel robot-centric image, shape (size, size, 4) float32 in [0,1].

    Channel 0: class codes; 1: robot footprint; 2: robot-source shortest-path
    field on the inflated grid; 3: receptacle-source field on the free grid.
    """
    cfg = state.config
    xl, yl = _pixel_local_coords(size)
    c, s = np.cos(state.robot_theta), np.sin(state.robot_theta)
    # fwd = (cos, sin), right = (sin, -cos)
    wx = state.robot_xy[0] + xl * s + yl * c
    wy = state.robot_xy[1] - xl * c + yl * s
    inside = (wx >= 0) & (wx < cfg.width) & (wy >= 0) & (wy < cfg.height)

    seg = np.full((size, size), FLOOR, dtype=np.float32)
    rx0, ry0, rx1, ry1 = cfg.receptacle
    seg[(wx >= rx0) & (wx <= rx1) & (wy >= ry0) & (wy <= ry1)] = RECEPTACLE
    for x0, y0, x1, y1 in state.obstacles:
        seg[(wx >= x0) & (wx <= x1) & (wy >= y0) & (wy <= y1)] = OBSTACLE
    seg[~inside] = OBSTACLE
    half = cfg.box_side / 2
    for b in state.boxes:
        if b.delivered:
            continue
        seg[
            (np.abs(wx - b.position[0]) <= half) & (np.abs(wy - b.position[1]) <= half)
        ] = BOX
    footprint = _footprint_mask(size, cfg.robot_radius)
    seg[footprint > 0] = ROBOT

    if robot_field is None:
        src = planning.point_to_cell(
            grid_inflated, planning.project_to_free(grid_inflated, state.robot_xy)
        )
        robot_field = planning.spfa_distance(grid_inflated, src)
    if receptacle_field is None:
        receptacle_field = state.receptacle_field
    ch2 = _sample_field(robot_field, grid_inflated, wx, wy, inside)
    ch3 = _sample_field(receptacle_field, grid_free, wx, wy, inside)
    return np.stack([seg, footprint, ch2, ch3], axis=-1)


def obstacle_mask(image: np.ndarray, atol: float = 0.004) -> np.ndarray:
    """Pixels that may not be selected as navigation goals. The tolerance
    admits images that round-tripped through uint8 replay storage."""
    return np.abs(image[..., 0] - OBSTACLE) <= atol


def pixel_to_world(robot_xy, robot_theta: float, row: int, col: int, size: int = MAP_SIZE) -> np.ndarray:
    """World coordinates of a map pixel center, inverse of the sampling in
    render_state (+y local = heading, +x local = robot's right)."""
    x_loc = (col + 0.5 - size / 2) * M_PER_PX
    y_loc = (size / 2 - row - 0.5) * M_PER_PX
    c, s = np.cos(robot_theta), np.sin(robot_theta)
    return np.array(
        [robot_xy[0] + x_loc * s + y_loc * c, robot_xy[1] - x_loc * c + y_loc * s]
    )


class ObservationBuilder:
    """Per-episode cache of grids and the receptacle field. The robot field
    from the latest render is kept for goal-reachability queries."""

    def __init__(self, state: world.WorldState, size: int = MAP_SIZE):
        cfg = state.config
        self.size = size
        self.grid_free = state.grid_free
        self.grid_inflated = planning.build_grid(
            cfg.width, cfg.height, state.obstacles, cfg.robot_radius, world.GRID_RESOLUTION
        )
        self.receptacle_field = state.receptacle_field
        self.last_robot_field: planning.DistanceField | None = None

    def render(self, state: world.WorldState) -> np.ndarray:
        src = planning.point_to_cell(
            self.grid_inflated, planning.project_to_free(self.grid_inflated, state.robot_xy)
        )
        self.last_robot_field = planning.spfa_distance(self.grid_inflated, src)
        return render_state(
            state, self.grid_free, self.grid_inflated, self.last_robot_field,
            self.receptacle_field, self.size,
        )


def _robot_corners(state: world.WorldState) -> np.ndarray:
    r = state.config.robot_radius
    c, s = np.cos(state.robot_theta), np.sin(state.robot_theta)
    fwd = np.array([c, s])
    right = np.array([s, -c])
    locals_ = [(r, r), (-r, r), (-r, -r), (r, -r)]
    return np.array([state.robot_xy + lx * right + ly * fwd for lx, ly in locals_])


def build_lowdim(state: world.WorldState, goal) -> np.ndarray:
    """26 values: robot corners (8), receptacle corners (8), four nearest
    undelivered box centers (8, receptacle-center placeholders when fewer),
    and the spatial goal (2)."""
    x0, y0, x1, y1 = state.config.receptacle
    recept_corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)
    recept_center = np.array([(x0 + x1) / 2, (y0 + y1) / 2])

    live = state.undelivered()
    dists = [float(np.hypot(*(state.boxes[i].position - state.robot_xy))) for i in live]
    order = np.argsort(np.asarray(dists), kind="stable")
    nearest = [state.boxes[live[k]].position for k in order[:4]]
    while len(nearest) < 4:
        nearest.append(recept_center)

    parts = [
        _robot_corners(state).ravel(),
        recept_corners.ravel(),
        np.concatenate(nearest),
        np.asarray(goal, dtype=np.float64),
    ]
    obs = np.concatenate(parts)
    assert obs.shape == (LOWDIM_SIZE,)
    return obs


@dataclass
class NormStats:
    """Per-dimension min/max for affine normalization to [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "NormStats":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim < 2 or rows.shape[0] == 0:
            raise ValueError("need a nonempty (N, D) array to fit stats")
        flat = rows.reshape(-1, rows.shape[-1])
        return cls(flat.min(axis=0), flat.max(axis=0))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.hi - self.lo
        out = np.zeros_like(x)
        np.divide(2.0 * (x - self.lo), span, out=out, where=span > 0)
        return out - np.where(span > 0, 1.0, 0.0)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        span = self.hi - self.lo
        return np.where(span > 0, self.lo + (z + 1.0) * span / 2.0, self.lo)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump({"min": self.lo.tolist(), "max": self.hi.tolist()}, f)

    @classmethod
    def load(cls, path) -> "NormStats":
        with open(path) as f:
            rec = json.load(f)
        return cls(np.asarray(rec["min"], dtype=np.float64), np.asarray(rec["max"], dtype=np.float64))
