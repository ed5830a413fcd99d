"""Deterministic quasi-static 2D pushing world.

The robot is a disc, boxes are axis-aligned squares that translate but never
rotate, and contact is resolved with minimal translation vectors at fixed
substeps. Box progress is measured on the receptacle shortest-path distance
field so walls and obstacles count, not straight-line distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import planning

SUBSTEP_M = 0.01  # below box_side/10, prevents tunneling
NONMOVEMENT_DIST_M = 0.05
IDLE_STEP_LIMIT = 100
GRID_RESOLUTION = 10.0  # cells per meter, shared with the state image
_CONTACT_EPS = 1e-9


class WorldError(Exception):
    pass


class ConfigurationInfeasibleError(WorldError):
    """Rejection sampling could not place every entity."""


class InvalidSegmentError(WorldError):
    """Motion segment does not start at the robot."""


@dataclass(frozen=True)
class WorldConfig:
    width: float
    height: float
    n_boxes: int
    layout: str = "empty"  # empty | columns | divider
    column_range: tuple[int, int] = (0, 0)
    box_side: float = 0.25
    robot_radius: float = 0.15
    receptacle: tuple[float, float, float, float] = (0.0, 0.0, 1.5, 1.5)
    # Safety cap on motion ticks; episodes normally end on completion or on
    # IDLE_STEP_LIMIT decisions without a delivery, long before this binds.
    t_max_steps: int = 100_000
    rng_seed: int = 0

    def validate(self) -> None:
        if min(self.width, self.height, self.box_side, self.robot_radius) <= 0:
            raise ValueError("dimensions must be positive")
        if self.n_boxes < 1:
            raise ValueError("n_boxes must be >= 1")
        x0, y0, x1, y1 = self.receptacle
        if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
            raise ValueError("receptacle must be a nonempty rectangle inside the workspace")
        if self.layout not in ("empty", "columns", "divider"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.t_max_steps < 1:
            raise ValueError("t_max_steps must be >= 1")


# Fig.-6-style rooms. Column counts are drawn per reset from column_range.
PRESETS: dict[str, WorldConfig] = {
    "small_empty": WorldConfig(10.0, 5.0, 10),
    "small_columns": WorldConfig(10.0, 5.0, 10, layout="columns", column_range=(0, 2)),
    "large_empty": WorldConfig(10.0, 10.0, 20),
    "large_columns": WorldConfig(10.0, 10.0, 20, layout="columns", column_range=(0, 8)),
    "large_divider": WorldConfig(10.0, 10.0, 20, layout="divider"),
}
# Envs an episode of "mixed" may draw from.
MIXED_POOL = ("small_empty", "small_columns", "large_columns", "large_divider")

COLUMN_SIDE = 0.5
DIVIDER_THICKNESS = 0.3
DIVIDER_GAP = 1.5


def scaled_config(base: WorldConfig, scale: float, n_boxes: int | None = None) -> WorldConfig:
    """Shrink workspace and box count; object sizes, the receptacle, and the
    termination rules keep their physical values (episodes end on completion
    or the idle cutoff, which are scale-free)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    cfg = replace(
        base,
        width=base.width * scale,
        height=base.height * scale,
        n_boxes=n_boxes if n_boxes is not None else max(1, round(base.n_boxes * scale)),
    )
    cfg.validate()
    return cfg


def resolve_env(name: str, rng: np.random.Generator | None = None) -> WorldConfig:
    if name == "mixed":
        if rng is None:
            raise ValueError("mixed env needs an rng to draw from")
        name = MIXED_POOL[int(rng.integers(len(MIXED_POOL)))]
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown env {name!r}; expected one of {sorted(PRESETS)} or 'mixed'") from None


@dataclass
class Box:
    position: np.ndarray  # (2,) center, meters
    delivered: bool = False

    def copy(self) -> "Box":
        return Box(self.position.copy(), self.delivered)


@dataclass
class WorldState:
    config: WorldConfig
    robot_xy: np.ndarray  # (2,)
    robot_theta: float
    boxes: list[Box]
    obstacles: list[tuple[float, float, float, float]]
    step_index: int = 0
    # Shared per-episode caches; immutable, so copies may alias them.
    grid_free: planning.OccupancyGrid | None = field(default=None, repr=False)
    receptacle_field: planning.DistanceField | None = field(default=None, repr=False)

    @property
    def receptacle(self) -> tuple[float, float, float, float]:
        return self.config.receptacle

    @property
    def boxes_delivered(self) -> int:
        return sum(b.delivered for b in self.boxes)

    @property
    def robot_pose(self) -> tuple[float, float, float]:
        return float(self.robot_xy[0]), float(self.robot_xy[1]), float(self.robot_theta)

    def undelivered(self) -> list[int]:
        return [i for i, b in enumerate(self.boxes) if not b.delivered]

    def copy(self) -> "WorldState":
        return WorldState(
            self.config,
            self.robot_xy.copy(),
            self.robot_theta,
            [b.copy() for b in self.boxes],
            self.obstacles,
            self.step_index,
            self.grid_free,
            self.receptacle_field,
        )


@dataclass
class StepOutcome:
    next_state: WorldState
    delivered_this_step: int
    collision: bool
    robot_displacement: float
    box_progress: np.ndarray  # (n_boxes,) signed meters, + toward receptacle
    moved: bool


def _rect_distance(p, rect) -> float:
    x0, y0, x1, y1 = rect
    dx = max(x0 - p[0], p[0] - x1, 0.0)
    dy = max(y0 - p[1], p[1] - y1, 0.0)
    return math.hypot(dx, dy)


def _rects_overlap(a, b, eps: float = 0.0) -> bool:
    return a[0] < b[2] - eps and b[0] < a[2] - eps and a[1] < b[3] - eps and b[1] < a[3] - eps


def _box_rect(center, half: float):
    return (center[0] - half, center[1] - half, center[0] + half, center[1] + half)


def _disc_box_mtv(c, r: float, center, half: float):
    """Translation that pushes the square out of the disc, or None."""
    bx0, by0 = center[0] - half, center[1] - half
    bx1, by1 = center[0] + half, center[1] + half
    qx = min(max(c[0], bx0), bx1)
    qy = min(max(c[1], by0), by1)
    dx = c[0] - qx
    dy = c[1] - qy
    d2 = dx * dx + dy * dy
    if d2 >= r * r:
        return None
    if d2 > 0.0:
        d = math.sqrt(d2)
        depth = r - d + _CONTACT_EPS
        return (-dx / d * depth, -dy / d * depth)
    # Disc center inside the square: exit along the axis of least penetration.
    px = half + r - abs(c[0] - center[0])
    py = half + r - abs(c[1] - center[1])
    if px <= py:
        return (math.copysign(px + _CONTACT_EPS, center[0] - c[0]), 0.0)
    return (0.0, math.copysign(py + _CONTACT_EPS, center[1] - c[1]))


def _box_box_mtv(mover, other, half: float):
    """Translation applied to `mover` to exit `other`, or None."""
    dx = mover[0] - other[0]
    dy = mover[1] - other[1]
    ox = 2 * half - abs(dx)
    oy = 2 * half - abs(dy)
    if ox <= 0.0 or oy <= 0.0:
        return None
    if ox <= oy:
        return (math.copysign(ox + _CONTACT_EPS, dx if dx != 0 else 1.0), 0.0)
    return (0.0, math.copysign(oy + _CONTACT_EPS, dy if dy != 0 else 1.0))


def _receptacle_source_cell(grid: planning.OccupancyGrid, receptacle) -> tuple[int, int]:
    cx = 0.5 * (receptacle[0] + receptacle[2])
    cy = 0.5 * (receptacle[1] + receptacle[3])
    return planning.point_to_cell(grid, planning.project_to_free(grid, (cx, cy)))


def _sample_obstacles(config: WorldConfig, rng: np.random.Generator):
    obstacles: list[tuple[float, float, float, float]] = []
    r = config.robot_radius
    if config.layout == "columns":
        lo, hi = config.column_range
        count = int(rng.integers(lo, hi + 1))
        half = COLUMN_SIDE / 2
        grow = r + config.box_side  # room to push a box past the receptacle edge
        recept_grown = (
            config.receptacle[0] - grow,
            config.receptacle[1] - grow,
            config.receptacle[2] + grow,
            config.receptacle[3] + grow,
        )
        for _ in range(count):
            for _attempt in range(100):
                cx = rng.uniform(half + r, config.width - half - r)
                cy = rng.uniform(half + r, config.height - half - r)
                rect = (cx - half, cy - half, cx + half, cy + half)
                gap = 2 * r + 0.1  # robot must fit between columns
                spaced = all(
                    not _rects_overlap(
                        (rect[0] - gap, rect[1] - gap, rect[2] + gap, rect[3] + gap), o
                    )
                    for o in obstacles
                )
                if spaced and not _rects_overlap(rect, recept_grown):
                    obstacles.append(rect)
                    break
            else:
                raise ConfigurationInfeasibleError("could not place a column")
    elif config.layout == "divider":
        y0 = config.height / 2 - DIVIDER_THICKNESS / 2
        y1 = y0 + DIVIDER_THICKNESS
        margin = 2 * r + 0.2
        gap_lo = rng.uniform(margin, config.width - DIVIDER_GAP - margin)
        obstacles.append((0.0, y0, gap_lo, y1))
        obstacles.append((gap_lo + DIVIDER_GAP, y0, config.width, y1))
    return obstacles


def reset(config: WorldConfig, seed: int | None = None) -> WorldState:
    """Place obstacles, robot, and boxes uniformly at random; deterministic
    for a given seed (defaults to config.rng_seed)."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    obstacles = _sample_obstacles(config, rng)
    r = config.robot_radius
    half = config.box_side / 2

    robot_xy = None
    for _attempt in range(200):
        cand = np.array(
            [rng.uniform(2 * r, config.width - 2 * r), rng.uniform(2 * r, config.height - 2 * r)]
        )
        if all(_rect_distance(cand, o) > r + 0.01 for o in obstacles):
            robot_xy = cand
            break
    if robot_xy is None:
        raise ConfigurationInfeasibleError("could not place the robot")
    theta = float(rng.uniform(-math.pi, math.pi))

    # Divider rooms spawn boxes on the far side of the wall so delivery
    # requires passing the gap.
    y_min = half + r
    if config.layout == "divider":
        y_min = max(y_min, config.height / 2 + DIVIDER_THICKNESS / 2 + half + 0.05)
    boxes: list[Box] = []
    for _box_idx in range(config.n_boxes):
        placed = False
        for _attempt in range(200):
            cand = np.array(
                [
                    rng.uniform(half + r, config.width - half - r),
                    rng.uniform(y_min, config.height - half - r),
                ]
            )
            rect = _box_rect(cand, half)
            if _rects_overlap(rect, config.receptacle):
                continue
            if any(_rects_overlap(rect, o) for o in obstacles):
                continue
            if _rect_distance(robot_xy, rect) <= r + 0.01:
                continue
            if any(_rects_overlap(rect, _box_rect(b.position, half), -0.01) for b in boxes):
                continue
            boxes.append(Box(cand))
            placed = True
            break
        if not placed:
            raise ConfigurationInfeasibleError(
                f"could not place box {_box_idx + 1} of {config.n_boxes}"
            )

    grid_free = planning.build_grid(config.width, config.height, obstacles, 0.0, GRID_RESOLUTION)
    receptacle_field = planning.spfa_distance(grid_free, _receptacle_source_cell(grid_free, config.receptacle))
    return WorldState(config, robot_xy, theta, boxes, obstacles, 0, grid_free, receptacle_field)


def _clip_segment(config: WorldConfig, p0, p1):
    """Largest prefix of [p0, p1] keeping the robot disc inside the walls."""
    r = config.robot_radius
    lo = (r, r)
    hi = (config.width - r, config.height - r)
    t_end = 1.0
    for ax in range(2):
        d = p1[ax] - p0[ax]
        if d > 0:
            t_end = min(t_end, (hi[ax] - p0[ax]) / d)
        elif d < 0:
            t_end = min(t_end, (lo[ax] - p0[ax]) / d)
    t_end = max(t_end, 0.0)
    clipped = t_end < 1.0
    return p0 + t_end * (p1 - p0), clipped


def _resolve_contacts(state: WorldState, c_new, touched: np.ndarray) -> bool:
    """Push boxes out of the robot disc and out of each other, transitively.
    Returns False when resolution fails to converge."""
    cfg = state.config
    half = cfg.box_side / 2
    live = state.undelivered()
    for _it in range(64):
        changed = False
        for i in live:
            mtv = _disc_box_mtv(c_new, cfg.robot_radius, state.boxes[i].position, half)
            if mtv is not None:
                state.boxes[i].position += mtv
                touched[i] = True
                changed = True
        for a_pos, i in enumerate(live):
            for j in live[a_pos + 1 :]:
                bi = state.boxes[i].position
                bj = state.boxes[j].position
                if not _rects_overlap(_box_rect(bi, half), _box_rect(bj, half)):
                    continue
                # The box farther from the robot yields (it is downstream of
                # the push); ties go to the higher index.
                di = float(np.hypot(*(bi - c_new)))
                dj = float(np.hypot(*(bj - c_new)))
                mover, anchor = (i, j) if di > dj else (j, i)
                mtv = _box_box_mtv(state.boxes[mover].position, state.boxes[anchor].position, half)
                if mtv is not None:
                    state.boxes[mover].position += mtv
                    touched[mover] = True
                    changed = True
        if not changed:
            return True
    return False


def _boxes_valid(state: WorldState, c_new, indices) -> bool:
    cfg = state.config
    half = cfg.box_side / 2
    for i in indices:
        p = state.boxes[i].position
        if not (
            half - 1e-9 <= p[0] <= cfg.width - half + 1e-9
            and half - 1e-9 <= p[1] <= cfg.height - half + 1e-9
        ):
            return False
        rect = _box_rect(p, half)
        if any(_rects_overlap(rect, o) for o in state.obstacles):
            return False
        if _disc_box_mtv(c_new, cfg.robot_radius - _CONTACT_EPS * 4, p, half) is not None:
            return False
    return True


def step_motion(state: WorldState, segment) -> StepOutcome:
    """Advance the robot along a straight segment with pushing contact."""
    p0 = np.asarray(segment[0], dtype=np.float64)
    p1 = np.asarray(segment[1], dtype=np.float64)
    if float(np.hypot(*(p0 - state.robot_xy))) > 1e-9:
        raise InvalidSegmentError("segment must start at the robot position")

    cfg = state.config
    nxt = state.copy()
    n_boxes = len(nxt.boxes)
    progress = np.zeros(n_boxes, dtype=np.float64)
    # Receptacle grid-distance per box, looked up lazily on first contact.
    cached_dist = [None] * n_boxes
    collision = False
    displacement = 0.0
    delivered = 0

    p1, clipped = _clip_segment(cfg, p0, p1)
    if clipped:
        collision = True
    delta = p1 - p0
    length = float(np.hypot(*delta))
    n_sub = max(1, math.ceil(length / SUBSTEP_M)) if length > 0 else 0

    half = cfg.box_side / 2
    pos = p0
    for k in range(1, n_sub + 1):
        c_new = p0 + delta * (k / n_sub)
        if any(_rect_distance(c_new, o) < cfg.robot_radius for o in nxt.obstacles):
            collision = True
            break
        saved = [(b.position.copy(), b.delivered) for b in nxt.boxes]
        touched = np.zeros(n_boxes, dtype=bool)
        ok = _resolve_contacts(nxt, c_new, touched)
        moved_idx = [i for i in range(n_boxes) if touched[i]]
        if ok and moved_idx:
            ok = _boxes_valid(nxt, c_new, moved_idx)
        if not ok:
            for b, (bp, bd) in zip(nxt.boxes, saved):
                b.position[:] = bp
                b.delivered = bd
            collision = True
            break
        for i in moved_idx:
            prev_pos, _ = saved[i]
            if cached_dist[i] is None:
                cached_dist[i] = planning.field_distance_at(nxt.receptacle_field, nxt.grid_free, prev_pos)
            new_d = planning.field_distance_at(nxt.receptacle_field, nxt.grid_free, nxt.boxes[i].position)
            if math.isfinite(cached_dist[i]) and math.isfinite(new_d):
                progress[i] += cached_dist[i] - new_d
            cached_dist[i] = new_d
            rect = _box_rect(nxt.boxes[i].position, half)
            rx0, ry0, rx1, ry1 = cfg.receptacle
            if rx0 <= rect[0] and rect[2] <= rx1 and ry0 <= rect[1] and rect[3] <= ry1:
                nxt.boxes[i].delivered = True
                delivered += 1
        displacement += float(np.hypot(*(c_new - pos)))
        pos = c_new

    nxt.robot_xy = pos.copy()
    return StepOutcome(
        next_state=nxt,
        delivered_this_step=delivered,
        collision=collision,
        robot_displacement=displacement,
        box_progress=progress,
        moved=displacement > NONMOVEMENT_DIST_M,
    )


def is_terminal(state: WorldState, steps_since_last_delivery: int) -> bool:
    if all(b.delivered for b in state.boxes):
        return True
    if steps_since_last_delivery >= IDLE_STEP_LIMIT:
        return True
    return state.step_index >= state.config.t_max_steps


def snapshot(state: WorldState) -> dict:
    """JSON-ready record; delivered boxes are omitted (removed from play)."""
    return {
        "robot": [float(state.robot_xy[0]), float(state.robot_xy[1]), float(state.robot_theta)],
        "boxes": [[float(b.position[0]), float(b.position[1])] for b in state.boxes if not b.delivered],
        "obstacles": [list(map(float, o)) for o in state.obstacles],
        "receptacle": list(map(float, state.config.receptacle)),
        "step": state.step_index,
    }


def state_from_snapshot(record: dict, config: WorldConfig) -> WorldState:
    """Rebuild a state value from a snapshot record. Grid caches are
    regenerated from the serialized obstacles."""
    obstacles = [tuple(o) for o in record["obstacles"]]
    cfg = replace(config, receptacle=tuple(record["receptacle"]))
    grid_free = planning.build_grid(cfg.width, cfg.height, obstacles, 0.0, GRID_RESOLUTION)
    fieldv = planning.spfa_distance(grid_free, _receptacle_source_cell(grid_free, cfg.receptacle))
    rx, ry, rt = record["robot"]
    return WorldState(
        cfg,
        np.array([rx, ry], dtype=np.float64),
        float(rt),
        [Box(np.array(b, dtype=np.float64)) for b in record["boxes"]],
        obstacles,
        int(record.get("step", 0)),
        grid_free,
        fieldv,
    )
