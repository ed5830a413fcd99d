"""Hierarchical episode executor.

One high-level step = pick a spatial goal from the Q map, plan a path to it
(grid shortest path, or a diffusion sample when the path needs no pushing),
and drive the path with a rotate-then-translate controller.  Execution
modes differ only in which planner produces the path; mode purity is
observable through DiffusionPolicy.plan_calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import observation, planning, postprocess, rl, world
from .diffusion import DiffusionPolicy, SamplingDivergedError


class RolloutMode(Enum):
    HERD = "herd"
    NO_DIFFUSION = "no_diffusion"
    ONLY_DIFFUSION = "only_diffusion"
    BASELINE = "baseline"


class NoActionError(RuntimeError):
    """No reachable goal cell found within the retry budget."""


@dataclass(frozen=True)
class ControllerParams:
    heading_eps_rad: float = 0.1
    arrival_eps_m: float = 0.05
    segment_len_m: float = 0.1
    max_turn_per_tick_rad: float = 0.5
    stall_window_ticks: int = 50
    stall_displacement_m: float = 0.01


DEFAULT_CONTROLLER = ControllerParams()


@dataclass
class DriveResult:
    """Aggregate of all low-level outcomes of one high-level step; field
    names match world.StepOutcome so compute_reward accepts either."""

    next_state: world.WorldState
    delivered_this_step: int
    collision: bool
    robot_displacement: float
    box_progress: np.ndarray
    moved: bool
    reached_goal: bool
    stalled: bool
    ticks: int


def _wrap_angle(a: float) -> float:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def drive(state: world.WorldState, path, params: ControllerParams = DEFAULT_CONTROLLER) -> DriveResult:
    """Rotate-then-translate along the polyline until the final vertex is
    reached (within arrival_eps), a collision stops the robot, or the robot
    stalls (net displacement <= stall threshold over the stall window)."""
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 2 or len(path) == 0:
        raise ValueError("path must be a nonempty (N, 2) polyline")
    state = state.copy()
    n_boxes = len(state.boxes)
    progress = np.zeros(n_boxes)
    displacement = 0.0
    delivered = 0
    collision = False
    stalled = False
    ticks = 0
    history: list[np.ndarray] = [state.robot_xy.copy()]
    idx = 1 if len(path) > 1 else len(path)

    while idx < len(path):
        target = path[idx]
        delta = target - state.robot_xy
        dist = float(np.hypot(*delta))
        if dist <= params.arrival_eps_m:
            idx += 1
            continue
        heading_err = _wrap_angle(float(np.arctan2(delta[1], delta[0])) - state.robot_theta)
        if abs(heading_err) >= params.heading_eps_rad:
            turn = float(np.clip(heading_err, -params.max_turn_per_tick_rad,
                                 params.max_turn_per_tick_rad))
            state.robot_theta = _wrap_angle(state.robot_theta + turn)
        else:
            step_len = min(params.segment_len_m, dist)
            seg_end = state.robot_xy + delta / dist * step_len
            outcome = world.step_motion(state, (state.robot_xy, seg_end))
            displacement += outcome.robot_displacement
            progress += outcome.box_progress
            delivered += outcome.delivered_this_step
            collision = collision or outcome.collision
            state = outcome.next_state
            state.step_index += 1
            if outcome.collision:
                break
            if state.boxes_delivered == len(state.boxes):
                break
            if state.step_index >= state.config.t_max_steps:
                break
        ticks += 1
        history.append(state.robot_xy.copy())
        if len(history) > params.stall_window_ticks:
            net = float(np.hypot(*(history[-1] - history[-1 - params.stall_window_ticks])))
            if net <= params.stall_displacement_m:
                stalled = True
                break

    reached = bool(
        len(path) > 0
        and float(np.hypot(*(state.robot_xy - path[-1]))) <= params.arrival_eps_m
    )
    return DriveResult(
        next_state=state,
        delivered_this_step=delivered,
        collision=collision,
        robot_displacement=displacement,
        box_progress=progress,
        moved=displacement > world.NONMOVEMENT_DIST_M,
        reached_goal=reached,
        stalled=stalled,
        ticks=ticks,
    )


def swept_path_hits_box(path, box_centers, clearance: float) -> bool:
    """True when the robot disc swept along the polyline would contact any
    box: min distance from a box center to the path < clearance."""
    path = np.asarray(path, dtype=np.float64)
    centers = np.asarray(box_centers, dtype=np.float64)
    if centers.size == 0 or len(path) == 0:
        return False
    for c in centers:
        if len(path) == 1:
            d = float(np.hypot(*(path[0] - c)))
        else:
            d = min(_point_segment_distance(c, path[i], path[i + 1]) for i in range(len(path) - 1))
        if d < clearance:
            return True
    return False


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(a + t * ab - p)))


def _grid_path(grid: planning.OccupancyGrid, robot_xy, goal_xy) -> np.ndarray:
    """[exact robot] + free-cell centers + [projected goal]; raises
    UnreachableError when no route exists."""
    start = planning.project_to_free(grid, robot_xy)
    goal = planning.project_to_free(grid, goal_xy)
    cells = planning.shortest_path(grid, start, goal)
    pts = [np.asarray(robot_xy, dtype=np.float64)]
    for q in cells:
        if not np.array_equal(q, pts[-1]):
            pts.append(np.asarray(q, dtype=np.float64))
    g = np.asarray(goal, dtype=np.float64)
    if not np.array_equal(g, pts[-1]):
        pts.append(g)
    return np.stack(pts)


@dataclass
class Decision:
    goal_cell: tuple[int, int]
    goal_xy: np.ndarray
    path: np.ndarray
    used_diffusion: bool
    diffusion_fell_back: bool
    retries: int


def decide_and_plan(state: world.WorldState, image: np.ndarray, qnet,
                    diffusion_policy: DiffusionPolicy | None,
                    builder: observation.ObservationBuilder, mode: RolloutMode,
                    rng: np.random.Generator, epsilon: float = 0.0,
                    max_retries: int = 10,
                    skip: "set[int] | None" = None) -> Decision:
    """Select a goal cell and produce the path to drive.

    Tries the best-Q cell first; an unreachable goal falls through to the
    next-best cell, up to max_retries, then raises NoActionError.  `skip`
    holds flat cells to pass over (actions already executed from this exact
    state; the world is deterministic, so repeating one replays the same
    cycle forever) — ignored when it would leave no candidate.  In Herd
    mode the grid path is kept whenever the swept robot disc would touch an
    undelivered box (pushing intended); otherwise the diffusion sampler
    proposes the path, with grid fallback on sampler failure.
    """
    size = image.shape[0]
    mask = observation.obstacle_mask(image)
    if rng.random() < epsilon:
        valid = np.flatnonzero(~mask.ravel())
        order = rng.permutation(valid)[: 1 + max_retries]
        candidates = [int(f) for f in order]
    else:
        candidates = rl.ranked_actions(rl.q_map(qnet, image), mask, 1 + max_retries)
    if skip:
        fresh = [f for f in candidates if f not in skip]
        if fresh:
            candidates = fresh

    grid = builder.grid_inflated
    cfg = state.config
    clearance = cfg.robot_radius + cfg.box_side / 2.0
    for attempt, flat in enumerate(candidates):
        cell = (flat // size, flat % size)
        goal_xy = observation.pixel_to_world(state.robot_xy, state.robot_theta, *cell, size)
        try:
            grid_path = _grid_path(grid, state.robot_xy, goal_xy)
        except (planning.UnreachableError, planning.NoFreeSpaceError):
            continue
        goal_exec = grid_path[-1]

        wants_diffusion = mode is RolloutMode.ONLY_DIFFUSION
        if mode is RolloutMode.HERD:
            centers = [state.boxes[j].position for j in state.undelivered()]
            wants_diffusion = not swept_path_hits_box(grid_path, centers, clearance)
        used, fell_back = False, False
        path = grid_path
        if wants_diffusion and diffusion_policy is not None:
            lowdim = observation.build_lowdim(state, goal_exec)
            # Anchor at the projected robot: the exact pose may sit inside an
            # inflated-blocked cell (pressed against an obstacle).
            robot_free = np.asarray(planning.project_to_free(grid, state.robot_xy))
            try:
                raw = diffusion_policy.plan(lowdim, robot_free, goal_exec, rng)
                feasible = postprocess.postprocess(raw, robot_free, goal_exec, grid)
                path = feasible.points
                used = True
            except (SamplingDivergedError, planning.PlanningError, ValueError):
                path, used, fell_back = grid_path, False, True
        return Decision(cell, goal_exec, path, used, fell_back, attempt)
    raise NoActionError(f"no reachable goal in {len(candidates)} candidates")


def execute_goal(state: world.WorldState, goal_xy,
                 builder: observation.ObservationBuilder,
                 params: ControllerParams = DEFAULT_CONTROLLER) -> DriveResult:
    """Drive to a world-coordinate goal along the grid shortest path; an
    unreachable goal yields a no-motion result (nonmovement penalty)."""
    try:
        path = _grid_path(builder.grid_inflated, state.robot_xy, goal_xy)
    except (planning.UnreachableError, planning.NoFreeSpaceError):
        return DriveResult(
            next_state=state.copy(),
            delivered_this_step=0,
            collision=False,
            robot_displacement=0.0,
            box_progress=np.zeros(len(state.boxes)),
            moved=False,
            reached_goal=False,
            stalled=False,
            ticks=0,
        )
    return drive(state, path, params)


@dataclass
class EpisodeReport:
    boxes_delivered: int
    distance_m: float
    high_level_steps: int
    completion_step: int | None
    total_reward: float = 0.0
    step_displacements: list = field(default_factory=list)
    diffusion_steps: int = 0
    diffusion_fallbacks: int = 0
    no_action: bool = False

    def to_dict(self) -> dict:
        return {
            "boxes_delivered": self.boxes_delivered,
            "distance_m": self.distance_m,
            "high_level_steps": self.high_level_steps,
            "completion_step": self.completion_step,
            "total_reward": self.total_reward,
            "diffusion_steps": self.diffusion_steps,
            "diffusion_fallbacks": self.diffusion_fallbacks,
            "no_action": self.no_action,
        }


def _state_key(state: world.WorldState) -> tuple:
    """Hashable exact-dynamics key: robot pose plus live box positions."""
    live = tuple(
        (round(float(b.position[0]), 9), round(float(b.position[1]), 9))
        for b in state.boxes if not b.delivered
    )
    return (round(float(state.robot_xy[0]), 9), round(float(state.robot_xy[1]), 9),
            round(float(state.robot_theta), 9), live)


def run_episode(config: world.WorldConfig, qnet,
                diffusion_policy: DiffusionPolicy | None, mode: RolloutMode,
                seed: int, epsilon: float = 0.0,
                params: ControllerParams = DEFAULT_CONTROLLER,
                reward_cfg: rl.RewardConfig | None = None,
                replay: list | None = None,
                initial_state: world.WorldState | None = None) -> EpisodeReport:
    """Play one episode; append per-step replay records when a list is given."""
    if mode in (RolloutMode.HERD, RolloutMode.ONLY_DIFFUSION) and diffusion_policy is None:
        raise ValueError(f"{mode.value} mode needs a diffusion policy")
    if reward_cfg is None:
        reward_cfg = rl.RewardConfig()
    rng = np.random.default_rng(seed)
    state = initial_state.copy() if initial_state is not None else world.reset(config, seed)
    builder = observation.ObservationBuilder(state)
    report = EpisodeReport(0, 0.0, 0, None)
    if state.boxes_delivered == config.n_boxes:
        report.completion_step = 0
    idle = 0
    tried: dict = {}  # exact state -> flat cells already executed there
    while not world.is_terminal(state, idle):
        image = builder.render(state)
        key = _state_key(state)
        try:
            decision = decide_and_plan(state, image, qnet, diffusion_policy,
                                       builder, mode, rng, epsilon,
                                       skip=tried.get(key))
        except NoActionError:
            report.no_action = True
            break
        flat = decision.goal_cell[0] * image.shape[0] + decision.goal_cell[1]
        tried.setdefault(key, set()).add(flat)
        if replay is not None:
            replay.append({
                "step": report.high_level_steps,
                "state": world.snapshot(state),
                "goal": [float(decision.goal_xy[0]), float(decision.goal_xy[1])],
                "path": [[float(x), float(y)] for x, y in decision.path],
                "used_diffusion": decision.used_diffusion,
            })
        result = drive(state, decision.path, params)
        report.high_level_steps += 1
        report.distance_m += result.robot_displacement
        report.total_reward += rl.compute_reward(result, reward_cfg)
        report.step_displacements.append(result.robot_displacement)
        report.diffusion_steps += int(decision.used_diffusion)
        report.diffusion_fallbacks += int(decision.diffusion_fell_back)
        idle = 0 if result.delivered_this_step else idle + 1
        state = result.next_state
        if state.boxes_delivered == config.n_boxes and report.completion_step is None:
            report.completion_step = report.high_level_steps
    report.boxes_delivered = state.boxes_delivered
    return report


def write_replay(path, records) -> None:
    """JSON-lines, one high-level step per line."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
