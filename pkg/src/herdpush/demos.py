"""Demonstration pipeline for the trajectory model.

Teleop sessions stream robot poses into a WaypointRecorder (one waypoint
per 0.3 m of travelled arc length, plus a world snapshot for observation
rebuilds).  Episodes are finalized to 32-point trajectories, suffix-
augmented, and persisted as a normalized dataset.  A scripted demonstrator
stands in for human data when none is available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import observation, planning, world
from .diffusion import POINT_DIM, TRAJ_LEN
from .observation import NormStats

WAYPOINT_SPACING_M = 0.3
SOURCE_HUMAN = "human"
SOURCE_SYNTHETIC = "synthetic"


class WaypointRecorder:
    """Streams robot states during one demo; stores a waypoint (and a world
    snapshot) at the start and after every `spacing_m` of travelled arc."""

    def __init__(self, state: world.WorldState, spacing_m: float = WAYPOINT_SPACING_M):
        self.spacing_m = spacing_m
        self.waypoints: list[np.ndarray] = [np.asarray(state.robot_xy, dtype=np.float64).copy()]
        self.snapshots: list[dict] = [world.snapshot(state)]
        self._last_pos = self.waypoints[0].copy()
        self._since_last = 0.0

    def log(self, state: world.WorldState) -> bool:
        """Feed the current state every sim tick; True when a waypoint was
        stored.  Travel is arc length, so zigzags count their full path."""
        pos = np.asarray(state.robot_xy, dtype=np.float64)
        self._since_last += float(np.hypot(*(pos - self._last_pos)))
        self._last_pos = pos.copy()
        if self._since_last >= self.spacing_m:
            self.waypoints.append(pos.copy())
            self.snapshots.append(world.snapshot(state))
            self._since_last = 0.0
            return True
        return False


def interpolate_traj(anchors, n_points: int = TRAJ_LEN) -> np.ndarray:
    """Arc-length-uniform resample of an anchor polyline to exactly
    n_points.  Endpoints are copied exactly; exactly-n_points anchors pass
    through unchanged; a single anchor repeats."""
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, POINT_DIM)
    if len(anchors) == 0:
        raise ValueError("need at least one anchor")
    if len(anchors) == n_points:
        return anchors.copy()
    if len(anchors) == 1:
        return np.repeat(anchors, n_points, axis=0)
    seg = np.hypot(*np.diff(anchors, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0.0:
        return np.repeat(anchors[:1], n_points, axis=0)
    s = np.linspace(0.0, cum[-1], n_points)
    out = np.stack([np.interp(s, cum, anchors[:, 0]), np.interp(s, cum, anchors[:, 1])], axis=1)
    out[0] = anchors[0]
    out[-1] = anchors[-1]
    return out


def _with_goal_anchor(waypoints, goal) -> np.ndarray:
    anchors = np.asarray(waypoints, dtype=np.float64).reshape(-1, POINT_DIM)
    goal = np.asarray(goal, dtype=np.float64)
    if len(anchors) == 0:
        raise ValueError("need at least one waypoint")
    if not np.array_equal(anchors[-1], goal):
        anchors = np.vstack([anchors, goal[None]])
    return anchors


def finalize(waypoints, goal) -> np.ndarray:
    """Goal appended as the final anchor (unless already there), then
    arc-uniform interpolation to the fixed trajectory length."""
    return interpolate_traj(_with_goal_anchor(waypoints, goal))


@dataclass
class DemoEpisode:
    waypoints: np.ndarray  # (n, 2) sparse, first = start position
    snapshots: list        # world snapshot per waypoint
    goal: np.ndarray       # (2,)
    obs: np.ndarray        # (LOWDIM_SIZE,) at the start pose
    traj: np.ndarray       # (TRAJ_LEN, 2)
    source: str
    config: world.WorldConfig


def make_episode(recorder: WaypointRecorder, goal, config: world.WorldConfig,
                 source: str = SOURCE_HUMAN) -> DemoEpisode:
    waypoints = np.stack(recorder.waypoints)
    goal = np.asarray(goal, dtype=np.float64)
    start = world.state_from_snapshot(recorder.snapshots[0], config)
    return DemoEpisode(
        waypoints=waypoints,
        snapshots=list(recorder.snapshots),
        goal=goal,
        obs=observation.build_lowdim(start, goal),
        traj=finalize(waypoints, goal),
        source=source,
        config=config,
    )


def _resample_with_goal_padding(anchors: np.ndarray, step: float) -> np.ndarray:
    """Walk the suffix polyline at the ORIGINAL arc step of the full demo,
    then pad with the final anchor (the goal) up to the fixed length, so a
    late start means an early, padded arrival rather than a stretched path."""
    goal = anchors[-1]
    seg = np.hypot(*np.diff(anchors, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0 or step == 0.0:
        return np.repeat(goal[None], TRAJ_LEN, axis=0)
    n_steps = int(np.ceil(total / step - 1e-12))
    s = np.minimum(np.arange(n_steps + 1) * step, total)
    pts = np.stack([np.interp(s, cum, anchors[:, 0]), np.interp(s, cum, anchors[:, 1])], axis=1)
    pts[0] = anchors[0]
    pts[-1] = goal
    assert len(pts) <= TRAJ_LEN
    pad = np.repeat(goal[None], TRAJ_LEN - len(pts), axis=0)
    return np.concatenate([pts, pad], axis=0)


def augment(episode: DemoEpisode) -> list[DemoEpisode]:
    """One suffix demo per sparse waypoint k >= 1, each re-finalized to the
    fixed length with terminal goal padding; the observation is rebuilt from
    the world snapshot recorded at waypoint k."""
    full = _with_goal_anchor(episode.waypoints, episode.goal)
    total = float(np.hypot(*np.diff(full, axis=0).T).sum())
    step = total / (TRAJ_LEN - 1)
    out = []
    for k in range(1, len(episode.waypoints)):
        anchors = _with_goal_anchor(episode.waypoints[k:], episode.goal)
        state_k = world.state_from_snapshot(episode.snapshots[k], episode.config)
        out.append(DemoEpisode(
            waypoints=episode.waypoints[k:].copy(),
            snapshots=list(episode.snapshots[k:]),
            goal=episode.goal.copy(),
            obs=observation.build_lowdim(state_k, episode.goal),
            traj=_resample_with_goal_padding(anchors, step),
            source=episode.source,
            config=episode.config,
        ))
    return out


@dataclass
class DemoDataset:
    obs: np.ndarray        # (N, LOWDIM_SIZE) normalized to [-1, 1]
    traj: np.ndarray       # (N, TRAJ_LEN, 2) normalized
    obs_stats: NormStats
    traj_stats: NormStats
    sources: list[str]

    def provenance_counts(self) -> dict:
        counts: dict = {}
        for s in self.sources:
            counts[s] = counts.get(s, 0) + 1
        return counts

    def sidecar_metadata(self) -> dict:
        """Stats block merged into the trained model's sidecar JSON."""
        return {
            "obs_stats": {"min": self.obs_stats.lo.tolist(), "max": self.obs_stats.hi.tolist()},
            "traj_stats": {"min": self.traj_stats.lo.tolist(), "max": self.traj_stats.hi.tolist()},
        }


def _assemble(obs_raw: np.ndarray, traj_raw: np.ndarray, sources: list[str]) -> DemoDataset:
    obs_stats = NormStats.fit(obs_raw)
    traj_stats = NormStats.fit(traj_raw)
    return DemoDataset(obs_stats.normalize(obs_raw), traj_stats.normalize(traj_raw),
                       obs_stats, traj_stats, sources)


def build_dataset(episodes, out_dir=None) -> DemoDataset:
    """Fit min/max stats over the full set, normalize, and (optionally)
    persist raw records plus the stats sidecar to a directory."""
    if not episodes:
        raise ValueError("no demo episodes to build a dataset from")
    obs_raw = np.stack([e.obs for e in episodes])
    traj_raw = np.stack([e.traj for e in episodes])
    sources = [e.source for e in episodes]
    ds = _assemble(obs_raw, traj_raw, sources)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "demos.jsonl", "w") as fh:
            for o, t, s in zip(obs_raw, traj_raw, sources):
                fh.write(json.dumps({"obs": o.tolist(), "traj": t.tolist(), "source": s}) + "\n")
        with open(out_dir / "stats.json", "w") as fh:
            json.dump(ds.sidecar_metadata(), fh)
    return ds


def load_dataset(out_dir) -> DemoDataset:
    out_dir = Path(out_dir)
    obs_raw, traj_raw, sources = [], [], []
    with open(out_dir / "demos.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            obs_raw.append(rec["obs"])
            traj_raw.append(rec["traj"])
            sources.append(rec["source"])
    if not obs_raw:
        raise ValueError(f"empty dataset in {out_dir}")
    return _assemble(np.asarray(obs_raw, dtype=np.float64),
                     np.asarray(traj_raw, dtype=np.float64), sources)


def episode_to_record(episode: DemoEpisode) -> dict:
    """JSON-ready form; obs and traj are recomputable so only the sparse
    data is stored."""
    return {
        "waypoints": episode.waypoints.tolist(),
        "snapshots": episode.snapshots,
        "goal": episode.goal.tolist(),
        "source": episode.source,
    }


def episode_from_record(record: dict, config: world.WorldConfig) -> DemoEpisode:
    waypoints = np.asarray(record["waypoints"], dtype=np.float64)
    goal = np.asarray(record["goal"], dtype=np.float64)
    snapshots = list(record["snapshots"])
    start = world.state_from_snapshot(snapshots[0], config)
    return DemoEpisode(
        waypoints=waypoints,
        snapshots=snapshots,
        goal=goal,
        obs=observation.build_lowdim(start, goal),
        traj=finalize(waypoints, goal),
        source=record.get("source", SOURCE_HUMAN),
        config=config,
    )


def append_episode(path, episode: DemoEpisode) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(json.dumps(episode_to_record(episode)) + "\n")


def load_episodes(path, config: world.WorldConfig) -> list[DemoEpisode]:
    episodes = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                episodes.append(episode_from_record(json.loads(line), config))
    return episodes


def _walk_polyline(anchors: np.ndarray, step: float):
    """(position, heading) samples every `step` of arc length, ending at the
    final vertex."""
    for a, b in zip(anchors[:-1], anchors[1:]):
        seg = b - a
        length = float(np.hypot(*seg))
        if length == 0.0:
            continue
        theta = float(np.arctan2(seg[1], seg[0]))
        n = max(1, int(np.ceil(length / step)))
        for k in range(1, n + 1):
            yield a + seg * (k / n), theta


def synthesize_demos(n: int, rng: np.random.Generator,
                     config: world.WorldConfig | None = None,
                     margin: float = 0.1, max_goal_dist: float | None = None
                     ) -> list[DemoEpisode]:
    """Scripted demonstrator: random worlds with random free-space goals,
    straight lines when unobstructed, grid detours otherwise, always keeping
    robot-vs-box clearance (robot radius + half box side) plus a margin that
    absorbs cell-quantization slack."""
    if config is None:
        config = world.PRESETS["large_empty"]
    if max_goal_dist is None:
        max_goal_dist = observation.MAP_SIZE * 0.1 / 2  # action-map half extent
    clearance = config.robot_radius + config.box_side / 2
    episodes: list[DemoEpisode] = []
    attempts = 0
    while len(episodes) < n:
        attempts += 1
        if attempts > 50 * max(n, 1):
            raise RuntimeError(f"gave up after {attempts} attempts, "
                               f"{len(episodes)}/{n} demos synthesized")
        state = world.reset(config, int(rng.integers(2 ** 63 - 1)))
        grid = planning.build_grid(config.width, config.height, state.obstacles,
                                   config.robot_radius, world.GRID_RESOLUTION)
        grid = planning.block_discs(grid, [b.position for b in state.boxes],
                                    clearance + margin)
        if planning.blocked_at_point(grid, state.robot_xy):
            continue
        goal = None
        for _ in range(100):
            cand = rng.uniform((0.0, 0.0), (config.width, config.height))
            if planning.blocked_at_point(grid, cand):
                continue
            if float(np.hypot(*(cand - state.robot_xy))) > max_goal_dist:
                continue
            goal = cand
            break
        if goal is None:
            continue
        if not planning.segment_blocked(grid, state.robot_xy, goal):
            anchors = np.stack([state.robot_xy, goal])
        else:
            try:
                cells = planning.shortest_path(grid, state.robot_xy, goal)
            except planning.PlanningError:
                continue
            pts = [np.asarray(state.robot_xy, dtype=np.float64)]
            for q in cells:
                if not np.array_equal(q, pts[-1]):
                    pts.append(np.asarray(q, dtype=np.float64))
            if not np.array_equal(goal, pts[-1]):
                pts.append(goal)
            anchors = np.stack(pts)
        recorder = WaypointRecorder(state)
        scratch = state.copy()
        for pos, theta in _walk_polyline(anchors, step=0.05):
            scratch.robot_xy = pos
            scratch.robot_theta = theta
            recorder.log(scratch)
        episodes.append(make_episode(recorder, goal, config, SOURCE_SYNTHETIC))
    return episodes
