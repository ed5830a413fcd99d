"""Command-line entry points.

Subcommands: train-rl, train-diffusion, collect-demos, synth-demos, eval,
replay.  Settings come from an optional TOML config file; every flag given
on the command line overrides the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

from . import demos, diffusion, rl, rollout, world

EVAL_ROLLOUT_MODES = {
    "herd": rollout.RolloutMode.HERD,
    "no-diffusion": rollout.RolloutMode.NO_DIFFUSION,
    "only-diffusion": rollout.RolloutMode.ONLY_DIFFUSION,
    # reward-ablation policies roll out plain SPFA paths
    "cumulative-reward": rollout.RolloutMode.BASELINE,
    "no-motion-penalty": rollout.RolloutMode.BASELINE,
}

TRAIN_REWARD_MODES = {
    "max-box": rl.RewardConfig(),
    "cumulative-reward": rl.RewardConfig(progress_mode="cumulative"),
    "no-motion-penalty": rl.RewardConfig(motion_penalty=False),
}


@dataclass
class RunConfig:
    env: str = "small_empty"
    mode: str | None = None
    episodes: int = 20
    seed: int = 0
    steps: int | None = None
    out: str = "runs/out"
    port: int = 8765
    scale: float = 1.0
    n_boxes: int | None = None      # config-file only: box-count override
    rl_checkpoint: str | None = None
    diffusion_dir: str | None = None
    demos_path: str | None = None


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        known = {f.name for f in fields(RunConfig)}
        bad = set(doc) - known
        if bad:
            raise SystemExit(f"unknown config keys in {path}: {sorted(bad)}")
        cfg = replace(cfg, **doc)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg


def _env_config(cfg: RunConfig, rng: np.random.Generator | None = None) -> world.WorldConfig:
    base = world.resolve_env(cfg.env, rng)
    if cfg.scale != 1.0 or cfg.n_boxes is not None:
        return world.scaled_config(base, cfg.scale, cfg.n_boxes)
    return base


def _require_file(path: str | None, what: str, hint: str) -> Path:
    if path is None:
        raise SystemExit(f"no {what} configured; set it in the config file or flags ({hint})")
    p = Path(path)
    if not p.exists():
        raise SystemExit(f"{what} not found at {p} ({hint})")
    return p


def cmd_train_rl(cfg: RunConfig) -> int:
    mode = cfg.mode or "max-box"
    if mode not in TRAIN_REWARD_MODES:
        raise SystemExit(f"train-rl mode must be one of {sorted(TRAIN_REWARD_MODES)}, got {mode!r}")
    if cfg.env == "mixed" and (cfg.scale != 1.0 or cfg.n_boxes is not None):
        env_mix = [world.scaled_config(world.PRESETS[n], cfg.scale, cfg.n_boxes)
                   for n in world.MIXED_POOL]
    else:
        env_mix = [_env_config(cfg)] if cfg.env != "mixed" else ["mixed"]
    tcfg = rl.TrainConfig() if cfg.steps is None else rl.TrainConfig(total_steps=cfg.steps)
    ckpt = rl.train(env_mix, cfg.out, TRAIN_REWARD_MODES[mode], tcfg, seed=cfg.seed)
    print(f"saved Q checkpoint to {ckpt}")
    return 0


def cmd_synth_demos(cfg: RunConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    episodes = demos.synthesize_demos(cfg.episodes, rng, _env_config(cfg, rng))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "episodes.jsonl"
    path.write_text("".join(json.dumps(demos.episode_to_record(e)) + "\n" for e in episodes))
    print(f"wrote {len(episodes)} synthetic episodes to {path}")
    return 0


def cmd_train_diffusion(cfg: RunConfig) -> int:
    demo_file = _require_file(cfg.demos_path, "demo episodes file",
                              "record with collect-demos or generate with synth-demos")
    env_cfg = _env_config(cfg)
    episodes = demos.load_episodes(demo_file, env_cfg)
    if not episodes:
        raise SystemExit(f"no episodes in {demo_file}")
    full = list(episodes)
    for ep in episodes:
        full.extend(demos.augment(ep))
    out = Path(cfg.out)
    ds = demos.build_dataset(full, out_dir=out / "dataset")
    epochs = cfg.steps if cfg.steps is not None else 200
    result = diffusion.train_diffusion(ds.obs, ds.traj, out, epochs=epochs,
                                       seed=cfg.seed, metadata=ds.sidecar_metadata())
    print(f"{len(episodes)} episodes -> {len(full)} demos after augmentation; "
          f"best val loss {result.best_val_loss:.4f}; model in {out}")
    return 0


def cmd_collect_demos(cfg: RunConfig) -> int:
    import asyncio

    from . import bridge

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    session = bridge.TeleopSession(_env_config(cfg), seed=cfg.seed,
                                   demo_path=out / "episodes.jsonl")
    print(f"teleop bridge on ws://127.0.0.1:{cfg.port}; saving to {out / 'episodes.jsonl'}")
    try:
        asyncio.run(bridge.serve_bridge(session, cfg.port))
    except KeyboardInterrupt:
        print(f"\nstopped; {session.records_saved} episodes saved")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    mode_name = cfg.mode or "herd"
    if mode_name not in EVAL_ROLLOUT_MODES:
        raise SystemExit(f"eval mode must be one of {sorted(EVAL_ROLLOUT_MODES)}, got {mode_name!r}")
    mode = EVAL_ROLLOUT_MODES[mode_name]
    ckpt = _require_file(cfg.rl_checkpoint, "Q checkpoint", "train one with train-rl")
    qnet = rl.load_qnetwork(ckpt)
    policy = None
    if mode in (rollout.RolloutMode.HERD, rollout.RolloutMode.ONLY_DIFFUSION):
        model_dir = _require_file(cfg.diffusion_dir, "diffusion model dir",
                                  "train one with train-diffusion")
        policy = diffusion.DiffusionPolicy.load(model_dir)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    reports = []
    seeds = [cfg.seed + i for i in range(cfg.episodes)]
    for s in seeds:
        env_cfg = _env_config(cfg, np.random.default_rng(s))
        replay: list = []
        rep = rollout.run_episode(env_cfg, qnet, policy, mode, seed=s, replay=replay)
        rollout.write_replay(out / f"replay_seed{s}.jsonl", replay)
        reports.append(rep)

    boxes = np.array([r.boxes_delivered for r in reports], dtype=np.float64)
    dist = np.array([r.distance_m for r in reports], dtype=np.float64)
    summary = {
        "env": cfg.env,
        "mode": mode_name,
        "episodes": cfg.episodes,
        "seeds": seeds,
        "boxes_mean": float(boxes.mean()),
        "boxes_std": float(boxes.std()),
        "distance_mean": float(dist.mean()),
        "distance_std": float(dist.std()),
        "per_episode": [r.to_dict() for r in reports],
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{cfg.env:>15s} {mode_name:>18s}  n={cfg.episodes:<3d} "
          f"boxes {summary['boxes_mean']:.2f} ± {summary['boxes_std']:.2f}   "
          f"distance {summary['distance_mean']:.1f} ± {summary['distance_std']:.1f} m")
    return 0


def _draw_frame(ax, record: dict, env_cfg: world.WorldConfig) -> None:
    from matplotlib import patches

    snap = record["state"]
    ax.set_xlim(0, env_cfg.width)
    ax.set_ylim(0, env_cfg.height)
    ax.set_aspect("equal")
    rx0, ry0, rx1, ry1 = snap["receptacle"]
    ax.add_patch(patches.Rectangle((rx0, ry0), rx1 - rx0, ry1 - ry0,
                                   facecolor="#b7e4c7", edgecolor="#2d6a4f"))
    for x0, y0, x1, y1 in snap["obstacles"]:
        ax.add_patch(patches.Rectangle((x0, y0), x1 - x0, y1 - y0, facecolor="#333333"))
    half = env_cfg.box_side / 2
    for bx, by in snap["boxes"]:
        ax.add_patch(patches.Rectangle((bx - half, by - half), 2 * half, 2 * half,
                                       facecolor="#c97b42", edgecolor="#7a4419"))
    path = record.get("path")
    if path:
        pts = np.asarray(path)
        style = "#1f77ff" if record.get("used_diffusion") else "#888888"
        ax.plot(pts[:, 0], pts[:, 1], "-", color=style, linewidth=1.2)
    goal = record.get("goal")
    if goal:
        ax.plot([goal[0]], [goal[1]], "x", color="#d00000", markersize=8)
    x, y, theta = snap["robot"]
    ax.add_patch(patches.Circle((x, y), env_cfg.robot_radius,
                                facecolor="#4361ee", edgecolor="#1d2d8a"))
    ax.plot([x, x + env_cfg.robot_radius * np.cos(theta)],
            [y, y + env_cfg.robot_radius * np.sin(theta)], "-", color="white")
    ax.set_title(f"high-level step {record['step']}")


def cmd_replay(cfg: RunConfig, replay_file: str) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    src = _require_file(replay_file, "replay file", "produced by eval")
    env_cfg = _env_config(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(src) as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            fig, ax = plt.subplots(figsize=(env_cfg.width, env_cfg.height), dpi=60)
            _draw_frame(ax, record, env_cfg)
            fig.savefig(out / f"frame_{record['step']:04d}.png", bbox_inches="tight")
            plt.close(fig)
            count += 1
    print(f"rendered {count} frames to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herdpush",
                                     description="hierarchical pushing stack")
    sub = parser.add_subparsers(dest="command", required=True)
    names = ["train-rl", "train-diffusion", "collect-demos", "synth-demos", "eval", "replay"]
    for name in names:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML settings file")
        p.add_argument("--env", default=None)
        p.add_argument("--mode", default=None)
        p.add_argument("--episodes", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--port", type=int, default=None)
        p.add_argument("--scale", type=float, default=None)
        p.add_argument("--rl-checkpoint", dest="rl_checkpoint", default=None)
        p.add_argument("--diffusion-dir", dest="diffusion_dir", default=None)
        p.add_argument("--demos-path", dest="demos_path", default=None)
        if name == "replay":
            p.add_argument("replay_file", help="episode JSONL written by eval")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    cfg = load_run_config(args.config, overrides)
    try:
        world.resolve_env(cfg.env, np.random.default_rng(0))
    except ValueError as e:
        raise SystemExit(str(e))
    handlers = {
        "train-rl": cmd_train_rl,
        "train-diffusion": cmd_train_diffusion,
        "collect-demos": cmd_collect_demos,
        "synth-demos": cmd_synth_demos,
        "eval": cmd_eval,
    }
    if args.command == "replay":
        return cmd_replay(cfg, args.replay_file)
    return handlers[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
