"""High-level pushing policy: double DQN over spatial action maps.

The action space is every pixel of the robot-centric observation; the
Q-network scores each pixel as a candidate navigation goal.  One training
step = one high-level action (goal selection + execution), matching the
annealing/warmup/buffer budgets, which all count high-level transitions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import observation, world
from .nn import (
    SGD,
    Conv2d,
    ConvTranspose2d,
    GroupNorm,
    Module,
    ReLU,
    clip_gradients,
    save_params,
    smooth_l1,
    zero_grads,
)


@dataclass(frozen=True)
class RewardConfig:
    """Per-step reward: delivery bonus + shaped box progress − penalties.

    progress_mode "max_box" credits only the box with the largest absolute
    distance change (ties -> lowest index); "cumulative" sums all of them.
    The motion term charges (alpha/beta) per meter of robot travel.
    """

    alpha: float = 0.2
    beta: float = 8.0
    progress_mode: str = "max_box"  # or "cumulative"
    motion_penalty: bool = True
    goal_reward: float = 1.0
    penalty: float = 0.25

    def __post_init__(self):
        if self.progress_mode not in ("max_box", "cumulative"):
            raise ValueError(f"unknown progress_mode {self.progress_mode!r}")


def compute_reward(outcome, cfg: RewardConfig = RewardConfig()) -> float:
    """Scalar reward for one high-level step outcome.

    `outcome` needs fields delivered_this_step, box_progress, collision,
    moved, robot_displacement (world.StepOutcome or any aggregate with the
    same fields).
    """
    r = cfg.goal_reward * float(outcome.delivered_this_step)
    deltas = np.asarray(outcome.box_progress, dtype=np.float64)
    if deltas.size:
        if cfg.progress_mode == "max_box":
            r += cfg.alpha * float(deltas[int(np.argmax(np.abs(deltas)))])
        else:
            r += cfg.alpha * float(deltas.sum())
    if outcome.collision or not outcome.moved:
        r -= cfg.penalty
    if cfg.motion_penalty:
        r -= (cfg.alpha / cfg.beta) * float(outcome.robot_displacement)
    return r


class QNetwork(Module):
    """Strided-conv encoder / transposed-conv decoder mapping the 4-channel
    observation to one Q-value per pixel (dense spatial action map).

    Each encoder stage's output is concatenated into the matching decoder
    stage: boxes are only ~2-3 px wide at 0.1 m/px, and without the skips
    their evidence cannot survive the 16x bottleneck sharply enough to place
    the Q peak on a specific push cell.  Normalization keeps the stages from
    dying into a constant map: with a near-uniform TD target sea, weight
    decay otherwise erodes the features faster than the sparse contact
    rewards can rebuild them.
    """

    def __init__(self, in_channels: int = 4, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        widths = (16, 32, 64, 64)
        self.enc = []
        c = in_channels
        for w in widths:
            self.enc.append(Conv2d(c, w, 3, stride=2, pad=1, rng=rng))
            c = w
        self.enc_norm = [GroupNorm(8, w) for w in widths]
        self.enc_act = [ReLU() for _ in widths]
        self.dec = [
            ConvTranspose2d(64, 64, 4, stride=2, pad=1, rng=rng),
            ConvTranspose2d(64 + 64, 32, 4, stride=2, pad=1, rng=rng),
            ConvTranspose2d(32 + 32, 16, 4, stride=2, pad=1, rng=rng),
            ConvTranspose2d(16 + 16, 1, 4, stride=2, pad=1, rng=rng),
        ]
        self.dec_norm = [GroupNorm(8, w) for w in (64, 32, 16)]
        self.dec_act = [ReLU() for _ in range(len(self.dec) - 1)]

    def _dec_stage(self, i: int, h: np.ndarray) -> np.ndarray:
        return self.dec_act[i].forward(self.dec_norm[i].forward(self.dec[i].forward(h)))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(B, C, H, W) float32 -> (B, H, W) Q map."""
        h = x
        enc_out = []
        for conv, norm, act in zip(self.enc, self.enc_norm, self.enc_act):
            h = act.forward(norm.forward(conv.forward(h)))
            enc_out.append(h)
        e1, e2, e3, e4 = enc_out
        h = self._dec_stage(0, e4)
        h = self._dec_stage(1, np.concatenate([h, e3], axis=1))
        h = self._dec_stage(2, np.concatenate([h, e2], axis=1))
        h = self.dec[3].forward(np.concatenate([h, e1], axis=1))
        return h[:, 0]

    def _dec_stage_back(self, i: int, g: np.ndarray) -> np.ndarray:
        return self.dec[i].backward(self.dec_norm[i].backward(self.dec_act[i].backward(g)))

    def backward(self, gy: np.ndarray) -> np.ndarray:
        g = self.dec[3].backward(gy[:, None])
        g, ge1 = g[:, :16], g[:, 16:]
        g = self._dec_stage_back(2, g)
        g, ge2 = g[:, :32], g[:, 32:]
        g = self._dec_stage_back(1, g)
        g, ge3 = g[:, :64], g[:, 64:]
        g = self._dec_stage_back(0, g)  # gradient w.r.t. e4
        # skip_grads[i] is the decoder's gradient contribution to e_i, the
        # input of encoder stage i (stage 0 consumes x, which has no tap).
        skip_grads = (None, ge1, ge2, ge3)
        for i in range(3, -1, -1):
            g = self.enc[i].backward(self.enc_norm[i].backward(self.enc_act[i].backward(g)))
            if i >= 1:
                g = g + skip_grads[i]
        return g

    def copy_from(self, other: "QNetwork") -> None:
        for (_, dst), (_, src) in zip(self.params(), other.params()):
            dst.data[...] = src.data


def quantize_image(image: np.ndarray) -> np.ndarray:
    """float32 [0,1] observation -> uint8 for replay storage."""
    return np.round(image * 255.0).astype(np.uint8)


def dequantize_image(stored: np.ndarray) -> np.ndarray:
    return stored.astype(np.float32) / 255.0


@dataclass
class TransitionBatch:
    states: np.ndarray  # (B, H, W, C) float32
    actions: np.ndarray  # (B,) flat pixel indices
    rewards: np.ndarray  # (B,) float32
    next_states: np.ndarray  # (B, H, W, C) float32
    terminals: np.ndarray  # (B,) bool
    step_distances: np.ndarray  # (B,) float32, robot meters for the discount


class ReplayBuffer:
    """Fixed-capacity ring buffer; images are stored uint8-quantized."""

    def __init__(self, capacity: int = 10_000, size: int = observation.MAP_SIZE, channels: int = 4):
        self.capacity = capacity
        self._states = np.zeros((capacity, size, size, channels), dtype=np.uint8)
        self._next_states = np.zeros_like(self._states)
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float32)
        self._terminals = np.zeros(capacity, dtype=bool)
        self._step_distances = np.zeros(capacity, dtype=np.float32)
        self._count = 0
        self._cursor = 0

    def __len__(self) -> int:
        return self._count

    def ready(self, batch_size: int) -> bool:
        return self._count >= batch_size

    def add(self, state, action: int, reward: float, next_state, terminal: bool, step_distance: float) -> None:
        i = self._cursor
        self._states[i] = quantize_image(state)
        self._next_states[i] = quantize_image(next_state)
        self._actions[i] = action
        self._rewards[i] = reward
        self._terminals[i] = terminal
        self._step_distances[i] = step_distance
        self._cursor = (i + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if not self.ready(batch_size):
            raise ValueError(f"buffer has {self._count} transitions, need {batch_size}")
        idx = rng.integers(0, self._count, size=batch_size)
        return TransitionBatch(
            states=dequantize_image(self._states[idx]),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=dequantize_image(self._next_states[idx]),
            terminals=self._terminals[idx].copy(),
            step_distances=self._step_distances[idx].copy(),
        )


EPSILON_START = 1.0
EPSILON_END = 0.01
EPSILON_ANNEAL_STEPS = 6_000


def epsilon_at(step: int, start: float = EPSILON_START, end: float = EPSILON_END,
               anneal_steps: int = EPSILON_ANNEAL_STEPS) -> float:
    if step >= anneal_steps:
        return end
    frac = step / anneal_steps
    return start + (end - start) * frac


def _to_chw(images: np.ndarray) -> np.ndarray:
    if images.ndim == 3:
        images = images[None]
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2))


def q_map(net: QNetwork, image: np.ndarray) -> np.ndarray:
    """Q values for one (H, W, C) observation -> (H, W)."""
    return net.forward(_to_chw(image.astype(np.float32)))[0]


def masked_argmax(qmap: np.ndarray, mask: np.ndarray) -> int:
    """Flat index of the best unmasked cell, row-major first on ties."""
    flat = np.where(mask.ravel(), -np.inf, qmap.ravel().astype(np.float64))
    if not np.isfinite(flat).any():
        raise ValueError("every action cell is masked")
    return int(np.argmax(flat))

def ranked_actions(qmap: np.ndarray, mask: np.ndarray, k: int) -> list[int]:
    """Top-k unmasked flat indices by descending Q, ties row-major."""
    flat = np.where(mask.ravel(), -np.inf, qmap.ravel().astype(np.float64))
    order = np.argsort(-flat, kind="stable")
    order = order[np.isfinite(flat[order])]
    return [int(i) for i in order[:k]]


def select_action(net: QNetwork, image: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> tuple[int, int]:
    """ε-greedy pixel choice over the obstacle-masked action map -> (row, col)."""
    mask = observation.obstacle_mask(image)
    size = image.shape[0]
    if rng.random() < epsilon:
        valid = np.flatnonzero(~mask.ravel())
        if valid.size == 0:
            raise ValueError("every action cell is masked")
        flat = int(valid[rng.integers(valid.size)])
    else:
        flat = masked_argmax(q_map(net, image), mask)
    return flat // size, flat % size


@dataclass
class TDInfo:
    """Internals of the double-DQN target, exposed for instrumentation."""

    next_actions: np.ndarray  # (B,) flat argmax under the online net
    next_values: np.ndarray  # (B,) those cells evaluated by the target net
    discounts: np.ndarray  # (B,)


def compute_td_targets(online: QNetwork, target: QNetwork, batch: TransitionBatch,
                       gamma_base: float = 0.99) -> tuple[np.ndarray, TDInfo]:
    """r + γ·Q_target(s', argmax_a' Q_online(s', a')), zero bootstrap at terminal.

    γ scales with the robot distance of the step: gamma_base^(0.25·d)."""
    next_chw = _to_chw(batch.next_states)
    q_online = online.forward(next_chw)
    q_target = target.forward(next_chw)
    B, H, W = q_online.shape
    mask = observation.obstacle_mask(batch.next_states).reshape(B, H * W)
    flat_online = np.where(mask, -np.inf, q_online.reshape(B, H * W).astype(np.float64))
    next_actions = np.argmax(flat_online, axis=1)
    next_values = q_target.reshape(B, H * W)[np.arange(B), next_actions]
    discounts = gamma_base ** (0.25 * batch.step_distances.astype(np.float64))
    targets = batch.rewards + discounts * next_values * (~batch.terminals)
    info = TDInfo(next_actions=next_actions, next_values=next_values, discounts=discounts)
    return targets.astype(np.float32), info


def td_train_step(online: QNetwork, target: QNetwork, batch: TransitionBatch,
                  optimizer: SGD, gamma_base: float = 0.99,
                  grad_clip: float = 10.0) -> tuple[float, float]:
    """One DDQN update on a sampled batch -> (loss, pre-clip gradient norm)."""
    targets, _ = compute_td_targets(online, target, batch, gamma_base)
    chw = _to_chw(batch.states)
    q = online.forward(chw)
    B, H, W = q.shape
    pred = q.reshape(B, H * W)[np.arange(B), batch.actions]
    loss, dpred = smooth_l1(pred, targets)
    gmap = np.zeros((B, H * W), dtype=np.float32)
    gmap[np.arange(B), batch.actions] = dpred
    params = online.params()
    zero_grads(params)
    online.backward(gmap.reshape(B, H, W))
    norm = clip_gradients(params, grad_clip)
    optimizer.step()
    return loss, norm


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 15_000
    warmup_steps: int = 1_000
    batch_size: int = 32
    buffer_capacity: int = 10_000
    target_period: int = 1_000
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    grad_clip: float = 10.0
    gamma_base: float = 0.99
    map_size: int = observation.MAP_SIZE


def _draw_config(env_mix: Sequence, rng: np.random.Generator) -> world.WorldConfig:
    pick = env_mix[int(rng.integers(len(env_mix)))]
    if isinstance(pick, world.WorldConfig):
        return pick
    return world.resolve_env(str(pick), rng)


def train(env_mix: Sequence, out_dir, reward_cfg: RewardConfig = RewardConfig(),
          cfg: TrainConfig = TrainConfig(), seed: int = 0,
          log_hook=None) -> Path:
    """Full DDQN training loop; writes metrics.csv and q_online.herd to out_dir.

    env_mix entries are env names or WorldConfig objects; the episode's
    world is drawn from the mix.  Returns the checkpoint path.
    """
    from . import rollout  # deferred: rollout imports this module

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    online = QNetwork(rng=rng)
    target = QNetwork(rng=np.random.default_rng(0))
    target.copy_from(online)
    optimizer = SGD(online.params(), lr=cfg.lr, momentum=cfg.momentum,
                    weight_decay=cfg.weight_decay)
    buffer = ReplayBuffer(cfg.buffer_capacity, cfg.map_size)

    metrics_path = out_dir / "metrics.csv"
    ckpt_path = out_dir / "q_online.herd"
    step = 0
    episode = 0
    loss = 0.0
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "episode", "loss", "epsilon",
                         "boxes_delivered", "episode_distance_m"])
        while step < cfg.total_steps:
            config = _draw_config(env_mix, rng)
            state = world.reset(config, seed=int(rng.integers(2**63 - 1)))
            builder = observation.ObservationBuilder(state, cfg.map_size)
            image = builder.render(state)
            idle_steps = 0
            ep_distance = 0.0
            while step < cfg.total_steps:
                eps = epsilon_at(step)
                if step < cfg.warmup_steps:
                    mask = observation.obstacle_mask(image)
                    valid = np.flatnonzero(~mask.ravel())
                    flat = int(valid[rng.integers(valid.size)])
                    action = (flat // cfg.map_size, flat % cfg.map_size)
                else:
                    action = select_action(online, image, eps, rng)
                goal = observation.pixel_to_world(
                    state.robot_xy, state.robot_theta, *action, cfg.map_size
                )
                result = rollout.execute_goal(state, goal, builder)
                reward = compute_reward(result, reward_cfg)
                next_state = result.next_state
                next_image = builder.render(next_state)
                delivered_all = next_state.boxes_delivered == config.n_boxes
                idle_steps = 0 if result.delivered_this_step else idle_steps + 1
                done = delivered_all or world.is_terminal(next_state, idle_steps)
                flat_action = action[0] * cfg.map_size + action[1]
                buffer.add(image, flat_action, reward, next_image,
                           delivered_all, result.robot_displacement)
                if step >= cfg.warmup_steps and buffer.ready(cfg.batch_size):
                    loss, _ = td_train_step(online, target, buffer.sample(cfg.batch_size, rng),
                                            optimizer, cfg.gamma_base, cfg.grad_clip)
                step += 1
                ep_distance += result.robot_displacement
                writer.writerow([step, episode, f"{loss:.6f}", f"{eps:.6f}",
                                 next_state.boxes_delivered, f"{ep_distance:.4f}"])
                if step % cfg.target_period == 0:
                    target.copy_from(online)
                if log_hook is not None:
                    log_hook(step, episode, loss, eps)
                state = next_state
                image = next_image
                if done:
                    break
            episode += 1
    save_params(ckpt_path, online.params())
    return ckpt_path


def load_qnetwork(path) -> QNetwork:
    from .nn import assign_params, load_params

    net = QNetwork(rng=np.random.default_rng(0))
    assign_params(net.params(), load_params(path))
    return net
