"""Goal-conditioned trajectory diffusion.

A 1D U-Net predicts the noise added to 32-point (x, y) trajectories; the
conditioning vector (low-dim observation + timestep embedding) enters every
block through FiLM.  Goal conditioning at inference is done by inpainting:
the first/last waypoints are overwritten with the robot/goal position on the
initial noise and after every denoising update.  All trajectories here live
in normalized [-1, 1] coordinates; callers own the meter conversion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import (
    AdamW,
    Conv1d,
    ConvTranspose1d,
    FiLM,
    GroupNorm,
    Linear,
    Module,
    SiLU,
    SinusoidalEmbedding,
    assign_params,
    load_params,
    mse,
    save_params,
    zero_grads,
)
from .observation import LOWDIM_SIZE, NormStats

TRAJ_LEN = 32
POINT_DIM = 2
N_TRAIN_STEPS = 100
# Training data is min/max-normalized into [-1, 1]. The squared-cosine
# schedule ends at alpha_bar ~ 0, so the DDIM clean-sample estimate divides
# by ~0 there and amplifies any eps error; clamping the estimate to a band
# around the data range keeps early steps in-distribution (endpoints are
# re-inpainted afterwards, so the hard constraint is unaffected).
X0_CLIP = 1.5


class SamplingDivergedError(RuntimeError):
    """The denoiser produced non-finite values during sampling."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-process coefficients; index 0 is clean data (alpha_bar[0] = 1).

    betas[i-1], alphas[i-1], sigmas[i-1] belong to diffusion step i in 1..N.
    sigmas is the DDPM posterior noise scale; sigma_1 = 0, so the last
    ancestral step is deterministic.
    """

    alpha_bar: np.ndarray
    betas: np.ndarray
    offset: float = 0.008

    def __post_init__(self):
        ab = self.alpha_bar
        if ab[0] != 1.0 or not np.all(np.diff(ab) < 0) or ab[-1] <= 0:
            raise ValueError("alpha_bar must start at 1, decrease strictly, stay positive")
        if not np.all(np.isfinite(ab)) or not np.all(np.isfinite(self.betas)):
            raise ValueError("schedule coefficients must be finite")

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def sigmas(self) -> np.ndarray:
        ab = self.alpha_bar
        var = (1.0 - ab[:-1]) / (1.0 - ab[1:]) * self.betas
        return np.sqrt(var)

    @classmethod
    def squared_cosine(cls, n_steps: int = N_TRAIN_STEPS, offset: float = 0.008) -> "NoiseSchedule":
        t = np.arange(n_steps + 1, dtype=np.float64) / n_steps
        f = np.cos((t + offset) / (1.0 + offset) * np.pi / 2.0) ** 2
        raw = f / f[0]
        betas = np.clip(1.0 - raw[1:] / raw[:-1], 1e-8, 0.999)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(alpha_bar=alpha_bar, betas=betas, offset=offset)

    def to_dict(self) -> dict:
        return {"n_steps": self.n_steps, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return cls.squared_cosine(d["n_steps"], d["offset"])


class ResBlock1d(Module):
    """conv -> GN -> FiLM(cond) -> SiLU -> conv -> GN -> SiLU, plus skip."""

    def __init__(self, c_in: int, c_out: int, cond_dim: int, rng, kernel: int = 5):
        pad = kernel // 2
        self.conv1 = Conv1d(c_in, c_out, kernel, pad=pad, rng=rng)
        self.gn1 = GroupNorm(8, c_out)
        self.cond_proj = Linear(cond_dim, 2 * c_out, rng)
        self.act1 = SiLU()
        self.conv2 = Conv1d(c_out, c_out, kernel, pad=pad, rng=rng)
        self.gn2 = GroupNorm(8, c_out)
        self.act2 = SiLU()
        self.skip = Conv1d(c_in, c_out, 1, rng=rng) if c_in != c_out else None
        self._film = FiLM()
        self.c_out = c_out

    def forward(self, x, cond):
        h = self.gn1.forward(self.conv1.forward(x))
        ss = self.cond_proj.forward(cond)
        scale, shift = ss[:, : self.c_out], ss[:, self.c_out :]
        h = self._film.forward(h, 1.0 + scale, shift)
        h = self.act1.forward(h)
        h = self.act2.forward(self.gn2.forward(self.conv2.forward(h)))
        return h + (x if self.skip is None else self.skip.forward(x))

    def backward(self, gy):
        g_skip = gy if self.skip is None else self.skip.backward(gy)
        g = self.conv2.backward(self.gn2.backward(self.act2.backward(gy)))
        g = self.act1.backward(g)
        g, gscale, gshift = self._film.backward(g)
        gcond = self.cond_proj.backward(np.concatenate([gscale, gshift], axis=1))
        gx = self.conv1.backward(self.gn1.backward(g))
        return gx + g_skip, gcond


class Denoiser(Module):
    """1D U-Net epsilon-predictor over (B, 32, 2) trajectories.

    Three resolution levels (64, 128, 256 channels); FiLM conditioning on
    every residual block from [timestep features | observation]."""

    TIME_DIM = 64
    TIME_FEATURES = 128

    def __init__(self, obs_dim: int = LOWDIM_SIZE, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.obs_dim = obs_dim
        cond = self.TIME_FEATURES + obs_dim
        self.time_embed = SinusoidalEmbedding(self.TIME_DIM)
        self.time_fc1 = Linear(self.TIME_DIM, self.TIME_FEATURES, rng)
        self.time_act = SiLU()
        self.time_fc2 = Linear(self.TIME_FEATURES, self.TIME_FEATURES, rng)

        self.in_block = ResBlock1d(POINT_DIM, 64, cond, rng)
        self.d1_block = ResBlock1d(64, 128, cond, rng)
        self.down1 = Conv1d(128, 128, 3, stride=2, pad=1, rng=rng)
        self.d2_block = ResBlock1d(128, 256, cond, rng)
        self.down2 = Conv1d(256, 256, 3, stride=2, pad=1, rng=rng)
        self.mid_block = ResBlock1d(256, 256, cond, rng)
        self.up2 = ConvTranspose1d(256, 256, 4, stride=2, pad=1, rng=rng)
        self.u2_block = ResBlock1d(256 + 256, 128, cond, rng)
        self.up1 = ConvTranspose1d(128, 128, 4, stride=2, pad=1, rng=rng)
        self.u1_block = ResBlock1d(128 + 128, 64, cond, rng)
        self.out_conv = Conv1d(64, POINT_DIM, 1, rng=rng)
        self._cache = None

    def _cond(self, obs, t):
        e = self.time_embed.forward(np.asarray(t, dtype=np.float64).astype(obs.dtype))
        e = self.time_fc2.forward(self.time_act.forward(self.time_fc1.forward(e)))
        return np.concatenate([e, obs], axis=1)

    def forward(self, traj, obs, t):
        """traj: (B, 32, 2); obs: (B, obs_dim); t: (B,) diffusion step."""
        x = np.ascontiguousarray(traj.transpose(0, 2, 1))
        cond = self._cond(obs, t)
        h0 = self.in_block.forward(x, cond)
        h1 = self.d1_block.forward(h0, cond)
        p1 = self.down1.forward(h1)
        h2 = self.d2_block.forward(p1, cond)
        p2 = self.down2.forward(h2)
        m = self.mid_block.forward(p2, cond)
        u2 = self.up2.forward(m)
        h3 = self.u2_block.forward(np.concatenate([u2, h2], axis=1), cond)
        u1 = self.up1.forward(h3)
        h4 = self.u1_block.forward(np.concatenate([u1, h1], axis=1), cond)
        out = self.out_conv.forward(h4)
        self._cache = (u1.shape[1], u2.shape[1])
        return out.transpose(0, 2, 1)

    def backward(self, gy):
        """Returns the trajectory gradient (B, 32, 2); parameter grads
        accumulate in place, including through both skip-concat uses of
        h1/h2 and the shared conditioning vector."""
        c_u1, c_u2 = self._cache
        g = np.ascontiguousarray(gy.transpose(0, 2, 1))
        g = self.out_conv.backward(g)
        g, gcond = self.u1_block.backward(g)
        g_u1, g_h1_skip = g[:, :c_u1], g[:, c_u1:]
        g, gc = self.u2_block.backward(self.up1.backward(g_u1))
        gcond = gcond + gc
        g_u2, g_h2_skip = g[:, :c_u2], g[:, c_u2:]
        g, gc = self.mid_block.backward(self.up2.backward(g_u2))
        gcond = gcond + gc
        g, gc = self.d2_block.backward(self.down2.backward(g) + g_h2_skip)
        gcond = gcond + gc
        g, gc = self.d1_block.backward(self.down1.backward(g) + g_h1_skip)
        gcond = gcond + gc
        g, gc = self.in_block.backward(g)
        gcond = gcond + gc
        g_time = self.time_fc1.backward(
            self.time_act.backward(self.time_fc2.backward(gcond[:, : self.TIME_FEATURES]))
        )
        self.time_embed.backward(g_time)
        return g.transpose(0, 2, 1)

    def copy_from(self, other: "Denoiser") -> None:
        for (_, dst), (_, src) in zip(self.params(), other.params()):
            dst.data[...] = src.data


def noise_trajectories(traj, schedule: NoiseSchedule, steps, eps):
    """Forward process: sqrt(ab_i)·tau0 + sqrt(1-ab_i)·eps, steps in 1..N."""
    ab = schedule.alpha_bar[steps].astype(traj.dtype)[:, None, None]
    return np.sqrt(ab) * traj + np.sqrt(1.0 - ab) * eps


def reconstruct_clean(noised, schedule: NoiseSchedule, steps, eps):
    """Invert the forward process given the true noise (model-free)."""
    ab = schedule.alpha_bar[steps].astype(noised.dtype)[:, None, None]
    return (noised - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def train_step(model: Denoiser, obs, traj, schedule: NoiseSchedule,
               rng: np.random.Generator, optimizer: AdamW | None = None) -> float:
    """One denoising-loss step on a normalized (obs, trajectory) batch.

    With optimizer=None only the loss is computed (validation)."""
    B = traj.shape[0]
    steps = rng.integers(1, schedule.n_steps + 1, size=B)
    eps = rng.standard_normal(traj.shape).astype(traj.dtype)
    noised = noise_trajectories(traj, schedule, steps, eps)
    pred = model.forward(noised, obs, steps)
    loss, gpred = mse(pred, eps)
    if optimizer is not None:
        zero_grads(model.params())
        model.backward(gpred)
        optimizer.step()
    return loss


def inpaint(traj, robot, goal):
    """Overwrite endpoints: traj[...,0,:] := robot, traj[...,-1,:] := goal.

    Works on (32, 2) or (B, 32, 2); robot/goal broadcast accordingly."""
    out = traj.copy()
    out[..., 0, :] = robot
    out[..., -1, :] = goal
    return out


def _check_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise SamplingDivergedError("denoiser produced non-finite values")


def _ddim_indices(n_steps: int, steps: int) -> np.ndarray:
    """steps+1 evenly spaced schedule indices from n_steps down to 0."""
    return np.unique(np.round(np.linspace(0, n_steps, steps + 1)).astype(np.int64))[::-1]


def sample_ddim_batch(model: Denoiser, obs, robot, goal, schedule: NoiseSchedule,
                      rng: np.random.Generator, steps: int = 15):
    """Deterministic (eta=0) DDIM sampling with endpoint inpainting.

    obs: (B, obs_dim); robot/goal: (B, 2) normalized. Returns (B, 32, 2)."""
    B = obs.shape[0]
    robot = np.asarray(robot, dtype=np.float32)
    goal = np.asarray(goal, dtype=np.float32)
    x = rng.standard_normal((B, TRAJ_LEN, POINT_DIM)).astype(np.float32)
    x = inpaint(x, robot, goal)
    idx = _ddim_indices(schedule.n_steps, steps)
    ab = schedule.alpha_bar
    for i, j in zip(idx[:-1], idx[1:]):
        eps_hat = model.forward(x, obs, np.full(B, i, dtype=np.int64))
        _check_finite(eps_hat)
        x0 = (x - float(np.sqrt(1.0 - ab[i])) * eps_hat) / float(np.sqrt(ab[i]))
        np.clip(x0, -X0_CLIP, X0_CLIP, out=x0)
        x = float(np.sqrt(ab[j])) * x0 + float(np.sqrt(1.0 - ab[j])) * eps_hat
        x = inpaint(x, robot, goal)
    return x


def sample_ddim(model: Denoiser, obs, robot, goal, schedule: NoiseSchedule,
                rng: np.random.Generator, steps: int = 15):
    """Single-trajectory wrapper -> (32, 2) normalized."""
    return sample_ddim_batch(model, obs[None], np.asarray(robot)[None],
                             np.asarray(goal)[None], schedule, rng, steps)[0]


def sample_ddpm(model: Denoiser, obs, robot, goal, schedule: NoiseSchedule,
                rng: np.random.Generator):
    """Stochastic ancestral sampler over all schedule steps -> (32, 2)."""
    obs_b = obs[None]
    robot = np.asarray(robot, dtype=np.float32)
    goal = np.asarray(goal, dtype=np.float32)
    x = rng.standard_normal((1, TRAJ_LEN, POINT_DIM)).astype(np.float32)
    x = inpaint(x, robot, goal)
    ab = schedule.alpha_bar
    sigmas = schedule.sigmas
    alphas = schedule.alphas
    betas = schedule.betas
    for i in range(schedule.n_steps, 0, -1):
        eps_hat = model.forward(x, obs_b, np.array([i], dtype=np.int64))
        _check_finite(eps_hat)
        mean = (x - float(betas[i - 1] / np.sqrt(1.0 - ab[i])) * eps_hat) / float(
            np.sqrt(alphas[i - 1])
        )
        noise = rng.standard_normal(x.shape).astype(x.dtype) if i > 1 else 0.0
        x = mean + float(sigmas[i - 1]) * noise
        x = inpaint(x, robot, goal)
    return x[0]


@dataclass
class TrainResult:
    checkpoint: Path
    best_val_loss: float
    train_losses: list
    val_losses: list  # (epoch, loss) pairs


def train_diffusion(obs, traj, out_dir, epochs: int = 200, batch_size: int = 256,
                    schedule: NoiseSchedule | None = None, seed: int = 0,
                    lr: float = 1e-4, val_fraction: float = 0.02,
                    val_every: int = 10, metadata: dict | None = None,
                    log_hook=None) -> TrainResult:
    """Train an epsilon-predictor on normalized (obs, trajectory) pairs.

    Keeps the parameter set with the lowest validation loss (2% held-out
    split, validated every `val_every` epochs) and writes it to
    denoiser.herd plus a sidecar JSON with the schedule settings."""
    obs = np.asarray(obs, dtype=np.float32)
    traj = np.asarray(traj, dtype=np.float32)
    if obs.ndim != 2 or traj.shape != (obs.shape[0], TRAJ_LEN, POINT_DIM):
        raise ValueError(f"bad dataset shapes {obs.shape}, {traj.shape}")
    n = obs.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples to hold out validation")
    schedule = schedule or NoiseSchedule.squared_cosine()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    model = Denoiser(obs_dim=obs.shape[1], rng=rng)
    optimizer = AdamW(model.params(), lr=lr)

    def val_loss() -> float:
        # fixed generator so epochs are compared on identical (i, eps) draws
        vrng = np.random.default_rng(seed + 1)
        return train_step(model, obs[val_idx], traj[val_idx], schedule, vrng, None)

    best = (np.inf, None)
    train_losses: list[float] = []
    val_losses: list[tuple[int, float]] = []
    for epoch in range(epochs):
        order = rng.permutation(train_idx)
        for lo in range(0, len(order), batch_size):
            sel = order[lo : lo + batch_size]
            loss = train_step(model, obs[sel], traj[sel], schedule, rng, optimizer)
            train_losses.append(loss)
        if (epoch + 1) % val_every == 0 or epoch == epochs - 1:
            vl = val_loss()
            val_losses.append((epoch, vl))
            if vl < best[0]:
                best = (vl, [(name, p.data.copy()) for name, p in model.params()])
            if log_hook is not None:
                log_hook(epoch, train_losses[-1], vl)
    if best[1] is not None:
        for (_, p), (_, data) in zip(model.params(), best[1]):
            p.data[...] = data
    ckpt = out_dir / "denoiser.herd"
    save_params(ckpt, model.params())
    sidecar = {"schedule": schedule.to_dict(), "obs_dim": int(obs.shape[1])}
    sidecar.update(metadata or {})
    (out_dir / "denoiser.json").write_text(json.dumps(sidecar, indent=2))
    return TrainResult(ckpt, best[0], train_losses, val_losses)


@dataclass
class DiffusionPolicy:
    """Bundle of everything needed to sample trajectories in meters.

    plan_calls counts sampler invocations so callers can assert that
    SPFA-only rollout modes never touch the diffusion model."""

    model: Denoiser
    schedule: NoiseSchedule
    obs_stats: NormStats
    traj_stats: NormStats
    plan_calls: int = 0

    def plan(self, lowdim_obs, robot_xy, goal_xy, rng: np.random.Generator,
             steps: int = 15) -> np.ndarray:
        """Sample one trajectory; inputs and output in meters."""
        self.plan_calls += 1
        obs_n = self.obs_stats.normalize(np.asarray(lowdim_obs, dtype=np.float64))
        robot_n = self.traj_stats.normalize(np.asarray(robot_xy, dtype=np.float64))
        goal_n = self.traj_stats.normalize(np.asarray(goal_xy, dtype=np.float64))
        traj_n = sample_ddim(self.model, obs_n.astype(np.float32),
                             robot_n, goal_n, self.schedule, rng, steps)
        return self.traj_stats.denormalize(traj_n.astype(np.float64))

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_params(out_dir / "denoiser.herd", self.model.params())
        sidecar = {
            "schedule": self.schedule.to_dict(),
            "obs_dim": int(self.obs_stats.lo.size),
            "obs_stats": {"min": self.obs_stats.lo.tolist(), "max": self.obs_stats.hi.tolist()},
            "traj_stats": {"min": self.traj_stats.lo.tolist(), "max": self.traj_stats.hi.tolist()},
        }
        (out_dir / "denoiser.json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, out_dir) -> "DiffusionPolicy":
        out_dir = Path(out_dir)
        meta = json.loads((out_dir / "denoiser.json").read_text())
        model = Denoiser(obs_dim=meta["obs_dim"], rng=np.random.default_rng(0))
        assign_params(model.params(), load_params(out_dir / "denoiser.herd"))
        obs_stats = NormStats(np.array(meta["obs_stats"]["min"]), np.array(meta["obs_stats"]["max"]))
        traj_stats = NormStats(np.array(meta["traj_stats"]["min"]), np.array(meta["traj_stats"]["max"]))
        return cls(model, NoiseSchedule.from_dict(meta["schedule"]), obs_stats, traj_stats)
