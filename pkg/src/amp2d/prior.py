"""The adversarial motion prior.

A scalar-output MLP scores observation-pair transitions: least-squares
regression to +1 on dataset transitions and -1 on policy transitions, with a
squared input-gradient penalty evaluated on the dataset samples only. The
policy's style reward maps the score into [0, 1]. Fake transitions come from a
FIFO replay buffer of recent policy rollouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import Mlp, sgd_momentum_step


def style_reward(d):
    """r = max(0, 1 - 0.25 (d - 1)^2), bounded in [0, 1], maximal at d = 1."""
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("discriminator score must be finite")
    r = np.maximum(0.0, 1.0 - 0.25 * (d - 1.0) ** 2)
    return float(r) if r.ndim == 0 else r


def lsgan_loss(d_real, d_fake) -> float:
    """mean (D_real - 1)^2 + mean (D_fake + 1)^2."""
    d_real = np.asarray(d_real, dtype=float)
    d_fake = np.asarray(d_fake, dtype=float)
    if d_real.size == 0 or d_fake.size == 0:
        raise ValueError("empty batch")
    return float(np.mean((d_real - 1.0) ** 2) + np.mean((d_fake + 1.0) ** 2))


def gradient_penalty(disc: Mlp, real_inputs: np.ndarray):
    """mean_b ||d D / d input||^2 over a real batch, with parameter grads.

    The training objective applies this with coefficient w_gp / 2.
    """
    return disc.grad_norm_param_grads(real_inputs)


@dataclass(frozen=True)
class DiscConfig:
    w_gp: float = 10.0          # gradient-penalty weight
    batch_size: int = 256       # K transitions per side per step
    stepsize: float = 1e-5
    momentum: float = 0.9
    updates: int = 16           # update steps per training iteration

    def __post_init__(self):
        if self.w_gp < 0.0 or self.batch_size <= 0:
            raise ValueError("need w_gp >= 0 and batch_size > 0")


class ReplayBuffer:
    """Ring buffer of (obs, obs') transition pairs with FIFO eviction."""

    def __init__(self, capacity: int, dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.a = np.zeros((capacity, dim))
        self.b = np.zeros((capacity, dim))
        self.size = 0
        self.pos = 0

    def push(self, obs_a: np.ndarray, obs_b: np.ndarray) -> None:
        """Append transition pairs (rows), evicting the oldest past capacity."""
        obs_a = np.atleast_2d(obs_a)
        obs_b = np.atleast_2d(obs_b)
        for i in range(obs_a.shape[0]):
            self.a[self.pos] = obs_a[i]
            self.b[self.pos] = obs_b[i]
            self.pos = (self.pos + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def sample(self, count: int, rng: np.random.Generator):
        """Uniform with replacement over current contents."""
        if self.size == 0:
            raise RuntimeError("replay buffer is empty; collect rollouts first")
        idx = rng.integers(self.size, size=count)
        return self.a[idx].copy(), self.b[idx].copy()

    def state_arrays(self) -> dict:
        return {"replay/a": self.a[: self.size], "replay/b": self.b[: self.size],
                "replay/pos": np.array([self.pos, self.size, self.capacity])}

    @classmethod
    def from_state_arrays(cls, data: dict) -> "ReplayBuffer":
        pos, size, capacity = (int(v) for v in data["replay/pos"])
        buf = cls(capacity, int(data["replay/a"].shape[1]))
        buf.a[:size] = data["replay/a"]
        buf.b[:size] = data["replay/b"]
        buf.pos, buf.size = pos, size
        return buf


def update_discriminator(disc: Mlp, dataset, replay: ReplayBuffer,
                         cfg: DiscConfig, rng: np.random.Generator,
                         normalizer=None) -> dict:
    """Run cfg.updates optimizer steps of the penalized least-squares objective.

    Each step draws K real transitions from the dataset and K fake ones from
    the replay buffer. `dataset` is a MotionDataset or any callable
    (K, rng) -> (obs_a, obs_b); `normalizer` maps raw observation rows into
    discriminator coordinates (identity when None).

    Returns diagnostics averaged over the steps: mean D(real), mean D(fake),
    the unweighted penalty, and the Eq-form scalar loss.
    """
    if replay.size == 0:
        raise RuntimeError("replay buffer is empty; collect rollouts first")
    sample_real = dataset if callable(dataset) else dataset.sample_transitions
    norm = normalizer if normalizer is not None else (lambda x: x)
    K = cfg.batch_size
    stats = np.zeros(4)
    for _ in range(cfg.updates):
        ra, rb = sample_real(K, rng)
        fa, fb = replay.sample(K, rng)
        xr = np.concatenate((norm(ra), norm(rb)), axis=1)
        xf = np.concatenate((norm(fa), norm(fb)), axis=1)
        dr, cache_r = disc.forward(xr)
        df, cache_f = disc.forward(xf)
        dr = dr[:, 0]
        df = df[:, 0]
        gw_r, gb_r, _ = disc.backward(cache_r, (2.0 / K) * (dr - 1.0)[:, None])
        gw_f, gb_f, _ = disc.backward(cache_f, (2.0 / K) * (df + 1.0)[:, None])
        penalty, gw_p, gb_p = gradient_penalty(disc, xr)
        half_wgp = 0.5 * cfg.w_gp
        gws = [gw_r[i] + gw_f[i] + half_wgp * gw_p[i] for i in range(disc.n_layers)]
        gbs = [gb_r[i] + gb_f[i] + half_wgp * gb_p[i] for i in range(disc.n_layers)]
        sgd_momentum_step(disc, gws, gbs, cfg.stepsize, cfg.momentum)
        stats += (dr.mean(), df.mean(), penalty, lsgan_loss(dr, df))
    stats /= cfg.updates
    return {"mean_d_real": float(stats[0]), "mean_d_fake": float(stats[1]),
            "penalty": float(stats[2]), "disc_loss": float(stats[3])}


def disc_real_input_grad_norm(disc: Mlp, dataset, count: int,
                              rng: np.random.Generator, normalizer=None) -> float:
    """Diagnostic: mean ||grad_input D||^2 on freshly sampled real transitions."""
    sample_real = dataset if callable(dataset) else dataset.sample_transitions
    norm = normalizer if normalizer is not None else (lambda x: x)
    ra, rb = sample_real(count, rng)
    x = np.concatenate((norm(ra), norm(rb)), axis=1)
    g = disc.input_gradient(x)
    return float(np.mean(np.sum(g * g, axis=1)))
