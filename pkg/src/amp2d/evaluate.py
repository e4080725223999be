"""Quantitative evaluation: root-relative pose error, DTW alignment, and
normalized task returns over seeded episode batches."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .character import CharacterModel
from .motion import MotionClip, load_clip
from .nets import GaussianPolicy
from .rl import TERM_TIMEOUT, Trainer, phase_rng
from .sim import SimState, SimulationDiverged

_PH_EVAL = 53


def pose_error(frame_a: np.ndarray, frame_b: np.ndarray) -> float:
    """Mean distance between root-relative point positions.

    Frames are (1 + N, 2) arrays: row 0 is the root, the rest are tracked
    points (joint pivots and end effectors). Invariant to translating either
    frame as a whole.
    """
    a = np.asarray(frame_a, dtype=float)
    b = np.asarray(frame_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] < 2:
        raise ValueError(f"frames must share shape (1+N, 2), got {a.shape} vs {b.shape}")
    rel = (a[1:] - a[0]) - (b[1:] - b[0])
    return float(np.mean(np.linalg.norm(rel, axis=1)))


def _cost_matrix(seq_a: np.ndarray, seq_b: np.ndarray) -> np.ndarray:
    ra = seq_a[:, 1:] - seq_a[:, :1]
    rb = seq_b[:, 1:] - seq_b[:, :1]
    diff = ra[:, None] - rb[None, :]
    return np.linalg.norm(diff, axis=3).mean(axis=2)


def dtw_align(seq_a, seq_b) -> tuple[list[tuple[int, int]], float]:
    """Monotone alignment with steps {(1,0),(0,1),(1,1)}, endpoints pinned.

    Minimizes the accumulated pose error over the path; the reported error is
    the path mean (accumulated cost / path length).
    """
    seq_a = np.asarray(seq_a, dtype=float)
    seq_b = np.asarray(seq_b, dtype=float)
    if seq_a.size == 0 or seq_b.size == 0:
        raise ValueError("sequences must be non-empty")
    C = _cost_matrix(seq_a, seq_b)
    n, m = C.shape
    D = np.full((n, m), np.inf)
    D[0, 0] = C[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = D[i - 1, j - 1]
            if i > 0:
                best = min(best, D[i - 1, j])
            if j > 0:
                best = min(best, D[i, j - 1])
            D[i, j] = C[i, j] + best
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i - 1, j - 1] <= min(D[i - 1, j], D[i, j - 1]):
            i, j = i - 1, j - 1
        elif i > 0 and (j == 0 or D[i - 1, j] <= D[i, j - 1]):
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    path.reverse()
    return path, float(D[n - 1, m - 1] / len(path))


def normalized_task_return(task_rewards, horizon_steps: int) -> float:
    """Episode task-reward sum scaled by the maximum possible steps: 0 is the
    minimum possible return, 1 the maximum; early termination costs return."""
    total = float(np.sum(task_rewards))
    return total / horizon_steps


def joint_position_frame(model: CharacterModel, q) -> np.ndarray:
    """(1 + N, 2): root position, joint pivots, end effectors."""
    pts = [np.asarray(q[0:2], dtype=float)]
    pivots = model.joint_pivot_positions(q)
    ees = model.end_effector_positions(q)
    return np.concatenate((np.asarray(pts), pivots, ees), axis=0)


def clip_pose_sequence(model: CharacterModel, clip: MotionClip,
                       min_frames: int = 0) -> np.ndarray:
    """Joint-position frames of a reference clip; loopable clips are tiled
    until at least min_frames."""
    frames = np.stack([joint_position_frame(model, f.to_q()) for f in clip.frames])
    if clip.loopable and min_frames > frames.shape[0]:
        reps = math.ceil(min_frames / frames.shape[0])
        frames = np.concatenate([frames] * reps, axis=0)[:min_frames]
    return frames


@dataclass
class EvalReport:
    mode: str
    episodes: int
    dtw_error_mean: float
    dtw_error_std: float
    task_return_mean: float
    task_return_std: float
    episode_length_mean: float
    episode_length_std: float
    seed: int
    checkpoint: str

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir: str) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        jpath = os.path.join(out_dir, "eval_report.json")
        with open(jpath, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
        cpath = os.path.join(out_dir, "eval_report.csv")
        keys = list(self.to_dict())
        with open(cpath, "w") as fh:
            fh.write(",".join(keys) + "\n")
            fh.write(",".join(str(self.to_dict()[k]) for k in keys) + "\n")
        return jpath, cpath


def _eval_episode(env, policy: GaussianPolicy, rng, deterministic: bool):
    """One evaluation rollout; returns joint-position frames and task rewards."""
    state, goal, ball = env.reset(rng)
    frames = [joint_position_frame(env.model, state.q)]
    task_rewards = []
    for _ in range(env.horizon_steps):
        obs = env.observe(state, goal, ball)
        if deterministic:
            action = policy.net(obs)
        else:
            action, _ = policy.sample(obs, rng)
        try:
            state, ball = env.step(state, action, ball)
        except SimulationDiverged:
            break
        goal = env.task.update_goal(goal, env.model, state, ball)
        task_rewards.append(env.task.reward(env.model, state, goal, ball))
        frames.append(joint_position_frame(env.model, state.q))
        if env.terminated(state):
            break
    return np.stack(frames), np.asarray(task_rewards, dtype=float)


def evaluate(checkpoint: str, mode: str = "auto", episodes: int = 32,
             seed: int = 0, clip_path: str | None = None,
             deterministic: bool = False,
             dump_frames_dir: str | None = None) -> EvalReport:
    """Run seeded evaluation episodes against a trained checkpoint.

    Imitation mode computes the DTW-aligned pose error against the reference
    clip; task mode computes normalized task returns. Stochastic actions by
    default (matching the training distribution).
    """
    trainer = Trainer.from_checkpoint(checkpoint)
    env = trainer.env
    policy = trainer.state.policy
    if mode == "auto":
        mode = "imitate" if trainer.cfg.is_imitation else "task"
    reference = None
    if mode == "imitate":
        if clip_path:
            ref_clip = load_clip(clip_path)
        elif len(trainer.dataset.clips) == 1:
            ref_clip = trainer.dataset.clips[0]
        else:
            raise ValueError("imitation evaluation needs a reference clip")
        reference = clip_pose_sequence(env.model, ref_clip,
                                       min_frames=env.horizon_steps + 1)
    errors, returns, lengths = [], [], []
    for ep in range(episodes):
        rng = phase_rng(seed, _PH_EVAL, ep)
        frames, task_rewards = _eval_episode(env, policy, rng, deterministic)
        lengths.append(frames.shape[0] - 1)
        returns.append(normalized_task_return(task_rewards, env.horizon_steps))
        if reference is not None:
            _, err = dtw_align(frames, reference)
            errors.append(err)
        if dump_frames_dir:
            os.makedirs(dump_frames_dir, exist_ok=True)
            np.save(os.path.join(dump_frames_dir, f"episode_{ep:03d}.npy"), frames)
    errors = np.asarray(errors) if errors else np.zeros(1)
    returns = np.asarray(returns)
    lengths = np.asarray(lengths, dtype=float)
    return EvalReport(
        mode=mode, episodes=episodes,
        dtw_error_mean=float(errors.mean()), dtw_error_std=float(errors.std()),
        task_return_mean=float(returns.mean()), task_return_std=float(returns.std()),
        episode_length_mean=float(lengths.mean()),
        episode_length_std=float(lengths.std()),
        seed=seed, checkpoint=os.path.abspath(checkpoint))
