"""Rollout environment: simulator + task + reference-state initialization.

Episodes reset to states sampled from the motion dataset, step at the control
rate, and expose the two observation streams: policy features (root height
plus per-link configuration/velocity blocks in the root-relative frame, plus
ball features for dribbling, plus goal features) and the motion-prior features
from the observation map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .character import CharacterModel
from .motion import MotionDataset, ObsEncoder
from .sim import (BallModel, BallState, SimConfig, SimState, SimulationDiverged,
                  check_early_termination, link_states, step_control,
                  step_control_with_ball)
from .tasks import Goal, Task

TERM_FAILURE = "failure"
TERM_TIMEOUT = "timeout"
TERM_GOAL = "goal"


@dataclass(frozen=True)
class EnvConfig:
    horizon_s: float = 20.0
    goal_resample_s: float = 4.0
    early_termination: str = "auto"   # auto | on | off


class Env:
    """One character instance; not shareable across concurrent episodes."""

    def __init__(self, model: CharacterModel, task: Task, dataset: MotionDataset,
                 encoder: ObsEncoder, sim_cfg: SimConfig | None = None,
                 env_cfg: EnvConfig | None = None,
                 ball_model: BallModel | None = None):
        self.model = model
        self.task = task
        self.dataset = dataset
        self.encoder = encoder
        self.sim_cfg = sim_cfg or SimConfig()
        self.cfg = env_cfg or EnvConfig()
        self.ball_model = ball_model or (BallModel() if task.needs_ball else None)
        if self.cfg.early_termination == "auto":
            self.early_termination = task.early_termination
        else:
            self.early_termination = self.cfg.early_termination == "on"
        self.horizon_steps = max(1, round(self.cfg.horizon_s * self.sim_cfg.ctrl_hz))
        self.resample_steps = (round(self.cfg.goal_resample_s * self.sim_cfg.ctrl_hz)
                               if task.resamples() and self.cfg.goal_resample_s > 0
                               else 0)

    @property
    def state_dim(self) -> int:
        d = 1 + 7 * self.model.n_links
        if self.ball_model is not None:
            d += 7
        return d

    @property
    def obs_dim(self) -> int:
        return self.state_dim + self.task.goal_dim

    @property
    def action_dim(self) -> int:
        return self.model.n_joints

    def reset(self, rng: np.random.Generator):
        state = self.dataset.sample_reference_state(rng)
        ball = None
        if self.ball_model is not None:
            p = self.task.params
            side = 1.0 if rng.random() < 0.5 else -1.0
            x = state.q[0] + side * rng.uniform(p.ball_spawn_min, p.ball_spawn_max)
            ball = BallState.resting(self.ball_model, x)
        goal = self.task.sample_goal(self.model, state, rng)
        return state, goal, ball

    def step(self, state: SimState, action, ball: BallState | None):
        """One control period; raises SimulationDiverged on blow-up."""
        if ball is not None:
            return step_control_with_ball(state, ball, action, self.model,
                                          self.ball_model, self.sim_cfg)
        return step_control(state, action, self.model, self.sim_cfg), None

    def state_features(self, state: SimState, ball: BallState | None) -> np.ndarray:
        root = state.q[0:2]
        coms, angles, vels, angvels = link_states(self.model, state)
        per_link = np.concatenate(
            (coms - root, np.cos(angles)[:, None], np.sin(angles)[:, None],
             vels, angvels[:, None]), axis=1)
        parts = [np.array([state.q[1]]), per_link.reshape(-1)]
        if ball is not None:
            parts.append(np.concatenate((
                ball.q[0:2] - root,
                [np.cos(ball.q[2]), np.sin(ball.q[2])],
                ball.qdot[0:2], [ball.qdot[2]])))
        return np.concatenate(parts)

    def observe(self, state: SimState, goal: Goal, ball: BallState | None) -> np.ndarray:
        """Policy/value input: state features plus goal features."""
        return np.concatenate((self.state_features(state, ball),
                               self.task.goal_features(self.model, state, goal)))

    def phi(self, state: SimState) -> np.ndarray:
        """Raw motion-prior features (normalization happens at the net input)."""
        return self.encoder.encode(state)

    def terminated(self, state: SimState) -> bool:
        return check_early_termination(state, self.model,
                                       termination_disabled=not self.early_termination)
