"""Task goals and reward functions (planar adaptation).

Every reward is a convex combination of terms individually bounded in [0, 1],
so task rewards always land in [0, 1]. Rewards are pure functions; the only
cross-step state is the strike hit indicator, which lives in the Goal and is
monotone within an episode. Positions and directions are world-frame 2-vectors
here; goal features handed to the policy are root-relative (translation
invariant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .character import CharacterModel
from .sim import SimState, com_velocity, site_states

TASK_NAMES = ("imitate", "heading", "location", "dribble", "strike", "wave")


@dataclass(frozen=True)
class Goal:
    kind: str
    direction: np.ndarray | None = None   # unit heading direction
    speed: float = 0.0                    # target / minimum speed (m/s)
    target: np.ndarray | None = None      # world-frame target position
    hit: bool = False                     # strike indicator, latches true
    height: float = 0.0                   # wave hand-height target (m)


@dataclass(frozen=True)
class TaskParams:
    """Goal sampler knobs (ranges follow the printed task definitions)."""
    heading_speed_min: float = 1.0
    heading_speed_max: float = 5.0
    heading_angles: tuple[float, ...] | None = None  # None = uniform circle
    location_radius_min: float = 1.0
    location_radius_max: float = 10.0
    location_horizontal: bool = True
    strike_dist_min: float = 0.5
    strike_dist_max: float = 5.0
    strike_height_min: float = 0.2
    strike_height_max: float = 0.6
    strike_phase_dist: float = 1.375
    hit_radius: float = 0.1
    min_speed: float = 1.0                # v* of the location-style terms
    resample_period_s: float = 4.0
    ball_spawn_min: float = 0.6
    ball_spawn_max: float = 1.4


# -- reward formulas ----------------------------------------------------------

def target_heading_reward(com_vel, direction, speed: float) -> float:
    """exp(-0.25 (v* - d* . xdot_com)^2)"""
    err = speed - float(np.dot(direction, com_vel))
    return math.exp(-0.25 * err * err)


def target_location_reward(root_pos, com_vel, target, min_speed: float = 1.0) -> float:
    """0.7 exp(-0.5 ||x* - root||^2) + 0.3 exp(-max(0, v* - d* . xdot_com)^2)

    No penalty for moving toward the target faster than v*.
    """
    delta = np.asarray(target, float) - np.asarray(root_pos, float)
    dist2 = float(delta @ delta)
    d_star = _unit(delta)
    short = max(0.0, min_speed - float(np.dot(d_star, com_vel)))
    return 0.7 * math.exp(-0.5 * dist2) + 0.3 * math.exp(-short * short)


def dribble_reward(com_pos, com_vel, ball_pos, ball_vel, target,
                   min_speed: float = 1.0) -> float:
    """0.1 r_cv + 0.1 r_cp + 0.3 r_bv + 0.5 r_bp."""
    com_pos = np.asarray(com_pos, float)
    ball_pos = np.asarray(ball_pos, float)
    target = np.asarray(target, float)
    d_ball = _unit(ball_pos - com_pos)
    short = max(0.0, min_speed - float(np.dot(d_ball, com_vel)))
    r_cv = math.exp(-1.5 * short * short)
    rel = ball_pos - com_pos
    r_cp = math.exp(-0.5 * float(rel @ rel))
    d_star = _unit(target - ball_pos)
    short = max(0.0, min_speed - float(np.dot(d_star, ball_vel)))
    r_bv = math.exp(-short * short)
    rel = target - ball_pos
    r_bp = math.exp(-0.5 * float(rel @ rel))
    return 0.1 * r_cv + 0.1 * r_cp + 0.3 * r_bv + 0.5 * r_bp


def strike_reward(root_pos, com_vel, ee_pos, ee_vel, target, hit: bool,
                  phase_dist: float = 1.375, min_speed: float = 1.0) -> float:
    """1 after the hit; near phase 0.3 r_near + 0.3; far phase 0.3 r_far."""
    if hit:
        return 1.0
    target = np.asarray(target, float)
    root_pos = np.asarray(root_pos, float)
    if float(np.linalg.norm(target - root_pos)) < phase_dist:
        rel = target - np.asarray(ee_pos, float)
        d_star = _unit(target - root_pos)
        approach = (2.0 / 3.0) * float(np.dot(d_star, ee_vel))
        r_near = (0.2 * math.exp(-2.0 * float(rel @ rel))
                  + 0.8 * min(max(approach, 0.0), 1.0))
        return 0.3 * r_near + 0.3
    return 0.3 * target_location_reward(root_pos, com_vel, target, min_speed)


def wave_reward(hand_height: float, target_height: float) -> float:
    """exp(-16 (y_hand - y*)^2)"""
    err = hand_height - target_height
    return math.exp(-16.0 * err * err)


def wave_composite_reward(com_vel, direction, speed: float,
                          hand_height: float, target_height: float) -> float:
    """0.5 r_heading + 0.5 r_wave."""
    return (0.5 * target_heading_reward(com_vel, direction, speed)
            + 0.5 * wave_reward(hand_height, target_height))


def combine_rewards(r_task: float, r_style: float, w_task: float, w_style: float) -> float:
    """Linear combination, weights used as given."""
    return w_task * r_task + w_style * r_style


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        return np.zeros_like(v)
    return v / n


# -- task objects -------------------------------------------------------------

class Task:
    """Goal sampling, per-step reward, and policy goal features for one task."""

    name: str = ""
    goal_dim: int = 0
    needs_ball: bool = False
    early_termination: bool = True

    def __init__(self, params: TaskParams | None = None):
        self.params = params or TaskParams()

    def sample_goal(self, model: CharacterModel, state: SimState,
                    rng: np.random.Generator) -> Goal:
        raise NotImplementedError

    def resamples(self) -> bool:
        """Whether goals refresh on the periodic schedule within an episode."""
        return False

    def update_goal(self, goal: Goal, model: CharacterModel, state: SimState,
                    ball=None) -> Goal:
        """Per-step indicator updates (hit latching); default is a no-op."""
        return goal

    def reward(self, model: CharacterModel, state: SimState, goal: Goal,
               ball=None) -> float:
        raise NotImplementedError

    def goal_features(self, model: CharacterModel, state: SimState,
                      goal: Goal) -> np.ndarray:
        raise NotImplementedError


class ImitateTask(Task):
    """No task objective: training maximizes the style reward alone."""
    name = "imitate"
    goal_dim = 0

    def sample_goal(self, model, state, rng) -> Goal:
        return Goal(kind=self.name)

    def reward(self, model, state, goal, ball=None) -> float:
        return 0.0

    def goal_features(self, model, state, goal) -> np.ndarray:
        return np.zeros(0)


class HeadingTask(Task):
    name = "heading"
    goal_dim = 3

    def sample_goal(self, model, state, rng) -> Goal:
        p = self.params
        if p.heading_angles is not None:
            ang = p.heading_angles[rng.integers(len(p.heading_angles))]
        else:
            ang = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(p.heading_speed_min, p.heading_speed_max)
        return Goal(kind=self.name, direction=np.array([math.cos(ang), math.sin(ang)]),
                    speed=float(speed))

    def resamples(self) -> bool:
        return True

    def reward(self, model, state, goal, ball=None) -> float:
        return target_heading_reward(com_velocity(model, state), goal.direction,
                                     goal.speed)

    def goal_features(self, model, state, goal) -> np.ndarray:
        return np.array([goal.direction[0], goal.direction[1], goal.speed])


class LocationTask(Task):
    name = "location"
    goal_dim = 2

    def sample_goal(self, model, state, rng) -> Goal:
        p = self.params
        r = math.sqrt(rng.uniform(p.location_radius_min**2, p.location_radius_max**2))
        if p.location_horizontal:
            ang = float(rng.choice([0.0, math.pi]))
            target = state.q[0:2] + np.array([r * math.cos(ang), 0.0])
        else:
            ang = rng.uniform(0.0, 2.0 * math.pi)
            target = state.q[0:2] + r * np.array([math.cos(ang), math.sin(ang)])
        return Goal(kind=self.name, target=target, speed=self.params.min_speed)

    def resamples(self) -> bool:
        return True

    def reward(self, model, state, goal, ball=None) -> float:
        return target_location_reward(state.q[0:2], com_velocity(model, state),
                                      goal.target, self.params.min_speed)

    def goal_features(self, model, state, goal) -> np.ndarray:
        return goal.target - state.q[0:2]


class DribbleTask(Task):
    name = "dribble"
    goal_dim = 2
    needs_ball = True

    def sample_goal(self, model, state, rng) -> Goal:
        p = self.params
        r = math.sqrt(rng.uniform(p.location_radius_min**2, p.location_radius_max**2))
        side = 1.0 if rng.random() < 0.5 else -1.0
        target = np.array([state.q[0] + side * r, 0.0])
        return Goal(kind=self.name, target=target, speed=self.params.min_speed)

    def reward(self, model, state, goal, ball=None) -> float:
        com = model.com(state.q)
        return dribble_reward(com, com_velocity(model, state),
                              ball.q[0:2], ball.qdot[0:2], goal.target,
                              self.params.min_speed)

    def goal_features(self, model, state, goal) -> np.ndarray:
        return goal.target - state.q[0:2]


class StrikeTask(Task):
    name = "strike"
    goal_dim = 3

    def __init__(self, params: TaskParams | None = None, effector: int = -1):
        super().__init__(params)
        self.effector = effector

    def sample_goal(self, model, state, rng) -> Goal:
        p = self.params
        side = 1.0 if rng.random() < 0.5 else -1.0
        dist = rng.uniform(p.strike_dist_min, p.strike_dist_max)
        height = rng.uniform(p.strike_height_min, p.strike_height_max)
        return Goal(kind=self.name,
                    target=np.array([state.q[0] + side * dist, height]))

    def _effector_state(self, model, state):
        pos, vel = site_states(model, state, [model.end_effectors[self.effector]])
        return pos[0], vel[0]

    def update_goal(self, goal, model, state, ball=None) -> Goal:
        if goal.hit:
            return goal
        ee_pos, ee_vel = self._effector_state(model, state)
        rel = goal.target - ee_pos
        if float(np.linalg.norm(rel)) < self.params.hit_radius and float(rel @ ee_vel) > 0.0:
            return replace(goal, hit=True)
        return goal

    def reward(self, model, state, goal, ball=None) -> float:
        ee_pos, ee_vel = self._effector_state(model, state)
        return strike_reward(state.q[0:2], com_velocity(model, state),
                             ee_pos, ee_vel, goal.target, goal.hit,
                             self.params.strike_phase_dist, self.params.min_speed)

    def goal_features(self, model, state, goal) -> np.ndarray:
        rel = goal.target - state.q[0:2]
        return np.array([rel[0], rel[1], 1.0 if goal.hit else 0.0])


class WaveTask(Task):
    """Heading plus raising the designated hand to a target height."""
    name = "wave"
    goal_dim = 4

    def __init__(self, params: TaskParams | None = None, effector: int = -1):
        super().__init__(params)
        self.effector = effector

    def _reach(self, model: CharacterModel) -> float:
        pt = model.end_effectors[self.effector]
        reach = math.hypot(*pt.offset)
        link = pt.link
        while link > 0:
            j = model.joints[link - 1]
            reach += math.hypot(*j.attach)
            link = j.parent
        return model.rest_pose[1] + reach

    def sample_goal(self, model, state, rng) -> Goal:
        p = self.params
        if p.heading_angles is not None:
            ang = p.heading_angles[rng.integers(len(p.heading_angles))]
        else:
            ang = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(p.heading_speed_min, p.heading_speed_max)
        reach = self._reach(model)
        height = rng.uniform(0.55 * reach, 0.95 * reach)
        return Goal(kind=self.name,
                    direction=np.array([math.cos(ang), math.sin(ang)]),
                    speed=float(speed), height=float(height))

    def resamples(self) -> bool:
        return True

    def reward(self, model, state, goal, ball=None) -> float:
        pos, _ = site_states(model, state, [model.end_effectors[self.effector]])
        return wave_composite_reward(com_velocity(model, state), goal.direction,
                                     goal.speed, float(pos[0, 1]), goal.height)

    def goal_features(self, model, state, goal) -> np.ndarray:
        return np.array([goal.direction[0], goal.direction[1], goal.speed,
                         goal.height])


def make_task(name: str, params: TaskParams | None = None) -> Task:
    table = {
        "imitate": ImitateTask,
        "heading": HeadingTask,
        "location": LocationTask,
        "dribble": DribbleTask,
        "strike": StrikeTask,
        "wave": WaveTask,
    }
    if name not in table:
        raise ValueError(f"unknown task '{name}' (choose from {', '.join(TASK_NAMES)})")
    return table[name](params)
