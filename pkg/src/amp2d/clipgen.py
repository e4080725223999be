"""Synthetic motion clip generators.

Stand-ins for captured motion so every run (and every test) is self
contained: "oscillate" swings the joints sinusoidally in place, "gait"
advances the root while the joints cycle (legged pattern on walkers, a
paddle-wheel rotor otherwise), and "reach" raises the last joint into a
waving hold.
"""

from __future__ import annotations

import math

import numpy as np

from .character import CharacterModel
from .motion import MotionClip, Pose

CLIP_KINDS = ("oscillate", "gait", "reach")


def _frame_count(duration: float, rate: float) -> int:
    n = int(round(duration * rate))
    if n < 2:
        raise ValueError("duration too short: need at least 2 frames")
    return n


def _make_clip(character: CharacterModel, name: str, rate: float,
               roots: np.ndarray, joints: np.ndarray, loopable: bool) -> MotionClip:
    frames = [Pose(roots[i, 0:2], roots[i, 2], joints[i])
              for i in range(roots.shape[0])]
    return MotionClip(name=name, frame_rate=rate, frames=frames,
                      loopable=loopable, subject_id="synthetic",
                      joint_names=character.joint_names)


def oscillate_clip(character: CharacterModel, duration: float = 4.0,
                   rate: float = 30.0, frequency: float = 1.0,
                   amplitude: float = 0.5, name: str = "oscillate") -> MotionClip:
    """Sinusoidal joint swing about the rest pose; root stays put.

    Exactly periodic (loopable) when duration * frequency is an integer.
    """
    if amplitude < 0.0 or frequency <= 0.0:
        raise ValueError("need amplitude >= 0 and frequency > 0")
    n = _frame_count(duration, rate)
    rest = character.rest_pose
    t = np.arange(n) / rate
    roots = np.tile(rest[0:3], (n, 1))
    joints = rest[3:][None, :] + amplitude * np.sin(
        2.0 * math.pi * frequency * t)[:, None]
    return _make_clip(character, name, rate, roots, joints, loopable=True)


def gait_clip(character: CharacterModel, duration: float = 2.0,
              rate: float = 30.0, speed: float = 1.0, frequency: float = 1.4,
              hip_amplitude: float = 0.5, knee_amplitude: float = 0.8,
              name: str = "gait") -> MotionClip:
    """Root advances at the given speed while the joints cycle.

    Characters with at least four joints get the biped pattern
    (phase-opposed hips, swing-phase knee flexion); anything smaller drives
    its joints as continuously rotating paddles.
    """
    if frequency <= 0.0:
        raise ValueError("frequency must be > 0")
    n = _frame_count(duration, rate)
    rest = character.rest_pose
    t = np.arange(n) / rate
    roots = np.tile(rest[0:3], (n, 1))
    roots[:, 0] = rest[0] + speed * t
    J = character.n_joints
    joints = np.tile(rest[3:], (n, 1))
    ph = 2.0 * math.pi * frequency * t
    if J >= 4:
        joints[:, 0] += hip_amplitude * np.sin(ph)
        joints[:, 2] += hip_amplitude * np.sin(ph + math.pi)
        # knees flex during the swing phase only
        joints[:, 1] += -knee_amplitude * np.maximum(0.0, np.sin(ph + 0.5 * math.pi))
        joints[:, 3] += -knee_amplitude * np.maximum(0.0, np.sin(ph + 1.5 * math.pi))
    else:
        direction = -1.0 if speed >= 0.0 else 1.0
        joints += direction * ph[:, None]
    return _make_clip(character, name, rate, roots, joints, loopable=False)


def reach_clip(character: CharacterModel, duration: float = 3.0,
               rate: float = 30.0, amplitude: float = 0.6,
               frequency: float = 1.5, name: str = "reach") -> MotionClip:
    """Raise the last joint from a lowered pose into a gentle waving hold."""
    if amplitude < 0.0 or frequency <= 0.0:
        raise ValueError("need amplitude >= 0 and frequency > 0")
    n = _frame_count(duration, rate)
    rest = character.rest_pose
    t = np.arange(n) / rate
    roots = np.tile(rest[0:3], (n, 1))
    joints = np.tile(rest[3:], (n, 1))
    ramp_T = 0.5 * duration
    s = np.clip(t / ramp_T, 0.0, 1.0)
    ramp = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)  # min-jerk 0 -> 1
    wave = 0.15 * amplitude * np.sin(2.0 * math.pi * frequency * t)
    joints[:, -1] = rest[3 + character.n_joints - 1] - amplitude * (1.0 - ramp) \
        + np.where(t >= ramp_T, wave, 0.0)
    return _make_clip(character, name, rate, roots, joints, loopable=False)


def generate_clip(kind: str, character: CharacterModel, **params) -> MotionClip:
    table = {"oscillate": oscillate_clip, "gait": gait_clip, "reach": reach_clip}
    if kind not in table:
        raise ValueError(f"unknown clip kind '{kind}' (choose from {', '.join(CLIP_KINDS)})")
    return table[kind](character, **params)
