"""Motion clips, the discriminator observation map, and dataset sampling.

A clip is a fixed-rate sequence of poses; velocities are never stored on disk
and are always recovered by finite differencing at load time. The observation
map extracts the heading-local features the motion prior scores: root
velocities, joint rotation encodings, joint velocities, and end-effector
positions relative to the root. In the planar sagittal setting the heading
rotation is degenerate, so "local" means translated to the root with world
axes; the map is exactly invariant to root translation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .character import CharacterModel
from .geom import wrap_angle
from .sim import SimState

CLIP_FORMAT_KEYS = ("name", "frame_rate", "loopable", "joints", "frames")
# Features the dataset leaves constant would otherwise be amplified by 1/std
# when policy data varies them; the floor caps that gain at 20x.
STD_FLOOR = 0.05


@dataclass
class Pose:
    root_position: np.ndarray          # (2,)
    root_rotation: float
    joint_rotations: np.ndarray        # (J,)
    root_linear_velocity: np.ndarray | None = None
    root_angular_velocity: float | None = None
    joint_velocities: np.ndarray | None = None

    def __post_init__(self):
        self.root_position = np.asarray(self.root_position, dtype=float)
        self.joint_rotations = np.asarray(self.joint_rotations, dtype=float)
        vals = [*self.root_position, self.root_rotation, *self.joint_rotations]
        if not np.all(np.isfinite(vals)):
            raise ValueError("pose contains non-finite values")

    @property
    def has_velocities(self) -> bool:
        return self.root_linear_velocity is not None

    def to_q(self) -> np.ndarray:
        return np.concatenate((self.root_position, [self.root_rotation],
                               self.joint_rotations))

    def to_qdot(self) -> np.ndarray:
        if not self.has_velocities:
            raise ValueError("pose has no velocities (finite-difference pass not run)")
        return np.concatenate((self.root_linear_velocity,
                               [self.root_angular_velocity],
                               self.joint_velocities))

    def to_state(self) -> SimState:
        return SimState(self.to_q(), self.to_qdot())


def state_to_pose(state: SimState) -> Pose:
    return Pose(root_position=state.q[0:2].copy(),
                root_rotation=float(state.q[2]),
                joint_rotations=state.q[3:].copy(),
                root_linear_velocity=state.qdot[0:2].copy(),
                root_angular_velocity=float(state.qdot[2]),
                joint_velocities=state.qdot[3:].copy())


@dataclass
class MotionClip:
    name: str
    frame_rate: float
    frames: list[Pose]
    loopable: bool = False
    subject_id: str = ""
    joint_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_rate <= 0.0:
            raise ValueError(f"clip '{self.name}': frame_rate must be > 0")
        if len(self.frames) < 2:
            raise ValueError(f"clip '{self.name}': need at least 2 frames")
        n = len(self.frames[0].joint_rotations)
        for i, f in enumerate(self.frames):
            if len(f.joint_rotations) != n:
                raise ValueError(f"clip '{self.name}': frame {i} has inconsistent joint count")

    @property
    def n_joints(self) -> int:
        return len(self.frames[0].joint_rotations)

    @property
    def duration(self) -> float:
        return (len(self.frames) - 1) / self.frame_rate

    @property
    def n_transitions(self) -> int:
        return len(self.frames) - 1


def finite_difference_velocities(clip: MotionClip) -> MotionClip:
    """Velocities from forward differences at the clip rate.

    Angle deltas are wrapped to (-pi, pi] so a sequence crossing the branch
    cut stays smooth. The last frame copies the previous frame's velocity;
    loopable clips instead wrap to frame 0.
    """
    rate = clip.frame_rate
    n = len(clip.frames)
    out = []
    for t in range(n):
        cur = clip.frames[t]
        if t < n - 1:
            nxt = clip.frames[t + 1]
        elif clip.loopable:
            nxt = clip.frames[0]
        else:
            prev = out[-1]
            out.append(Pose(cur.root_position, cur.root_rotation, cur.joint_rotations,
                            prev.root_linear_velocity.copy(),
                            prev.root_angular_velocity,
                            prev.joint_velocities.copy()))
            continue
        out.append(Pose(
            cur.root_position, cur.root_rotation, cur.joint_rotations,
            (nxt.root_position - cur.root_position) * rate,
            float(wrap_angle(nxt.root_rotation - cur.root_rotation)) * rate,
            wrap_angle(nxt.joint_rotations - cur.joint_rotations) * rate,
        ))
    return MotionClip(clip.name, rate, out, clip.loopable, clip.subject_id,
                      list(clip.joint_names))


# -- clip files ---------------------------------------------------------------

def save_clip(clip: MotionClip, path) -> None:
    doc = {
        "name": clip.name,
        "frame_rate": clip.frame_rate,
        "loopable": clip.loopable,
        "subject_id": clip.subject_id,
        "joints": list(clip.joint_names),
        "frames": [[*f.root_position, f.root_rotation, *f.joint_rotations]
                   for f in clip.frames],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_clip(path) -> MotionClip:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"clip file '{path}': not valid JSON ({exc})") from exc
    for key in CLIP_FORMAT_KEYS:
        if key not in doc:
            raise ValueError(f"clip file '{path}': missing field '{key}'")
    joints = list(doc["joints"])
    width = 3 + len(joints)
    frames = []
    for i, row in enumerate(doc["frames"]):
        if len(row) != width:
            raise ValueError(f"clip file '{path}': frame {i} has {len(row)} values, "
                             f"expected {width} for field 'frames'")
        row = np.asarray(row, dtype=float)
        frames.append(Pose(row[0:2], float(row[2]), row[3:]))
    try:
        return MotionClip(str(doc["name"]), float(doc["frame_rate"]), frames,
                          bool(doc["loopable"]), str(doc.get("subject_id", "")),
                          joints)
    except ValueError as exc:
        raise ValueError(f"clip file '{path}': {exc}") from exc


def load_manifest(path) -> tuple[list[str], list[float]]:
    """Dataset manifest: JSON list of clip paths or {path, weight} entries."""
    import os
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError(f"manifest '{path}': expected a JSON list")
    base = os.path.dirname(os.path.abspath(path))
    paths, weights = [], []
    for entry in doc:
        if isinstance(entry, str):
            p, w = entry, 1.0
        else:
            p, w = entry["path"], float(entry.get("weight", 1.0))
        if not os.path.isabs(p):
            p = os.path.join(base, p)
        paths.append(p)
        weights.append(w)
    return paths, weights


# -- discriminator observations -------------------------------------------------

def observation_dim(character: CharacterModel, include_velocities: bool = True) -> int:
    J = character.n_joints
    E = len(character.end_effectors)
    d = 4 * J + 2 * E
    if include_velocities:
        d += 3 + J
    return d


def observation_map(state: SimState, character: CharacterModel,
                    include_velocities: bool = True,
                    mean: np.ndarray | None = None,
                    std: np.ndarray | None = None) -> np.ndarray:
    """Feature vector scored by the motion prior.

    Layout: [root linear velocity, root angular velocity, per-joint
    normal/tangent encodings, joint velocities, end-effector positions
    relative to the root]. Velocity blocks are dropped when
    include_velocities is off. Passing dataset statistics normalizes the
    output per feature.
    """
    q, qd = state.q, state.qdot
    parts = []
    if include_velocities:
        parts.append(qd[0:3])
    angles = q[3:]
    enc = np.empty(4 * len(angles))
    enc[0::4] = np.cos(angles)
    enc[1::4] = np.sin(angles)
    enc[2::4] = -enc[1::4]
    enc[3::4] = enc[0::4]
    parts.append(enc)
    if include_velocities:
        parts.append(qd[3:])
    # root-relative end effectors via FK from the origin: exactly invariant
    # to root translation (no cancellation residue)
    q0 = q.copy()
    q0[0:2] = 0.0
    parts.append(character.end_effector_positions(q0).reshape(-1))
    phi = np.concatenate(parts)
    if mean is not None:
        phi = (phi - mean) / std
    return phi


@dataclass
class ObsEncoder:
    """Bundles the observation map with its configuration and statistics."""
    character: CharacterModel
    include_velocities: bool = True
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return observation_dim(self.character, self.include_velocities)

    def encode(self, state: SimState, normalize: bool = False) -> np.ndarray:
        return observation_map(state, self.character, self.include_velocities,
                               self.mean if normalize else None,
                               self.std if normalize else None)

    def normalize(self, phi: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return phi
        return (phi - self.mean) / self.std


# -- dataset ------------------------------------------------------------------

class MotionDataset:
    """Reference motions with precomputed observation features.

    Transition sampling is uniform over consecutive-frame pairs (optionally
    weighted per clip); statistics are the per-feature mean/std of the
    observation map over all transition endpoints. Immutable after
    construction; all sampling takes an explicit rng.
    """

    def __init__(self, clips: list[MotionClip], character: CharacterModel,
                 include_velocities: bool = True,
                 weights: list[float] | None = None):
        if not clips:
            raise ValueError("dataset needs at least one clip")
        rates = {c.frame_rate for c in clips}
        if len(rates) > 1:
            raise ValueError(f"all clips must share one frame rate, got {sorted(rates)}")
        for c in clips:
            if c.n_joints != character.n_joints:
                raise ValueError(
                    f"clip '{c.name}' has {c.n_joints} joints but character "
                    f"'{character.name}' has {character.n_joints}")
            if c.joint_names and c.joint_names != character.joint_names:
                raise ValueError(f"clip '{c.name}' joint names do not match character")
        self.character = character
        self.include_velocities = include_velocities
        self.clips = [finite_difference_velocities(c) for c in clips]
        self.weights = list(weights) if weights is not None else [1.0] * len(clips)
        if len(self.weights) != len(clips):
            raise ValueError("one weight per clip required")
        self.frame_rate = self.clips[0].frame_rate
        self.total_duration = float(sum(c.duration for c in self.clips))

        self._phi = [np.stack([observation_map(f.to_state(), character,
                                               include_velocities)
                               for f in c.frames]) for c in self.clips]
        # (clip, t) index of every transition plus per-transition weights
        trans = [(ci, t) for ci, c in enumerate(self.clips)
                 for t in range(c.n_transitions)]
        self._trans = np.asarray(trans, dtype=np.int64).reshape(-1, 2)
        tw = np.array([self.weights[ci] for ci, _ in trans], dtype=float)
        self._trans_p = tw / tw.sum()
        fw = np.array([self.weights[ci] for ci, c in enumerate(self.clips)
                       for _ in range(len(c.frames))], dtype=float)
        self._frames = [(ci, t) for ci, c in enumerate(self.clips)
                        for t in range(len(c.frames))]
        self._frame_p = fw / fw.sum()

        endpoints = np.concatenate([
            np.concatenate((phi[:-1], phi[1:]), axis=0) for phi in self._phi])
        self.phi_mean = endpoints.mean(axis=0)
        self.phi_std = np.maximum(endpoints.std(axis=0), STD_FLOOR)

    @property
    def obs_dim(self) -> int:
        return self._phi[0].shape[1]

    @property
    def n_transitions(self) -> int:
        return self._trans.shape[0]

    def encoder(self, normalize: bool = True) -> ObsEncoder:
        return ObsEncoder(self.character, self.include_velocities,
                          self.phi_mean if normalize else None,
                          self.phi_std if normalize else None)

    def sample_transitions(self, count: int, rng: np.random.Generator
                           ) -> tuple[np.ndarray, np.ndarray]:
        """Raw observation pairs (count, d) for dataset transitions."""
        idx = rng.choice(self._trans.shape[0], size=count, p=self._trans_p)
        a = np.empty((count, self.obs_dim))
        b = np.empty((count, self.obs_dim))
        for k, sel in enumerate(idx):
            ci, t = self._trans[sel]
            a[k] = self._phi[ci][t]
            b[k] = self._phi[ci][t + 1]
        return a, b

    def sample_reference_state(self, rng: np.random.Generator) -> SimState:
        """Reference state initialization: a uniform dataset frame, lifted so
        no contact point starts below ground."""
        sel = rng.choice(len(self._frames), p=self._frame_p)
        ci, t = self._frames[sel]
        state = self.clips[ci].frames[t].to_state()
        low = self.character.contact_positions(state.q)[:, 1].min()
        if low < 0.0:
            state.q[1] -= low
        return state


def load_dataset(paths, character: CharacterModel,
                 include_velocities: bool = True,
                 weights: list[float] | None = None) -> MotionDataset:
    """Load clip files into a dataset validated against the character."""
    if not paths:
        raise ValueError("no clip files given")
    return MotionDataset([load_clip(p) for p in paths], character,
                         include_velocities, weights)
