"""Flat training configuration: defaults, key=value files, env and CLI overrides.

Every key maps to exactly one CLI flag and one AMP2D_<KEY> environment
variable. Precedence: defaults < config file < environment < flags. Values
tagged "method" follow the published AMP training setup; "impl" values are
choices of this implementation. Sentinel -1 on the auto fields resolves by
task (single-clip imitation vs goal-directed tasks).
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field, fields

from .sim import SimConfig
from .tasks import TaskParams

ENV_PREFIX = "AMP2D_"

# key -> (help text, provenance): provenance "method" = published AMP default,
# "impl" = implementation default.
FIELD_INFO = {
    "task": ("task name: imitate|heading|location|dribble|strike|wave", "impl"),
    "character": ("built-in character name or character JSON path", "impl"),
    "dataset": ("dataset manifest JSON or a single clip JSON", "impl"),
    "out_dir": ("output directory for logs and checkpoints", "impl"),
    "seed": ("master seed; all randomness derives from it", "impl"),
    "total_samples": ("stop after this many environment samples", "impl"),
    "max_iterations": ("stop after this many iterations (0 = no cap)", "impl"),
    "samples_per_iter": ("environment samples collected per iteration", "method"),
    "minibatch_size": ("PPO minibatch size", "method"),
    "epochs": ("PPO passes over each iteration's data", "impl"),
    "horizon_s": ("episode horizon in seconds", "method"),
    "ctrl_hz": ("policy query rate", "method"),
    "sim_hz": ("simulation substep rate", "method"),
    "gamma": ("discount factor; -1 = auto (0.95 imitate / 0.99 tasks)", "method"),
    "lam": ("lambda for GAE and TD targets", "method"),
    "clip_threshold": ("PPO likelihood-ratio clip", "method"),
    "w_task": ("task-reward weight (imitate forces 0)", "method"),
    "w_style": ("style-reward weight", "method"),
    "policy_stepsize": ("policy SGD stepsize; -1 = auto (2e-6 / 4e-6)", "method"),
    "value_stepsize": ("value SGD stepsize; -1 = auto (1e-4 / 2e-5)", "method"),
    "momentum": ("SGD momentum for all nets", "method"),
    "sigma": ("fixed policy action std, radians", "impl"),
    "hidden": ("comma-separated hidden layer widths", "impl"),
    "policy_out_scale": ("policy output layer init scale", "impl"),
    "disc_stepsize": ("discriminator SGD stepsize", "method"),
    "disc_batch": ("discriminator batch size K", "method"),
    "disc_updates": ("discriminator steps per iteration; 0 = auto", "impl"),
    "w_gp": ("gradient penalty weight", "method"),
    "replay_capacity": ("replay buffer capacity in transitions", "method"),
    "normalize_obs": ("normalize motion-prior features by dataset stats", "impl"),
    "include_velocities": ("keep velocity blocks in the prior features", "impl"),
    "advantage_norm": ("normalize advantages per update batch", "impl"),
    "goal_resample_s": ("goal refresh period inside an episode", "impl"),
    "early_termination": ("auto|on|off non-foot ground contact termination", "impl"),
    "eval_episodes": ("episodes per evaluation report", "method"),
    "eval_deterministic": ("evaluate with mean actions instead of sampling", "impl"),
    "workers": ("rollout worker processes (0 = all cores)", "impl"),
    "checkpoint_every": ("periodic checkpoint interval in iterations", "impl"),
    "heading_speed_min": ("heading task: minimum target speed", "method"),
    "heading_speed_max": ("heading task: maximum target speed", "method"),
    "heading_angles": ("'circle' or comma-separated heading angles (rad)", "impl"),
    "location_radius_min": ("location task: annulus inner radius", "impl"),
    "location_radius_max": ("location task: annulus outer radius", "impl"),
    "location_horizontal": ("sample location targets on the ground line", "impl"),
    "strike_dist_min": ("strike task: minimum target distance", "impl"),
    "strike_dist_max": ("strike task: maximum target distance", "impl"),
    "strike_height_min": ("strike task: minimum target height", "impl"),
    "strike_height_max": ("strike task: maximum target height", "impl"),
    "strike_phase_dist": ("strike near/far phase boundary (m)", "method"),
    "hit_radius": ("strike hit detection radius (m)", "impl"),
    "min_speed": ("v* of the location-style speed terms", "method"),
    "gravity": ("gravitational acceleration", "impl"),
    "contact_kn": ("ground normal stiffness", "impl"),
    "contact_dn": ("ground normal damping", "impl"),
    "contact_mu": ("ground friction coefficient", "impl"),
    "contact_kt": ("ground tangential regularization", "impl"),
    "ablation": ("none|no-gp|no-vel", "impl"),
}


@dataclass
class TrainerConfig:
    task: str = "imitate"
    character: str = "pointmass"
    dataset: str = ""
    out_dir: str = "runs/out"
    seed: int = 0
    total_samples: int = 2_000_000
    max_iterations: int = 0
    samples_per_iter: int = 4096
    minibatch_size: int = 256
    epochs: int = 1
    horizon_s: float = 20.0
    ctrl_hz: float = 30.0
    sim_hz: float = 1200.0
    gamma: float = -1.0
    lam: float = 0.95
    clip_threshold: float = 0.02
    w_task: float = 0.5
    w_style: float = 0.5
    policy_stepsize: float = -1.0
    value_stepsize: float = -1.0
    momentum: float = 0.9
    sigma: float = 0.1
    hidden: str = "256,128"
    policy_out_scale: float = 0.01
    disc_stepsize: float = 1e-5
    disc_batch: int = 256
    disc_updates: int = 0
    w_gp: float = 10.0
    replay_capacity: int = 100_000
    normalize_obs: bool = True
    include_velocities: bool = True
    advantage_norm: bool = True
    goal_resample_s: float = 4.0
    early_termination: str = "auto"
    eval_episodes: int = 32
    eval_deterministic: bool = False
    workers: int = 0
    checkpoint_every: int = 50
    heading_speed_min: float = 1.0
    heading_speed_max: float = 5.0
    heading_angles: str = "circle"
    location_radius_min: float = 1.0
    location_radius_max: float = 10.0
    location_horizontal: bool = True
    strike_dist_min: float = 0.5
    strike_dist_max: float = 5.0
    strike_height_min: float = 0.2
    strike_height_max: float = 0.6
    strike_phase_dist: float = 1.375
    hit_radius: float = 0.1
    min_speed: float = 1.0
    gravity: float = 9.81
    contact_kn: float = 2.0e4
    contact_dn: float = 2.0e2
    contact_mu: float = 0.8
    contact_kt: float = 1.0e3
    ablation: str = "none"

    # -- resolved values ------------------------------------------------------

    @property
    def is_imitation(self) -> bool:
        return self.task == "imitate"

    def resolved_gamma(self) -> float:
        if self.gamma >= 0.0:
            return self.gamma
        return 0.95 if self.is_imitation else 0.99

    def resolved_policy_stepsize(self) -> float:
        if self.policy_stepsize >= 0.0:
            return self.policy_stepsize
        return 2e-6 if self.is_imitation else 4e-6

    def resolved_value_stepsize(self) -> float:
        if self.value_stepsize >= 0.0:
            return self.value_stepsize
        return 1e-4 if self.is_imitation else 2e-5

    def resolved_disc_updates(self) -> int:
        if self.disc_updates > 0:
            return self.disc_updates
        return max(1, math.ceil(self.samples_per_iter / self.disc_batch))

    def resolved_w_task(self) -> float:
        return 0.0 if self.is_imitation else self.w_task

    def resolved_w_gp(self) -> float:
        return 0.0 if self.ablation == "no-gp" else self.w_gp

    def resolved_include_velocities(self) -> bool:
        return False if self.ablation == "no-vel" else self.include_velocities

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.hidden.split(",") if v.strip())

    def parsed_heading_angles(self):
        if self.heading_angles.strip() == "circle":
            return None
        return tuple(float(v) for v in self.heading_angles.split(",") if v.strip())

    def sim_config(self) -> SimConfig:
        return SimConfig(ctrl_hz=self.ctrl_hz, sim_hz=self.sim_hz,
                         gravity=self.gravity, contact_kn=self.contact_kn,
                         contact_dn=self.contact_dn, contact_mu=self.contact_mu,
                         contact_kt=self.contact_kt)

    def task_params(self) -> TaskParams:
        return TaskParams(
            heading_speed_min=self.heading_speed_min,
            heading_speed_max=self.heading_speed_max,
            heading_angles=self.parsed_heading_angles(),
            location_radius_min=self.location_radius_min,
            location_radius_max=self.location_radius_max,
            location_horizontal=self.location_horizontal,
            strike_dist_min=self.strike_dist_min,
            strike_dist_max=self.strike_dist_max,
            strike_height_min=self.strike_height_min,
            strike_height_max=self.strike_height_max,
            strike_phase_dist=self.strike_phase_dist,
            hit_radius=self.hit_radius,
            min_speed=self.min_speed,
            resample_period_s=self.goal_resample_s,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(name: str, ftype, raw: str):
    if ftype is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key '{name}': expected a boolean, got '{raw}'")
    try:
        return ftype(raw)
    except ValueError as exc:
        raise ValueError(f"config key '{name}': {exc}") from exc


def parse_config_file(path) -> dict:
    """key = value lines; '#' comments; unknown keys are an error."""
    valid = {f.name: f.type for f in fields(TrainerConfig)}
    types = {f.name: type(f.default) for f in fields(TrainerConfig)}
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in valid:
                raise ValueError(f"{path}:{ln}: unknown config key '{key}'")
            out[key] = _convert(key, types[key], raw)
    return out


def env_overrides(environ=None) -> dict:
    environ = environ if environ is not None else os.environ
    types = {f.name: type(f.default) for f in fields(TrainerConfig)}
    out = {}
    for f in fields(TrainerConfig):
        var = ENV_PREFIX + f.name.upper()
        if var in environ:
            out[f.name] = _convert(f.name, types[f.name], environ[var])
    return out


def build_config(file_path=None, overrides: dict | None = None,
                 environ=None) -> TrainerConfig:
    values = {}
    if file_path:
        values.update(parse_config_file(file_path))
    values.update(env_overrides(environ))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainerConfig(**values)


def config_to_text(cfg: TrainerConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(TrainerConfig)]
    return "\n".join(lines) + "\n"
