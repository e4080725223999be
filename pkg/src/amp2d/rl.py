"""Goal-conditioned PPO with the adversarial motion prior in the loop.

Per iteration: collect whole episodes until the sample budget, score style
rewards with the frozen discriminator, push transitions to the replay buffer,
run the discriminator updates, then one (configurable) epoch of clipped-PPO
minibatch updates on policy and value nets with TD(lambda) targets and
GAE(lambda) advantages.

Determinism contract: every random stream is derived from
(seed, phase, iteration[, episode]) so a resumed run continues bit-identically
and worker counts do not change results.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .character import CharacterModel, get_character
from .config import TrainerConfig
from .env import Env, EnvConfig, TERM_FAILURE, TERM_GOAL, TERM_TIMEOUT
from .motion import MotionDataset, load_clip, load_dataset, load_manifest
from .nets import (GaussianPolicy, Mlp, MlpSpec, net_from_arrays, net_to_arrays,
                   sgd_momentum_step)
from .prior import (DiscConfig, ReplayBuffer, disc_real_input_grad_norm,
                    style_reward, update_discriminator)
from .sim import SimulationDiverged
from .tasks import combine_rewards, make_task

CHECKPOINT_VERSION = 1

# rng phase tags
_PH_INIT = 5
_PH_ROLLOUT = 11
_PH_DISC = 23
_PH_PPO = 37

CSV_COLUMNS = ("iteration", "samples", "mean_return", "mean_task_return",
               "mean_style_reward", "mean_d_real", "mean_d_fake",
               "disc_penalty", "disc_loss")


class CheckpointMismatch(RuntimeError):
    """Checkpoint does not fit the requested character/task/network layout."""


def phase_rng(seed: int, phase: int, *idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, phase, *idx]))


@dataclass
class Trajectory:
    obs: np.ndarray          # (T, obs_dim) policy inputs, goal included
    actions: np.ndarray      # (T, act_dim)
    logps: np.ndarray        # (T,)
    r_task: np.ndarray       # (T,)
    phis_a: np.ndarray       # (T, phi_dim) raw prior features of s_t
    phis_b: np.ndarray       # (T, phi_dim) raw prior features of s_{t+1}
    final_obs: np.ndarray    # policy input at the terminal state
    termination: str         # failure | timeout | goal
    r_style: np.ndarray = None   # filled after discriminator scoring
    rewards: np.ndarray = None   # combined
    values: np.ndarray = None    # filled before the updates

    @property
    def steps(self) -> int:
        return self.obs.shape[0]


# -- value targets -------------------------------------------------------------

def td_lambda_targets(rewards, values, bootstrap: float, gamma: float,
                      lam: float) -> np.ndarray:
    """Lambda-return recursion; bootstrap is V(s_T) on timeout, 0 on failure."""
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    T = rewards.shape[0]
    targets = np.empty(T)
    nxt = bootstrap
    next_value = bootstrap
    for t in range(T - 1, -1, -1):
        targets[t] = rewards[t] + gamma * ((1.0 - lam) * next_value + lam * nxt)
        nxt = targets[t]
        next_value = values[t]
    return targets


def gae_advantages(rewards, values, bootstrap: float, gamma: float,
                   lam: float) -> np.ndarray:
    """A_t = sum_k (gamma lam)^k delta_{t+k} with the same bootstrap rule."""
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    T = rewards.shape[0]
    adv = np.empty(T)
    acc = 0.0
    next_value = bootstrap
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
        next_value = values[t]
    return adv


def bootstrap_value(traj: Trajectory, value_net: Mlp) -> float:
    """Timeouts bootstrap with V(s_T); failures and goal ends with 0."""
    if traj.termination == TERM_TIMEOUT:
        return float(value_net.value(traj.final_obs))
    return 0.0


# -- rollouts -------------------------------------------------------------------

def run_episode(env: Env, policy: GaussianPolicy, rng: np.random.Generator,
                horizon_steps: int | None = None) -> Trajectory:
    """Collect one full episode (no discriminator queries happen here)."""
    horizon = horizon_steps or env.horizon_steps
    state, goal, ball = env.reset(rng)
    obs_l, act_l, logp_l, rt_l, phi_l = [], [], [], [], [env.phi(state)]
    termination = TERM_TIMEOUT
    for t in range(horizon):
        obs = env.observe(state, goal, ball)
        action, logp = policy.sample(obs, rng)
        try:
            state2, ball2 = env.step(state, action, ball)
        except SimulationDiverged:
            termination = TERM_FAILURE
            break
        goal = env.task.update_goal(goal, env.model, state2, ball2)
        obs_l.append(obs)
        act_l.append(action)
        logp_l.append(logp)
        rt_l.append(env.task.reward(env.model, state2, goal, ball2))
        phi_l.append(env.phi(state2))
        state, ball = state2, ball2
        if env.terminated(state):
            termination = TERM_FAILURE
            break
        if env.resample_steps and (t + 1) % env.resample_steps == 0:
            goal = env.task.sample_goal(env.model, state, rng)
    T = len(obs_l)
    phis = np.asarray(phi_l)
    return Trajectory(
        obs=np.asarray(obs_l).reshape(T, -1) if T else np.zeros((0, env.obs_dim)),
        actions=np.asarray(act_l).reshape(T, -1),
        logps=np.asarray(logp_l, dtype=float),
        r_task=np.asarray(rt_l, dtype=float),
        phis_a=phis[:T],
        phis_b=phis[1:T + 1],
        final_obs=env.observe(state, goal, ball),
        termination=termination,
    )


_WORKER_ENV: Env | None = None


def _worker_init(env: Env):
    global _WORKER_ENV
    _WORKER_ENV = env


def _worker_episode(args):
    policy_arrays, sigma, entropy = args
    net = net_from_arrays(policy_arrays, "policy")
    policy = GaussianPolicy(net, sigma)
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    return run_episode(_WORKER_ENV, policy, rng)


def collect_trajectories(env: Env, policy: GaussianPolicy, min_samples: int,
                         seed: int, iteration: int,
                         pool: ProcessPoolExecutor | None = None,
                         workers: int = 1) -> list[Trajectory]:
    """Episodes in index order until the sample budget is covered.

    Episode content depends only on (seed, iteration, episode index) and the
    parameter snapshot, so worker count never changes the result.
    """
    out: list[Trajectory] = []
    total = 0
    ep = 0
    attempts = 0
    while total < min_samples:
        if pool is None:
            rng = phase_rng(seed, _PH_ROLLOUT, iteration, ep)
            batch = [run_episode(env, policy, rng)]
        else:
            n = max(workers, math.ceil((min_samples - total) / env.horizon_steps))
            arrays = net_to_arrays(policy.net, "policy")
            args = [(arrays, policy.sigma, [seed, _PH_ROLLOUT, iteration, ep + k])
                    for k in range(n)]
            batch = list(pool.map(_worker_episode, args))
        for traj in batch:
            ep += 1
            attempts += 1
            if traj.steps == 0:
                continue
            if total < min_samples:
                out.append(traj)
                total += traj.steps
        if attempts > 10_000:
            raise RuntimeError("rollouts keep diverging at episode start")
    return out


# -- PPO update -----------------------------------------------------------------

def ppo_update(policy: GaussianPolicy, value_net: Mlp, batch: dict,
               cfg: TrainerConfig, rng: np.random.Generator) -> dict:
    """One (or cfg.epochs) passes of clipped-ratio minibatch SGD.

    The policy loss is -mean min(rho A, clip(rho, 1 +- eps) A); the value loss
    is the squared error to the TD(lambda) targets. Sigma is never touched.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["logp_old"]
    adv = batch["adv"].copy()
    targets = batch["targets"]
    N = obs.shape[0]
    if cfg.advantage_norm and N > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    eps = cfg.clip_threshold
    mb = min(cfg.minibatch_size, N)
    p_step = cfg.resolved_policy_stepsize()
    v_step = cfg.resolved_value_stepsize()
    ratios, clipped, p_losses, v_losses = [], [], [], []
    for _ in range(cfg.epochs):
        perm = rng.permutation(N)
        for lo in range(0, N, mb):
            idx = perm[lo:lo + mb]
            B = idx.shape[0]
            o, a, lp0, ad, tg = obs[idx], actions[idx], logp_old[idx], adv[idx], targets[idx]

            mean, cache = policy.net.forward(o)
            logp = policy.log_prob(mean, a)
            rho = np.exp(logp - lp0)
            unclipped = rho * ad
            clip_term = np.clip(rho, 1.0 - eps, 1.0 + eps) * ad
            active = unclipped <= clip_term
            gmean = -(active * ad * rho)[:, None] * policy.dlogp_dmean(mean, a) / B
            gw, gb, _ = policy.net.backward(cache, gmean)
            pol_loss = -float(np.minimum(unclipped, clip_term).mean())
            if math.isfinite(pol_loss):
                sgd_momentum_step(policy.net, gw, gb, p_step, cfg.momentum)

            v, vcache = value_net.forward(o)
            err = v[:, 0] - tg
            gw, gb, _ = value_net.backward(vcache, (2.0 / B) * err[:, None])
            val_loss = float(np.mean(err**2))
            if math.isfinite(val_loss):
                sgd_momentum_step(value_net, gw, gb, v_step, cfg.momentum)

            ratios.append(float(rho.mean()))
            clipped.append(float(1.0 - active.mean()))
            p_losses.append(pol_loss)
            v_losses.append(val_loss)
    return {"mean_ratio": float(np.mean(ratios)),
            "clip_fraction": float(np.mean(clipped)),
            "policy_loss": float(np.mean(p_losses)),
            "value_loss": float(np.mean(v_losses))}


# -- trainer ---------------------------------------------------------------------

@dataclass
class TrainerState:
    policy: GaussianPolicy
    value_net: Mlp
    disc: Mlp
    replay: ReplayBuffer
    iteration: int = 0
    samples: int = 0


class Trainer:
    """Owns the nets, dataset, env, logs, and the iteration loop."""

    def __init__(self, cfg: TrainerConfig, character: CharacterModel | None = None,
                 dataset: MotionDataset | None = None):
        self.cfg = cfg
        self.character = character or get_character(cfg.character)
        if dataset is None:
            dataset = _load_dataset_from_config(cfg, self.character)
        self.dataset = dataset
        self.encoder = dataset.encoder(normalize=cfg.normalize_obs)
        task = make_task(cfg.task, cfg.task_params())
        self.env = Env(self.character, task, dataset, self.encoder,
                       cfg.sim_config(),
                       EnvConfig(cfg.horizon_s, cfg.goal_resample_s,
                                 cfg.early_termination))
        self.state = self._init_state()
        self.disc_cfg = DiscConfig(w_gp=cfg.resolved_w_gp(),
                                   batch_size=cfg.disc_batch,
                                   stepsize=cfg.disc_stepsize,
                                   momentum=cfg.momentum,
                                   updates=cfg.resolved_disc_updates())
        self._pool = None

    def _init_state(self) -> TrainerState:
        cfg = self.cfg
        hidden = cfg.hidden_sizes()
        obs_dim = self.env.obs_dim
        act_dim = self.env.action_dim
        phi_dim = self.dataset.obs_dim
        pol = Mlp(MlpSpec(obs_dim, hidden, act_dim),
                  phase_rng(cfg.seed, _PH_INIT, 0), out_scale=cfg.policy_out_scale)
        val = Mlp(MlpSpec(obs_dim, hidden, 1), phase_rng(cfg.seed, _PH_INIT, 1))
        disc = Mlp(MlpSpec(2 * phi_dim, hidden, 1), phase_rng(cfg.seed, _PH_INIT, 2))
        policy = GaussianPolicy(pol, cfg.sigma)
        replay = ReplayBuffer(cfg.replay_capacity, phi_dim)
        return TrainerState(policy, val, disc, replay)

    # -- one iteration -----------------------------------------------------------

    def run_iteration(self) -> dict:
        cfg = self.cfg
        st = self.state
        it = st.iteration
        trajs = collect_trajectories(self.env, st.policy, cfg.samples_per_iter,
                                     cfg.seed, it, self._pool,
                                     cfg.resolved_workers())
        w_task = cfg.resolved_w_task()
        norm = self.encoder.normalize
        for traj in trajs:
            x = np.concatenate((norm(traj.phis_a), norm(traj.phis_b)), axis=1)
            d = st.disc(x)[:, 0]
            traj.r_style = style_reward(d)
            traj.rewards = combine_rewards(traj.r_task, traj.r_style,
                                           w_task, cfg.w_style)
            st.replay.push(traj.phis_a, traj.phis_b)
        disc_diag = update_discriminator(st.disc, self.dataset, st.replay,
                                         self.disc_cfg,
                                         phase_rng(cfg.seed, _PH_DISC, it),
                                         normalizer=norm)
        gamma = cfg.resolved_gamma()
        obs, actions, logps, advs, targets = [], [], [], [], []
        for traj in trajs:
            traj.values = np.asarray(st.value_net.value(traj.obs), dtype=float)
            boot = bootstrap_value(traj, st.value_net)
            targets.append(td_lambda_targets(traj.rewards, traj.values, boot,
                                             gamma, cfg.lam))
            advs.append(gae_advantages(traj.rewards, traj.values, boot,
                                       gamma, cfg.lam))
            obs.append(traj.obs)
            actions.append(traj.actions)
            logps.append(traj.logps)
        batch = {"obs": np.concatenate(obs), "actions": np.concatenate(actions),
                 "logp_old": np.concatenate(logps), "adv": np.concatenate(advs),
                 "targets": np.concatenate(targets)}
        ppo_diag = ppo_update(st.policy, st.value_net, batch, cfg,
                              phase_rng(cfg.seed, _PH_PPO, it))

        n_steps = batch["obs"].shape[0]
        st.samples += n_steps
        st.iteration += 1
        horizon = self.env.horizon_steps
        row = {
            "iteration": st.iteration,
            "samples": st.samples,
            "mean_return": float(np.mean([t.rewards.sum() for t in trajs])),
            "mean_task_return": float(np.mean(
                [t.r_task.sum() / horizon for t in trajs])),
            "mean_style_reward": float(np.mean(
                np.concatenate([t.r_style for t in trajs]))),
            "mean_d_real": disc_diag["mean_d_real"],
            "mean_d_fake": disc_diag["mean_d_fake"],
            "disc_penalty": disc_diag["penalty"],
            "disc_loss": disc_diag["disc_loss"],
        }
        row.update({f"_{k}": v for k, v in ppo_diag.items()})
        return row

    # -- loop with logging ---------------------------------------------------------

    def train(self, out_dir: str | None = None, log=print) -> str:
        cfg = self.cfg
        out = out_dir or cfg.out_dir
        os.makedirs(out, exist_ok=True)
        csv_path = os.path.join(out, "training.csv")
        timing_path = os.path.join(out, "timing.csv")
        fresh = self.state.iteration == 0
        mode = "w" if fresh else "a"
        workers = cfg.resolved_workers()
        if workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=workers,
                                             initializer=_worker_init,
                                             initargs=(self.env,))
        try:
            with open(csv_path, mode, newline="") as fh, \
                    open(timing_path, mode, newline="") as th:
                writer = csv.writer(fh)
                twriter = csv.writer(th)
                if fresh:
                    writer.writerow(CSV_COLUMNS)
                    twriter.writerow(("iteration", "wall_seconds"))
                while self._keep_going():
                    t0 = time.perf_counter()
                    row = self.run_iteration()
                    wall = time.perf_counter() - t0
                    writer.writerow(_format_row(row))
                    fh.flush()
                    twriter.writerow((row["iteration"], f"{wall:.3f}"))
                    th.flush()
                    log(f"iter {row['iteration']} samples {row['samples']} "
                        f"return {row['mean_return']:.3f} "
                        f"style {row['mean_style_reward']:.3f} "
                        f"D(real) {row['mean_d_real']:.2f} "
                        f"D(fake) {row['mean_d_fake']:.2f} [{wall:.1f}s]")
                    if (cfg.checkpoint_every > 0
                            and self.state.iteration % cfg.checkpoint_every == 0):
                        self.save_checkpoint(os.path.join(
                            out, f"checkpoint_iter{self.state.iteration:06d}.npz"))
        finally:
            if self._pool is not None:
                self._pool.shutdown()
                self._pool = None
        final = os.path.join(out, "final.npz")
        self.save_checkpoint(final)
        return final

    def _keep_going(self) -> bool:
        cfg = self.cfg
        if cfg.max_iterations and self.state.iteration >= cfg.max_iterations:
            return False
        return self.state.samples < cfg.total_samples

    def real_input_grad_norm(self, count: int = 256) -> float:
        """mean ||grad_phi D||^2 on dataset samples (gradient-penalty probe)."""
        return disc_real_input_grad_norm(
            self.state.disc, self.dataset, count,
            phase_rng(self.cfg.seed, _PH_DISC, self.state.iteration, 999),
            normalizer=self.encoder.normalize)

    # -- checkpointing ---------------------------------------------------------------

    def save_checkpoint(self, path: str) -> None:
        st = self.state
        data = {"version": np.array([CHECKPOINT_VERSION]),
                "counters": np.array([st.iteration, st.samples], dtype=np.int64),
                "sigma": st.policy.sigma,
                "phi_mean": self.dataset.phi_mean,
                "phi_std": self.dataset.phi_std,
                "config_json": np.array(json.dumps(self.cfg.to_dict())),
                "character_json": np.array(json.dumps(self.character.to_dict())),
                "package_version": np.array(__version__)}
        data.update(net_to_arrays(st.policy.net, "policy"))
        data.update(net_to_arrays(st.value_net, "value"))
        data.update(net_to_arrays(st.disc, "disc"))
        data.update(st.replay.state_arrays())
        tmp = path + ".tmp.npz"
        np.savez(tmp, **data)
        os.replace(tmp, path)

    @classmethod
    def from_checkpoint(cls, path: str, cfg_override: TrainerConfig | None = None
                        ) -> "Trainer":
        data = load_checkpoint_arrays(path)
        cfg = cfg_override or TrainerConfig(**json.loads(str(data["config_json"])))
        character = CharacterModel.from_dict(json.loads(str(data["character_json"])))
        trainer = cls(cfg, character=character)
        trainer.load_state_arrays(data)
        return trainer

    def load_state_arrays(self, data: dict) -> None:
        if int(data["version"][0]) != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {data['version']}")
        policy_net = net_from_arrays(data, "policy")
        value_net = net_from_arrays(data, "value")
        disc = net_from_arrays(data, "disc")
        if policy_net.spec.in_dim != self.env.obs_dim or \
                policy_net.spec.out_dim != self.env.action_dim:
            raise CheckpointMismatch(
                f"policy spec {policy_net.spec} does not match the environment "
                f"(obs {self.env.obs_dim}, act {self.env.action_dim})")
        if disc.spec.in_dim != 2 * self.dataset.obs_dim:
            raise CheckpointMismatch(
                f"discriminator input {disc.spec.in_dim} does not match the "
                f"dataset features (2 x {self.dataset.obs_dim})")
        if not np.allclose(data["phi_mean"], self.dataset.phi_mean):
            raise CheckpointMismatch("dataset statistics differ from checkpoint")
        it, samples = (int(v) for v in data["counters"])
        self.state = TrainerState(
            GaussianPolicy(policy_net, np.array(data["sigma"], dtype=float)),
            value_net, disc, ReplayBuffer.from_state_arrays(data),
            iteration=it, samples=samples)


def load_checkpoint_arrays(path: str) -> dict:
    try:
        with np.load(path, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointMismatch(f"cannot read checkpoint '{path}': {exc}") from exc


def _load_dataset_from_config(cfg: TrainerConfig, character: CharacterModel
                              ) -> MotionDataset:
    if not cfg.dataset:
        raise FileNotFoundError("no dataset configured (set `dataset`)")
    if not os.path.exists(cfg.dataset):
        raise FileNotFoundError(f"dataset path does not exist: {cfg.dataset}")
    if cfg.dataset.endswith(".json") and _looks_like_manifest(cfg.dataset):
        paths, weights = load_manifest(cfg.dataset)
        missing = [p for p in paths if not os.path.exists(p)]
        if missing:
            raise FileNotFoundError(f"manifest clip missing: {missing[0]}")
        return load_dataset(paths, character,
                            cfg.resolved_include_velocities(), weights)
    return MotionDataset([load_clip(cfg.dataset)], character,
                         cfg.resolved_include_velocities())


def _looks_like_manifest(path: str) -> bool:
    with open(path) as fh:
        head = fh.read(64).lstrip()
    return head.startswith("[")


def _format_row(row: dict) -> list[str]:
    out = []
    for key in CSV_COLUMNS:
        v = row[key]
        out.append(str(v) if isinstance(v, int) else f"{v:.10g}")
    return out


def train(cfg: TrainerConfig, out_dir: str | None = None, log=print,
          resume: str | None = None) -> str:
    """Build a trainer (or resume one) and run to the budget; returns the
    final checkpoint path."""
    if resume:
        trainer = Trainer.from_checkpoint(resume, cfg_override=cfg)
    else:
        trainer = Trainer(cfg)
    return trainer.train(out_dir=out_dir, log=log)
