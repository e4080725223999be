"""Deterministic planar articulated rigid-body simulation.

Dynamics are exact for the tree model: the mass matrix is assembled from link
Jacobians (M = sum m J^T J + I w w^T) and velocity-product terms come from the
analytic Jacobian time derivatives. Ground contact is a regularized
spring-damper penalty with Coulomb-capped viscous friction. Control runs on
two rates: PD targets are held fixed while the integrator takes
round(sim_hz / ctrl_hz) substeps of symplectic Euler per control period.

step_control normally executes in the JIT kernel (_simjit.step_core); the
functions in this module implement the same quantities in plain numpy and
double as the reference path (fast=False) that the equivalence tests compare
against. Everything is a pure function of its inputs; identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _simjit
from .character import CharacterModel, PackedModel
from .geom import wrap_angle

GRAVITY_DEFAULT = 9.81


@dataclass(frozen=True)
class SimConfig:
    ctrl_hz: float = 30.0
    sim_hz: float = 1200.0
    gravity: float = GRAVITY_DEFAULT
    contact_kn: float = 2.0e4    # N/m ground normal stiffness
    contact_dn: float = 2.0e2    # N s/m ground normal damping
    contact_mu: float = 0.8      # Coulomb friction coefficient
    contact_kt: float = 1.0e3    # N s/m tangential regularization
    limit_k: float = 300.0       # N m/rad joint-limit stiffness
    limit_d: float = 5.0         # N m s/rad joint-limit damping
    qd_max: float = 1.0e3        # divergence guard on any velocity component

    @property
    def n_substeps(self) -> int:
        return int(round(self.sim_hz / self.ctrl_hz))

    @property
    def dt(self) -> float:
        return 1.0 / self.sim_hz

    @property
    def ctrl_dt(self) -> float:
        return 1.0 / self.ctrl_hz


@dataclass
class SimState:
    """Generalized coordinates (root_x, root_y, root_rot, joint angles...)."""
    q: np.ndarray
    qdot: np.ndarray
    sim_time: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.q.shape != self.qdot.shape:
            raise ValueError("q and qdot dimensions differ")

    def copy(self) -> "SimState":
        return SimState(self.q.copy(), self.qdot.copy(), self.sim_time)


@dataclass(frozen=True)
class BallModel:
    """Passive rigid disc used by the dribble task."""
    radius: float = 0.11
    mass: float = 0.43
    inertia: float = field(default=None)

    def __post_init__(self):
        if self.inertia is None:
            object.__setattr__(self, "inertia", 0.5 * self.mass * self.radius**2)


@dataclass
class BallState:
    q: np.ndarray     # (x, y, rotation)
    qdot: np.ndarray  # (vx, vy, omega)

    def copy(self) -> "BallState":
        return BallState(np.asarray(self.q, float).copy(),
                         np.asarray(self.qdot, float).copy())

    @classmethod
    def resting(cls, model: BallModel, x: float) -> "BallState":
        return cls(np.array([x, model.radius, 0.0]), np.zeros(3))


class SimulationDiverged(RuntimeError):
    """Velocity blow-up or non-finite state; carries the last valid state."""

    def __init__(self, last_state: SimState, last_ball: BallState | None = None):
        super().__init__("simulation diverged")
        self.last_state = last_state
        self.last_ball = last_ball


# -- kinematic scratch (numpy reference path) --------------------------------

class _Kin:
    """Per-(q, qd) link frames, velocities, and centers of mass."""

    __slots__ = ("ox", "oy", "phi", "vox", "voy", "phid", "cx", "cy", "vcx", "vcy")

    def __init__(self, pm: PackedModel, q, qd):
        L = pm.parent.shape[0]
        self.ox = np.empty(L)
        self.oy = np.empty(L)
        self.phi = np.empty(L)
        self.vox = np.empty(L)
        self.voy = np.empty(L)
        self.phid = np.empty(L)
        self.ox[0], self.oy[0], self.phi[0] = q[0], q[1], q[2]
        self.vox[0], self.voy[0], self.phid[0] = qd[0], qd[1], qd[2]
        for i in range(1, L):
            p = pm.parent[i]
            c, s = math.cos(self.phi[p]), math.sin(self.phi[p])
            rx = c * pm.attach[i, 0] - s * pm.attach[i, 1]
            ry = s * pm.attach[i, 0] + c * pm.attach[i, 1]
            self.ox[i] = self.ox[p] + rx
            self.oy[i] = self.oy[p] + ry
            self.phi[i] = self.phi[p] + pm.mount[i] + q[3 + i - 1]
            self.vox[i] = self.vox[p] - self.phid[p] * ry
            self.voy[i] = self.voy[p] + self.phid[p] * rx
            self.phid[i] = self.phid[p] + qd[3 + i - 1]
        c = np.cos(self.phi)
        s = np.sin(self.phi)
        rx = c * pm.com[:, 0] - s * pm.com[:, 1]
        ry = s * pm.com[:, 0] + c * pm.com[:, 1]
        self.cx = self.ox + rx
        self.cy = self.oy + ry
        self.vcx = self.vox - self.phid * ry
        self.vcy = self.voy + self.phid * rx

    def site(self, link: int, off) -> tuple[np.ndarray, np.ndarray]:
        """World position and velocity of a material point on a link."""
        i = link
        c, s = math.cos(self.phi[i]), math.sin(self.phi[i])
        rx = c * off[0] - s * off[1]
        ry = s * off[0] + c * off[1]
        pos = np.array([self.ox[i] + rx, self.oy[i] + ry])
        vel = np.array([self.vox[i] - self.phid[i] * ry,
                        self.voy[i] + self.phid[i] * rx])
        return pos, vel


def _kin(model: CharacterModel | PackedModel, q, qd) -> tuple[PackedModel, _Kin]:
    pm = model if isinstance(model, PackedModel) else model.packed()
    return pm, _Kin(pm, np.asarray(q, float), np.asarray(qd, float))


def _link_jacobians(pm: PackedModel, k: _Kin):
    """COM Jacobians Jx, Jy and angular rows w, each (L, D)."""
    L = pm.parent.shape[0]
    J = pm.anc.shape[1]
    D = 3 + J
    Jx = np.zeros((L, D))
    Jy = np.zeros((L, D))
    w = np.zeros((L, D))
    Jx[:, 0] = 1.0
    Jy[:, 1] = 1.0
    Jx[:, 2] = -(k.cy - k.oy[0])
    Jy[:, 2] = k.cx - k.ox[0]
    w[:, 2] = 1.0
    for j in range(J):
        on = pm.anc[:, j]
        Jx[on, 3 + j] = -(k.cy[on] - k.oy[j + 1])
        Jy[on, 3 + j] = k.cx[on] - k.ox[j + 1]
        w[on, 3 + j] = 1.0
    return Jx, Jy, w


def _point_jacobian(pm: PackedModel, k: _Kin, link: int, pos) -> tuple[np.ndarray, np.ndarray]:
    D = 3 + pm.anc.shape[1]
    jx = np.zeros(D)
    jy = np.zeros(D)
    jx[0] = 1.0
    jy[1] = 1.0
    jx[2] = -(pos[1] - k.oy[0])
    jy[2] = pos[0] - k.ox[0]
    for j in range(pm.anc.shape[1]):
        if pm.anc[link, j]:
            jx[3 + j] = -(pos[1] - k.oy[j + 1])
            jy[3 + j] = pos[0] - k.ox[j + 1]
    return jx, jy


# -- dynamics quantities ------------------------------------------------------

def mass_matrix(model: CharacterModel | PackedModel, q) -> np.ndarray:
    pm, k = _kin(model, q, np.zeros_like(np.asarray(q, float)))
    Jx, Jy, w = _link_jacobians(pm, k)
    return (Jx.T * pm.mass) @ Jx + (Jy.T * pm.mass) @ Jy + (w.T * pm.inertia) @ w


def dT_dq(model: CharacterModel | PackedModel, q, qd) -> np.ndarray:
    """Configuration gradient of kinetic energy (the momentum-form force)."""
    pm, k = _kin(model, q, qd)
    D = 3 + pm.anc.shape[1]
    s = np.zeros(D)
    for i in range(pm.parent.shape[0]):
        m = pm.mass[i]
        s[2] += m * (k.vcx[i] * k.voy[0] - k.vcy[i] * k.vox[0])
        for j in range(pm.anc.shape[1]):
            if pm.anc[i, j]:
                s[3 + j] += m * (k.vcx[i] * k.voy[j + 1] - k.vcy[i] * k.vox[j + 1])
    return s


def bias_forces(model: CharacterModel | PackedModel, q, qd) -> np.ndarray:
    """Velocity-product term C(q, qd) in M(q) qdd = Q_total - C."""
    pm, k = _kin(model, q, qd)
    Jx, Jy, _ = _link_jacobians(pm, k)
    D = Jx.shape[1]
    bias = np.zeros(D)
    for i in range(pm.parent.shape[0]):
        bax = bay = 0.0
        pivots = [(2, 0)] + [(3 + j, j + 1)
                             for j in range(pm.anc.shape[1]) if pm.anc[i, j]]
        for dof, piv in pivots:
            bax += qd[dof] * -(k.vcy[i] - k.voy[piv])
            bay += qd[dof] * (k.vcx[i] - k.vox[piv])
        bias += pm.mass[i] * (Jx[i] * bax + Jy[i] * bay)
    return bias


def gravity_generalized(model: CharacterModel | PackedModel, q,
                        gravity: float = GRAVITY_DEFAULT) -> np.ndarray:
    pm, k = _kin(model, q, np.zeros_like(np.asarray(q, float)))
    _, Jy, _ = _link_jacobians(pm, k)
    return -(pm.mass * gravity) @ Jy


def kinetic_energy(model: CharacterModel, q, qd) -> float:
    pm, k = _kin(model, q, qd)
    lin = 0.5 * np.sum(pm.mass * (k.vcx**2 + k.vcy**2))
    ang = 0.5 * np.sum(pm.inertia * k.phid**2)
    return float(lin + ang)


def potential_energy(model: CharacterModel, q, gravity: float = GRAVITY_DEFAULT) -> float:
    pm, k = _kin(model, q, np.zeros_like(np.asarray(q, float)))
    return float(np.sum(pm.mass * gravity * k.cy))


def linear_momentum(model: CharacterModel, q, qd) -> np.ndarray:
    pm, k = _kin(model, q, qd)
    return np.array([np.sum(pm.mass * k.vcx), np.sum(pm.mass * k.vcy)])


def com_velocity(model: CharacterModel, state: SimState) -> np.ndarray:
    pm, k = _kin(model, state.q, state.qdot)
    total = pm.mass.sum()
    return np.array([np.sum(pm.mass * k.vcx), np.sum(pm.mass * k.vcy)]) / total


def site_states(model: CharacterModel, state: SimState, sites) -> tuple[np.ndarray, np.ndarray]:
    """World positions and velocities for a list of SitePoints."""
    pm, k = _kin(model, state.q, state.qdot)
    pos = np.empty((len(sites), 2))
    vel = np.empty((len(sites), 2))
    for idx, pt in enumerate(sites):
        pos[idx], vel[idx] = k.site(pt.link, pt.offset)
    return pos, vel


def link_states(model: CharacterModel, state: SimState):
    """Per-link COM positions (L,2), angles (L,), COM velocities (L,2), and
    angular velocities (L,) — the raw material of the policy state features."""
    pm, k = _kin(model, state.q, state.qdot)
    return (np.stack((k.cx, k.cy), axis=1), k.phi.copy(),
            np.stack((k.vcx, k.vcy), axis=1), k.phid.copy())


# -- spec operations ----------------------------------------------------------

def pd_torques(state: SimState, action, model: CharacterModel) -> np.ndarray:
    """tau_j = clamp(kp (q*_j - q_j) - kd qd_j, +-limit_j).

    Continuous (unlimited rotor) joints wrap the position error to (-pi, pi].
    """
    action = np.asarray(action, dtype=float)
    if action.shape != (model.n_joints,):
        raise ValueError(f"action must have one target per joint, got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError("PD targets must be finite")
    pm = model.packed()
    err = action - state.q[3:]
    err = np.where(pm.wrap_pd, wrap_angle(err), err)
    tau = pm.kp * err - pm.kd * state.qdot[3:]
    return np.clip(tau, -pm.tau_lim, pm.tau_lim)


def joint_limit_torques(state: SimState, model: CharacterModel, cfg: SimConfig) -> np.ndarray:
    pm = model.packed()
    qj = state.q[3:]
    qdj = state.qdot[3:]
    tau = np.zeros(model.n_joints)
    hi = qj > pm.q_hi
    lo = qj < pm.q_lo
    tau[hi] = -cfg.limit_k * (qj[hi] - pm.q_hi[hi]) - cfg.limit_d * qdj[hi]
    tau[lo] = -cfg.limit_k * (qj[lo] - pm.q_lo[lo]) - cfg.limit_d * qdj[lo]
    return tau


def contact_forces(state: SimState, model: CharacterModel,
                   cfg: SimConfig | None = None) -> np.ndarray:
    """World-frame ground reaction force at each contact point, (C, 2).

    Zero outside penetration; the normal component is never negative.
    """
    cfg = cfg or SimConfig()
    pm, k = _kin(model, state.q, state.qdot)
    forces = np.zeros((len(model.contact_points), 2))
    for idx, pt in enumerate(model.contact_points):
        pos, vel = k.site(pt.link, pt.offset)
        if pos[1] < 0.0:
            fn = max(cfg.contact_kn * (-pos[1]) - cfg.contact_dn * vel[1], 0.0)
            ft = -min(cfg.contact_mu * fn, cfg.contact_kt * abs(vel[0])) * np.sign(vel[0])
            forces[idx] = (ft, fn)
    return forces


def contact_generalized(state: SimState, model: CharacterModel,
                        cfg: SimConfig | None = None) -> np.ndarray:
    cfg = cfg or SimConfig()
    pm, k = _kin(model, state.q, state.qdot)
    forces = contact_forces(state, model, cfg)
    Q = np.zeros(model.n_dof)
    for idx, pt in enumerate(model.contact_points):
        if forces[idx, 0] == 0.0 and forces[idx, 1] == 0.0:
            continue
        pos, _ = k.site(pt.link, pt.offset)
        jx, jy = _point_jacobian(pm, k, pt.link, pos)
        Q += jx * forces[idx, 0] + jy * forces[idx, 1]
    return Q


def forward_dynamics(state: SimState, model: CharacterModel,
                     joint_torques=None, external_generalized=None,
                     gravity: float = GRAVITY_DEFAULT) -> np.ndarray:
    """Generalized accelerations from M(q) qdd = Q_total - C(q, qd).

    Q_total is gravity plus per-joint torques plus any extra generalized force
    the caller supplies (contact loads enter through contact_generalized).
    A fixed-root model solves the joint block only.
    """
    Q = gravity_generalized(model, state.q, gravity)
    if joint_torques is not None:
        jt = np.asarray(joint_torques, dtype=float)
        if jt.shape != (model.n_joints,):
            raise ValueError("joint torque vector has wrong dimension")
        Q[3:] += jt
    if external_generalized is not None:
        Q = Q + np.asarray(external_generalized, dtype=float)
    M = mass_matrix(model, state.q)
    rhs = Q - bias_forces(model, state.q, state.qdot)
    qdd = np.zeros(model.n_dof)
    if model.fixed_root:
        if model.n_dof > 3:
            qdd[3:] = _solve_spd(M[3:, 3:], rhs[3:])
    else:
        qdd = _solve_spd(M, rhs)
    return qdd


def _solve_spd(M, rhs):
    try:
        c = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("mass matrix is not positive definite") from exc
    return np.linalg.solve(c.T, np.linalg.solve(c, rhs))


# -- control-rate stepping ----------------------------------------------------

_FAST_DEFAULT = _simjit.HAVE_NUMBA and os.environ.get("AMP2D_NO_NUMBA", "") == ""

_NO_BALL = (np.zeros(3), np.zeros(3), 1.0, 1.0, 1.0)


def _ball_forces_numpy(pm, k, model, cfg, ball_model, bq, bv, Q):
    """Character<->ball coupling plus ball gravity/ground; mirrors the kernel."""
    fb = np.zeros(3)
    R = ball_model.radius
    for pt in model.contact_points:
        pos, vel = k.site(pt.link, pt.offset)
        d = pos - bq[:2]
        dist2 = float(d @ d)
        if dist2 >= R * R or dist2 <= 1e-16:
            continue
        dist = math.sqrt(dist2)
        n = d / dist
        pen = R - dist
        vs = np.array([bv[0] - bv[2] * d[1], bv[1] + bv[2] * d[0]])
        rv = vel - vs
        vn = float(rv @ n)
        fn = max(cfg.contact_kn * pen - cfg.contact_dn * vn, 0.0)
        t = np.array([-n[1], n[0]])
        vt = float(rv @ t)
        ft = -min(cfg.contact_mu * fn, cfg.contact_kt * abs(vt)) * np.sign(vt)
        f = fn * n + ft * t
        jx, jy = _point_jacobian(pm, k, pt.link, pos)
        Q += jx * f[0] + jy * f[1]
        fb[0] -= f[0]
        fb[1] -= f[1]
        fb[2] -= d[0] * f[1] - d[1] * f[0]
    fb[1] -= ball_model.mass * cfg.gravity
    pen = R - bq[1]
    if pen > 0.0:
        vcx = bv[0] + bv[2] * R
        fn = max(cfg.contact_kn * pen - cfg.contact_dn * bv[1], 0.0)
        ft = -min(cfg.contact_mu * fn, cfg.contact_kt * abs(vcx)) * np.sign(vcx)
        fb[0] += ft
        fb[1] += fn
        fb[2] += R * ft
    return fb


def _step_numpy(state: SimState, action, model: CharacterModel, cfg: SimConfig,
                ball_model: BallModel | None, ball_state: BallState | None):
    """Reference implementation of the control step (same algorithm, numpy)."""
    pm = model.packed()
    D = model.n_dof
    free = slice(3, D) if model.fixed_root else slice(0, D)
    q = state.q.copy()
    qd = state.qdot.copy()
    if model.fixed_root:
        qd[:3] = 0.0
    bq = ball_state.q.copy() if ball_state is not None else np.zeros(3)
    bv = ball_state.qdot.copy() if ball_state is not None else np.zeros(3)
    valid = (q.copy(), qd.copy(), bq.copy(), bv.copy())
    dt = cfg.dt

    p = (mass_matrix(pm, q) @ qd)[free]
    for _ in range(cfg.n_substeps):
        M = mass_matrix(pm, q)[free, free]
        qd[free] = _solve_spd(M, p)
        if (not np.all(np.isfinite(qd)) or np.any(np.abs(qd) > cfg.qd_max)
                or not np.all(np.isfinite(q))):
            return (*valid, _simjit.STATUS_DIVERGED)
        valid = (q.copy(), qd.copy(), bq.copy(), bv.copy())
        cur = SimState(q, qd)
        Q = dT_dq(pm, q, qd) + gravity_generalized(pm, q, cfg.gravity)
        Q[3:] += pd_torques(cur, action, model) + joint_limit_torques(cur, model, cfg)
        Q += contact_generalized(cur, model, cfg)
        if ball_model is not None:
            _, k = _kin(pm, q, qd)
            fb = _ball_forces_numpy(pm, k, model, cfg, ball_model, bq, bv, Q)
            bv = bv + dt * fb / np.array([ball_model.mass, ball_model.mass,
                                          ball_model.inertia])
            bq = bq + dt * bv
        p = p + dt * Q[free]
        q[free] = q[free] + dt * _solve_spd(M, p)
    M = mass_matrix(pm, q)[free, free]
    qd[free] = _solve_spd(M, p)
    if (not np.all(np.isfinite(qd)) or np.any(np.abs(qd) > cfg.qd_max)
            or not np.all(np.isfinite(q))):
        return (*valid, _simjit.STATUS_DIVERGED)
    return q, qd, bq, bv, _simjit.STATUS_OK


def _run_core(state: SimState, action, model: CharacterModel, cfg: SimConfig,
              ball_model: BallModel | None, ball_state: BallState | None,
              fast: bool):
    action = np.asarray(action, dtype=float)
    if action.shape != (model.n_joints,):
        raise ValueError(f"action must have one target per joint, got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError("PD targets must be finite")
    if not (fast and _simjit.HAVE_NUMBA):
        return _step_numpy(state, action, model, cfg, ball_model, ball_state)
    pm = model.packed()
    if ball_model is not None:
        ball_args = (True, ball_state.q, ball_state.qdot,
                     ball_model.radius, ball_model.mass, ball_model.inertia)
    else:
        ball_args = (False, *_NO_BALL)
    return _simjit.step_core(
        state.q, state.qdot, action,
        pm.parent, pm.attach, pm.mount, pm.com, pm.mass, pm.inertia, pm.anc,
        pm.kp, pm.kd, pm.tau_lim, pm.q_lo, pm.q_hi, pm.wrap_pd,
        pm.cp_link, pm.cp_off,
        pm.fixed_root,
        cfg.n_substeps, cfg.dt, cfg.gravity,
        cfg.contact_kn, cfg.contact_dn, cfg.contact_mu, cfg.contact_kt,
        cfg.limit_k, cfg.limit_d, cfg.qd_max,
        *ball_args)


def step_control(state: SimState, action, model: CharacterModel,
                 cfg: SimConfig | None = None, fast: bool | None = None) -> SimState:
    """Advance one control period (n_substeps at dt), PD target held fixed.

    Raises SimulationDiverged carrying the last valid state when any substep
    produces a non-finite or guard-exceeding velocity.
    """
    cfg = cfg or SimConfig()
    if fast is None:
        fast = _FAST_DEFAULT
    q, qd, _, _, status = _run_core(state, action, model, cfg, None, None, fast)
    if status == _simjit.STATUS_SINGULAR:
        raise RuntimeError("mass matrix is not positive definite")
    if status == _simjit.STATUS_DIVERGED:
        raise SimulationDiverged(SimState(q, qd, state.sim_time))
    return SimState(q, qd, state.sim_time + cfg.ctrl_dt)


def step_control_with_ball(state: SimState, ball_state: BallState, action,
                           model: CharacterModel, ball_model: BallModel,
                           cfg: SimConfig | None = None,
                           fast: bool | None = None) -> tuple[SimState, BallState]:
    """step_control with a passive ball coupled through the contact points."""
    cfg = cfg or SimConfig()
    if fast is None:
        fast = _FAST_DEFAULT
    q, qd, bq, bv, status = _run_core(state, action, model, cfg, ball_model,
                                      ball_state, fast)
    if status == _simjit.STATUS_SINGULAR:
        raise RuntimeError("mass matrix is not positive definite")
    if status == _simjit.STATUS_DIVERGED:
        raise SimulationDiverged(SimState(q, qd, state.sim_time), BallState(bq, bv))
    return (SimState(q, qd, state.sim_time + cfg.ctrl_dt), BallState(bq, bv))


def check_early_termination(state: SimState, model: CharacterModel,
                            termination_disabled: bool = False) -> bool:
    """True iff a non-foot contact point is below ground (unless disabled)."""
    if termination_disabled:
        return False
    if not np.all(np.isfinite(state.q)):
        return True
    heights = model.contact_positions(state.q)[:, 1]
    non_foot = np.array([not p.is_foot for p in model.contact_points], dtype=bool)
    return bool(np.any(heights[non_foot] < 0.0))
