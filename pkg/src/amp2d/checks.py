"""Independent-oracle self checks.

Each suite re-derives the quantity under test by a method that shares no code
with the implementation (central finite differences, brute-force sums,
exhaustive path enumeration, closed forms) and reports the worst observed
error against its gate. The CLI `check` command prints these as a pass/fail
table; the test suite asserts the same gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sim
from .character import CharacterModel, Joint, Link, SitePoint, make_walker5
from .evaluate import dtw_align, pose_error
from .nets import GaussianPolicy, Mlp, MlpSpec
from .prior import DiscConfig, ReplayBuffer, update_discriminator
from .rl import gae_advantages, td_lambda_targets
from .sim import SimConfig, SimState


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    gate: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.measured:.3e} (gate {self.gate:.0e})"


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / scale))


# -- gradient oracles -----------------------------------------------------------

def _sample_away_from_kinks(net: Mlp, rng, margin: float = 1e-3) -> np.ndarray:
    """A point whose pre-activations all clear the rectifier kink by margin."""
    for _ in range(1000):
        x = rng.normal(size=net.spec.in_dim)
        a = x[None, :]
        ok = True
        for li in range(net.n_layers - 1):
            z = a @ net.weights[li].T + net.biases[li]
            if np.any(np.abs(z) < margin):
                ok = False
                break
            a = np.maximum(z, 0.0)
        if ok:
            return x
    raise RuntimeError("could not sample a kink-free point")


def _all_params(net: Mlp):
    for li in range(net.n_layers):
        yield ("w", li, net.weights[li])
        yield ("b", li, net.biases[li])


def _fd_param(net: Mlp, scalar_fn, h: float = 1e-5):
    """Central finite difference of scalar_fn() w.r.t. every parameter."""
    grads = []
    for _, _, arr in _all_params(net):
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = scalar_fn()
            flat[i] = orig - h
            dn = scalar_fn()
            flat[i] = orig
            gf[i] = (up - dn) / (2.0 * h)
        grads.append(g)
    return grads


def check_grads(seed: int = 0, points: int = 100) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    net = Mlp(MlpSpec(5, (10, 8), 3), rng)
    scalar = Mlp(MlpSpec(6, (12, 9), 1), rng)

    worst_bwd = worst_ig = worst_gp = 0.0
    for _ in range(points):
        # backward: loss = sum(G * y) for a fixed random projection G
        x = _sample_away_from_kinks(net, rng)
        G = rng.normal(size=net.spec.out_dim)
        y, cache = net.forward(x)
        gw, gb, _ = net.backward(cache, G)
        fd = _fd_param(net, lambda: float(net(x) @ G))
        analytic = []
        for li in range(net.n_layers):
            analytic.append(gw[li])
            analytic.append(gb[li])
        worst_bwd = max(worst_bwd, _rel_err(np.concatenate([a.ravel() for a in analytic]),
                                            np.concatenate([f.ravel() for f in fd])))

        # input gradient of the scalar net
        xs = _sample_away_from_kinks(scalar, rng)
        g = scalar.input_gradient(xs)
        fd_in = np.zeros_like(xs)
        h = 1e-5
        for i in range(xs.size):
            xp = xs.copy(); xp[i] += h
            xm = xs.copy(); xm[i] -= h
            fd_in[i] = (float(scalar(xp)[0]) - float(scalar(xm)[0])) / (2.0 * h)
        worst_ig = max(worst_ig, _rel_err(g, fd_in))

        # double backprop: parameter grads of mean ||grad_x D||^2
        xb = np.stack([_sample_away_from_kinks(scalar, rng) for _ in range(2)])
        penalty, gwp, gbp = scalar.grad_norm_param_grads(xb)
        fd = _fd_param(scalar,
                       lambda: float(np.mean(np.sum(scalar.input_gradient(xb)**2,
                                                    axis=1))))
        analytic = []
        for li in range(scalar.n_layers):
            analytic.append(gwp[li])
            analytic.append(gbp[li])
        worst_gp = max(worst_gp, _rel_err(
            np.concatenate([a.ravel() for a in analytic]),
            np.concatenate([f.ravel() for f in fd])))

    return [CheckResult("backward vs finite differences", worst_bwd < 1e-5, worst_bwd, 1e-5),
            CheckResult("input_gradient vs finite differences", worst_ig < 1e-5, worst_ig, 1e-5),
            CheckResult("grad-penalty grads vs finite differences", worst_gp < 1e-5, worst_gp, 1e-5)]


# -- GAE / TD(lambda) brute force -------------------------------------------------

def td_lambda_brute(rewards, values, bootstrap, gamma, lam):
    """Direct weighted sum of n-step returns."""
    T = len(rewards)
    out = np.empty(T)
    vnext = list(values[1:]) + [bootstrap]
    for t in range(T):
        N = T - t
        acc = 0.0
        for n in range(1, N):
            g_n = sum(gamma**k * rewards[t + k] for k in range(n)) \
                + gamma**n * vnext[t + n - 1]
            acc += (1.0 - lam) * lam**(n - 1) * g_n
        g_full = sum(gamma**k * rewards[t + k] for k in range(N)) \
            + gamma**N * bootstrap
        acc += lam**(N - 1) * g_full
        out[t] = acc
    return out


def gae_brute(rewards, values, bootstrap, gamma, lam):
    T = len(rewards)
    vnext = list(values[1:]) + [bootstrap]
    deltas = [rewards[t] + gamma * vnext[t] - values[t] for t in range(T)]
    return np.array([sum((gamma * lam)**k * deltas[t + k] for k in range(T - t))
                     for t in range(T)])


def check_gae(seed: int = 0, cases: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_td = worst_gae = 0.0
    for i in range(cases):
        T = int(rng.integers(1, 9))
        r = rng.normal(size=T)
        v = rng.normal(size=T)
        gamma = rng.uniform(0.5, 0.999)
        lam = rng.uniform(0.0, 1.0)
        boot = 0.0 if i % 2 == 0 else float(rng.normal())  # failure vs timeout
        worst_td = max(worst_td, float(np.max(np.abs(
            td_lambda_targets(r, v, boot, gamma, lam)
            - td_lambda_brute(r, v, boot, gamma, lam)))))
        worst_gae = max(worst_gae, float(np.max(np.abs(
            gae_advantages(r, v, boot, gamma, lam)
            - gae_brute(r, v, boot, gamma, lam)))))
    return [CheckResult("TD(lambda) vs brute force", worst_td < 1e-12, worst_td, 1e-12),
            CheckResult("GAE vs brute force", worst_gae < 1e-12, worst_gae, 1e-12)]


# -- DTW exhaustive enumeration ----------------------------------------------------

def dtw_brute(seq_a, seq_b) -> float:
    """Minimum accumulated cost over all monotone paths (exhaustive)."""
    n, m = len(seq_a), len(seq_b)
    cost = [[pose_error(seq_a[i], seq_b[j]) for j in range(m)] for i in range(n)]
    best = [math.inf]

    def walk(i, j, acc):
        acc += cost[i][j]
        if acc >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = acc
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


def check_dtw(seed: int = 0, cases: int = 200) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n, m = rng.integers(1, 9, size=2)
        a = rng.normal(size=(int(n), 4, 2))
        b = rng.normal(size=(int(m), 4, 2))
        path, mean_err = dtw_align(a, b)
        total = mean_err * len(path)
        worst = max(worst, abs(total - dtw_brute(a, b)))
    a = np.random.default_rng(seed + 1).normal(size=(6, 4, 2))
    _, e_same = dtw_align(a, a)
    stretched = np.repeat(a, 2, axis=0)
    _, e_stretch = dtw_align(a, stretched)
    zero_cases = max(e_same, e_stretch)
    return [CheckResult("DTW vs exhaustive enumeration", worst < 1e-10, worst, 1e-10),
            CheckResult("DTW zero cases (identity, 2x stretch)",
                        zero_cases < 1e-12, zero_cases, 1e-12)]


# -- LSGAN optimal discriminator ----------------------------------------------------

def check_disc(seed: int = 0) -> list[CheckResult]:
    """On 4 discrete atoms the converged scores must approach
    (p_M - p_pi) / (p_M + p_pi)."""
    rng = np.random.default_rng(seed)
    atoms = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    p_real = np.array([0.1, 0.2, 0.3, 0.4])
    p_fake = np.array([0.4, 0.3, 0.2, 0.1])
    target = (p_real - p_fake) / (p_real + p_fake)

    def sample_real(k, r):
        idx = r.choice(4, size=k, p=p_real)
        return atoms[idx, :1], atoms[idx, 1:]

    replay = ReplayBuffer(20_000, 1)
    idx = rng.choice(4, size=20_000, p=p_fake)
    replay.push(atoms[idx, :1], atoms[idx, 1:])

    disc = Mlp(MlpSpec(2, (32,), 1), rng)
    cfg = DiscConfig(w_gp=0.0, batch_size=256, stepsize=5e-3, momentum=0.9,
                     updates=1500)
    update_discriminator(disc, sample_real, replay, cfg, rng)
    scores = disc(atoms)[:, 0]
    err = float(np.max(np.abs(scores - target)))
    return [CheckResult("LSGAN optimal discriminator on 4 atoms", err < 0.05, err, 0.05)]


# -- simulator oracles ----------------------------------------------------------------

def _pendulum(point_mass: bool, length: float = 1.0) -> CharacterModel:
    L = length
    if point_mass:
        links = [Link("base", 1.0, 1.0, 0.1, 0.0), Link("rod", 1.3, 1e-12, L, L)]
    else:
        links = [Link("base", 1.0, 1.0, 0.1, 0.0),
                 Link("rod", 2.0, 2.0 * L**2 / 12.0, L, L / 2.0)]
    return CharacterModel(
        "pendulum", links,
        [Joint("pivot", parent=0, attach=(0.0, 0.0), kp=0.0, kd=0.0, torque_limit=1.0)],
        contact_points=[], end_effectors=[],
        rest_pose=np.array([0.0, 2.0, 0.0, 0.0]), fixed_root=True)


def _free_chain() -> CharacterModel:
    return CharacterModel(
        "chain",
        [Link("a", 1.0, 0.02, 0.4, 0.2), Link("b", 0.7, 0.01, 0.3, 0.15)],
        [Joint("j", parent=0, attach=(0.4, 0.0), kp=0.0, kd=0.0, torque_limit=1.0)],
        contact_points=[], end_effectors=[], rest_pose=np.zeros(4))


def check_sim(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    g = sim.GRAVITY_DEFAULT

    # closed-form point-mass pendulum: thetadd = -(g/L) sin theta
    pend = _pendulum(point_mass=True)
    worst = 0.0
    for theta in rng.uniform(-math.pi, math.pi, size=20):
        st = SimState(np.array([0.0, 2.0, 0.0, -math.pi / 2 + theta]), np.zeros(4))
        qdd = sim.forward_dynamics(st, pend, joint_torques=np.zeros(1))
        worst = max(worst, abs(qdd[3] + g * math.sin(theta)))
    out.append(CheckResult("pendulum closed form", worst < 1e-9, worst, 1e-9))

    # mass matrix SPD + Lagrangian finite-difference-of-momentum oracle
    chain = _free_chain()
    walker = make_walker5()
    worst_eig = math.inf
    worst_res = 0.0
    for model in (chain, walker):
        D = model.n_dof
        for _ in range(10):
            q = rng.normal(size=D)
            qd = rng.normal(size=D)
            M = sim.mass_matrix(model, q)
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(M).min()))
            worst_res = max(worst_res, _lagrangian_residual(model, q, qd, rng))
    out.append(CheckResult("mass matrix positive definite", worst_eig > 0.0,
                           worst_eig, 0.0))
    out.append(CheckResult("Euler-Lagrange momentum oracle", worst_res < 1e-6,
                           worst_res, 1e-6))

    # momentum conservation per control step (free chain, no gravity)
    cfg0 = SimConfig(gravity=0.0)
    st = SimState(rng.normal(size=4), np.array([0.6, -0.4, 2.0, 3.0]))
    P0 = sim.linear_momentum(chain, st.q, st.qdot)
    drift = 0.0
    for _ in range(30):
        st = sim.step_control(st, np.zeros(1), chain, cfg0)
        P = sim.linear_momentum(chain, st.q, st.qdot)
        drift = max(drift, float(np.max(np.abs(P - P0))))
        P0 = P
    out.append(CheckResult("linear momentum per control step", drift < 1e-8,
                           drift, 1e-8))

    # horizontal momentum constant under gravity
    st = SimState(np.array([0.0, 100.0, 0.3, 0.5]), np.array([0.6, -0.4, 2.0, 3.0]))
    px0 = sim.linear_momentum(chain, st.q, st.qdot)[0]
    drift = 0.0
    for _ in range(30):
        st = sim.step_control(st, np.zeros(1), chain, SimConfig())
        px = sim.linear_momentum(chain, st.q, st.qdot)[0]
        drift = max(drift, abs(px - px0))
    out.append(CheckResult("horizontal momentum under gravity", drift < 1e-8,
                           drift, 1e-8))

    # passive pendulum energy drift < 0.1% of the swing energy over 1 s
    # (measured against the energy above the hanging configuration; the
    # symplectic oscillation envelope scales like omega*dt/2)
    swing = _pendulum(point_mass=True, length=3.5)
    st = SimState(np.array([0.0, 4.0, 0.0, -math.pi / 2 + 0.9]), np.zeros(4))
    E0 = sim.kinetic_energy(swing, st.q, st.qdot) + sim.potential_energy(swing, st.q)
    bottom = sim.potential_energy(swing, np.array([0.0, 4.0, 0.0, -math.pi / 2]))
    drift = 0.0
    for _ in range(30):
        st = sim.step_control(st, np.zeros(1), swing, SimConfig())
        E = sim.kinetic_energy(swing, st.q, st.qdot) + sim.potential_energy(swing, st.q)
        drift = max(drift, abs(E - E0))
    rel = drift / (E0 - bottom)
    out.append(CheckResult("pendulum energy drift over 1 s", rel < 1e-3, rel, 1e-3))

    # self convergence: 1200 Hz vs 12 kHz reference over 1 s
    rod = _pendulum(point_mass=False)

    def run(hz):
        c = SimConfig(sim_hz=hz)
        s = SimState(np.array([0.0, 2.0, 0.0, -math.pi / 2 + 0.5]), np.zeros(4))
        trace = []
        for _ in range(30):
            s = sim.step_control(s, np.zeros(1), rod, c)
            trace.append(s.q[3])
        return np.array(trace)
    err = float(np.max(np.abs(run(1200.0) - run(12000.0))))
    out.append(CheckResult("integrator self convergence", err < 1e-3, err, 1e-3))
    return out


def _lagrangian_residual(model: CharacterModel, q, qd, rng) -> float:
    """Residual of d/dt(dT/dqd) - dT/dq + dV/dq = Q for the solver's qdd.

    T and V are evaluated from scratch (frames and point velocities only).
    First the generalized momentum M(q) qd is validated per component against
    finite differences of that independent T; the validated M then supplies
    the analytic momenta for the outer time difference, which keeps the FD
    noise of the nested derivative out of the residual.
    """
    tau = rng.normal(size=model.n_joints)
    qdd = sim.forward_dynamics(SimState(q, qd), model, joint_torques=tau)
    D = model.n_dof
    h = 1e-6
    ht = 1e-5

    def T(q_, qd_):
        return sim.kinetic_energy(model, q_, qd_)

    p_analytic = sim.mass_matrix(model, q) @ qd
    p_fd = np.empty(D)
    for d in range(D):
        up = qd.copy(); up[d] += h
        dn = qd.copy(); dn[d] -= h
        p_fd[d] = (T(q, up) - T(q, dn)) / (2 * h)
    momentum_err = float(np.max(np.abs(p_analytic - p_fd)))

    def p_vec(q_, qd_):
        return sim.mass_matrix(model, q_) @ qd_

    q_p = q + ht * qd + 0.5 * ht * ht * qdd
    q_m = q - ht * qd + 0.5 * ht * ht * qdd
    dpdt = (p_vec(q_p, qd + ht * qdd) - p_vec(q_m, qd - ht * qdd)) / (2 * ht)
    dTdq = np.empty(D)
    dVdq = np.empty(D)
    for d in range(D):
        up = q.copy(); up[d] += h
        dn = q.copy(); dn[d] -= h
        dTdq[d] = (T(up, qd) - T(dn, qd)) / (2 * h)
        dVdq[d] = (sim.potential_energy(model, up) - sim.potential_energy(model, dn)) / (2 * h)
    Q = np.zeros(D)
    Q[3:] = tau
    residual = float(np.max(np.abs(dpdt - dTdq + dVdq - Q)))
    return max(residual, momentum_err)


CHECK_SUITES = {
    "grads": check_grads,
    "gae": check_gae,
    "dtw": check_dtw,
    "disc": check_disc,
    "sim": check_sim,
}


def run_checks(scope: str = "all", seed: int = 0) -> list[CheckResult]:
    if scope == "all":
        names = list(CHECK_SUITES)
    elif scope in CHECK_SUITES:
        names = [scope]
    else:
        raise ValueError(f"unknown check scope '{scope}' "
                         f"(all, {', '.join(CHECK_SUITES)})")
    results = []
    for name in names:
        results.extend(CHECK_SUITES[name](seed=seed))
    return results
