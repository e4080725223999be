"""JIT-compiled inner loop of the planar rigid-body simulator.

One call advances a character (and optionally a passive ball) through all
substeps of a single control period using symplectic Euler in momentum form:

    p_{k+1} = p_k + dt * (dT/dq - dV/dq + Q(q_k, qd_k))
    q_{k+1} = q_k + dt * M(q_k)^{-1} p_{k+1}

with p = M(q) qd. The momentum form keeps cyclic momenta (total linear
momentum, horizontal momentum under gravity) conserved to solver roundoff.
sim.py implements the identical algorithm in plain numpy; an equivalence test
pins the two paths together.
"""

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_SINGULAR = 2


@njit(cache=True)
def _chol_factor(A, L):
    n = A.shape[0]
    for i in range(n):
        for j in range(i + 1):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= 0.0:
                    return False
                L[i, i] = math.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    return True


@njit(cache=True)
def _chol_solve(L, b, x):
    n = L.shape[0]
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * x[k]
        x[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]


@njit(cache=True)
def _kinematics(q, qd, parent, attach, mount, com,
                ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy):
    L = parent.shape[0]
    ox[0] = q[0]
    oy[0] = q[1]
    phi[0] = q[2]
    vox[0] = qd[0]
    voy[0] = qd[1]
    phid[0] = qd[2]
    for i in range(1, L):
        p = parent[i]
        c = math.cos(phi[p])
        s = math.sin(phi[p])
        rx = c * attach[i, 0] - s * attach[i, 1]
        ry = s * attach[i, 0] + c * attach[i, 1]
        ox[i] = ox[p] + rx
        oy[i] = oy[p] + ry
        phi[i] = phi[p] + mount[i] + q[3 + i - 1]
        vox[i] = vox[p] - phid[p] * ry
        voy[i] = voy[p] + phid[p] * rx
        phid[i] = phid[p] + qd[3 + i - 1]
    for i in range(L):
        c = math.cos(phi[i])
        s = math.sin(phi[i])
        rx = c * com[i, 0] - s * com[i, 1]
        ry = s * com[i, 0] + c * com[i, 1]
        cx[i] = ox[i] + rx
        cy[i] = oy[i] + ry
        vcx[i] = vox[i] - phid[i] * ry
        vcy[i] = voy[i] + phid[i] * rx


@njit(cache=True)
def _mass_matrix(mass, inertia, anc, ox, oy, cx, cy, M):
    """M = sum_i m_i J_i^T J_i + I_i w_i^T w_i, built in place."""
    L = mass.shape[0]
    J = anc.shape[1]
    D = 3 + J
    for a in range(D):
        for b in range(D):
            M[a, b] = 0.0
    jx = np.zeros(D)
    jy = np.zeros(D)
    w = np.zeros(D)
    for i in range(L):
        jx[0] = 1.0
        jy[0] = 0.0
        jx[1] = 0.0
        jy[1] = 1.0
        jx[2] = -(cy[i] - oy[0])
        jy[2] = cx[i] - ox[0]
        w[2] = 1.0
        for j in range(J):
            if anc[i, j]:
                jx[3 + j] = -(cy[i] - oy[j + 1])
                jy[3 + j] = cx[i] - ox[j + 1]
                w[3 + j] = 1.0
            else:
                jx[3 + j] = 0.0
                jy[3 + j] = 0.0
                w[3 + j] = 0.0
        m = mass[i]
        In = inertia[i]
        for a in range(D):
            for b in range(a, D):
                M[a, b] += m * (jx[a] * jx[b] + jy[a] * jy[b]) + In * w[a] * w[b]
    for a in range(D):
        for b in range(a):
            M[a, b] = M[b, a]


@njit(cache=True)
def _point_force(Q, anc, link, px, py, fx, fy, ox, oy):
    """Accumulate a world force applied at a material point of a link."""
    Q[0] += fx
    Q[1] += fy
    Q[2] += -(py - oy[0]) * fx + (px - ox[0]) * fy
    J = anc.shape[1]
    for j in range(J):
        if anc[link, j]:
            Q[3 + j] += -(py - oy[j + 1]) * fx + (px - ox[j + 1]) * fy


@njit(cache=True)
def _forces(q, qd, targets,
            parent, attach, mount, com, mass, inertia, anc,
            kp, kd, tau_lim, q_lo, q_hi, wrap_pd,
            cp_link, cp_off,
            gravity, kn, dn, mu, kt, limit_k, limit_d,
            ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy,
            has_ball, ball_q, ball_v, ball_radius, ball_mass, ball_inertia,
            Q, ball_f):
    """Total generalized force: dT/dq - dV/dq + PD + limits + contacts.

    Kinematic scratch arrays must already hold the state computed by
    _kinematics. Ball force/torque accumulates into ball_f (fx, fy, torque).
    """
    L = parent.shape[0]
    J = anc.shape[1]
    D = 3 + J
    for a in range(D):
        Q[a] = 0.0
    ball_f[0] = 0.0
    ball_f[1] = 0.0
    ball_f[2] = 0.0

    for i in range(L):
        m = mass[i]
        # dT/dq on rotational dofs: sum_i m_i vc_i . d/dt dJ column
        Q[2] += m * (vcx[i] * voy[0] - vcy[i] * vox[0])
        for j in range(J):
            if anc[i, j]:
                Q[3 + j] += m * (vcx[i] * voy[j + 1] - vcy[i] * vox[j + 1])
        # gravity acts at the center of mass
        _point_force(Q, anc, i, cx[i], cy[i], 0.0, -m * gravity, ox, oy)

    # PD actuation and joint-limit penalties
    for j in range(J):
        err = targets[j] - q[3 + j]
        if wrap_pd[j]:
            err = -((-err + math.pi) % (2.0 * math.pi) - math.pi)
        tau = kp[j] * err - kd[j] * qd[3 + j]
        if tau > tau_lim[j]:
            tau = tau_lim[j]
        elif tau < -tau_lim[j]:
            tau = -tau_lim[j]
        if q[3 + j] > q_hi[j]:
            tau += -limit_k * (q[3 + j] - q_hi[j]) - limit_d * qd[3 + j]
        elif q[3 + j] < q_lo[j]:
            tau += -limit_k * (q[3 + j] - q_lo[j]) - limit_d * qd[3 + j]
        Q[3 + j] += tau

    # ground contacts and (optional) ball coupling at the contact points
    C = cp_link.shape[0]
    for k in range(C):
        i = cp_link[k]
        c = math.cos(phi[i])
        s = math.sin(phi[i])
        rx = c * cp_off[k, 0] - s * cp_off[k, 1]
        ry = s * cp_off[k, 0] + c * cp_off[k, 1]
        px = ox[i] + rx
        py = oy[i] + ry
        vx = vox[i] - phid[i] * ry
        vy = voy[i] + phid[i] * rx
        if py < 0.0:
            fn = kn * (-py) - dn * vy
            if fn < 0.0:
                fn = 0.0
            cap = mu * fn
            ft = kt * abs(vx)
            if ft > cap:
                ft = cap
            if vx > 0.0:
                ft = -ft
            _point_force(Q, anc, i, px, py, ft, fn, ox, oy)
        if has_ball:
            dx = px - ball_q[0]
            dy = py - ball_q[1]
            dist2 = dx * dx + dy * dy
            if dist2 < ball_radius * ball_radius and dist2 > 1e-16:
                dist = math.sqrt(dist2)
                nx = dx / dist
                ny = dy / dist
                pen = ball_radius - dist
                vsx = ball_v[0] - ball_v[2] * dy
                vsy = ball_v[1] + ball_v[2] * dx
                rvx = vx - vsx
                rvy = vy - vsy
                vn = rvx * nx + rvy * ny
                fn = kn * pen - dn * vn
                if fn < 0.0:
                    fn = 0.0
                tx = -ny
                ty = nx
                vt = rvx * tx + rvy * ty
                cap = mu * fn
                ft = kt * abs(vt)
                if ft > cap:
                    ft = cap
                if vt > 0.0:
                    ft = -ft
                fx = fn * nx + ft * tx
                fy = fn * ny + ft * ty
                _point_force(Q, anc, i, px, py, fx, fy, ox, oy)
                ball_f[0] -= fx
                ball_f[1] -= fy
                ball_f[2] -= dx * fy - dy * fx

    if has_ball:
        ball_f[1] -= ball_mass * gravity
        pen = ball_radius - ball_q[1]
        if pen > 0.0:
            vcx_b = ball_v[0] + ball_v[2] * ball_radius
            vcy_b = ball_v[1]
            fn = kn * pen - dn * vcy_b
            if fn < 0.0:
                fn = 0.0
            cap = mu * fn
            ft = kt * abs(vcx_b)
            if ft > cap:
                ft = cap
            if vcx_b > 0.0:
                ft = -ft
            ball_f[0] += ft
            ball_f[1] += fn
            ball_f[2] += ball_radius * ft


@njit(cache=True)
def step_core(q0, qd0, targets,
              parent, attach, mount, com, mass, inertia, anc,
              kp, kd, tau_lim, q_lo, q_hi, wrap_pd,
              cp_link, cp_off,
              fixed_root,
              n_sub, dt, gravity,
              kn, dn, mu, kt, limit_k, limit_d, qd_max,
              has_ball, ball_q0, ball_v0, ball_radius, ball_mass, ball_inertia):
    L = parent.shape[0]
    D = q0.shape[0]
    start = 3 if fixed_root else 0
    nf = D - start

    q = q0.copy()
    qd = qd0.copy()
    ball_q = ball_q0.copy()
    ball_v = ball_v0.copy()
    q_ok = q0.copy()
    qd_ok = qd0.copy()
    ball_q_ok = ball_q0.copy()
    ball_v_ok = ball_v0.copy()

    ox = np.zeros(L)
    oy = np.zeros(L)
    phi = np.zeros(L)
    vox = np.zeros(L)
    voy = np.zeros(L)
    phid = np.zeros(L)
    cx = np.zeros(L)
    cy = np.zeros(L)
    vcx = np.zeros(L)
    vcy = np.zeros(L)
    M = np.zeros((D, D))
    Lf = np.zeros((nf, nf))
    Q = np.zeros(D)
    ball_f = np.zeros(3)
    p = np.zeros(nf)
    x = np.zeros(nf)

    if fixed_root:
        for a in range(3):
            qd[a] = 0.0

    # initial conjugate momentum on the free dofs
    _kinematics(q, qd, parent, attach, mount, com,
                ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy)
    _mass_matrix(mass, inertia, anc, ox, oy, cx, cy, M)
    for a in range(nf):
        acc = 0.0
        for b in range(D):
            acc += M[start + a, b] * qd[b]
        p[a] = acc

    for _ in range(n_sub):
        _kinematics(q, qd, parent, attach, mount, com,
                    ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy)
        _mass_matrix(mass, inertia, anc, ox, oy, cx, cy, M)
        if not _chol_factor(M[start:, start:].copy(), Lf):
            return q_ok, qd_ok, ball_q_ok, ball_v_ok, STATUS_SINGULAR
        _chol_solve(Lf, p, x)
        bad = False
        for a in range(nf):
            qd[start + a] = x[a]
            if not math.isfinite(x[a]) or abs(x[a]) > qd_max:
                bad = True
        for a in range(D):
            if not math.isfinite(q[a]):
                bad = True
        if bad:
            return q_ok, qd_ok, ball_q_ok, ball_v_ok, STATUS_DIVERGED
        for a in range(D):
            q_ok[a] = q[a]
            qd_ok[a] = qd[a]
        for a in range(3):
            ball_q_ok[a] = ball_q[a]
            ball_v_ok[a] = ball_v[a]

        # velocity-dependent kinematics with the freshly solved qd
        _kinematics(q, qd, parent, attach, mount, com,
                    ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy)
        _forces(q, qd, targets,
                parent, attach, mount, com, mass, inertia, anc,
                kp, kd, tau_lim, q_lo, q_hi, wrap_pd,
                cp_link, cp_off,
                gravity, kn, dn, mu, kt, limit_k, limit_d,
                ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy,
                has_ball, ball_q, ball_v, ball_radius, ball_mass, ball_inertia,
                Q, ball_f)
        for a in range(nf):
            p[a] += dt * Q[start + a]
        _chol_solve(Lf, p, x)
        for a in range(nf):
            q[start + a] += dt * x[a]
        if has_ball:
            ball_v[0] += dt * ball_f[0] / ball_mass
            ball_v[1] += dt * ball_f[1] / ball_mass
            ball_v[2] += dt * ball_f[2] / ball_inertia
            ball_q[0] += dt * ball_v[0]
            ball_q[1] += dt * ball_v[1]
            ball_q[2] += dt * ball_v[2]

    # velocities consistent with the final configuration: qd = M(q)^-1 p
    _kinematics(q, qd, parent, attach, mount, com,
                ox, oy, phi, vox, voy, phid, cx, cy, vcx, vcy)
    _mass_matrix(mass, inertia, anc, ox, oy, cx, cy, M)
    if not _chol_factor(M[start:, start:].copy(), Lf):
        return q_ok, qd_ok, ball_q_ok, ball_v_ok, STATUS_SINGULAR
    _chol_solve(Lf, p, x)
    bad = False
    for a in range(nf):
        qd[start + a] = x[a]
        if not math.isfinite(x[a]) or abs(x[a]) > qd_max:
            bad = True
        if not math.isfinite(q[start + a]):
            bad = True
    if bad:
        return q_ok, qd_ok, ball_q_ok, ball_v_ok, STATUS_DIVERGED
    return q, qd, ball_q, ball_v, STATUS_OK
