import math

import numpy as np
import pytest

from amp2d import sim
from amp2d.character import CharacterModel, Joint, Link, SitePoint
from amp2d.checks import check_sim
from amp2d.sim import (BallModel, BallState, SimConfig, SimState,
                       SimulationDiverged, check_early_termination,
                       contact_forces, forward_dynamics, pd_torques,
                       step_control, step_control_with_ball)


def single_joint_model(kp=100.0, kd=10.0, limit=20.0, continuous=False):
    return CharacterModel(
        "probe",
        [Link("base", 1.0, 0.05, 0.2, 0.0), Link("arm", 0.5, 0.01, 0.3, 0.15)],
        [Joint("j", parent=0, attach=(0.0, 0.0), kp=kp, kd=kd,
               torque_limit=limit, continuous=continuous)],
        contact_points=[], end_effectors=[], rest_pose=np.zeros(4))


class TestPdTorques:
    def test_zero_at_setpoint(self):
        m = single_joint_model()
        st = SimState(np.array([0, 0, 0, 0.4]), np.zeros(4))
        assert pd_torques(st, np.array([0.4]), m)[0] == 0.0

    def test_arithmetic(self):
        m = single_joint_model(kp=100.0, kd=10.0, limit=20.0)
        st = SimState(np.array([0, 0, 0, 0.0]), np.array([0, 0, 0, 0.5]))
        tau = pd_torques(st, np.array([0.1]), m)
        assert tau[0] == pytest.approx(100.0 * 0.1 - 10.0 * 0.5, abs=1e-15)

    def test_clamped_at_limit(self):
        m = single_joint_model(kp=100.0, kd=0.0, limit=50.0)
        st = SimState(np.array([0, 0, 0, 0.0]), np.zeros(4))
        tau = pd_torques(st, np.array([100.0]), m)  # kp * err = 1e4
        assert tau[0] == 50.0

    def test_always_within_limit(self):
        rng = np.random.default_rng(0)
        m = single_joint_model(limit=20.0)
        for _ in range(100):
            st = SimState(np.concatenate((np.zeros(3), rng.normal(size=1) * 5)),
                          np.concatenate((np.zeros(3), rng.normal(size=1) * 20)))
            tau = pd_torques(st, rng.normal(size=1) * 5, m)
            assert abs(tau[0]) <= 20.0

    def test_continuous_joint_wraps_error(self):
        m = single_joint_model(kp=10.0, kd=0.0, limit=1000.0, continuous=True)
        st = SimState(np.array([0, 0, 0, 2 * math.pi + 0.1]), np.zeros(4))
        tau = pd_torques(st, np.array([0.0]), m)
        assert tau[0] == pytest.approx(-1.0, abs=1e-9)  # wrapped error -0.1

    def test_rejects_bad_action(self):
        m = single_joint_model()
        st = SimState(np.zeros(4), np.zeros(4))
        with pytest.raises(ValueError):
            pd_torques(st, np.array([1.0, 2.0]), m)
        with pytest.raises(ValueError):
            pd_torques(st, np.array([np.nan]), m)


def contact_model():
    return CharacterModel(
        "box", [Link("box", 1.0, 0.01, 0.2, 0.0)], [],
        contact_points=[SitePoint(0, (0.0, 0.0), is_foot=True)],
        end_effectors=[], rest_pose=np.zeros(3))


class TestContacts:
    def test_zero_above_ground(self):
        m = contact_model()
        st = SimState(np.array([0.0, 0.5, 0.0]), np.zeros(3))
        assert np.all(contact_forces(st, m) == 0.0)

    def test_static_normal_force(self):
        m = contact_model()
        cfg = SimConfig(contact_kn=1e4)
        st = SimState(np.array([0.0, -0.001, 0.0]), np.zeros(3))
        f = contact_forces(st, m, cfg)
        assert f[0, 1] == pytest.approx(10.0, abs=1e-12)
        assert f[0, 0] == 0.0

    def test_normal_never_negative(self):
        m = contact_model()
        rng = np.random.default_rng(5)
        for _ in range(200):
            st = SimState(np.array([0.0, rng.uniform(-0.01, 0.01), 0.0]),
                          np.array([rng.normal(), rng.normal() * 2, 0.0]))
            f = contact_forces(st, m)
            assert f[0, 1] >= 0.0
            if st.q[1] >= 0.0:
                assert np.all(f == 0.0)

    def test_walker_resting_penetration_below_2mm(self, walker):
        # drop in a split stance (coincident feet cannot balance statically)
        q = walker.rest_pose.copy()
        stance = np.array([0.3, 0.0, -0.3, 0.0])
        q[3:] = stance
        st = SimState(q, np.zeros(walker.n_dof))
        for _ in range(60):  # 2 s to settle
            st = step_control(st, stance, walker)
        depth = -walker.contact_positions(st.q)[:, 1].min()
        assert 0.0 < depth < 0.002
        # static equilibrium oracle: kn * d = weight share per loaded foot
        cfg = SimConfig()
        expected = walker.total_mass * cfg.gravity / 2.0 / cfg.contact_kn
        assert depth == pytest.approx(expected, rel=0.5)


class TestForwardDynamics:
    def test_free_body_no_forces(self):
        m = contact_model()
        st = SimState(np.array([0.0, 5.0, 0.3]), np.array([1.0, 2.0, 3.0]))
        qdd = forward_dynamics(st, m, gravity=0.0)
        np.testing.assert_allclose(qdd, 0.0, atol=1e-12)

    def test_pendulum_closed_form(self):
        L, g = 1.0, sim.GRAVITY_DEFAULT
        pend = CharacterModel(
            "pend",
            [Link("base", 1.0, 1.0, 0.1, 0.0), Link("rod", 1.3, 1e-12, L, L)],
            [Joint("pivot", parent=0, attach=(0.0, 0.0), kp=0.0, kd=0.0,
                   torque_limit=1.0)],
            [], [], rest_pose=np.array([0.0, 2.0, 0.0, 0.0]), fixed_root=True)
        for theta in (-2.0, -0.5, 0.0, 0.3, 1.0, 2.8):
            st = SimState(np.array([0.0, 2.0, 0.0, -math.pi / 2 + theta]),
                          np.zeros(4))
            qdd = forward_dynamics(st, pend, joint_torques=np.zeros(1))
            assert qdd[3] == pytest.approx(-(g / L) * math.sin(theta), abs=1e-9)

    def test_mass_matrix_spd_random_configs(self, walker):
        rng = np.random.default_rng(2)
        for _ in range(20):
            M = sim.mass_matrix(walker, rng.normal(size=walker.n_dof))
            np.testing.assert_allclose(M, M.T, atol=1e-13)
            assert np.linalg.eigvalsh(M).min() > 0.0


class TestStepControl:
    def test_forty_substeps_and_time(self):
        cfg = SimConfig()
        assert cfg.n_substeps == 40
        m = contact_model()
        st = SimState(np.array([0.0, 5.0, 0.0]), np.zeros(3))
        out = step_control(st, np.zeros(0), m, cfg)
        assert out.sim_time == pytest.approx(1.0 / 30.0, abs=1e-15)

    def test_free_body_advances_v_over_30(self):
        m = contact_model()
        cfg = SimConfig(gravity=0.0)
        v = np.array([1.2, -0.4, 0.7])
        st = SimState(np.array([0.0, 5.0, 0.0]), v.copy())
        out = step_control(st, np.zeros(0), m, cfg)
        np.testing.assert_allclose(out.q, st.q + v / 30.0, atol=1e-12)
        np.testing.assert_allclose(out.qdot, v, atol=1e-12)

    def test_bit_identical_determinism(self, walker):
        st = SimState(walker.rest_pose.copy(), np.full(walker.n_dof, 0.1))
        action = np.full(walker.n_joints, 0.2)
        a = step_control(st, action, walker)
        b = step_control(st, action, walker)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.qdot, b.qdot)

    def test_fast_slow_equivalence(self, walker):
        rng = np.random.default_rng(8)
        st = SimState(walker.rest_pose + rng.normal(size=walker.n_dof) * 0.05,
                      rng.normal(size=walker.n_dof) * 0.2)
        action = rng.normal(size=walker.n_joints) * 0.3
        fast = step_control(st, action, walker, fast=True)
        slow = step_control(st, action, walker, fast=False)
        np.testing.assert_allclose(fast.q, slow.q, atol=1e-10)
        np.testing.assert_allclose(fast.qdot, slow.qdot, atol=1e-9)

    def test_divergence_carries_last_valid_state(self):
        m = contact_model()
        cfg = SimConfig(qd_max=0.5, gravity=0.0)
        st = SimState(np.array([0.0, 5.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        with pytest.raises(SimulationDiverged) as exc:
            step_control(st, np.zeros(0), m, cfg)
        last = exc.value.last_state
        assert np.all(np.isfinite(last.q)) and np.all(np.isfinite(last.qdot))

    def test_physics_oracle_suite(self):
        results = check_sim(seed=0)
        for r in results:
            assert r.passed, r.line()


class TestBall:
    def test_ball_settles_on_ground(self):
        m = contact_model()
        ball_m = BallModel()
        st = SimState(np.array([0.0, 5.0, 0.0]), np.zeros(3))
        ball = BallState(np.array([3.0, 0.5, 0.0]), np.zeros(3))
        for _ in range(60):
            st, ball = step_control_with_ball(st, ball, np.zeros(0), m, ball_m)
        cfg = SimConfig()
        rest = ball_m.radius - ball_m.mass * cfg.gravity / cfg.contact_kn
        assert ball.q[1] == pytest.approx(rest, abs=1e-3)
        assert abs(ball.qdot[1]) < 1e-3

    def test_ball_fast_slow_equivalence(self, pointmass):
        st = SimState(pointmass.rest_pose.copy(), np.zeros(pointmass.n_dof))
        ball_m = BallModel()
        ball = BallState(np.array([0.3, ball_m.radius, 0.0]), np.array([-0.5, 0.0, 0.0]))
        action = np.array([-1.0])
        f_st, f_ball = step_control_with_ball(st, ball, action, pointmass, ball_m,
                                              fast=True)
        s_st, s_ball = step_control_with_ball(st, ball, action, pointmass, ball_m,
                                              fast=False)
        np.testing.assert_allclose(f_st.q, s_st.q, atol=1e-10)
        np.testing.assert_allclose(f_ball.q, s_ball.q, atol=1e-10)

    def test_kick_conserves_momentum(self, pointmass):
        # character + ball is a closed system horizontally when neither
        # touches the ground
        m = CharacterModel(
            "kicker", pointmass.links, pointmass.joints, [SitePoint(1, (0.35, 0.0))],
            pointmass.end_effectors, rest_pose=pointmass.rest_pose)
        cfg = SimConfig(gravity=0.0)
        ball_m = BallModel()
        st = SimState(np.array([0.0, 5.0, 0.0, 0.0]), np.zeros(4))
        ball = BallState(np.array([0.36, 5.0, 0.0]), np.array([-1.0, 0.0, 0.0]))
        p0 = sim.linear_momentum(m, st.q, st.qdot)[0] + ball_m.mass * ball.qdot[0]
        for _ in range(10):
            st, ball = step_control_with_ball(st, ball, np.zeros(1), m, ball_m, cfg)
        p1 = sim.linear_momentum(m, st.q, st.qdot)[0] + ball_m.mass * ball.qdot[0]
        assert p1 == pytest.approx(p0, abs=1e-6)


class TestEarlyTermination:
    def test_standing_walker_is_fine(self, walker):
        st = SimState(walker.rest_pose.copy(), np.zeros(walker.n_dof))
        assert not check_early_termination(st, walker)

    def test_torso_contact_triggers(self, walker):
        q = walker.rest_pose.copy()
        q[1] -= 0.51  # hip below ground
        st = SimState(q, np.zeros(walker.n_dof))
        assert check_early_termination(st, walker)

    def test_disabled_flag_wins(self, walker):
        q = walker.rest_pose.copy()
        q[1] -= 0.51
        st = SimState(q, np.zeros(walker.n_dof))
        assert not check_early_termination(st, walker, termination_disabled=True)

    def test_foot_contact_does_not_trigger(self, walker):
        q = walker.rest_pose.copy()
        q[1] -= 0.001  # feet slightly below ground
        st = SimState(q, np.zeros(walker.n_dof))
        assert not check_early_termination(st, walker)
