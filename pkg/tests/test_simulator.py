"""Simulator dynamics and the tick loop: control laws, watchdog wiring, hold."""

import dataclasses

import numpy as np
import pytest

from lbr_kit import kernels
from lbr_kit.client import ClientCallbacks, ClientCore, CommandGuardConfig, echo_command, wrench_command
from lbr_kit.errors import ModeNotSupported
from lbr_kit.loopback import LoopbackHarness
from lbr_kit.model import forward_kinematics, jacobian, load_variant, pose_error
from lbr_kit.simulator import HOME_POSE, SimConfig, SimState, SimulatorCore, inject_disturbance, step_dynamics
from lbr_kit.wire import (
    CommandMessage,
    CommandMode,
    ConnectionQuality,
    SessionState,
)

MED7 = load_variant("med7")
CFG = SimConfig(real_time=False)
DT = CFG.sample_period


def state_at(q, mode=CommandMode.TORQUE, **kwargs):
    q = np.asarray(q, dtype=float)
    return SimState(q=q.copy(), qd=np.zeros(7), active_mode=mode, **kwargs)


def torque_cmd(q_cmd, overlay=(0.0,) * 7):
    return CommandMessage(
        CommandMode.TORQUE, 0, joint_position=tuple(q_cmd), torque_overlay=tuple(overlay)
    )


def position_cmd(q_cmd):
    return CommandMessage(CommandMode.POSITION, 0, joint_position=tuple(q_cmd))


class TestStepDynamics:
    def test_torque_equilibrium_is_fixed_point(self):
        q = np.asarray(HOME_POSE)
        s = state_at(q, q_setpoint=q.copy())
        out = step_dynamics(s, torque_cmd(q), CFG, MED7)
        assert np.allclose(out.q, q, atol=0)
        assert np.allclose(out.qd, 0.0, atol=0)

    def test_one_dof_derived_values(self):
        # independent one-step evaluation: tau = 10, qd' = 0.05, q' = 0.00025
        q = np.zeros(7)
        s = state_at(q)
        cmd = torque_cmd((0.1,) + (0.0,) * 6)
        out = step_dynamics(s, cmd, CFG, MED7)
        assert out.last_tau[0] == pytest.approx(10.0, abs=1e-12)
        assert out.qd[0] == pytest.approx(0.05, abs=1e-12)
        assert out.q[0] == pytest.approx(0.00025, abs=1e-15)

    def test_position_rate_clamp(self):
        s = state_at(np.zeros(7), mode=CommandMode.POSITION)
        out = step_dynamics(s, position_cmd((1.0,) + (0.0,) * 6), CFG, MED7)
        cap = MED7.velocity_limits[0] * DT
        assert out.q[0] == pytest.approx(cap, abs=1e-15)
        assert out.qd[0] == pytest.approx(MED7.velocity_limits[0], abs=1e-12)

    def test_position_convergence_within_tick_bound(self):
        q0 = np.asarray(HOME_POSE)
        target = q0 + 0.3
        target = np.clip(target, MED7.limits_lo, MED7.limits_hi)
        s = state_at(q0, mode=CommandMode.POSITION)
        cmd = position_cmd(target)
        v_dt = MED7.velocity_limits * DT
        bound = int(np.ceil(np.max(np.abs(q0 - target) / v_dt))) + 2
        for _ in range(bound):
            s = step_dynamics(s, cmd, CFG, MED7)
        assert np.max(np.abs(s.q - target)) < 1e-9

    def test_absent_command_holds_last_setpoint(self):
        q0 = np.asarray(HOME_POSE)
        target = q0.copy()
        target[2] += 0.05
        s = state_at(q0, mode=CommandMode.POSITION)
        s = step_dynamics(s, position_cmd(target), CFG, MED7)
        for _ in range(200):
            s = step_dynamics(s, None, CFG, MED7)
        assert np.max(np.abs(s.q - target)) < 1e-9

    def test_joint_limits_never_exceeded_random_streams(self):
        rng = np.random.default_rng(3)
        s = state_at(np.asarray(HOME_POSE))
        for _ in range(500):
            q_cmd = rng.uniform(-4, 4, size=7)
            overlay = rng.uniform(-100, 100, size=7)
            s = step_dynamics(s, torque_cmd(q_cmd, overlay), CFG, MED7)
            assert np.all(s.q >= MED7.limits_lo - 1e-15)
            assert np.all(s.q <= MED7.limits_hi + 1e-15)

    def test_lyapunov_non_increasing(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            q0 = rng.uniform(MED7.limits_lo * 0.5, MED7.limits_hi * 0.5)
            q_cmd = rng.uniform(MED7.limits_lo * 0.5, MED7.limits_hi * 0.5)
            qs, qds = kernels.torque_rollout(
                q0,
                np.zeros(7),
                q_cmd,
                MED7.stiffness,
                MED7.damping,
                np.ones(7),
                DT,
                MED7.limits_lo,
                MED7.limits_hi,
                2000,
            )
            err = q_cmd - qs
            v = 0.5 * np.sum(qds * qds, axis=1) + 0.5 * np.sum(100.0 * err * err, axis=1)
            assert np.all(np.diff(v) <= 1e-12)

    def test_disturbance_steady_state_offset(self):
        q0 = np.asarray(HOME_POSE)
        s = state_at(q0, q_setpoint=q0.copy())
        s = inject_disturbance(s, (1.0,) + (0.0,) * 6, 5000)
        cmd = torque_cmd(q0)
        for _ in range(2000):
            s = step_dynamics(s, cmd, CFG, MED7)
        # tau_ext / K = 1 / 100
        assert (q0[0] - s.q[0]) == pytest.approx(-0.01, abs=1e-4)

    def test_disturbance_reported_verbatim(self):
        s = state_at(np.asarray(HOME_POSE))
        s = inject_disturbance(s, (1.0,) + (0.0,) * 6, 10)
        seen = 0
        cmd = torque_cmd(HOME_POSE)
        for _ in range(15):
            s = step_dynamics(s, cmd, CFG, MED7)
            if s.last_external[0] == 1.0:
                seen += 1
        assert seen == 10

    def test_zero_disturbance_reports_zero(self):
        s = state_at(np.asarray(HOME_POSE))
        s = inject_disturbance(s, (0.0,) * 7, 10)
        s = step_dynamics(s, torque_cmd(HOME_POSE), CFG, MED7)
        assert np.all(s.last_external == 0.0)

    def test_wrench_equilibrium_residual(self):
        q0 = np.asarray(HOME_POSE)
        hold = forward_kinematics(q0, MED7)
        s = state_at(q0, mode=CommandMode.WRENCH, hold_pose=hold)
        overlay = (0.0, 0.0, -5.0, 0.0, 0.0, 0.0)
        cmd = wrench_command(overlay)
        for _ in range(6000):
            s = step_dynamics(s, cmd, CFG, MED7)
        err = pose_error(hold, forward_kinematics(s.q, MED7))
        jac = jacobian(s.q, MED7)
        residual = jac.T @ (MED7.cartesian_stiffness * err + np.asarray(overlay))
        assert np.max(np.abs(residual)) < 1e-3

    def test_cartesian_pose_tracks_target(self):
        cfg = dataclasses.replace(CFG, protocol_version=2)
        q0 = np.asarray(HOME_POSE)
        start = forward_kinematics(q0, MED7)
        target = dataclasses.replace(
            start, position=(start.position[0], start.position[1] - 0.05, start.position[2] + 0.03)
        )
        s = state_at(q0, mode=CommandMode.CARTESIAN_POSE, pose_setpoint=start)
        cmd = CommandMessage(
            CommandMode.CARTESIAN_POSE, 0, cartesian_pose=target.as_command_tuple()
        )
        for _ in range(2000):
            s = step_dynamics(s, cmd, cfg, MED7)
        final = forward_kinematics(s.q, MED7)
        assert np.linalg.norm(np.subtract(final.position, target.position)) < 1e-4

    def test_cartesian_pose_rejected_under_version_1(self):
        cfg = dataclasses.replace(CFG, protocol_version=1)
        s = state_at(np.asarray(HOME_POSE), mode=CommandMode.CARTESIAN_POSE)
        cmd = CommandMessage(
            CommandMode.CARTESIAN_POSE,
            0,
            cartesian_pose=forward_kinematics(s.q, MED7).as_command_tuple(),
        )
        with pytest.raises(ModeNotSupported):
            step_dynamics(s, cmd, cfg, MED7)


def make_client(variant=MED7, **kwargs):
    return ClientCore(
        ClientCallbacks(
            on_monitor=lambda m: None,
            on_wait_for_command=lambda m: echo_command(m, variant),
            on_command=lambda m: echo_command(m, variant),
        ),
        CommandGuardConfig.from_variant(variant),
        variant=variant,
        **kwargs,
    )


class TestTickLoop:
    def test_idle_emits_no_monitor(self):
        core = SimulatorCore(CFG)
        for k in range(5):
            assert core.step((k + 1) * DT, []) is None
        assert core.state.tick == 5  # the clock still advances

    def test_loopback_activation_and_quality(self):
        harness = LoopbackHarness(CFG, make_client(), auto_request_mode=CommandMode.TORQUE)
        harness.join()
        harness.run(150)
        assert harness.server.session.quality == ConnectionQuality.EXCELLENT
        assert harness.server.session.state == SessionState.COMMANDING_ACTIVE
        assert harness.server.outcome_counts["late"] == 0

    def test_slow_answers_never_leave_monitoring_wait(self):
        harness = LoopbackHarness(CFG, make_client(), answer_delay=lambda i: 4 * DT)
        harness.join()
        harness.run(300)
        assert harness.server.session.state == SessionState.MONITORING_WAIT
        assert harness.server.session.quality == ConnectionQuality.POOR
        assert harness.server.outcome_counts["on_time"] == 0
        assert harness.server.outcome_counts["missing"] > 0

    def test_watchdog_fires_on_dropped_answer_while_active(self):
        dropped = {"done": False}

        def delay(i):
            # drop one answer (well past the deadline) once commanding
            if harness.server.session.state == SessionState.COMMANDING_ACTIVE and not dropped["done"]:
                dropped["done"] = True
                return 10 * DT
            return 0.0

        harness = LoopbackHarness(CFG, make_client(), answer_delay=delay, auto_request_mode=CommandMode.TORQUE)
        harness.join()
        harness.run(200)
        states = [s for _, s in harness.state_timeline]
        assert "COMMANDING_ACTIVE" in states
        idx = states.index("COMMANDING_ACTIVE")
        assert "MONITORING_WAIT" in states[idx:]
        stops = [r for _, r in harness.server.transitions if r.actions]
        assert stops, "SafetyStop transition missing"

    def test_stale_commands_do_not_drive_dynamics(self):
        core = SimulatorCore(CFG)
        client = make_client()
        join = client.join_datagram()
        monitor = core.step(DT, [(join, DT / 2, None)])
        assert monitor is not None
        # answer the first monitor but deliver it 5 ticks later: scored, stale
        answer = client.handle_datagram(monitor)
        for k in range(2, 6):
            core.step(k * DT, [])
        before_counts = dict(core.outcome_counts)
        core.step(6 * DT, [(answer, 6 * DT - DT / 2, None)])
        assert core.outcome_counts != before_counts or core.outcome_counts["missing"] > 0

    def test_control_events_route_through_queue(self):
        harness = LoopbackHarness(CFG, make_client())
        harness.join()
        harness.run(120)
        assert harness.server.session.state == SessionState.MONITORING_READY
        harness.server.request_control(CommandMode.TORQUE)
        harness.run(1)
        assert harness.server.session.state == SessionState.COMMANDING_WAIT
        harness.server.release_control()
        harness.run(1)
        assert harness.server.session.state == SessionState.MONITORING_READY

    def test_request_unsupported_mode_raises(self):
        core = SimulatorCore(dataclasses.replace(CFG, protocol_version=1))
        with pytest.raises(ModeNotSupported):
            core.request_control(CommandMode.CARTESIAN_POSE)

    def test_monitor_reports_injected_torque(self):
        harness = LoopbackHarness(CFG, make_client())
        harness.join()
        harness.run(10)
        harness.server.inject((1.0, 0, 0, 0, 0, 0, 0), 10)
        seen = []
        client = harness.client

        for _ in range(14):
            harness.run(1)
            seen.append(client.last_monitor.external_torque[0])
        assert seen.count(1.0) == 10

    def test_bye_returns_to_idle_and_holds(self):
        harness = LoopbackHarness(CFG, make_client(), auto_request_mode=CommandMode.TORQUE)
        harness.join()
        harness.run(150)
        assert harness.server.session.state == SessionState.COMMANDING_ACTIVE
        harness.finish()
        assert harness.server.session.state == SessionState.IDLE
        assert harness.server.state.active_mode == CommandMode.POSITION

    def test_hold_pose_captured_at_wrench_activation(self):
        harness = LoopbackHarness(CFG, make_client(), auto_request_mode=CommandMode.WRENCH)
        harness.join()
        harness.run(150)
        assert harness.server.session.state == SessionState.COMMANDING_ACTIVE
        hold = harness.server.state.hold_pose
        assert hold is not None
        q_now = harness.server.state.q
        assert np.allclose(
            hold.position, forward_kinematics(np.asarray(CFG.initial_q), MED7).position, atol=1e-9
        )
        assert np.allclose(q_now, np.asarray(CFG.initial_q), atol=1e-9)


class TestSimConfig:
    def test_sample_period_bounds(self):
        with pytest.raises(Exception):
            SimConfig(sample_period=0.0005).validate()
        with pytest.raises(Exception):
            SimConfig(sample_period=0.2).validate()

    def test_inertia_positive(self):
        with pytest.raises(Exception):
            SimConfig(inertia=(0.0,) * 7).validate()
