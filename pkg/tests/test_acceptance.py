"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test prints a single PASS line with the measured figures so the run
doubles as a report: `pytest -s tests/test_acceptance.py`.
"""

import json
import re
import subprocess
import sys
import time

import numpy as np
import pytest

from lbr_kit import kernels
from lbr_kit.client import ClientCallbacks, UdpClient, echo_command
from lbr_kit.conformance import load_scenario, run_scenario, shipped_scenario_paths
from lbr_kit.demos import DemoSpec, run_demo_loopback
from lbr_kit.errors import LbrError
from lbr_kit.measure import MeasureParams, measure_loopback
from lbr_kit.model import forward_kinematics, jacobian, list_variants, load_variant, pose_error
from lbr_kit.simulator import HOME_POSE, SimConfig, SimState, inject_disturbance, step_dynamics
from lbr_kit.wire import (
    CommandMessage,
    CommandMode,
    ConnectionQuality,
    FrameHeader,
    MessageType,
    MonitorMessage,
    SessionState,
    decode_frame,
    encode_frame,
    negotiate_version,
)

from oracles import interpret_events
from test_wire import GOLDEN_JOIN, GOLDEN_MONITOR_FRAME


def _report(name: str, detail: str) -> None:
    print(f"PASS {name}: {detail}")


def _random_monitor(rng) -> MonitorMessage:
    vec = lambda: tuple(rng.uniform(-3, 3, size=7).tolist())
    return MonitorMessage(
        session_state=SessionState(int(rng.integers(0, 5))),
        connection_quality=ConnectionQuality(int(rng.integers(0, 4))),
        control_mode=CommandMode(int(rng.integers(0, 4))),
        sample_period=float(rng.uniform(0.001, 0.1)),
        measured_joint_position=vec(),
        measured_torque=vec(),
        external_torque=vec(),
        interpolated_command_position=vec(),
        timestamp_s=int(rng.integers(0, 2**32)),
        timestamp_ns=int(rng.integers(0, 1_000_000_000)),
        monitor_sequence=int(rng.integers(0, 2**32)),
    )


def _random_command(rng, mode=None) -> CommandMessage:
    mode = CommandMode(int(rng.integers(0, 4))) if mode is None else mode
    kwargs = {"client_command_mode": mode, "reflected_sequence": int(rng.integers(0, 2**32))}
    if mode in (CommandMode.POSITION, CommandMode.TORQUE):
        kwargs["joint_position"] = tuple(rng.uniform(-3, 3, size=7).tolist())
    if mode == CommandMode.TORQUE:
        kwargs["torque_overlay"] = tuple(rng.uniform(-50, 50, size=7).tolist())
    if mode == CommandMode.WRENCH:
        kwargs["wrench_overlay"] = tuple(rng.uniform(-20, 20, size=6).tolist())
    if mode == CommandMode.CARTESIAN_POSE:
        quat = rng.normal(size=4)
        quat /= np.linalg.norm(quat)
        kwargs["cartesian_pose"] = tuple(rng.uniform(-1, 1, size=3).tolist()) + tuple(quat.tolist())
    return CommandMessage(**kwargs)


def test_wire_round_trip_10k():
    """10,000 randomized messages encode→decode to equality in under 5 s."""
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for i in range(10_000):
        if i % 2 == 0:
            msg = _random_monitor(rng)
            frame = encode_frame(FrameHeader(2, MessageType.MONITOR, msg.monitor_sequence), msg)
        else:
            msg = _random_command(rng)
            frame = encode_frame(FrameHeader(2, MessageType.COMMAND, i), msg)
        decoded = decode_frame(frame, reader_version=2)
        assert decoded.payload == msg.validate()
        assert decoded.skipped_fields == ()
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"round trips took {elapsed:.2f}s"
    _report("wire-round-trip", f"10000 messages in {elapsed:.2f}s")


def test_corruption_detection_exhaustive():
    """Every single-byte mutation of both golden frames fails decode."""
    checked = 0
    for golden in (GOLDEN_JOIN, GOLDEN_MONITOR_FRAME):
        frame = bytearray(golden)
        for pos in range(len(frame)):
            original = frame[pos]
            for value in range(256):
                if value == original:
                    continue
                frame[pos] = value
                try:
                    decode_frame(bytes(frame))
                except LbrError:
                    checked += 1
                else:
                    pytest.fail(f"mutation at byte {pos} to {value:#04x} decoded successfully")
            frame[pos] = original
    _report("corruption-detection", f"{checked} single-byte mutations all rejected")


def test_multi_version():
    """v1 readers skip exactly cartesian_pose; the negotiation matrix holds."""
    rng = np.random.default_rng(7)
    for _ in range(1000):
        cmd = _random_command(rng, mode=CommandMode.CARTESIAN_POSE)
        frame = encode_frame(FrameHeader(2, MessageType.COMMAND, 0), cmd)
        decoded = decode_frame(frame, reader_version=1)
        assert decoded.skipped_fields == (6,)
        assert decoded.payload.cartesian_pose is None
        assert decoded.payload.client_command_mode == CommandMode.CARTESIAN_POSE
        assert decoded.payload.reflected_sequence == cmd.reflected_sequence

    matrix = {
        (frozenset({1}), 1): 1,
        (frozenset({1}), 2): 1,
        (frozenset({2}), 2): 2,
        (frozenset({1, 2}), 1): 1,
        (frozenset({1, 2}), 2): 2,
    }
    for (client, server), expected in matrix.items():
        assert negotiate_version(client, server) == expected
    from lbr_kit.errors import NoCommonVersion

    with pytest.raises(NoCommonVersion):
        negotiate_version({2}, 1)
    _report("multi-version", "1000 v2 frames skipped exactly field 6; negotiation matrix exact")


def test_session_conformance_scenarios():
    """Shipped scenarios replay with zero divergence, and the expected traces
    themselves match the independent table-interpreter oracle."""
    paths = shipped_scenario_paths()
    assert len(paths) >= 6
    names = []
    for path in paths:
        scenario = load_scenario(path)
        result = run_scenario(scenario)
        assert result.ok, result.divergence_message()

        raw = json.loads(path.read_text())
        oracle = interpret_events(raw["events"], activation_streak=scenario.watchdog.activation_streak)
        got = [(e.t, e.state, e.action) for e in result.trace]
        assert got == oracle, f"{scenario.name}: implementation diverges from oracle"
        names.append(scenario.name)
    _report("session-conformance", f"{len(names)} scenarios, zero divergence: {', '.join(sorted(names))}")


def test_quality_thresholds_loopback():
    """Injected delays of 0 / 1.5x / 4x the sample period classify exactly."""
    cfg = SimConfig(real_time=False)
    period_ms = cfg.sample_period * 1000.0

    rep0 = measure_loopback(MeasureParams(delay_ms=0.0, duration_s=1.0), cfg)
    assert rep0["outcome_counts"]["late"] == 0 and rep0["outcome_counts"]["missing"] == 0
    assert rep0["outcome_counts"]["on_time"] > 100
    assert rep0["quality_timeline"][-1][1] == "EXCELLENT"

    rep15 = measure_loopback(MeasureParams(delay_ms=1.5 * period_ms, duration_s=1.0), cfg)
    assert rep15["outcome_counts"]["on_time"] == 0 and rep15["outcome_counts"]["missing"] == 0
    assert rep15["outcome_counts"]["late"] > 100
    assert rep15["quality_timeline"][-1][1] == "POOR"

    rep40 = measure_loopback(MeasureParams(delay_ms=4.0 * period_ms, duration_s=1.0), cfg)
    assert rep40["outcome_counts"]["on_time"] == 0 and rep40["outcome_counts"]["late"] == 0
    assert rep40["outcome_counts"]["missing"] > 100
    assert rep40["quality_timeline"][-1][1] == "POOR"
    _report(
        "quality-thresholds",
        "0 -> EXCELLENT/all on-time; 1.5x -> all late/POOR; 4x -> all missing/POOR",
    )


def test_kinematics():
    """Zero pose exact to 1e-12; Jacobian matches finite differences at 1e-5
    over 1000 random configurations per variant; all four configs load."""
    offsets = {"med7": 1.266, "iiwa7": 1.266, "med14": 1.306, "iiwa14": 1.306}
    assert set(list_variants()) == {"iiwa7", "iiwa14", "med7", "med14"}
    h = 1e-6
    rng = np.random.default_rng(123)
    worst = 0.0
    for name in list_variants():
        variant = load_variant(name)
        pose = forward_kinematics(np.zeros(7), variant)
        assert abs(pose.position[2] - offsets[name]) < 1e-12
        assert abs(pose.position[0]) < 1e-12 and abs(pose.position[1]) < 1e-12
        assert np.allclose(pose.orientation, (1, 0, 0, 0), atol=1e-12)

        lo, hi = variant.limits_lo, variant.limits_hi
        qs = lo + (hi - lo) * rng.random((1000, 7))
        for q in qs:
            jac = jacobian(q, variant)
            fd = np.empty((3, 7))
            for i in range(7):
                qp, qm = q.copy(), q.copy()
                qp[i] += h
                qm[i] -= h
                fd[:, i] = (
                    np.asarray(forward_kinematics(qp, variant).position)
                    - np.asarray(forward_kinematics(qm, variant).position)
                ) / (2 * h)
            err = np.max(np.abs(jac[0:3, :] - fd))
            worst = max(worst, err)
            assert err < 1e-5
    _report("kinematics", f"4 variants, 1000 q each; worst FD deviation {worst:.2e}")


def test_control_laws():
    """Lyapunov non-increase, position convergence bound, disturbance offset,
    wrench equilibrium; all in deterministic mode, in under 60 s."""
    start = time.perf_counter()
    variant = load_variant("med7")
    cfg = SimConfig(real_time=False)
    dt = cfg.sample_period
    rng = np.random.default_rng(17)

    # Lyapunov: 100 random starts x 2000 ticks
    for _ in range(100):
        q0 = rng.uniform(variant.limits_lo * 0.5, variant.limits_hi * 0.5)
        qd0 = rng.uniform(-0.5, 0.5, size=7)
        q_cmd = rng.uniform(variant.limits_lo * 0.5, variant.limits_hi * 0.5)
        qs, qds = kernels.torque_rollout(
            q0, qd0, q_cmd, variant.stiffness, variant.damping, np.ones(7), dt,
            variant.limits_lo, variant.limits_hi, 2000,
        )
        err = q_cmd - qs
        v = 0.5 * np.sum(qds * qds, axis=1) + 0.5 * np.sum(100.0 * err * err, axis=1)
        assert np.all(np.diff(v) <= 1e-12), "Lyapunov function increased"

    # POSITION-mode convergence within the tick bound
    q0 = np.asarray(HOME_POSE)
    target = np.clip(q0 + rng.uniform(-0.5, 0.5, size=7), variant.limits_lo, variant.limits_hi)
    s = SimState(q=q0.copy(), qd=np.zeros(7), active_mode=CommandMode.POSITION)
    cmd = CommandMessage(CommandMode.POSITION, 0, joint_position=tuple(target))
    bound = int(np.ceil(np.max(np.abs(q0 - target) / (variant.velocity_limits * dt)))) + 2
    for _ in range(bound):
        s = step_dynamics(s, cmd, cfg, variant)
    conv_err = float(np.max(np.abs(s.q - target)))
    assert conv_err < 1e-9

    # steady-state disturbance offset tau_ext / K
    s = SimState(q=q0.copy(), qd=np.zeros(7), active_mode=CommandMode.TORQUE, q_setpoint=q0.copy())
    s = inject_disturbance(s, (1.0,) + (0.0,) * 6, 10_000)
    tcmd = CommandMessage(
        CommandMode.TORQUE, 0, joint_position=tuple(q0), torque_overlay=(0.0,) * 7
    )
    for _ in range(2000):
        s = step_dynamics(s, tcmd, cfg, variant)
    offset_err = abs((q0[0] - s.q[0]) - (-0.01))
    assert offset_err < 1e-4

    # wrench equilibrium residual
    hold = forward_kinematics(q0, variant)
    s = SimState(
        q=q0.copy(), qd=np.zeros(7), active_mode=CommandMode.WRENCH, hold_pose=hold
    )
    overlay = (0.0, 0.0, -5.0, 0.0, 0.0, 0.0)
    wcmd = CommandMessage(CommandMode.WRENCH, 0, wrench_overlay=overlay)
    for _ in range(6000):
        s = step_dynamics(s, wcmd, cfg, variant)
    err6 = pose_error(hold, forward_kinematics(s.q, variant))
    residual = jacobian(s.q, variant).T @ (variant.cartesian_stiffness * err6 + np.asarray(overlay))
    residual_inf = float(np.max(np.abs(residual)))
    assert residual_inf < 1e-3

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"dynamics suite took {elapsed:.1f}s"
    _report(
        "control-laws",
        f"lyapunov 100x2000 ok; convergence {conv_err:.1e}; "
        f"disturbance offset err {offset_err:.1e}; wrench residual {residual_inf:.1e}; "
        f"suite {elapsed:.1f}s",
    )


def test_end_to_end_sine_demo():
    """20 virtual seconds of the sine demo at 200 Hz: steady-state RMS < 0.005 rad."""
    spec = DemoSpec(demo="sine", joint=3, amplitude=0.04, frequency=0.25, mode=CommandMode.POSITION)
    cfg = SimConfig(real_time=False, sample_period=0.005)
    report, harness, logic = run_demo_loopback(spec, duration=20.0, sim_cfg=cfg)
    assert report.activated
    assert report.commanded_ticks >= 4000
    assert report.rms_error is not None and report.rms_error < 0.005
    _report(
        "end-to-end-sine",
        f"rms {report.rms_error:.5f} rad over {report.commanded_ticks} ticks (bound 0.005)",
    )


def test_timing_real_time_cadence():
    """Informational: 10 s wall-clock serve at 200 Hz, mean period within ±5%."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "lbr_kit.cli", "serve", "--port", "0", "--control-port", "0",
         "--hz", "200"],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        match = re.search(r"listening udp=(\d+) control=(\d+)", line)
        assert match, f"no listening line: {line!r}"
        port = int(match.group(1))

        arrivals = []
        callbacks = ClientCallbacks(
            on_monitor=lambda m: arrivals.append(time.perf_counter()),
            on_wait_for_command=lambda m: echo_command(m),
            on_command=lambda m: echo_command(m),
        )
        client = UdpClient(port=port, callbacks=callbacks)
        client.connect(timeout=10.0)
        deadline = time.perf_counter() + 10.0
        client.run(until=lambda c: time.perf_counter() > deadline)
        client.bye()
    finally:
        proc.terminate()
        proc.wait(timeout=10)

    assert len(arrivals) > 1000, f"only {len(arrivals)} monitors in 10s"
    periods = np.diff(np.asarray(arrivals))
    mean = float(np.mean(periods))
    p99 = float(np.percentile(np.abs(periods - 0.005), 99))
    assert abs(mean - 0.005) <= 0.005 * 0.05, f"mean period {mean * 1000:.3f} ms off by >5%"
    _report(
        "timing",
        f"mean period {mean * 1000:.4f} ms over {len(periods)} intervals; "
        f"p99 |jitter| {p99 * 1000:.3f} ms (reported, not asserted)",
    )
