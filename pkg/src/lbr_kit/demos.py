"""Demo clients: sine tracking, hold, and a constant cartesian press.

The sine demo commands q_cmd[j] = q0[j] + A·sin(2πft) once command authority
is granted, where q0 and t0 are captured from the first commanding monitor.
Tracking error samples compare the measured joint against the raw sine
target at each monitor, so filter lag and transport delay show up in the
reported RMS.
"""

from __future__ import annotations

import dataclasses
import json
import math
import socket
from dataclasses import dataclass
from typing import Optional

from . import waveforms
from .client import (
    ClientCallbacks,
    ClientCore,
    CommandGuardConfig,
    UdpClient,
    echo_command,
    position_command,
    torque_command,
    wrench_command,
)
from .errors import ConfigError, SessionAborted
from .loopback import LoopbackHarness
from .model import load_variant
from .simulator import SimConfig
from .wire import CommandMode, MonitorMessage, SessionState

DEMO_NAMES = ("sine", "hold", "wrench-press")
MAX_DEMO_AMPLITUDE = 0.2  # rad, demo safety cap
MAX_DEMO_FREQUENCY = 2.0  # Hz


@dataclass(frozen=True)
class DemoSpec:
    demo: str = "sine"
    joint: int = 3
    amplitude: float = 0.04
    frequency: float = 0.25
    mode: CommandMode = CommandMode.POSITION
    press_force: float = 5.0  # N, wrench-press only

    def validate(self) -> "DemoSpec":
        if self.demo not in DEMO_NAMES:
            raise ConfigError(f"unknown demo {self.demo!r}; available: {', '.join(DEMO_NAMES)}")
        if not 0 <= self.joint <= 6:
            raise ConfigError(f"joint index must be 0..6, got {self.joint}")
        if not 0 <= self.amplitude <= MAX_DEMO_AMPLITUDE:
            raise ConfigError(
                f"amplitude {self.amplitude} rad exceeds the demo safety cap of {MAX_DEMO_AMPLITUDE}"
            )
        if not 0 < self.frequency <= MAX_DEMO_FREQUENCY:
            raise ConfigError(f"frequency must be in (0, {MAX_DEMO_FREQUENCY}] Hz, got {self.frequency}")
        if self.demo == "wrench-press" and self.mode != CommandMode.WRENCH:
            raise ConfigError("wrench-press runs in WRENCH mode")
        return self


def _timestamp(monitor: MonitorMessage) -> float:
    return monitor.timestamp_s + monitor.timestamp_ns * 1e-9


class DemoLogic:
    """Builds the callbacks for a demo and accumulates tracking samples."""

    def __init__(self, spec: DemoSpec, variant):
        self.spec = spec.validate()
        self.variant = variant
        self.t0: Optional[float] = None
        self.q0: Optional[tuple[float, ...]] = None
        self.samples: list[tuple[float, float]] = []  # (t since start, tracking error)
        self.commanded = 0

    def callbacks(self) -> ClientCallbacks:
        return ClientCallbacks(
            on_monitor=lambda m: None,
            on_wait_for_command=lambda m: echo_command(m, self.variant),
            on_command=self.on_command,
        )

    def target(self, t: float) -> tuple[float, ...]:
        assert self.q0 is not None
        values = list(self.q0)
        if self.spec.demo == "sine":
            values[self.spec.joint] = values[self.spec.joint] + waveforms.sine_offset(
                self.spec.amplitude, self.spec.frequency, t
            )
        return tuple(values)

    def on_command(self, monitor: MonitorMessage):
        ts = _timestamp(monitor)
        if self.t0 is None:
            self.t0 = ts
            self.q0 = tuple(monitor.interpolated_command_position)
        t = ts - self.t0
        target = self.target(t)
        self.samples.append(
            (t, monitor.measured_joint_position[self.spec.joint] - target[self.spec.joint])
        )
        self.commanded += 1
        if self.spec.demo == "wrench-press":
            return wrench_command((0.0, 0.0, -self.spec.press_force, 0.0, 0.0, 0.0))
        if self.spec.mode == CommandMode.TORQUE:
            return torque_command(target, (0.0,) * 7)
        return position_command(target)

    # -- reporting -------------------------------------------------------------

    def rms(self, skip_fraction: float = 0.2) -> Optional[float]:
        """Steady-state RMS tracking error, ignoring the leading transient."""
        if not self.samples:
            return None
        t_end = self.samples[-1][0]
        cut = t_end * skip_fraction
        tail = [e for t, e in self.samples if t >= cut]
        if not tail:
            return None
        return math.sqrt(sum(e * e for e in tail) / len(tail))

    def per_second_rms(self) -> list[tuple[int, float]]:
        buckets: dict[int, list[float]] = {}
        for t, e in self.samples:
            buckets.setdefault(int(t), []).append(e)
        return [
            (sec, math.sqrt(sum(e * e for e in errs) / len(errs)))
            for sec, errs in sorted(buckets.items())
        ]

    def max_abs_error(self) -> Optional[float]:
        if not self.samples:
            return None
        return max(abs(e) for _, e in self.samples)


@dataclass
class DemoReport:
    report_version: int
    demo: str
    mode: str
    joint: int
    amplitude: float
    frequency: float
    duration: float
    commanded_ticks: int
    rms_error: Optional[float]
    max_abs_error: Optional[float]
    per_second_rms: list
    activated: bool

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


def run_demo_loopback(
    spec: DemoSpec,
    duration: float,
    sim_cfg: SimConfig,
    timeout_s: float = 5.0,
    record_trace: bool = False,
) -> tuple[DemoReport, LoopbackHarness, DemoLogic]:
    """Run the demo against an in-process simulator in virtual time."""
    variant = load_variant(sim_cfg.variant)
    logic = DemoLogic(spec, variant)
    core = ClientCore(
        logic.callbacks(),
        CommandGuardConfig.from_variant(variant),
        versions=(1, 2),
        variant=variant,
    )
    harness = LoopbackHarness(sim_cfg, core, auto_request_mode=spec.mode)
    harness.join()
    period = harness.period
    timeout_ticks = int(timeout_s / period)
    harness.run(
        timeout_ticks,
        stop_when=lambda h: h.server.session.state == SessionState.COMMANDING_ACTIVE,
    )
    activated = harness.server.session.state == SessionState.COMMANDING_ACTIVE
    if activated:
        harness.run(int(round(duration / period)))
        harness.server.release_control()
        harness.run(1)
        harness.finish()
    harness.raise_client_error()
    report = DemoReport(
        report_version=1,
        demo=spec.demo,
        mode=spec.mode.name,
        joint=spec.joint,
        amplitude=spec.amplitude,
        frequency=spec.frequency,
        duration=duration,
        commanded_ticks=logic.commanded,
        rms_error=logic.rms(),
        max_abs_error=logic.max_abs_error(),
        per_second_rms=logic.per_second_rms(),
        activated=activated,
    )
    return report, harness, logic


def request_control_remote(host: str, control_port: int, mode: CommandMode, timeout: float = 5.0) -> None:
    send_control_event(host, control_port, {"event": "request_control", "mode": mode.name}, timeout)


def send_control_event(host: str, control_port: int, event: dict, timeout: float = 5.0) -> dict:
    with socket.create_connection((host, control_port), timeout=timeout) as conn:
        conn.sendall(json.dumps(event).encode() + b"\n")
        buf = b""
        conn.settimeout(timeout)
        while b"\n" not in buf:
            chunk = conn.recv(4096)
            if not chunk:
                break
            buf += chunk
    response = json.loads(buf.split(b"\n", 1)[0] or b"{}")
    if not response.get("ok", False):
        raise SessionAborted(f"control request failed: {response.get('error', 'unknown')}")
    return response


def run_demo_udp(
    spec: DemoSpec,
    duration: float,
    host: str,
    port: int,
    control_port: int,
    timeout_s: float = 10.0,
    variant_name: str = "med7",
    record_trace: bool = False,
) -> tuple[DemoReport, UdpClient, DemoLogic]:
    """Run the demo against a live server over UDP.

    Operator events go out from inside the callbacks, before the answer
    datagram for the triggering monitor is transmitted. That serializes the
    control channel against the sample stream, so a deterministic (lockstep)
    server sees an identical event order on every run.
    """
    variant = load_variant(variant_name)
    logic = DemoLogic(spec, variant)
    flow = {"requested": False, "released": False}

    def on_monitor(monitor: MonitorMessage) -> None:
        if (
            monitor.session_state == SessionState.MONITORING_READY
            and not flow["requested"]
        ):
            request_control_remote(host, control_port, spec.mode)
            flow["requested"] = True

    def on_command(monitor: MonitorMessage):
        if (
            logic.t0 is not None
            and not flow["released"]
            and _timestamp(monitor) - logic.t0 >= duration
        ):
            send_control_event(host, control_port, {"event": "release_control"})
            flow["released"] = True
        return logic.on_command(monitor)

    client = UdpClient(
        host=host,
        port=port,
        callbacks=ClientCallbacks(
            on_monitor=on_monitor,
            on_wait_for_command=lambda m: echo_command(m, variant),
            on_command=on_command,
        ),
        variant_name=variant_name,
    )
    client.record_trace = record_trace
    activated = False
    try:
        client.connect(timeout=timeout_s)
        client.run(
            until=lambda c: c.core.state == SessionState.COMMANDING_ACTIVE,
            wall_timeout=timeout_s,
        )
        activated = True
        client.run(
            until=lambda c: flow["released"]
            and c.core.state == SessionState.MONITORING_READY,
            wall_timeout=max(4 * duration, 30.0),
        )
        client.bye()
    except SessionAborted:
        client.bye()
        if not activated:
            report = DemoReport(
                report_version=1,
                demo=spec.demo,
                mode=spec.mode.name,
                joint=spec.joint,
                amplitude=spec.amplitude,
                frequency=spec.frequency,
                duration=duration,
                commanded_ticks=logic.commanded,
                rms_error=None,
                max_abs_error=None,
                per_second_rms=[],
                activated=False,
            )
            return report, client, logic
        raise
    report = DemoReport(
        report_version=1,
        demo=spec.demo,
        mode=spec.mode.name,
        joint=spec.joint,
        amplitude=spec.amplitude,
        frequency=spec.frequency,
        duration=duration,
        commanded_ticks=logic.commanded,
        rms_error=logic.rms(),
        max_abs_error=logic.max_abs_error(),
        per_second_rms=logic.per_second_rms(),
        activated=activated,
    )
    return report, client, logic
