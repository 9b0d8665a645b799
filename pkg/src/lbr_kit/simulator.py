"""Controller-side simulation: fixed-rate loop core and per-mode dynamics.

The robot is assumed ideally gravity-compensated with configurable diagonal
inertia, so the torque modes reduce to a joint impedance law integrated with
semi-implicit Euler. SimulatorCore is sans-IO: the transports (UDP server,
in-process harness) feed it received datagrams with receive timestamps and
forward the monitor datagram it emits each tick.
"""

from __future__ import annotations

import collections
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels, model
from .client import CommandGuardConfig, guard_command
from .errors import ConfigError, ModeNotSupported
from .session import (
    AnswerLate,
    AnswerMissing,
    AnswerOnTime,
    Bye,
    Join,
    OperatorRequestsControl,
    OperatorReleasesControl,
    Outcome,
    ServerSession,
    StepResult,
    WatchdogConfig,
    answer_outcome,
)
from .wire import (
    CommandMessage,
    CommandMode,
    FrameHeader,
    MessageType,
    MonitorMessage,
    SessionState,
    decode_frame,
    encode_frame,
    supported_modes,
)

log = logging.getLogger("lbr_kit.simulator")

HOME_POSE = (0.0, math.pi / 6, 0.0, -math.pi / 3, 0.0, math.pi / 2, 0.0)

# Answers reflecting a monitor older than this many ticks do not drive dynamics.
STALE_TICKS = 2


@dataclass
class SimConfig:
    variant: str = "med7"
    sample_period: float = 0.005
    protocol_version: int = 2
    inertia: tuple[float, ...] = (1.0,) * 7
    host: str = "127.0.0.1"
    port: int = 30200
    control_port: int = 30201
    real_time: bool = True
    initial_q: tuple[float, ...] = HOME_POSE
    cartesian_pose_gain: float = 5.0  # 1/s proportional gain of the pose tracker
    deadline_factor: float = 3.0
    activation_streak: int = 10
    log_rate: float = 0.0  # state log lines per second; 0 disables

    def validate(self) -> "SimConfig":
        if not 0.001 <= self.sample_period <= 0.1:
            raise ConfigError(f"sample_period {self.sample_period} outside [0.001, 0.1]")
        if self.protocol_version not in (1, 2):
            raise ConfigError(f"protocol_version must be 1 or 2, got {self.protocol_version}")
        if len(self.inertia) != 7 or any(i <= 0 for i in self.inertia):
            raise ConfigError("inertia needs 7 positive entries")
        if len(self.initial_q) != 7:
            raise ConfigError("initial_q needs 7 entries")
        if self.cartesian_pose_gain <= 0:
            raise ConfigError("cartesian_pose_gain must be > 0")
        return self

    def watchdog(self) -> WatchdogConfig:
        return WatchdogConfig(
            sample_period=self.sample_period,
            deadline_factor=self.deadline_factor,
            activation_streak=self.activation_streak,
        )


@dataclass
class SimState:
    """Dynamics-side state of the simulated robot."""

    q: np.ndarray
    qd: np.ndarray
    active_mode: CommandMode = CommandMode.POSITION
    q_setpoint: Optional[np.ndarray] = None   # joint reference; defaults to q
    hold_pose: Optional[model.Pose] = None    # cartesian anchor for WRENCH
    pose_setpoint: Optional[model.Pose] = None  # CARTESIAN_POSE target
    injected_torque: np.ndarray = field(default_factory=lambda: np.zeros(7))
    injected_ticks_left: int = 0
    last_tau: np.ndarray = field(default_factory=lambda: np.zeros(7))
    last_external: np.ndarray = field(default_factory=lambda: np.zeros(7))
    tick: int = 0

    def __post_init__(self):
        if self.q_setpoint is None:
            self.q_setpoint = self.q.copy()


def inject_disturbance(s: SimState, torque, duration_ticks: int) -> SimState:
    """Apply an external joint torque for the next duration_ticks dynamics steps."""
    s = dataclasses.replace(s)
    s.injected_torque = np.asarray(torque, dtype=float).copy()
    s.injected_ticks_left = int(duration_ticks)
    return s


def step_dynamics(
    s: SimState,
    cmd: Optional[CommandMessage],
    cfg: SimConfig,
    variant: model.RobotVariant,
) -> SimState:
    """Advance the controlled joint model one sample period.

    An absent command holds: rate-limited position tracking toward the last
    setpoint with zero overlays. After integration q is clamped to the joint
    limits with the offending joint's velocity zeroed (the kernels do this).
    """
    dt = cfg.sample_period
    inertia = np.asarray(cfg.inertia, dtype=float)
    lim_lo, lim_hi = variant.limits_lo, variant.limits_hi
    out = dataclasses.replace(s)
    out.tick = s.tick + 1

    tau_ext = s.injected_torque if s.injected_ticks_left > 0 else np.zeros(7)
    out.injected_ticks_left = max(0, s.injected_ticks_left - 1)
    out.last_external = tau_ext.copy()

    mode = s.active_mode
    if cmd is not None and cmd.client_command_mode == CommandMode.CARTESIAN_POSE and cfg.protocol_version < 2:
        raise ModeNotSupported("CARTESIAN_POSE requires protocol version 2")

    if cmd is None:
        q_new, qd_new = kernels.position_step(s.q, s.q_setpoint, variant.velocity_limits, dt, lim_lo, lim_hi)
        out.q, out.qd = q_new, qd_new
        out.last_tau = np.zeros(7)
        return out

    if mode in (CommandMode.POSITION, CommandMode.TORQUE) and cmd.joint_position is not None:
        out.q_setpoint = np.asarray(cmd.joint_position, dtype=float)

    if mode == CommandMode.POSITION:
        q_new, qd_new = kernels.position_step(s.q, out.q_setpoint, variant.velocity_limits, dt, lim_lo, lim_hi)
        out.q, out.qd = q_new, qd_new
        out.last_tau = np.zeros(7)
        return out

    if mode == CommandMode.TORQUE:
        overlay = np.asarray(cmd.torque_overlay or (0.0,) * 7, dtype=float)
        tau = kernels.impedance_torque(
            s.q, s.qd, out.q_setpoint, variant.stiffness, variant.damping, overlay, tau_ext
        )
        out.q, out.qd = kernels.torque_step(s.q, s.qd, tau, inertia, dt, lim_lo, lim_hi)
        out.last_tau = np.asarray(tau)
        return out

    if mode == CommandMode.WRENCH:
        if s.hold_pose is None:
            raise ConfigError("WRENCH dynamics need a hold pose")
        overlay = np.asarray(cmd.wrench_overlay or (0.0,) * 6, dtype=float)
        current = model.forward_kinematics(s.q, variant)
        err = model.pose_error(s.hold_pose, current)
        wrench = variant.cartesian_stiffness * err + overlay
        jac = model.jacobian(s.q, variant)
        tau = jac.T @ wrench - variant.damping * s.qd + tau_ext
        out.q, out.qd = kernels.torque_step(s.q, s.qd, tau, inertia, dt, lim_lo, lim_hi)
        out.last_tau = np.asarray(tau)
        return out

    # CARTESIAN_POSE
    if cmd.cartesian_pose is not None:
        out.pose_setpoint = model.Pose.from_command_tuple(cmd.cartesian_pose)
    target = out.pose_setpoint
    if target is None:
        raise ConfigError("CARTESIAN_POSE dynamics need a pose setpoint")
    current = model.forward_kinematics(s.q, variant)
    xdot = cfg.cartesian_pose_gain * model.pose_error(target, current)
    jac = model.jacobian(s.q, variant)
    qd_new = model.damped_least_squares(jac, xdot, damping=0.05)
    qd_new = np.clip(qd_new, -variant.velocity_limits, variant.velocity_limits)
    q_new = s.q + qd_new * dt
    q_new = np.clip(q_new, lim_lo, lim_hi)
    qd_new = np.where((q_new == lim_lo) | (q_new == lim_hi), 0.0, qd_new)
    out.q, out.qd = q_new, qd_new
    out.last_tau = np.zeros(7)
    return out


@dataclass
class TickLog:
    tick: int
    seq: Optional[int]
    state: SessionState
    quality: str
    mode: CommandMode
    q: np.ndarray

    def line(self) -> str:
        joints = " ".join(f"{v:.6f}" for v in self.q)
        seq = self.seq if self.seq is not None else -1
        return f"{self.tick} {seq} {self.state.name} {self.quality} {self.mode.name} {joints}"


class SimulatorCore:
    """Controller loop logic shared by every transport.

    Call step(now, arrivals) once per sample period; arrivals are
    (datagram, receive_time, peer) triples observed since the previous step.
    Returns the monitor datagram to transmit, or None while IDLE.
    """

    def __init__(self, cfg: SimConfig, variant: Optional[model.RobotVariant] = None):
        self.cfg = cfg.validate()
        self.variant = variant or model.load_variant(cfg.variant)
        self.session = ServerSession(cfg.watchdog())
        self.state = SimState(
            q=np.asarray(cfg.initial_q, dtype=float).copy(), qd=np.zeros(7)
        )
        self.guard = CommandGuardConfig.from_variant(self.variant)
        self.negotiated_version: Optional[int] = None
        self.client_addr = None
        self.monitor_seq = 0
        self.outstanding: dict[int, list] = {}  # seq -> [sent_at, scored]
        self.operator_queue: collections.deque = collections.deque()
        self.transitions: list[tuple[float, StepResult]] = []
        self.outcome_counts = {"on_time": 0, "late": 0, "missing": 0}
        self.decode_errors = 0
        self._period_ns = round(self.cfg.sample_period * 1e9)

    # -- operator surface ------------------------------------------------------

    def request_control(self, mode: CommandMode) -> None:
        version = self.negotiated_version or self.cfg.protocol_version
        if mode not in supported_modes(version):
            raise ModeNotSupported(f"{mode.name} not available under protocol version {version}")
        self.operator_queue.append({"event": "request_control", "mode": mode})

    def release_control(self) -> None:
        self.operator_queue.append({"event": "release_control"})

    def inject(self, torque, ticks: int) -> None:
        self.operator_queue.append({"event": "inject", "torque": tuple(torque), "ticks": int(ticks)})

    # -- helpers ----------------------------------------------------------------

    def _record(self, now: float, result: StepResult) -> None:
        if result.transitioned or result.actions or result.error:
            self.transitions.append((now, result))
        if result.error:
            log.warning("illegal event: %s", result.error)

    def _command_valid(self, cmd: CommandMessage) -> bool:
        version = self.negotiated_version or self.cfg.protocol_version
        if cmd.client_command_mode not in supported_modes(version):
            return False
        granted = self.session.granted_mode
        if self.session.state in (SessionState.COMMANDING_WAIT, SessionState.COMMANDING_ACTIVE):
            if granted is not None and cmd.client_command_mode != granted:
                return False
        for name in ("joint_position", "torque_overlay", "wrench_overlay", "cartesian_pose"):
            values = getattr(cmd, name)
            if values is not None and not all(math.isfinite(v) for v in values):
                return False
        return True

    def _on_session_change(self, before: SessionState, after: SessionState) -> None:
        entering_active = after == SessionState.COMMANDING_ACTIVE and before != after
        leaving_active = before == SessionState.COMMANDING_ACTIVE and before != after
        if entering_active:
            mode = self.session.granted_mode or CommandMode.POSITION
            self.state.active_mode = mode
            self.state.q_setpoint = self.state.q.copy()
            if mode in (CommandMode.WRENCH, CommandMode.CARTESIAN_POSE):
                pose = model.forward_kinematics(self.state.q, self.variant)
                self.state.hold_pose = pose
                self.state.pose_setpoint = pose
        if leaving_active:
            self.state.active_mode = CommandMode.POSITION
            self.state.q_setpoint = self.state.q.copy()
            self.state.hold_pose = None
            self.state.pose_setpoint = None

    def _handle_session_event(self, now: float, event) -> StepResult:
        before = self.session.state
        result = self.session.handle(event)
        self._record(now, result)
        self._on_session_change(before, self.session.state)
        return result

    # -- the tick ----------------------------------------------------------------

    def step(self, now: float, arrivals=()) -> Optional[bytes]:
        freshest: Optional[CommandMessage] = None
        freshest_seq = -1

        for data, recv_time, addr in arrivals:
            reader = self.negotiated_version or self.cfg.protocol_version
            try:
                frame = decode_frame(data, reader_version=reader)
            except Exception as exc:
                self.decode_errors += 1
                log.debug("undecodable datagram: %s", exc)
                continue
            mtype = frame.header.message_type
            if mtype == MessageType.JOIN:
                if self.session.state == SessionState.IDLE:
                    self.negotiated_version = min(
                        frame.header.protocol_version, self.cfg.protocol_version
                    )
                    self.client_addr = addr
                    self.outstanding.clear()
                    self._handle_session_event(now, Join())
                else:
                    self._handle_session_event(now, Join())  # records IllegalEvent
                continue
            if mtype == MessageType.BYE:
                if self.session.state != SessionState.IDLE:
                    self._handle_session_event(now, Bye())
                    self.client_addr = None
                    self.negotiated_version = None
                    self.outstanding.clear()
                    self._on_hold()
                continue
            if mtype != MessageType.COMMAND or self.session.state == SessionState.IDLE:
                continue
            cmd = frame.payload
            assert isinstance(cmd, CommandMessage)
            entry = self.outstanding.get(cmd.reflected_sequence)
            valid = self._command_valid(cmd)
            if entry is not None and not entry[1]:
                entry[1] = True
                outcome = answer_outcome(entry[0], recv_time, self.session.cfg)
                self.outcome_counts[outcome.value] += 1
                if outcome is Outcome.ON_TIME:
                    self._handle_session_event(now, AnswerOnTime(mode_valid=valid))
                elif outcome is Outcome.LATE:
                    self._handle_session_event(now, AnswerLate(mode_valid=valid))
                else:
                    self._handle_session_event(now, AnswerMissing())
            age = (self.monitor_seq - 1) - cmd.reflected_sequence
            if valid and cmd.reflected_sequence > freshest_seq and age <= STALE_TICKS:
                freshest = cmd
                freshest_seq = cmd.reflected_sequence

        # answers that never came
        deadline = self.session.cfg.sample_period * self.session.cfg.deadline_factor
        for seq in sorted(self.outstanding):
            sent_at, scored = self.outstanding[seq]
            if not scored and now > sent_at + deadline:
                self.outstanding[seq][1] = True
                if self.session.state != SessionState.IDLE:
                    self.outcome_counts["missing"] += 1
                    self._handle_session_event(now, AnswerMissing())
        self.outstanding = {s: e for s, e in self.outstanding.items() if not e[1]}

        while self.operator_queue:
            op = self.operator_queue.popleft()
            if op["event"] == "request_control":
                self._handle_session_event(now, OperatorRequestsControl(op["mode"]))
            elif op["event"] == "release_control":
                self._handle_session_event(now, OperatorReleasesControl())
            elif op["event"] == "inject":
                self.state = inject_disturbance(self.state, op["torque"], op["ticks"])

        cmd_for_dynamics = None
        if self.session.state == SessionState.COMMANDING_ACTIVE and freshest is not None:
            cmd_for_dynamics = self._guard(freshest)
        try:
            self.state = step_dynamics(self.state, cmd_for_dynamics, self.cfg, self.variant)
        except ModeNotSupported as exc:
            log.warning("command rejected: %s", exc)
            self.state = step_dynamics(self.state, None, self.cfg, self.variant)

        if self.session.state == SessionState.IDLE:
            return None
        return self._emit_monitor(now)

    def _on_hold(self) -> None:
        self.state.active_mode = CommandMode.POSITION
        self.state.q_setpoint = self.state.q.copy()
        self.state.hold_pose = None
        self.state.pose_setpoint = None

    def _guard(self, cmd: CommandMessage) -> CommandMessage:
        return guard_command(cmd, self.state.q, self.cfg.sample_period, self.guard)

    def _emit_monitor(self, now: float) -> bytes:
        seq = self.monitor_seq
        total_ns = self.state.tick * self._period_ns
        mode = self.session.granted_mode or self.state.active_mode
        monitor = MonitorMessage(
            session_state=self.session.state,
            connection_quality=self.session.quality,
            control_mode=mode,
            sample_period=self.cfg.sample_period,
            measured_joint_position=tuple(float(v) for v in self.state.q),
            measured_torque=tuple(float(v) for v in self.state.last_tau),
            external_torque=tuple(float(v) for v in self.state.last_external),
            interpolated_command_position=tuple(float(v) for v in self.state.q_setpoint),
            timestamp_s=int(total_ns // 1_000_000_000),
            timestamp_ns=int(total_ns % 1_000_000_000),
            monitor_sequence=seq,
        )
        frame = encode_frame(
            FrameHeader(
                protocol_version=self.negotiated_version or self.cfg.protocol_version,
                message_type=MessageType.MONITOR,
                sequence=seq,
            ),
            monitor,
        )
        self.outstanding[seq] = [now, False]
        self.monitor_seq += 1
        return frame

    def log_entry(self) -> TickLog:
        return TickLog(
            tick=self.state.tick,
            seq=self.monitor_seq - 1 if self.monitor_seq else None,
            state=self.session.state,
            quality=self.session.quality.name,
            mode=self.session.granted_mode or self.state.active_mode,
            q=self.state.q.copy(),
        )
