"""Application-facing client: callback dispatch, command guards, smoothing.

The sample loop is strictly receive → dispatch → guard → send: every monitor
datagram triggers exactly one callback and exactly one answer datagram. In
monitoring states the answer is a heartbeat that echoes the controller's
interpolated command position, which keeps the server's quality estimator fed
before any command authority exists.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import socket
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import model
from .errors import (
    CallbackPanic,
    ConfigError,
    InvalidCommand,
    NoCommonVersion,
    SessionAborted,
)
from .session import step_client
from .wire import (
    CommandMessage,
    CommandMode,
    FrameHeader,
    InvariantViolation,
    MessageType,
    MonitorMessage,
    SessionState,
    decode_frame,
    encode_frame,
    negotiate_version,
)

log = logging.getLogger("lbr_kit.client")

DEFAULT_FILTER_ALPHA = 0.2
DEFAULT_TORQUE_LIMIT_NM = 100.0


# --- command constructors --------------------------------------------------------


def position_command(joint_position, reflected_sequence: int = 0) -> CommandMessage:
    return CommandMessage(
        client_command_mode=CommandMode.POSITION,
        reflected_sequence=reflected_sequence,
        joint_position=tuple(float(v) for v in joint_position),
    )


def torque_command(joint_position, torque_overlay, reflected_sequence: int = 0) -> CommandMessage:
    return CommandMessage(
        client_command_mode=CommandMode.TORQUE,
        reflected_sequence=reflected_sequence,
        joint_position=tuple(float(v) for v in joint_position),
        torque_overlay=tuple(float(v) for v in torque_overlay),
    )


def wrench_command(wrench_overlay, reflected_sequence: int = 0) -> CommandMessage:
    return CommandMessage(
        client_command_mode=CommandMode.WRENCH,
        reflected_sequence=reflected_sequence,
        wrench_overlay=tuple(float(v) for v in wrench_overlay),
    )


def cartesian_pose_command(pose_values, reflected_sequence: int = 0) -> CommandMessage:
    return CommandMessage(
        client_command_mode=CommandMode.CARTESIAN_POSE,
        reflected_sequence=reflected_sequence,
        cartesian_pose=tuple(float(v) for v in pose_values),
    )


def echo_command(monitor: MonitorMessage, variant: Optional[model.RobotVariant] = None) -> CommandMessage:
    """Mode-appropriate neutral answer: echo the interpolated position with
    zero overlays. CARTESIAN_POSE echoes the pose of the measured joints,
    which requires a kinematic model."""
    mode = CommandMode(monitor.control_mode)
    if mode == CommandMode.POSITION:
        return position_command(monitor.interpolated_command_position)
    if mode == CommandMode.TORQUE:
        return torque_command(monitor.interpolated_command_position, (0.0,) * 7)
    if mode == CommandMode.WRENCH:
        return wrench_command((0.0,) * 6)
    if variant is None:
        raise ConfigError("CARTESIAN_POSE echo needs a robot variant for forward kinematics")
    pose = model.forward_kinematics(np.asarray(monitor.measured_joint_position), variant)
    return cartesian_pose_command(pose.as_command_tuple())


# --- guards ---------------------------------------------------------------------


@dataclass(frozen=True)
class CommandGuardConfig:
    position_limits: tuple[tuple[float, float], ...]  # 7 × (min, max) rad
    velocity_limits: tuple[float, ...]                # 7 × rad/s
    torque_limits: tuple[float, ...]                  # 7 × N·m

    def __post_init__(self):
        if len(self.position_limits) != 7 or len(self.velocity_limits) != 7 or len(self.torque_limits) != 7:
            raise ConfigError("guard config needs 7 entries per limit")
        for lo, hi in self.position_limits:
            if not lo < hi:
                raise ConfigError("guard position limits must satisfy min < max")
        if any(v <= 0 for v in self.velocity_limits) or any(t <= 0 for t in self.torque_limits):
            raise ConfigError("guard velocity and torque limits must be > 0")

    @classmethod
    def from_variant(
        cls, variant: model.RobotVariant, torque_limit_nm: float = DEFAULT_TORQUE_LIMIT_NM
    ) -> "CommandGuardConfig":
        return cls(
            position_limits=tuple((float(lo), float(hi)) for lo, hi in variant.joint_limits),
            velocity_limits=tuple(float(v) for v in variant.velocity_limits),
            torque_limits=(float(torque_limit_nm),) * 7,
        )

    def tightened(
        self,
        position_limits=None,
        velocity_limits=None,
        torque_limits=None,
    ) -> "CommandGuardConfig":
        """Derive a stricter config; loosening any limit is rejected."""
        pos = tuple(tuple(p) for p in position_limits) if position_limits else self.position_limits
        vel = tuple(velocity_limits) if velocity_limits else self.velocity_limits
        tor = tuple(torque_limits) if torque_limits else self.torque_limits
        for (nlo, nhi), (olo, ohi) in zip(pos, self.position_limits):
            if nlo < olo or nhi > ohi:
                raise ConfigError("position limits may only be tightened")
        if any(n > o for n, o in zip(vel, self.velocity_limits)):
            raise ConfigError("velocity limits may only be tightened")
        if any(n > o for n, o in zip(tor, self.torque_limits)):
            raise ConfigError("torque limits may only be tightened")
        return CommandGuardConfig(pos, vel, tor)


def _clamp(value: float, lo: float, hi: float) -> float:
    if value < lo:
        return lo
    if value > hi:
        return hi
    return value


def guard_command(
    cmd: CommandMessage,
    previous_position,
    sample_period: float,
    cfg: CommandGuardConfig,
) -> CommandMessage:
    """Clamp a command into the safe envelope; never rejects.

    Joint positions are clamped to the position limits, then rate-limited so
    no joint moves more than velocity_limit × sample_period from
    previous_position in one tick. Torque overlays saturate at the torque
    limits. Wrench and cartesian fields pass through (the controller guards
    them). Idempotent: guarding a guarded command changes nothing.
    """
    changes = {}
    if cmd.joint_position is not None:
        out = []
        for j, value in enumerate(cmd.joint_position):
            lo, hi = cfg.position_limits[j]
            value = _clamp(value, lo, hi)
            step_cap = cfg.velocity_limits[j] * sample_period
            prev = float(previous_position[j])
            value = prev + _clamp(value - prev, -step_cap, step_cap)
            out.append(value)
        changes["joint_position"] = tuple(out)
    if cmd.torque_overlay is not None:
        changes["torque_overlay"] = tuple(
            _clamp(t, -cfg.torque_limits[j], cfg.torque_limits[j])
            for j, t in enumerate(cmd.torque_overlay)
        )
    if not changes:
        return cmd
    return dataclasses.replace(cmd, **changes)


def count_clamped(before: CommandMessage, after: CommandMessage) -> int:
    """How many scalar entries the guard changed (observability metric)."""
    n = 0
    for name in ("joint_position", "torque_overlay"):
        a, b = getattr(before, name), getattr(after, name)
        if a is not None and b is not None:
            n += sum(1 for x, y in zip(a, b) if x != y)
    return n


# --- smoothing ---------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialFilter:
    """First-order smoother; the first sample passes through unchanged."""

    alpha: float
    previous_output: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"filter alpha must be in [0, 1], got {self.alpha}")


def filter_step(f: ExponentialFilter, values) -> tuple[ExponentialFilter, tuple[float, ...]]:
    vec = tuple(float(v) for v in values)
    if f.previous_output is None:
        out = vec
    else:
        a = f.alpha
        out = tuple(a * x + (1.0 - a) * p for x, p in zip(vec, f.previous_output))
    return ExponentialFilter(f.alpha, out), out


# --- callbacks and dispatch -----------------------------------------------------------


@dataclass
class ClientCallbacks:
    """User hooks, one of which fires per monitor message.

    on_monitor observes; on_wait_for_command must answer with a mode-valid
    echo; on_command owns the setpoint while command authority is granted.
    """

    on_monitor: Callable[[MonitorMessage], None]
    on_wait_for_command: Callable[[MonitorMessage], CommandMessage]
    on_command: Callable[[MonitorMessage], CommandMessage]


def dispatch(callbacks: ClientCallbacks, monitor: MonitorMessage) -> Optional[CommandMessage]:
    """Route one monitor message to exactly one callback.

    Returns the callback's command in commanding states and None otherwise;
    the transport layer turns None into a heartbeat echo.
    """
    state = SessionState(monitor.session_state)
    if state == SessionState.COMMANDING_WAIT:
        return callbacks.on_wait_for_command(monitor)
    if state == SessionState.COMMANDING_ACTIVE:
        return callbacks.on_command(monitor)
    callbacks.on_monitor(monitor)
    return None


def _command_is_finite(cmd: CommandMessage) -> bool:
    for name in ("joint_position", "torque_overlay", "wrench_overlay", "cartesian_pose"):
        values = getattr(cmd, name)
        if values is not None and not all(math.isfinite(v) for v in values):
            return False
    return True


class ClientCore:
    """Sans-IO client logic: feed it datagrams, it yields datagrams to send.

    One instance per session. The transport (UDP loop or in-process harness)
    owns the socket and the clock; the core owns negotiation, mirroring,
    dispatch, the filter, and the guard.
    """

    def __init__(
        self,
        callbacks: ClientCallbacks,
        guard: CommandGuardConfig,
        versions=(1, 2),
        filter_alpha: Optional[float] = DEFAULT_FILTER_ALPHA,
        variant: Optional[model.RobotVariant] = None,
    ):
        if not versions:
            raise NoCommonVersion("client supports no versions")
        self.callbacks = callbacks
        self.guard = guard
        self.versions = frozenset(int(v) for v in versions)
        self.variant = variant
        self.filter_alpha = filter_alpha
        self._filter = ExponentialFilter(filter_alpha) if filter_alpha is not None else None
        self.version: Optional[int] = None
        self.state = SessionState.IDLE
        self.last_monitor: Optional[MonitorMessage] = None
        self.monitors_seen = 0
        self.clamped_entries = 0
        self._seq = 0
        self._prev_position: Optional[tuple[float, ...]] = None
        self._ended = False

    # -- frame builders ------------------------------------------------------

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFFFFFFFF
        return seq

    def join_datagram(self) -> bytes:
        proposed = max(self.versions)
        return encode_frame(
            FrameHeader(protocol_version=proposed, message_type=MessageType.JOIN, sequence=self._next_seq())
        )

    def bye_datagram(self) -> bytes:
        self._ended = True
        version = self.version or max(self.versions)
        return encode_frame(
            FrameHeader(protocol_version=version, message_type=MessageType.BYE, sequence=self._next_seq())
        )

    # -- the sample step ------------------------------------------------------

    def handle_datagram(self, data: bytes) -> Optional[bytes]:
        """Process one datagram from the controller; return the answer bytes.

        Raises NoCommonVersion, CallbackPanic or InvalidCommand; the transport
        should then flush bye_datagram() and tear the session down.
        """
        reader = self.version or max(self.versions)
        try:
            frame = decode_frame(data, reader_version=reader)
        except Exception as exc:
            log.warning("dropping undecodable datagram: %s", exc)
            return None
        if frame.header.message_type != MessageType.MONITOR:
            return None
        monitor = frame.payload
        assert isinstance(monitor, MonitorMessage)

        if self.version is None:
            offered = frame.header.protocol_version
            agreed = negotiate_version(self.versions, offered)
            if agreed != offered:
                # The server already committed to `offered`; a client that
                # cannot speak it must leave.
                raise NoCommonVersion(f"server speaks {offered}, client supports {sorted(self.versions)}")
            self.version = agreed

        self.state = step_client(self.state, monitor)
        self.last_monitor = monitor
        self.monitors_seen += 1
        if self._prev_position is None:
            self._prev_position = tuple(monitor.interpolated_command_position)
        if self.state != SessionState.COMMANDING_ACTIVE and self._filter is not None:
            self._filter = ExponentialFilter(self.filter_alpha)

        try:
            cmd = dispatch(self.callbacks, monitor)
        except Exception as exc:
            raise CallbackPanic(f"callback raised: {exc!r}") from exc
        if cmd is None:
            cmd = echo_command(monitor, self.variant)

        if not _command_is_finite(cmd):
            raise InvalidCommand("callback returned a non-finite command value")
        if self.state == SessionState.COMMANDING_ACTIVE and self._filter is not None and cmd.joint_position is not None:
            self._filter, smoothed = filter_step(self._filter, cmd.joint_position)
            cmd = dataclasses.replace(cmd, joint_position=smoothed)
        guarded = guard_command(cmd, self._prev_position, monitor.sample_period, self.guard)
        self.clamped_entries += count_clamped(cmd, guarded)
        guarded = dataclasses.replace(guarded, reflected_sequence=monitor.monitor_sequence)
        if guarded.joint_position is not None:
            self._prev_position = guarded.joint_position

        try:
            return encode_frame(
                FrameHeader(
                    protocol_version=self.version,
                    message_type=MessageType.COMMAND,
                    sequence=self._next_seq(),
                ),
                guarded,
            )
        except InvariantViolation as exc:
            raise InvalidCommand(str(exc)) from exc


class UdpClient:
    """Blocking UDP transport around ClientCore.

    One session per loop; create a fresh instance to reconnect. The loop
    answers every monitor datagram and stops on duration, a predicate, or
    session teardown.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 30200,
        callbacks: Optional[ClientCallbacks] = None,
        guard: Optional[CommandGuardConfig] = None,
        versions=(1, 2),
        variant_name: str = "med7",
        filter_alpha: Optional[float] = DEFAULT_FILTER_ALPHA,
        recv_timeout: float = 2.0,
    ):
        self.variant = model.load_variant(variant_name)
        guard = guard or CommandGuardConfig.from_variant(self.variant)
        callbacks = callbacks or ClientCallbacks(
            on_monitor=lambda m: None,
            on_wait_for_command=lambda m: echo_command(m, self.variant),
            on_command=lambda m: echo_command(m, self.variant),
        )
        self.core = ClientCore(
            callbacks, guard, versions=versions, filter_alpha=filter_alpha, variant=self.variant
        )
        self.address = (host, port)
        self.recv_timeout = recv_timeout
        self.sock: Optional[socket.socket] = None
        self.sent_command_frames: list[bytes] = []
        self.record_trace = False

    @property
    def version(self) -> Optional[int]:
        return self.core.version

    @property
    def last_monitor(self) -> Optional[MonitorMessage]:
        return self.core.last_monitor

    def connect(self, timeout: float = 5.0) -> int:
        """Send JOIN and process the first monitor; returns the agreed version."""
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.settimeout(self.recv_timeout)
        self.sock.sendto(self.core.join_datagram(), self.address)
        deadline = _now() + timeout
        while self.core.version is None:
            if _now() > deadline:
                self.close()
                raise SessionAborted("no monitor received; join timed out")
            self._pump_once()
        return self.core.version

    def _pump_once(self) -> bool:
        assert self.sock is not None
        try:
            data, _ = self.sock.recvfrom(65535)
        except socket.timeout:
            return False
        try:
            answer = self.core.handle_datagram(data)
        except (CallbackPanic, InvalidCommand, NoCommonVersion):
            try:
                self.sock.sendto(self.core.bye_datagram(), self.address)
            finally:
                self.close()
            raise
        if answer is not None:
            if self.record_trace:
                self.sent_command_frames.append(answer)
            self.sock.sendto(answer, self.address)
        return True

    def run(
        self,
        duration: Optional[float] = None,
        until: Optional[Callable[["UdpClient"], bool]] = None,
        wall_timeout: Optional[float] = None,
    ) -> None:
        """Answer monitors until `duration` of monitor time passed (per the
        monitor timestamps) or `until(self)` is true."""
        if self.sock is None:
            raise SessionAborted("connect() first")
        start_ts: Optional[float] = None
        wall_deadline = _now() + wall_timeout if wall_timeout is not None else None
        while True:
            got = self._pump_once()
            if got and self.core.last_monitor is not None:
                m = self.core.last_monitor
                ts = m.timestamp_s + m.timestamp_ns * 1e-9
                if start_ts is None:
                    start_ts = ts
                if duration is not None and ts - start_ts >= duration:
                    return
            if until is not None and until(self):
                return
            if wall_deadline is not None and _now() > wall_deadline:
                raise SessionAborted("client run() wall timeout")

    def bye(self) -> None:
        if self.sock is not None:
            try:
                self.sock.sendto(self.core.bye_datagram(), self.address)
            except OSError:
                pass
        self.close()

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None


def _now() -> float:
    import time

    return time.perf_counter()
