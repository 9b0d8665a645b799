"""Session lifecycle: state machines, connection quality, and the watchdog.

The server grants command authority only after the link has proven itself:
a full window of answer outcomes must classify at least GOOD before
MONITORING_READY is reached, and an activation streak of consecutive
on-time, mode-valid answers gates COMMANDING_ACTIVE. A missing answer while
commanding, or a quality downgrade below GOOD, revokes authority with a
SafetyStop and clears the evidence window, so authority can only be regained
after a full fresh window.

Downgrades are applied immediately; upgrades are withheld until the window
is full. The quality thresholds are exact rationals, evaluated in integer
arithmetic: bad/n ≤ 1/100 EXCELLENT, ≤ 1/20 GOOD, ≤ 1/10 FAIR, else POOR.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

from .errors import IllegalEvent
from .wire import CommandMode, ConnectionQuality, MonitorMessage, SessionState

QUALITY_WINDOW = 100


class Outcome(enum.Enum):
    ON_TIME = "on_time"
    LATE = "late"
    MISSING = "missing"


class Action(enum.Enum):
    SAFETY_STOP = "safety_stop"
    RESET_QUALITY_WINDOW = "reset_quality_window"


@dataclass(frozen=True)
class WatchdogConfig:
    sample_period: float
    deadline_factor: float = 3.0
    activation_streak: int = 10

    def __post_init__(self):
        if not self.sample_period > 0:
            raise ValueError(f"sample_period must be > 0, got {self.sample_period}")
        if not self.deadline_factor >= 1:
            raise ValueError(f"deadline_factor must be >= 1, got {self.deadline_factor}")
        if not self.activation_streak >= 1:
            raise ValueError(f"activation_streak must be >= 1, got {self.activation_streak}")


def classify_quality(window) -> ConnectionQuality:
    """Grade a window of outcomes; an empty window has proven nothing → POOR."""
    n = len(window)
    if n == 0:
        return ConnectionQuality.POOR
    bad = sum(1 for o in window if o is not Outcome.ON_TIME)
    if bad * 100 <= n:
        return ConnectionQuality.EXCELLENT
    if bad * 20 <= n:
        return ConnectionQuality.GOOD
    if bad * 10 <= n:
        return ConnectionQuality.FAIR
    return ConnectionQuality.POOR


def answer_outcome(
    monitor_sent_at: float, answer_received_at: Optional[float], cfg: WatchdogConfig
) -> Outcome:
    """Score one answer against the deadline scheme.

    No answer, or an answer beyond sample_period * deadline_factor, counts as
    missing; within one sample period it is on time; in between it is late.
    """
    if answer_received_at is None:
        return Outcome.MISSING
    latency = answer_received_at - monitor_sent_at
    if latency <= cfg.sample_period:
        return Outcome.ON_TIME
    if latency <= cfg.sample_period * cfg.deadline_factor:
        return Outcome.LATE
    return Outcome.MISSING


class QualityMonitor:
    """Ring buffer of the last QUALITY_WINDOW outcomes plus the graded level.

    Downgrades take effect on the sample that causes them; upgrades are only
    granted once the window holds a full QUALITY_WINDOW of evidence, so after
    a reset the link must re-prove itself from scratch.
    """

    def __init__(self, window_size: int = QUALITY_WINDOW):
        self.window_size = window_size
        self.window: deque[Outcome] = deque(maxlen=window_size)
        self.quality = ConnectionQuality.POOR

    def record(self, outcome: Outcome) -> ConnectionQuality:
        self.window.append(outcome)
        candidate = classify_quality(self.window)
        if candidate < self.quality:
            self.quality = candidate
        elif candidate > self.quality and len(self.window) == self.window_size:
            self.quality = candidate
        return self.quality

    def reset(self) -> None:
        self.window.clear()
        self.quality = ConnectionQuality.POOR


# --- events --------------------------------------------------------------------


@dataclass(frozen=True)
class Join:
    pass


@dataclass(frozen=True)
class Bye:
    pass


@dataclass(frozen=True)
class AnswerOnTime:
    mode_valid: bool = True


@dataclass(frozen=True)
class AnswerLate:
    mode_valid: bool = True


@dataclass(frozen=True)
class AnswerMissing:
    pass


@dataclass(frozen=True)
class OperatorRequestsControl:
    mode: CommandMode = CommandMode.POSITION


@dataclass(frozen=True)
class OperatorReleasesControl:
    pass


SessionEvent = Union[
    Join, Bye, AnswerOnTime, AnswerLate, AnswerMissing, OperatorRequestsControl, OperatorReleasesControl
]

_ANSWER_EVENTS = (AnswerOnTime, AnswerLate, AnswerMissing)

EVENT_OUTCOME = {
    AnswerOnTime: Outcome.ON_TIME,
    AnswerLate: Outcome.LATE,
    AnswerMissing: Outcome.MISSING,
}


def step_server(
    state: SessionState,
    event: SessionEvent,
    quality: ConnectionQuality,
    streak: int,
    cfg: WatchdogConfig,
) -> tuple[SessionState, tuple[Action, ...]]:
    """One transition of the server state machine.

    quality and streak are the values after the event's outcome has been
    recorded. SafetyStop fires on every COMMANDING_ACTIVE → MONITORING_WAIT
    transition and on no other; a demotion out of COMMANDING_WAIT is silent
    because no command authority existed yet.

    Raises IllegalEvent for events the current state cannot accept.
    """
    if isinstance(event, Join):
        if state != SessionState.IDLE:
            raise IllegalEvent(f"Join while {state.name}")
        return SessionState.MONITORING_WAIT, ()
    if isinstance(event, Bye):
        if state == SessionState.IDLE:
            raise IllegalEvent("Bye with no session")
        return SessionState.IDLE, ()
    if isinstance(event, OperatorRequestsControl):
        if state != SessionState.MONITORING_READY:
            raise IllegalEvent(f"control request while {state.name}")
        return SessionState.COMMANDING_WAIT, ()
    if isinstance(event, OperatorReleasesControl):
        if state not in (SessionState.COMMANDING_WAIT, SessionState.COMMANDING_ACTIVE):
            raise IllegalEvent(f"control release while {state.name}")
        return SessionState.MONITORING_READY, ()
    if not isinstance(event, _ANSWER_EVENTS):
        raise IllegalEvent(f"unknown event {event!r}")

    if state == SessionState.IDLE:
        raise IllegalEvent("answer outcome with no session")
    if state == SessionState.MONITORING_WAIT:
        if quality >= ConnectionQuality.GOOD:
            return SessionState.MONITORING_READY, ()
        return state, ()
    if state == SessionState.MONITORING_READY:
        if quality < ConnectionQuality.GOOD:
            return SessionState.MONITORING_WAIT, ()
        return state, ()
    if state == SessionState.COMMANDING_WAIT:
        if quality < ConnectionQuality.GOOD:
            return SessionState.MONITORING_WAIT, ()
        if streak >= cfg.activation_streak:
            return SessionState.COMMANDING_ACTIVE, ()
        return state, ()
    # COMMANDING_ACTIVE
    if isinstance(event, AnswerMissing) or quality < ConnectionQuality.GOOD:
        return SessionState.MONITORING_WAIT, (Action.SAFETY_STOP, Action.RESET_QUALITY_WINDOW)
    return state, ()


def step_client(state: SessionState, monitor: MonitorMessage) -> SessionState:
    """The client mirrors whatever session state the monitor reports."""
    return SessionState(monitor.session_state)


@dataclass
class StepResult:
    state_before: SessionState
    state_after: SessionState
    actions: tuple[Action, ...]
    quality: ConnectionQuality
    error: Optional[str] = None

    @property
    def transitioned(self) -> bool:
        return self.state_after != self.state_before


class ServerSession:
    """Stateful wrapper tying step_server to the quality window and streak.

    Illegal events are reported in the StepResult instead of raised, so a
    live control loop never dies on a misbehaving peer.
    """

    def __init__(self, cfg: WatchdogConfig):
        self.cfg = cfg
        self.state = SessionState.IDLE
        self.monitor = QualityMonitor()
        self.streak = 0
        self.granted_mode: Optional[CommandMode] = None

    @property
    def quality(self) -> ConnectionQuality:
        return self.monitor.quality

    def handle(self, event: SessionEvent) -> StepResult:
        before = self.state
        is_answer = isinstance(event, _ANSWER_EVENTS)
        if is_answer and before != SessionState.IDLE:
            self.monitor.record(EVENT_OUTCOME[type(event)])
            if before == SessionState.COMMANDING_WAIT:
                on_time_valid = isinstance(event, AnswerOnTime) and event.mode_valid
                self.streak = self.streak + 1 if on_time_valid else 0
        try:
            after, actions = step_server(before, event, self.quality, self.streak, self.cfg)
        except IllegalEvent as exc:
            return StepResult(before, before, (), self.quality, error=str(exc))

        if isinstance(event, Join) or isinstance(event, Bye):
            self.monitor.reset()
            self.streak = 0
            self.granted_mode = None
        if isinstance(event, OperatorRequestsControl):
            self.streak = 0
            self.granted_mode = event.mode
        if Action.RESET_QUALITY_WINDOW in actions:
            self.monitor.reset()
        if after != before and after not in (
            SessionState.COMMANDING_WAIT,
            SessionState.COMMANDING_ACTIVE,
        ):
            if before in (SessionState.COMMANDING_WAIT, SessionState.COMMANDING_ACTIVE):
                self.granted_mode = None
        if after == SessionState.COMMANDING_WAIT and before != after:
            self.streak = 0
        self.state = after
        return StepResult(before, after, actions, self.quality)
