"""Session conformance scenarios: JSON event scripts with expected traces.

A scenario is an ordered list of timestamped events replayed through the
same server session machinery the live simulator runs. Every transition
(and every rejected illegal event) emits one trace entry; a run passes when
its trace matches the scenario's expected trace exactly.

Trace file format, one line per entry:  `<time> <STATE> <action>`
with action one of none / safety_stop / illegal_event.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .session import (
    Action,
    AnswerLate,
    AnswerMissing,
    AnswerOnTime,
    Bye,
    Join,
    OperatorReleasesControl,
    OperatorRequestsControl,
    ServerSession,
    SessionEvent,
    WatchdogConfig,
)
from .wire import CommandMode


@dataclass(frozen=True)
class TimedEvent:
    t: float
    event: SessionEvent


@dataclass(frozen=True)
class TraceEntry:
    t: float
    state: str
    action: str  # none | safety_stop | illegal_event

    def line(self) -> str:
        return f"{self.t:.6f} {self.state} {self.action}"


@dataclass
class Scenario:
    name: str
    description: str
    watchdog: WatchdogConfig
    events: list[TimedEvent]
    expected_trace: list[TraceEntry]


@dataclass
class ScenarioResult:
    name: str
    ok: bool
    trace: list[TraceEntry]
    expected: list[TraceEntry]
    first_divergence: Optional[int] = None

    def divergence_message(self) -> str:
        if self.ok:
            return ""
        i = self.first_divergence if self.first_divergence is not None else 0
        got = self.trace[i].line() if i < len(self.trace) else "<no entry>"
        want = self.expected[i].line() if i < len(self.expected) else "<no entry>"
        return f"{self.name}: first divergent transition at index {i}: got `{got}`, expected `{want}`"


def event_from_dict(data: dict) -> SessionEvent:
    kind = data["event"]
    if kind == "join":
        return Join()
    if kind == "bye":
        return Bye()
    if kind == "answer_on_time":
        return AnswerOnTime(mode_valid=bool(data.get("mode_valid", True)))
    if kind == "answer_late":
        return AnswerLate(mode_valid=bool(data.get("mode_valid", True)))
    if kind == "answer_missing":
        return AnswerMissing()
    if kind == "request_control":
        return OperatorRequestsControl(CommandMode[data.get("mode", "POSITION")])
    if kind == "release_control":
        return OperatorReleasesControl()
    raise ConfigError(f"unknown scenario event {kind!r}")


def load_scenario(source) -> Scenario:
    """Load a scenario from a path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    try:
        wd = data.get("watchdog", {})
        cfg = WatchdogConfig(
            sample_period=float(wd.get("sample_period", 0.005)),
            deadline_factor=float(wd.get("deadline_factor", 3.0)),
            activation_streak=int(wd.get("activation_streak", 10)),
        )
        events = [TimedEvent(float(e["t"]), event_from_dict(e)) for e in data["events"]]
        expected = [
            TraceEntry(float(e["t"]), e["state"], e["action"]) for e in data.get("expected_trace", [])
        ]
        return Scenario(
            name=data["name"],
            description=data.get("description", ""),
            watchdog=cfg,
            events=events,
            expected_trace=expected,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc


def replay(events: list[TimedEvent], cfg: WatchdogConfig) -> list[TraceEntry]:
    """Run events through a ServerSession, emitting the canonical trace."""
    session = ServerSession(cfg)
    trace: list[TraceEntry] = []
    for timed in events:
        result = session.handle(timed.event)
        if result.error is not None:
            trace.append(TraceEntry(timed.t, result.state_after.name, "illegal_event"))
        elif result.transitioned or result.actions:
            action = "safety_stop" if Action.SAFETY_STOP in result.actions else "none"
            trace.append(TraceEntry(timed.t, result.state_after.name, action))
    return trace


def run_scenario(scenario: Scenario) -> ScenarioResult:
    trace = replay(scenario.events, scenario.watchdog)
    first = None
    for i in range(max(len(trace), len(scenario.expected_trace))):
        if (
            i >= len(trace)
            or i >= len(scenario.expected_trace)
            or trace[i] != scenario.expected_trace[i]
        ):
            first = i
            break
    return ScenarioResult(
        name=scenario.name,
        ok=first is None,
        trace=trace,
        expected=scenario.expected_trace,
        first_divergence=first,
    )


def shipped_scenario_paths() -> list:
    base = resources.files("lbr_kit") / "scenarios"
    return sorted((p for p in base.iterdir() if p.name.endswith(".json")), key=lambda p: p.name)


def format_trace(trace: list[TraceEntry]) -> str:
    return "\n".join(entry.line() for entry in trace) + ("\n" if trace else "")
