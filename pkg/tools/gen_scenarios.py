"""Regenerate the shipped conformance scenarios.

Event scripts are authored here; the expected traces are produced by the
independent transition-table interpreter in tests/oracles.py, never by the
package implementation. Run from the repo root:

    python tools/gen_scenarios.py
"""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "tests"))

from oracles import interpret_events  # noqa: E402

T = 0.005
OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "lbr_kit" / "scenarios"


class Script:
    def __init__(self):
        self.events = []
        self.k = 0

    def at_next(self, event, **extra):
        self.k += 1
        entry = {"t": round(self.k * T, 6), "event": event}
        entry.update(extra)
        self.events.append(entry)
        return self

    def answers(self, n, kind="answer_on_time", **extra):
        for _ in range(n):
            self.at_next(kind, **extra)
        return self


def build(name, description, script):
    trace = interpret_events(script.events)
    return {
        "name": name,
        "description": description,
        "watchdog": {"sample_period": T, "deadline_factor": 3.0, "activation_streak": 10},
        "events": script.events,
        "expected_trace": [{"t": t, "state": state, "action": action} for t, state, action in trace],
    }


def happy_path():
    s = Script()
    s.at_next("join").answers(100).at_next("request_control", mode="TORQUE").answers(10)
    return build(
        "happy-path-activation",
        "Join, a full window of on-time answers, operator request, activation streak.",
        s,
    )


def quality_degradation():
    s = Script()
    s.at_next("join").answers(100).at_next("request_control", mode="POSITION").answers(10)
    s.answers(6, kind="answer_late")  # 6 bad in the window: quality drops below GOOD
    s.answers(100)  # rebuild a fresh window after the stop
    return build(
        "quality-degradation",
        "Late answers while commanding drag quality below GOOD: SafetyStop, then recovery.",
        s,
    )


def watchdog_safety_stop():
    s = Script()
    s.at_next("join").answers(100).at_next("request_control", mode="TORQUE").answers(10)
    s.answers(5).at_next("answer_missing")
    return build(
        "watchdog-safety-stop",
        "A missing answer in COMMANDING_ACTIVE triggers the watchdog SafetyStop.",
        s,
    )


def bye():
    s = Script()
    s.at_next("join").answers(30).at_next("bye")
    return build("bye", "Clean session teardown from monitoring.", s)


def illegal_join():
    s = Script()
    s.at_next("join").answers(100).at_next("join").answers(3).at_next("bye")
    return build(
        "illegal-join",
        "A second Join during an open session is rejected without a transition.",
        s,
    )


def flapping_link():
    s = Script()
    s.at_next("join").answers(100)                      # -> READY
    s.at_next("request_control", mode="POSITION")
    s.answers(5).at_next("answer_missing")              # streak broken, quality still fine
    s.answers(10)                                        # -> ACTIVE
    s.at_next("answer_missing")                          # watchdog: stop + window reset
    s.answers(99)                                        # one short of a full window
    s.answers(1, kind="answer_late")                     # full window, 1 bad -> EXCELLENT
    s.at_next("request_control", mode="TORQUE")
    s.answers(3).answers(7, kind="answer_late")          # lates erode quality out of WAIT
    return build(
        "flapping-link",
        "Streak resets, watchdog stop, slow re-qualification, demotion out of COMMANDING_WAIT.",
        s,
    )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for scenario in (happy_path(), quality_degradation(), watchdog_safety_stop(), bye(),
                     illegal_join(), flapping_link()):
        path = OUT / f"{scenario['name']}.json"
        path.write_text(json.dumps(scenario, indent=1) + "\n")
        print(f"{scenario['name']}: {len(scenario['events'])} events, "
              f"{len(scenario['expected_trace'])} trace entries")


if __name__ == "__main__":
    main()
