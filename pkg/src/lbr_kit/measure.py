"""Link measurement: answer monitors with an artificial delay, report quality.

Loopback mode runs the simulator in-process over the virtual-time harness, so
the injected delays are exact and a seed fully determines the report. Against
a remote server the delays are wall-clock sleeps scheduled on a heap, and the
report reflects whatever the network adds on top.
"""

from __future__ import annotations

import heapq
import random
import socket
import time
from dataclasses import dataclass
from typing import Optional

from .client import ClientCallbacks, ClientCore, CommandGuardConfig, echo_command
from .errors import SessionAborted
from .loopback import LoopbackHarness
from .model import load_variant
from .simulator import SimConfig

REPORT_VERSION = 1


@dataclass
class MeasureParams:
    delay_ms: float = 0.0
    jitter_ms: float = 0.0
    duration_s: float = 2.0
    seed: int = 0

    def delay_fn(self):
        rng = random.Random(self.seed)
        mean = self.delay_ms / 1000.0
        spread = self.jitter_ms / 1000.0

        def delay(_index: int) -> float:
            if spread == 0.0:
                return max(0.0, mean)
            return max(0.0, rng.uniform(mean - spread, mean + spread))

        return delay


def _report(params: MeasureParams, cfg: SimConfig, outcome_counts, quality_timeline, state_timeline,
            monitors_seen: int, source: str) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "source": source,
        "seed": params.seed,
        "delay_ms": params.delay_ms,
        "jitter_ms": params.jitter_ms,
        "duration_s": params.duration_s,
        "sample_period": cfg.sample_period,
        "monitors_seen": monitors_seen,
        "outcome_counts": outcome_counts,
        "quality_timeline": [[t, name] for t, name in quality_timeline],
        "session_timeline": [[t, name] for t, name in state_timeline],
    }


def measure_loopback(params: MeasureParams, sim_cfg: SimConfig) -> dict:
    """Deterministic measurement run against an in-process simulator."""
    variant = load_variant(sim_cfg.variant)
    core = ClientCore(
        ClientCallbacks(
            on_monitor=lambda m: None,
            on_wait_for_command=lambda m: echo_command(m, variant),
            on_command=lambda m: echo_command(m, variant),
        ),
        CommandGuardConfig.from_variant(variant),
        variant=variant,
    )
    harness = LoopbackHarness(sim_cfg, core, answer_delay=params.delay_fn())
    harness.join()
    n_ticks = int(round(params.duration_s / harness.period))
    harness.run(n_ticks)
    counts = dict(harness.server.outcome_counts)
    report = _report(
        params,
        harness.server.cfg,
        counts,
        harness.quality_timeline,
        harness.state_timeline,
        core.monitors_seen,
        source="loopback",
    )
    harness.finish()
    return report


def measure_udp(params: MeasureParams, host: str, port: int, variant_name: str = "med7",
                join_timeout: float = 5.0) -> dict:
    """Measurement against a live server; delays are wall-clock scheduled."""
    variant = load_variant(variant_name)
    core = ClientCore(
        ClientCallbacks(
            on_monitor=lambda m: None,
            on_wait_for_command=lambda m: echo_command(m, variant),
            on_command=lambda m: echo_command(m, variant),
        ),
        CommandGuardConfig.from_variant(variant),
        variant=variant,
    )
    delay = params.delay_fn()
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    address = (host, port)
    sock.sendto(core.join_datagram(), address)

    sends: list[tuple[float, int, bytes]] = []
    counter = 0
    quality_timeline: list[tuple[float, str]] = []
    state_timeline: list[tuple[float, str]] = []
    last_quality: Optional[str] = None
    last_state: Optional[str] = None
    sample_period = 0.005
    answers = 0

    start = time.perf_counter()
    deadline = start + params.duration_s + join_timeout
    got_first = False
    try:
        while True:
            now = time.perf_counter()
            if now > deadline or (got_first and now - start > params.duration_s + join_timeout):
                break
            while sends and sends[0][0] <= now:
                _, _, frame = heapq.heappop(sends)
                sock.sendto(frame, address)
            wait = min(sends[0][0] - now, 0.05) if sends else 0.05
            sock.settimeout(max(wait, 0.001))
            try:
                data, _ = sock.recvfrom(65535)
            except socket.timeout:
                continue
            recv_t = time.perf_counter()
            if not got_first:
                got_first = True
                if recv_t - start > join_timeout:
                    raise SessionAborted("join timed out")
                deadline = recv_t + params.duration_s
            answer = core.handle_datagram(data)
            monitor = core.last_monitor
            if monitor is not None:
                sample_period = monitor.sample_period
                t = recv_t - start
                quality = monitor.connection_quality.name
                state = monitor.session_state.name
                if quality != last_quality:
                    quality_timeline.append((t, quality))
                    last_quality = quality
                if state != last_state:
                    state_timeline.append((t, state))
                    last_state = state
            if answer is not None:
                counter += 1
                heapq.heappush(sends, (recv_t + delay(answers), counter, answer))
                answers += 1
        if not got_first:
            raise SessionAborted("no monitor received; join timed out")
        sock.sendto(core.bye_datagram(), address)
    finally:
        sock.close()

    cfg = SimConfig(variant=variant_name, sample_period=sample_period)
    return _report(
        params,
        cfg,
        None,  # exact outcome counts live on the server side
        quality_timeline,
        state_timeline,
        core.monitors_seen,
        source="udp",
    )
