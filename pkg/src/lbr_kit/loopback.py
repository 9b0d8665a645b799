"""In-process loopback: simulator and client coupled through virtual time.

No sockets and no wall clock: datagrams travel through a priority queue of
(delivery_time, datagram) events, and answer datagrams can be delayed by an
arbitrary per-answer amount. Runs are exactly reproducible, which is what the
deadline/quality tests and the seeded measure reports rely on.
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional

from .client import ClientCore
from .errors import NoCommonVersion, SessionAborted
from .simulator import SimConfig, SimulatorCore
from .wire import CommandMode, SessionState

AnswerDelay = Callable[[int], float]  # answer index -> seconds


class LoopbackHarness:
    """Drives one SimulatorCore and one ClientCore in virtual time.

    The client sees each monitor the instant it is emitted; its answer is
    delivered to the server answer_delay(i) seconds later. Ticks happen at
    exact multiples of the sample period.
    """

    def __init__(
        self,
        sim_cfg: SimConfig,
        client: ClientCore,
        answer_delay: Optional[AnswerDelay] = None,
        auto_request_mode: Optional[CommandMode] = None,
    ):
        cfg = sim_cfg
        if cfg.real_time:
            import dataclasses

            cfg = dataclasses.replace(cfg, real_time=False)
        self.server = SimulatorCore(cfg)
        self.client = client
        self.answer_delay = answer_delay or (lambda i: 0.0)
        self.auto_request_mode = auto_request_mode
        self._requested = False
        self._deliveries: list[tuple[float, int, bytes]] = []  # to the server
        self._counter = 0
        self._answers = 0
        self.ticks_run = 0
        self.answer_frames: list[bytes] = []
        self.client_error: Optional[Exception] = None
        self.quality_timeline: list[tuple[float, str]] = []
        self.state_timeline: list[tuple[float, str]] = []
        self._last_quality: Optional[str] = None
        self._last_state: Optional[str] = None

    @property
    def period(self) -> float:
        return self.server.cfg.sample_period

    def _push(self, when: float, data: bytes) -> None:
        heapq.heappush(self._deliveries, (when, self._counter, data))
        self._counter += 1

    def _pop_due(self, now: float) -> list[tuple[bytes, float, None]]:
        due = []
        while self._deliveries and self._deliveries[0][0] < now:
            when, _, data = heapq.heappop(self._deliveries)
            due.append((data, when, None))
        return due

    def join(self) -> None:
        self._push(0.0, self.client.join_datagram())

    def run(self, n_ticks: int, stop_when: Optional[Callable[["LoopbackHarness"], bool]] = None) -> None:
        """Advance n_ticks sample periods of virtual time."""
        period = self.period
        for _ in range(n_ticks):
            self.ticks_run += 1
            now = self.ticks_run * period
            monitor = self.server.step(now, self._pop_due(now))
            self._observe(now)
            if monitor is not None and self.client_error is None:
                try:
                    answer = self.client.handle_datagram(monitor)
                except (SessionAborted, NoCommonVersion) as exc:
                    self.client_error = exc
                    self._push(now + self.answer_delay(self._answers), self.client.bye_datagram())
                    answer = None
                if answer is not None:
                    self.answer_frames.append(answer)
                    self._push(now + self.answer_delay(self._answers), answer)
                    self._answers += 1
            if (
                self.auto_request_mode is not None
                and not self._requested
                and self.server.session.state == SessionState.MONITORING_READY
            ):
                self.server.request_control(self.auto_request_mode)
                self._requested = True
            if stop_when is not None and stop_when(self):
                return

    def _observe(self, now: float) -> None:
        quality = self.server.session.quality.name
        state = self.server.session.state.name
        if quality != self._last_quality:
            self.quality_timeline.append((now, quality))
            self._last_quality = quality
        if state != self._last_state:
            self.state_timeline.append((now, state))
            self._last_state = state

    def finish(self) -> None:
        """Deliver the client's Bye and let the server notice."""
        if self.client_error is None:
            now = self.ticks_run * self.period
            self._push(now, self.client.bye_datagram())
            self.run(2)

    def raise_client_error(self) -> None:
        if self.client_error is not None:
            raise self.client_error
