"""UDP transport for the simulator: wall-clock pacing or deterministic lockstep.

real_time = True paces ticks on the wall clock with a receive thread feeding
a bounded drop-oldest queue (capacity 8). real_time = False runs lockstep on
a single thread: the virtual clock advances one sample period per tick and
the loop blocks (with a wall-clock grace) for the client's answer, which
makes loopback sessions exactly reproducible.

A line-delimited JSON control socket (local TCP) carries operator events:
    {"event": "request_control", "mode": "TORQUE"}
    {"event": "release_control"}
    {"event": "inject", "torque": [...7 values...], "ticks": N}
    {"event": "status"} / {"event": "shutdown"}
"""

from __future__ import annotations

import collections
import json
import logging
import socket
import threading
import time
from typing import Optional

from .errors import LbrError, ModeNotSupported
from .simulator import SimConfig, SimulatorCore
from .wire import CommandMode, SessionState

log = logging.getLogger("lbr_kit.server")

RX_QUEUE_CAPACITY = 8
LOCKSTEP_GRACE = 2.0


class ControlListener(threading.Thread):
    """Accepts local TCP connections and turns JSON lines into operator events."""

    def __init__(self, core: SimulatorCore, host: str, port: int, on_shutdown):
        super().__init__(daemon=True)
        self.core = core
        self.on_shutdown = on_shutdown
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(4)
        self.port = self.sock.getsockname()[1]
        self._stop = threading.Event()

    def run(self):
        self.sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def stop(self):
        self._stop.set()
        try:
            self.sock.close()
        except OSError:
            pass

    def _serve_conn(self, conn: socket.socket):
        with conn:
            buf = b""
            conn.settimeout(10.0)
            while True:
                try:
                    chunk = conn.recv(4096)
                except (socket.timeout, OSError):
                    return
                if not chunk:
                    return
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if not line.strip():
                        continue
                    response = self._dispatch(line)
                    try:
                        conn.sendall(json.dumps(response).encode() + b"\n")
                    except OSError:
                        return

    def _dispatch(self, line: bytes) -> dict:
        try:
            msg = json.loads(line)
            event = msg["event"]
            if event == "request_control":
                mode = CommandMode[msg.get("mode", "POSITION")]
                self.core.request_control(mode)
            elif event == "release_control":
                self.core.release_control()
            elif event == "inject":
                torque = msg["torque"]
                if len(torque) != 7:
                    raise LbrError("inject torque needs 7 entries")
                self.core.inject(torque, int(msg["ticks"]))
            elif event == "status":
                return {
                    "ok": True,
                    "state": self.core.session.state.name,
                    "quality": self.core.session.quality.name,
                    "tick": self.core.state.tick,
                    "version": self.core.negotiated_version,
                }
            elif event == "shutdown":
                self.on_shutdown()
            else:
                return {"ok": False, "error": f"unknown event {event!r}"}
            return {"ok": True}
        except ModeNotSupported as exc:
            return {"ok": False, "error": f"ModeNotSupported: {exc}"}
        except (KeyError, ValueError, TypeError, LbrError) as exc:
            return {"ok": False, "error": str(exc)}


class UdpServer:
    """Owns the UDP socket and runs the simulator loop until stopped."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg.validate()
        self.core = SimulatorCore(cfg)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((cfg.host, cfg.port))
        self.port = self.sock.getsockname()[1]
        self.control = ControlListener(self.core, cfg.host, cfg.control_port, self.request_stop)
        self._stop = threading.Event()
        self._rx: collections.deque = collections.deque(maxlen=RX_QUEUE_CAPACITY)
        self._rx_thread: Optional[threading.Thread] = None
        self.mean_period: Optional[float] = None

    def request_stop(self):
        self._stop.set()

    def close(self):
        self.control.stop()
        try:
            self.sock.close()
        except OSError:
            pass

    # -- real-time path ---------------------------------------------------------

    def _rx_loop(self):
        self.sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                data, addr = self.sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                break
            self._rx.append((data, time.perf_counter(), addr))

    def _drain_rx(self):
        batch = []
        while True:
            try:
                batch.append(self._rx.popleft())
            except IndexError:
                return batch

    def _serve_realtime(self, max_ticks: Optional[int], once: bool):
        self._rx_thread = threading.Thread(target=self._rx_loop, daemon=True)
        self._rx_thread.start()
        period = self.cfg.sample_period
        log_every = int(1.0 / (self.cfg.log_rate * period)) if self.cfg.log_rate > 0 else 0
        was_joined = False
        start = time.perf_counter()
        k = 0
        while not self._stop.is_set():
            deadline = start + (k + 1) * period
            delay = deadline - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            now = time.perf_counter()
            monitor = self.core.step(now, self._drain_rx())
            if monitor is not None and self.core.client_addr is not None:
                try:
                    self.sock.sendto(monitor, self.core.client_addr)
                except OSError as exc:
                    log.warning("send failed: %s", exc)
            if log_every and k % log_every == 0:
                log.info("%s", self.core.log_entry().line())
            joined = self.core.session.state != SessionState.IDLE
            if once and was_joined and not joined:
                break
            was_joined = was_joined or joined
            k += 1
            if max_ticks is not None and k >= max_ticks:
                break
        if k:
            self.mean_period = (time.perf_counter() - start) / k

    # -- lockstep path -----------------------------------------------------------

    def _wait_datagram(self, grace: float):
        self.sock.settimeout(0.05)
        deadline = time.perf_counter() + grace
        while not self._stop.is_set() and time.perf_counter() < deadline:
            try:
                data, addr = self.sock.recvfrom(65535)
                return data, addr
            except socket.timeout:
                continue
            except OSError:
                return None
        return None

    def _serve_lockstep(self, max_ticks: Optional[int], once: bool, grace: float):
        period = self.cfg.sample_period
        was_joined = False
        k = 0
        while not self._stop.is_set():
            idle = self.core.session.state == SessionState.IDLE
            if idle and once and was_joined:
                break
            got = self._wait_datagram(grace=3600.0 if idle else grace)
            if idle and got is None:
                continue
            now = (k + 1) * period
            arrivals = []
            if got is not None:
                arrivals.append((got[0], now - period / 2, got[1]))
                self.sock.settimeout(0.0)
                while True:  # drain anything else already queued
                    try:
                        data, addr = self.sock.recvfrom(65535)
                        arrivals.append((data, now - period / 2, addr))
                    except (BlockingIOError, socket.timeout):
                        break
                    except OSError:
                        break
            monitor = self.core.step(now, arrivals)
            k += 1
            if monitor is not None and self.core.client_addr is not None:
                try:
                    self.sock.sendto(monitor, self.core.client_addr)
                except OSError as exc:
                    log.warning("send failed: %s", exc)
            was_joined = was_joined or self.core.session.state != SessionState.IDLE
            if max_ticks is not None and k >= max_ticks:
                break

    def serve(self, max_ticks: Optional[int] = None, once: bool = False, grace: float = LOCKSTEP_GRACE):
        self.control.start()
        try:
            if self.cfg.real_time:
                self._serve_realtime(max_ticks, once)
            else:
                self._serve_lockstep(max_ticks, once, grace)
        finally:
            self.close()
