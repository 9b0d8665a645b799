"""Operator command line: serve, demo, measure, conformance, decode.

Exit codes: 0 success, 2 bad configuration, 3 bind failure, 4 session
failure, 5 conformance mismatch. LBR_KIT_LOG selects log verbosity
(DEBUG, INFO, WARNING, ERROR).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import conformance, demos, measure
from .errors import ConfigError, LbrError, UnknownVariant
from .model import list_variants, load_variant
from .simulator import SimConfig
from .wire import CommandMode, dump_frame

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BIND = 3
EXIT_SESSION = 4
EXIT_CONFORMANCE = 5

log = logging.getLogger("lbr_kit.cli")


def _setup_logging() -> None:
    level = os.environ.get("LBR_KIT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _sim_config(args) -> SimConfig:
    sample_period = args.sample_period if args.sample_period else 1.0 / args.hz
    return SimConfig(
        variant=args.variant,
        sample_period=sample_period,
        protocol_version=args.version,
        host=args.host,
        port=args.port,
        control_port=args.control_port,
        real_time=not args.deterministic,
        inertia=(args.inertia,) * 7,
        log_rate=args.log_rate,
    )


def _add_server_flags(p, defaults_port=30200):
    p.add_argument("--variant", default="med7", help="robot variant (see `serve --help` for list)")
    p.add_argument("--hz", type=float, default=200.0, help="sample rate in Hz (default 200)")
    p.add_argument("--sample-period", type=float, default=None, help="sample period in s (overrides --hz)")
    p.add_argument("--version", type=int, choices=(1, 2), default=2, help="protocol version")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=defaults_port, help="UDP port (0 = OS assigned)")
    p.add_argument("--control-port", type=int, default=30201, help="operator TCP port (0 = OS assigned)")
    p.add_argument("--deterministic", action="store_true", help="lockstep virtual time instead of wall clock")
    p.add_argument("--inertia", type=float, default=1.0, help="per-joint inertia (kg·m²)")
    p.add_argument("--log-rate", type=float, default=0.0, help="state log lines per second")


def cmd_serve(args) -> int:
    try:
        cfg = _sim_config(args).validate()
        load_variant(cfg.variant)
    except UnknownVariant:
        print(
            f"error: unknown variant {args.variant!r}; available: {', '.join(list_variants())}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    except (ConfigError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        from .server import UdpServer

        server = UdpServer(cfg)
    except OSError as exc:
        print(f"error: cannot bind {cfg.host}:{cfg.port}: {exc}", file=sys.stderr)
        return EXIT_BIND
    print(f"listening udp={server.port} control={server.control.port}", flush=True)
    try:
        server.serve(max_ticks=args.max_ticks, once=args.once)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


def cmd_demo(args) -> int:
    try:
        spec = demos.DemoSpec(
            demo=args.demo,
            joint=args.joint,
            amplitude=args.amplitude,
            frequency=args.frequency,
            mode=CommandMode[args.mode],
            press_force=args.force,
        ).validate()
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.loopback:
            cfg = SimConfig(
                variant=args.variant,
                sample_period=args.sample_period if args.sample_period else 1.0 / args.hz,
                protocol_version=args.version,
                real_time=False,
            )
            report, harness, logic = demos.run_demo_loopback(
                spec, args.duration, cfg, timeout_s=args.timeout, record_trace=bool(args.trace_out)
            )
            frames = harness.answer_frames
        else:
            host, port = _parse_hostport(args.connect)
            report, client, logic = demos.run_demo_udp(
                spec,
                args.duration,
                host,
                port,
                args.control_port,
                timeout_s=args.timeout,
                variant_name=args.variant,
                record_trace=bool(args.trace_out),
            )
            frames = client.sent_command_frames
    except UnknownVariant as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LbrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SESSION

    if not report.activated:
        print("error: COMMANDING_ACTIVE not reached before timeout", file=sys.stderr)
        return EXIT_SESSION
    for sec, rms in report.per_second_rms:
        print(f"t={sec:>3d}s rms={rms:.6f} rad")
    rms = report.rms_error if report.rms_error is not None else float("nan")
    print(f"demo={spec.demo} mode={spec.mode.name} steady-state rms={rms:.6f} rad "
          f"({report.commanded_ticks} commanded ticks)")
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    if args.trace_out:
        Path(args.trace_out).write_text("".join(f.hex() + "\n" for f in frames))
    return EXIT_OK


def cmd_measure(args) -> int:
    params = measure.MeasureParams(
        delay_ms=args.delay_ms,
        jitter_ms=args.jitter_ms,
        duration_s=args.duration,
        seed=args.seed,
    )
    try:
        if args.loopback:
            cfg = SimConfig(
                variant=args.variant,
                sample_period=args.sample_period if args.sample_period else 1.0 / args.hz,
                real_time=False,
            )
            report = measure.measure_loopback(params, cfg)
        else:
            host, port = _parse_hostport(args.connect)
            report = measure.measure_udp(params, host, port, variant_name=args.variant)
    except UnknownVariant as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LbrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SESSION
    rendered = json.dumps(report, indent=2)
    print(rendered)
    if args.out:
        Path(args.out).write_text(rendered + "\n")
    return EXIT_OK


def cmd_conformance(args) -> int:
    paths = [Path(p) for p in args.scenarios]
    if args.builtin:
        paths.extend(conformance.shipped_scenario_paths())
    if not paths:
        print("0 scenarios")
        return EXIT_OK
    failures = 0
    for path in paths:
        try:
            scenario = conformance.load_scenario(path)
        except (ConfigError, OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot load {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        result = conformance.run_scenario(scenario)
        verdict = "pass" if result.ok else "FAIL"
        print(f"{verdict} {scenario.name} ({len(result.trace)} transitions)")
        if not result.ok:
            failures += 1
            print("  " + result.divergence_message(), file=sys.stderr)
        if args.trace_dir:
            out = Path(args.trace_dir) / f"{scenario.name}.trace"
            out.write_text(conformance.format_trace(result.trace))
    print(f"{len(paths)} scenarios, {failures} failed")
    return EXIT_CONFORMANCE if failures else EXIT_OK


def cmd_decode(args) -> int:
    if args.hex == "-":
        raw = sys.stdin.read()
    else:
        raw = args.hex
    raw = "".join(raw.split())
    try:
        data = bytes.fromhex(raw)
    except ValueError as exc:
        print(f"error: not valid hex: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(dump_frame(data))
    return EXIT_OK


def _parse_hostport(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"expected host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbrkit",
        description="Desk-scale robot control stack: simulator, demo clients, link tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the simulated controller")
    _add_server_flags(p)
    p.add_argument("--once", action="store_true", help="exit after the first session ends")
    p.add_argument("--max-ticks", type=int, default=None, help="stop after N ticks")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("demo", help="run a demo client")
    p.add_argument("--demo", default="sine", choices=demos.DEMO_NAMES)
    p.add_argument("--joint", type=int, default=3)
    p.add_argument("--amplitude", type=float, default=0.04, help="rad (cap 0.2)")
    p.add_argument("--frequency", type=float, default=0.25, help="Hz (cap 2)")
    p.add_argument("--mode", default="POSITION", choices=[m.name for m in CommandMode])
    p.add_argument("--force", type=float, default=5.0, help="wrench-press force in N")
    p.add_argument("--connect", default="127.0.0.1:30200", help="server host:port")
    p.add_argument("--control-port", type=int, default=30201)
    p.add_argument("--duration", type=float, default=20.0, help="seconds of commanding")
    p.add_argument("--timeout", type=float, default=10.0, help="seconds to reach COMMANDING_ACTIVE")
    p.add_argument("--loopback", action="store_true", help="run against an in-process simulator")
    p.add_argument("--variant", default="med7")
    p.add_argument("--hz", type=float, default=200.0)
    p.add_argument("--sample-period", type=float, default=None)
    p.add_argument("--version", type=int, choices=(1, 2), default=2)
    p.add_argument("--seed", type=int, default=0, help="accepted for report reproducibility")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--trace-out", default=None, help="write transmitted command frames (hex lines)")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("measure", help="measure link quality with injected delay")
    p.add_argument("--connect", default="127.0.0.1:30200")
    p.add_argument("--delay-ms", type=float, default=0.0)
    p.add_argument("--jitter-ms", type=float, default=0.0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loopback", action="store_true")
    p.add_argument("--variant", default="med7")
    p.add_argument("--hz", type=float, default=200.0)
    p.add_argument("--sample-period", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("conformance", help="replay session scenarios")
    p.add_argument("scenarios", nargs="*", help="scenario JSON files")
    p.add_argument("--builtin", action="store_true", help="include the shipped scenarios")
    p.add_argument("--trace-dir", default=None, help="write emitted traces here")
    p.set_defaults(func=cmd_conformance)

    p = sub.add_parser("decode", help="decode a hex frame dump")
    p.add_argument("hex", help="hex bytes, or - for stdin")
    p.set_defaults(func=cmd_decode)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
