/**
 * Scripted sine demo: the parity twin of `lbrkit demo --demo sine`.
 *
 * Joins a deterministic server, requests control once the link is READY,
 * commands q[joint] = q0[joint] + A·sin(2πft) while COMMANDING_ACTIVE,
 * releases control after `duration` seconds of monitor time, says Bye, and
 * writes every transmitted command frame as one hex line.
 *
 *   node dist/demoSine.js --port P --control-port C [--joint 3]
 *        [--amplitude 0.04] [--frequency 0.25] [--duration 1.0]
 *        [--trace-out trace.hex]
 */

import * as fs from "node:fs";

import { ScriptClient, echoCommand, positionCommand } from "./client";
import { releaseControl, requestControl } from "./control";
import { portableSin, TWO_PI } from "./portableSin";
import { MonitorMessage, SessionState, toHex } from "./wire";

interface Args {
  host: string;
  port: number;
  controlPort: number;
  joint: number;
  amplitude: number;
  frequency: number;
  duration: number;
  traceOut: string | null;
}

function parseArgs(argv: string[]): Args {
  const get = (flag: string, fallback: string | null): string | null => {
    const idx = argv.indexOf(flag);
    return idx >= 0 && idx + 1 < argv.length ? argv[idx + 1] : fallback;
  };
  return {
    host: get("--host", "127.0.0.1")!,
    port: Number(get("--port", "30200")),
    controlPort: Number(get("--control-port", "30201")),
    joint: Number(get("--joint", "3")),
    amplitude: Number(get("--amplitude", "0.04")),
    frequency: Number(get("--frequency", "0.25")),
    duration: Number(get("--duration", "1.0")),
    traceOut: get("--trace-out", null),
  };
}

export async function runSineDemo(args: Args): Promise<number> {
  const client = await ScriptClient.connect(`${args.host}:${args.port}`, [1, 2], {
    recordTrace: args.traceOut !== null,
  });
  let requested = false;
  let released = false;
  let t0: number | null = null;
  let q0: number[] | null = null;
  let commanded = 0;

  const timestamp = (m: MonitorMessage): number => m.timestampS + m.timestampNs * 1e-9;

  client.register(
    async (m) => {
      if (m.sessionState === SessionState.MONITORING_READY && !requested) {
        await requestControl(args.host, args.controlPort, "POSITION");
        requested = true;
      }
    },
    (m) => echoCommand(m),
    async (m) => {
      const ts = timestamp(m);
      if (t0 !== null && !released && ts - t0 >= args.duration) {
        await releaseControl(args.host, args.controlPort);
        released = true;
      }
      if (t0 === null) {
        t0 = ts;
        q0 = [...m.interpolatedCommandPosition];
      }
      const t = ts - t0;
      const values = [...q0!];
      values[args.joint] = values[args.joint] + args.amplitude * portableSin(TWO_PI * args.frequency * t);
      commanded += 1;
      return positionCommand(values);
    },
  );

  await client.run({ until: () => released && client.state === SessionState.MONITORING_READY });
  await client.sendBye();
  client.close();

  if (args.traceOut !== null) {
    const lines = client.sentCommandFrames.map((frame) => toHex(frame) + "\n").join("");
    fs.writeFileSync(args.traceOut, lines);
  }
  console.log(`sine demo done: ${commanded} commanded ticks, version ${client.version}`);
  return 0;
}

if (require.main === module) {
  runSineDemo(parseArgs(process.argv.slice(2)))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err}`);
      process.exit(4);
    });
}
