/**
 * ScriptClient: a complete command-mode client in a few lines.
 *
 * Lifecycle is connect → register → run; anything else raises a UsageError.
 * Callbacks run on the sample loop, one per monitor datagram, and every
 * monitor is answered exactly once. The answer pipeline (echo, smoothing
 * filter, command guard, sequence bookkeeping) matches the controller
 * stack's native client operation for operation, so identical scripts
 * produce identical transmitted bytes.
 */

import * as dgram from "node:dgram";

import { DEFAULT_FILTER_ALPHA, MED7_POSITION_LIMITS, MED7_TORQUE_LIMITS, MED7_VELOCITY_LIMITS } from "./constants";
import { ExponentialFilter, GuardConfig, guardCommand } from "./guards";
import {
  CommandMessage,
  CommandMode,
  MessageType,
  MonitorMessage,
  SessionState,
  decodeFrame,
  encodeBye,
  encodeCommand,
  encodeJoin,
} from "./wire";

export class UsageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UsageError";
  }
}

export class NoCommonVersion extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NoCommonVersion";
  }
}

export class SessionAborted extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SessionAborted";
  }
}

export class InvalidCommand extends SessionAborted {
  constructor(message: string) {
    super(message);
    this.name = "InvalidCommand";
  }
}

export class CallbackPanic extends SessionAborted {
  constructor(message: string) {
    super(message);
    this.name = "CallbackPanic";
  }
}

export type MonitorCallback = (monitor: MonitorMessage) => void | Promise<void>;
export type CommandCallback = (monitor: MonitorMessage) => CommandMessage | Promise<CommandMessage>;

export interface ClientOptions {
  versions?: number[];
  filterAlpha?: number | null;
  guard?: GuardConfig;
  recvTimeoutMs?: number;
  recordTrace?: boolean;
}

export interface RunOptions {
  durationS?: number;
  until?: () => boolean;
}

export function positionCommand(jointPosition: number[]): CommandMessage {
  return { clientCommandMode: CommandMode.POSITION, reflectedSequence: 0, jointPosition: [...jointPosition] };
}

export function torqueCommand(jointPosition: number[], torqueOverlay: number[]): CommandMessage {
  return {
    clientCommandMode: CommandMode.TORQUE,
    reflectedSequence: 0,
    jointPosition: [...jointPosition],
    torqueOverlay: [...torqueOverlay],
  };
}

export function wrenchCommand(wrenchOverlay: number[]): CommandMessage {
  return { clientCommandMode: CommandMode.WRENCH, reflectedSequence: 0, wrenchOverlay: [...wrenchOverlay] };
}

export function echoCommand(monitor: MonitorMessage): CommandMessage {
  const mode = monitor.controlMode;
  if (mode === CommandMode.POSITION) {
    return positionCommand(monitor.interpolatedCommandPosition);
  }
  if (mode === CommandMode.TORQUE) {
    return torqueCommand(monitor.interpolatedCommandPosition, [0, 0, 0, 0, 0, 0, 0]);
  }
  if (mode === CommandMode.WRENCH) {
    return wrenchCommand([0, 0, 0, 0, 0, 0]);
  }
  throw new UsageError("CARTESIAN_POSE echo needs a kinematic model; supply on_wait_for_command");
}

const DEFAULT_GUARD: GuardConfig = {
  positionLimits: MED7_POSITION_LIMITS,
  velocityLimits: MED7_VELOCITY_LIMITS,
  torqueLimits: MED7_TORQUE_LIMITS,
};

function parseAddress(address: string): { host: string; port: number } {
  const idx = address.lastIndexOf(":");
  if (idx <= 0 || idx === address.length - 1) {
    throw new UsageError(`expected host:port, got ${JSON.stringify(address)}`);
  }
  const host = address.slice(0, idx);
  const port = Number(address.slice(idx + 1));
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    throw new UsageError(`bad port in ${JSON.stringify(address)}`);
  }
  return { host, port };
}

function allFinite(cmd: CommandMessage): boolean {
  for (const name of ["jointPosition", "torqueOverlay", "wrenchOverlay", "cartesianPose"] as const) {
    const values = cmd[name];
    if (values !== undefined && !values.every(Number.isFinite)) return false;
  }
  return true;
}

class DatagramQueue {
  private queue: Uint8Array[] = [];
  private waiter: ((data: Uint8Array | null) => void) | null = null;

  push(data: Uint8Array): void {
    if (this.waiter) {
      const resolve = this.waiter;
      this.waiter = null;
      resolve(data);
    } else {
      this.queue.push(data);
    }
  }

  next(timeoutMs: number): Promise<Uint8Array | null> {
    const head = this.queue.shift();
    if (head !== undefined) return Promise.resolve(head);
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.waiter = null;
        resolve(null);
      }, timeoutMs);
      this.waiter = (data) => {
        clearTimeout(timer);
        resolve(data);
      };
    });
  }
}

export class ScriptClient {
  private socket: dgram.Socket;
  private inbox = new DatagramQueue();
  private callbacks: { onMonitor: MonitorCallback; onWaitForCommand: CommandCallback; onCommand: CommandCallback } | null = null;
  private filter: ExponentialFilter | null;
  private readonly filterAlpha: number | null;
  private readonly guard: GuardConfig;
  private readonly versions: number[];
  private readonly recvTimeoutMs: number;
  private seq = 0;
  private prevPosition: number[] | null = null;
  private running = false;
  private closed = false;

  readonly host: string;
  readonly port: number;
  sentCommandFrames: Uint8Array[] = [];
  recordTrace = false;

  private negotiatedVersion: number | null = null;
  private sessionState: SessionState = SessionState.IDLE;
  private monitor: MonitorMessage | null = null;

  private constructor(host: string, port: number, options: ClientOptions) {
    this.host = host;
    this.port = port;
    this.versions = options.versions ?? [1, 2];
    this.filterAlpha = options.filterAlpha === undefined ? DEFAULT_FILTER_ALPHA : options.filterAlpha;
    this.filter = this.filterAlpha === null ? null : new ExponentialFilter(this.filterAlpha);
    this.guard = options.guard ?? DEFAULT_GUARD;
    this.recvTimeoutMs = options.recvTimeoutMs ?? 5000;
    this.recordTrace = options.recordTrace ?? false;
    this.socket = dgram.createSocket("udp4");
    this.socket.on("message", (msg) => this.inbox.push(new Uint8Array(msg)));
  }

  /** Agreed protocol version; set once the first monitor arrives. */
  get version(): number | null {
    return this.negotiatedVersion;
  }

  get state(): SessionState {
    return this.sessionState;
  }

  /** Most recent state sample, an immutable snapshot. */
  get lastMonitor(): MonitorMessage | null {
    return this.monitor;
  }

  static async connect(address: string, versions?: number[], options: ClientOptions = {}): Promise<ScriptClient> {
    const { host, port } = parseAddress(address);
    if (versions !== undefined && versions.length === 0) {
      throw new UsageError("versions must not be empty");
    }
    const client = new ScriptClient(host, port, { ...options, versions });
    await client.joinAndNegotiate();
    return client;
  }

  register(onMonitor: MonitorCallback, onWaitForCommand: CommandCallback, onCommand: CommandCallback): void {
    if (this.negotiatedVersion === null) {
      throw new UsageError("register() before connect() completed");
    }
    if (this.running) {
      throw new UsageError("register() while run() is active");
    }
    this.callbacks = { onMonitor, onWaitForCommand, onCommand };
  }

  private send(data: Uint8Array): Promise<void> {
    return new Promise((resolve, reject) => {
      this.socket.send(data, this.port, this.host, (err) => (err ? reject(err) : resolve()));
    });
  }

  private nextSeq(): number {
    const seq = this.seq;
    this.seq = (this.seq + 1) >>> 0;
    return seq;
  }

  private async joinAndNegotiate(): Promise<void> {
    const proposed = Math.max(...this.versions);
    await this.send(encodeJoin(proposed, this.nextSeq()));
    const data = await this.inbox.next(this.recvTimeoutMs);
    if (data === null) {
      this.close();
      throw new SessionAborted("no monitor received; join timed out");
    }
    await this.handleDatagram(data);
  }

  private async handleDatagram(data: Uint8Array): Promise<void> {
    let frame;
    try {
      frame = decodeFrame(data, this.negotiatedVersion ?? Math.max(...this.versions));
    } catch {
      return; // undecodable datagrams are dropped, like the native client
    }
    if (frame.header.messageType !== MessageType.MONITOR || frame.monitor === undefined) {
      return;
    }
    const monitor = frame.monitor;

    if (this.negotiatedVersion === null) {
      const offered = frame.header.protocolVersion;
      if (!this.versions.includes(offered)) {
        await this.sendBye();
        throw new NoCommonVersion(`server speaks ${offered}, client supports ${this.versions.join(",")}`);
      }
      this.negotiatedVersion = offered;
    }

    this.sessionState = monitor.sessionState;
    this.monitor = monitor;
    if (this.prevPosition === null) {
      this.prevPosition = [...monitor.interpolatedCommandPosition];
    }
    if (this.sessionState !== SessionState.COMMANDING_ACTIVE && this.filter !== null) {
      this.filter = new ExponentialFilter(this.filterAlpha as number);
    }

    let cmd: CommandMessage | null = null;
    try {
      if (this.sessionState === SessionState.COMMANDING_WAIT && this.callbacks !== null) {
        cmd = await this.callbacks.onWaitForCommand(monitor);
      } else if (this.sessionState === SessionState.COMMANDING_ACTIVE && this.callbacks !== null) {
        cmd = await this.callbacks.onCommand(monitor);
      } else {
        if (this.callbacks !== null) {
          await this.callbacks.onMonitor(monitor);
        }
        cmd = null;
      }
    } catch (err) {
      await this.sendBye();
      throw new CallbackPanic(`callback raised: ${String(err)}`);
    }
    if (cmd === null) {
      cmd = echoCommand(monitor);
    }

    if (!allFinite(cmd)) {
      await this.sendBye();
      throw new InvalidCommand("callback returned a non-finite command value");
    }
    if (
      this.sessionState === SessionState.COMMANDING_ACTIVE &&
      this.filter !== null &&
      cmd.jointPosition !== undefined
    ) {
      cmd = { ...cmd, jointPosition: this.filter.step(cmd.jointPosition) };
    }
    const guarded = guardCommand(cmd, this.prevPosition, monitor.samplePeriod, this.guard);
    guarded.reflectedSequence = monitor.monitorSequence;
    if (guarded.jointPosition !== undefined) {
      this.prevPosition = guarded.jointPosition;
    }
    const answer = encodeCommand(this.negotiatedVersion, this.nextSeq(), guarded);
    if (this.recordTrace) {
      this.sentCommandFrames.push(answer);
    }
    await this.send(answer);
  }

  /**
   * Pump the sample loop until `until()` is true or `durationS` of monitor
   * time (per the monitor timestamps) has elapsed. Callbacks only ever run
   * inside this call.
   */
  async run(options: RunOptions = {}): Promise<void> {
    if (this.callbacks === null) {
      throw new UsageError("register() callbacks before run()");
    }
    if (this.running) {
      throw new UsageError("run() is not reentrant");
    }
    this.running = true;
    try {
      let startTs: number | null = null;
      for (;;) {
        if (options.until !== undefined && options.until()) return;
        const data = await this.inbox.next(this.recvTimeoutMs);
        if (data === null) {
          throw new SessionAborted("no monitor within the receive timeout");
        }
        await this.handleDatagram(data);
        if (this.monitor !== null && options.durationS !== undefined) {
          const ts = this.monitor.timestampS + this.monitor.timestampNs * 1e-9;
          if (startTs === null) startTs = ts;
          if (ts - startTs >= options.durationS) return;
        }
      }
    } finally {
      this.running = false;
    }
  }

  async sendBye(): Promise<void> {
    if (this.closed) return;
    const version = this.negotiatedVersion ?? Math.max(...this.versions);
    try {
      await this.send(encodeBye(version, this.nextSeq()));
    } catch {
      // socket may already be gone; Bye is best effort
    }
  }

  close(): void {
    if (!this.closed) {
      this.closed = true;
      this.socket.close();
    }
  }
}
