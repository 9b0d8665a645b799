/**
 * Binary wire protocol codec, byte-compatible with the controller stack.
 *
 * Frame: "FRI1" | version u8 | type u8 | seq u32le | plen u16le | fields | crc32le
 * Field: id u8 | wireType u8 | value
 *   wireType 0 = u32le, 1 = f64le, 2 = u8 count + count*f64le, 3 = u8 enum
 */

export enum MessageType {
  JOIN = 0x00,
  MONITOR = 0x01,
  COMMAND = 0x02,
  BYE = 0x03,
}

export enum SessionState {
  IDLE = 0,
  MONITORING_WAIT = 1,
  MONITORING_READY = 2,
  COMMANDING_WAIT = 3,
  COMMANDING_ACTIVE = 4,
}

export enum ConnectionQuality {
  POOR = 0,
  FAIR = 1,
  GOOD = 2,
  EXCELLENT = 3,
}

export enum CommandMode {
  POSITION = 0,
  TORQUE = 1,
  WRENCH = 2,
  CARTESIAN_POSE = 3,
}

export const MAGIC = new Uint8Array([0x46, 0x52, 0x49, 0x31]); // "FRI1"
export const HEADER_SIZE = 12;
export const CRC_SIZE = 4;

export class WireError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}
export class BadMagic extends WireError {}
export class BadChecksum extends WireError {}
export class Truncated extends WireError {}
export class BadLength extends WireError {}
export class UnknownWireType extends WireError {}
export class InvariantViolation extends WireError {}

export interface FrameHeader {
  protocolVersion: number;
  messageType: MessageType;
  sequence: number;
}

export interface MonitorMessage {
  sessionState: SessionState;
  connectionQuality: ConnectionQuality;
  controlMode: CommandMode;
  samplePeriod: number;
  measuredJointPosition: number[];
  measuredTorque: number[];
  externalTorque: number[];
  interpolatedCommandPosition: number[];
  timestampS: number;
  timestampNs: number;
  monitorSequence: number;
}

export interface CommandMessage {
  clientCommandMode: CommandMode;
  reflectedSequence: number;
  jointPosition?: number[];
  torqueOverlay?: number[];
  wrenchOverlay?: number[];
  cartesianPose?: number[];
}

export interface DecodedFrame {
  header: FrameHeader;
  monitor?: MonitorMessage;
  command?: CommandMessage;
  skippedFields: number[];
}

// CRC-32, IEEE polynomial (reflected), table driven.
const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    crc = CRC_TABLE[(crc ^ data[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

class Writer {
  private chunks: number[] = [];

  u8(value: number): void {
    this.chunks.push(value & 0xff);
  }

  u16(value: number): void {
    this.chunks.push(value & 0xff, (value >>> 8) & 0xff);
  }

  u32(value: number): void {
    this.chunks.push(value & 0xff, (value >>> 8) & 0xff, (value >>> 16) & 0xff, (value >>> 24) & 0xff);
  }

  f64(value: number): void {
    const buf = new ArrayBuffer(8);
    new DataView(buf).setFloat64(0, value, true);
    this.chunks.push(...new Uint8Array(buf));
  }

  bytes(): Uint8Array {
    return new Uint8Array(this.chunks);
  }
}

const MODE_FIELDS: Record<CommandMode, (keyof CommandMessage)[]> = {
  [CommandMode.POSITION]: ["jointPosition"],
  [CommandMode.TORQUE]: ["jointPosition", "torqueOverlay"],
  [CommandMode.WRENCH]: ["wrenchOverlay"],
  [CommandMode.CARTESIAN_POSE]: ["cartesianPose"],
};

function writeField(w: Writer, id: number, wireType: number, value: number | number[]): void {
  w.u8(id);
  w.u8(wireType);
  if (wireType === 0) {
    w.u32(value as number);
  } else if (wireType === 1) {
    w.f64(value as number);
  } else if (wireType === 2) {
    const arr = value as number[];
    w.u8(arr.length);
    for (const v of arr) w.f64(v);
  } else {
    w.u8(value as number);
  }
}

function finishFrame(version: number, type: MessageType, sequence: number, payload: Uint8Array): Uint8Array {
  const frame = new Uint8Array(HEADER_SIZE + payload.length + CRC_SIZE);
  frame.set(MAGIC, 0);
  frame[4] = version;
  frame[5] = type;
  new DataView(frame.buffer).setUint32(6, sequence >>> 0, true);
  new DataView(frame.buffer).setUint16(10, payload.length, true);
  frame.set(payload, HEADER_SIZE);
  const crc = crc32(frame.subarray(0, HEADER_SIZE + payload.length));
  new DataView(frame.buffer).setUint32(HEADER_SIZE + payload.length, crc, true);
  return frame;
}

export function encodeJoin(version: number, sequence: number): Uint8Array {
  return finishFrame(version, MessageType.JOIN, sequence, new Uint8Array(0));
}

export function encodeBye(version: number, sequence: number): Uint8Array {
  return finishFrame(version, MessageType.BYE, sequence, new Uint8Array(0));
}

export function encodeCommand(version: number, sequence: number, cmd: CommandMessage): Uint8Array {
  const required = MODE_FIELDS[cmd.clientCommandMode];
  const present = (["jointPosition", "torqueOverlay", "wrenchOverlay", "cartesianPose"] as const).filter(
    (name) => cmd[name] !== undefined,
  );
  if (present.length !== required.length || !required.every((name) => cmd[name] !== undefined)) {
    throw new InvariantViolation(`mode ${CommandMode[cmd.clientCommandMode]} requires ${required.join(", ")}`);
  }
  if (cmd.cartesianPose !== undefined && version < 2) {
    throw new InvariantViolation("cartesianPose commands require protocol version 2");
  }
  const w = new Writer();
  writeField(w, 1, 3, cmd.clientCommandMode);
  if (cmd.jointPosition) writeField(w, 2, 2, cmd.jointPosition);
  if (cmd.torqueOverlay) writeField(w, 3, 2, cmd.torqueOverlay);
  if (cmd.wrenchOverlay) writeField(w, 4, 2, cmd.wrenchOverlay);
  writeField(w, 5, 0, cmd.reflectedSequence);
  if (cmd.cartesianPose) writeField(w, 6, 2, cmd.cartesianPose);
  return finishFrame(version, MessageType.COMMAND, sequence, w.bytes());
}

export function encodeMonitor(version: number, sequence: number, m: MonitorMessage): Uint8Array {
  const w = new Writer();
  writeField(w, 1, 3, m.sessionState);
  writeField(w, 2, 3, m.connectionQuality);
  writeField(w, 3, 3, m.controlMode);
  writeField(w, 4, 1, m.samplePeriod);
  writeField(w, 5, 2, m.measuredJointPosition);
  writeField(w, 6, 2, m.measuredTorque);
  writeField(w, 7, 2, m.externalTorque);
  writeField(w, 8, 2, m.interpolatedCommandPosition);
  writeField(w, 9, 0, m.timestampS);
  writeField(w, 10, 0, m.timestampNs);
  writeField(w, 11, 0, m.monitorSequence);
  return finishFrame(version, MessageType.MONITOR, sequence, w.bytes());
}

const MONITOR_SCHEMA: Record<number, { attr: keyof MonitorMessage; wireType: number }> = {
  1: { attr: "sessionState", wireType: 3 },
  2: { attr: "connectionQuality", wireType: 3 },
  3: { attr: "controlMode", wireType: 3 },
  4: { attr: "samplePeriod", wireType: 1 },
  5: { attr: "measuredJointPosition", wireType: 2 },
  6: { attr: "measuredTorque", wireType: 2 },
  7: { attr: "externalTorque", wireType: 2 },
  8: { attr: "interpolatedCommandPosition", wireType: 2 },
  9: { attr: "timestampS", wireType: 0 },
  10: { attr: "timestampNs", wireType: 0 },
  11: { attr: "monitorSequence", wireType: 0 },
};

const COMMAND_SCHEMA: Record<number, { attr: keyof CommandMessage; wireType: number }> = {
  1: { attr: "clientCommandMode", wireType: 3 },
  2: { attr: "jointPosition", wireType: 2 },
  3: { attr: "torqueOverlay", wireType: 2 },
  4: { attr: "wrenchOverlay", wireType: 2 },
  5: { attr: "reflectedSequence", wireType: 0 },
  6: { attr: "cartesianPose", wireType: 2 },
};

function commandIdsForVersion(version: number): Set<number> {
  return version >= 2 ? new Set([1, 2, 3, 4, 5, 6]) : new Set([1, 2, 3, 4, 5]);
}

function fieldLength(wireType: number, view: Uint8Array, offset: number): number {
  if (wireType === 0) return 4;
  if (wireType === 1) return 8;
  if (wireType === 3) return 1;
  if (wireType === 2) {
    if (offset >= view.length) throw new Truncated("array field missing count byte");
    return 1 + 8 * view[offset];
  }
  throw new UnknownWireType(`wire type ${wireType}`);
}

function readValue(wireType: number, view: DataView, offset: number): number | number[] {
  if (wireType === 0) return view.getUint32(offset, true);
  if (wireType === 1) return view.getFloat64(offset, true);
  if (wireType === 3) return view.getUint8(offset);
  const count = view.getUint8(offset);
  const values: number[] = [];
  for (let i = 0; i < count; i++) values.push(view.getFloat64(offset + 1 + 8 * i, true));
  return values;
}

export function decodeFrame(data: Uint8Array, readerVersion = 2): DecodedFrame {
  if (data.length < HEADER_SIZE + CRC_SIZE) throw new Truncated(`frame of ${data.length} bytes`);
  for (let i = 0; i < 4; i++) {
    if (data[i] !== MAGIC[i]) throw new BadMagic("bad magic");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const version = data[4];
  const typeRaw = data[5];
  const sequence = view.getUint32(6, true);
  const plen = view.getUint16(10, true);
  const expected = HEADER_SIZE + plen + CRC_SIZE;
  if (data.length < expected) throw new Truncated("frame shorter than header promises");
  if (data.length > expected) throw new BadLength("trailing bytes after frame");
  const stated = view.getUint32(expected - CRC_SIZE, true);
  const actual = crc32(data.subarray(0, expected - CRC_SIZE));
  if (stated !== actual) throw new BadChecksum(`crc ${stated} != ${actual}`);
  if (version !== 1 && version !== 2) throw new InvariantViolation(`protocol version ${version}`);
  if (!(typeRaw in MessageType)) throw new InvariantViolation(`message type ${typeRaw}`);
  const header: FrameHeader = { protocolVersion: version, messageType: typeRaw, sequence };

  if (typeRaw === MessageType.JOIN || typeRaw === MessageType.BYE) {
    if (plen !== 0) throw new InvariantViolation("JOIN/BYE frames carry no payload");
    return { header, skippedFields: [] };
  }

  const isMonitor = typeRaw === MessageType.MONITOR;
  const schema = isMonitor ? MONITOR_SCHEMA : COMMAND_SCHEMA;
  const known = isMonitor ? new Set(Object.keys(MONITOR_SCHEMA).map(Number)) : commandIdsForVersion(readerVersion);

  const values: Record<string, number | number[]> = {};
  const skipped: number[] = [];
  let offset = HEADER_SIZE;
  const end = HEADER_SIZE + plen;
  while (offset < end) {
    if (end - offset < 2) throw new Truncated("dangling field header");
    const id = data[offset];
    const wireType = data[offset + 1];
    offset += 2;
    const length = fieldLength(wireType, data, offset);
    if (offset + length > end) throw new Truncated(`field ${id} cut short`);
    if (!known.has(id)) {
      skipped.push(id);
    } else {
      const entry = schema[id];
      if (wireType !== entry.wireType) throw new InvariantViolation(`field ${id} wire type ${wireType}`);
      values[entry.attr as string] = readValue(wireType, view, offset);
    }
    offset += length;
  }

  if (isMonitor) {
    for (const { attr } of Object.values(MONITOR_SCHEMA)) {
      if (!(attr in values)) throw new InvariantViolation(`monitor frame missing ${String(attr)}`);
    }
    return { header, monitor: values as unknown as MonitorMessage, skippedFields: skipped };
  }
  if (!("clientCommandMode" in values) || !("reflectedSequence" in values)) {
    throw new InvariantViolation("command frame missing required fields");
  }
  return { header, command: values as unknown as CommandMessage, skippedFields: skipped };
}

export function toHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function fromHex(hex: string): Uint8Array {
  const clean = hex.replace(/\s+/g, "");
  const out = new Uint8Array(clean.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(clean.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}
