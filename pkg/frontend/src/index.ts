export {
  CallbackPanic,
  InvalidCommand,
  NoCommonVersion,
  ScriptClient,
  SessionAborted,
  UsageError,
  echoCommand,
  positionCommand,
  torqueCommand,
  wrenchCommand,
} from "./client";
export { releaseControl, requestControl, sendControlEvent } from "./control";
export { ExponentialFilter, guardCommand } from "./guards";
export type { GuardConfig } from "./guards";
export { portableSin, TWO_PI } from "./portableSin";
export {
  CommandMode,
  ConnectionQuality,
  MessageType,
  SessionState,
  crc32,
  decodeFrame,
  encodeBye,
  encodeCommand,
  encodeJoin,
  encodeMonitor,
  fromHex,
  toHex,
} from "./wire";
export type { CommandMessage, DecodedFrame, FrameHeader, MonitorMessage } from "./wire";
