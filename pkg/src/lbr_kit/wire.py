"""Binary wire protocol: message schemas, framing, and a bit-exact codec.

Frame layout (all multi-byte integers little-endian):

    ┌───────────┬─────┬──────┬─────────┬─────────┬───────────────┬─────────┐
    │ magic 4B  │ ver │ type │ seq 4B  │ plen 2B │ payload       │ CRC 4B  │
    │ "FRI1"    │ u8  │ u8   │ u32     │ u16     │ plen bytes    │ u32     │
    └───────────┴─────┴──────┴─────────┴─────────┴───────────────┴─────────┘

The payload is a sequence of self-describing fields:

    field_id: u8, wire_type: u8, value bytes

    wire_type 0  u32                      (4 bytes)
    wire_type 1  f64                      (8 bytes)
    wire_type 2  f64 array: u8 count, then count * f64
    wire_type 3  u8 enum                  (1 byte)

A decoder can skip any field knowing only (wire_type, first length byte),
which is what makes unknown fields from newer protocol versions skippable.
The CRC-32 (IEEE polynomial) covers header and payload and is appended
little-endian. JOIN and BYE frames carry an empty payload.
"""

from __future__ import annotations

import enum
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import (
    BadChecksum,
    BadLength,
    BadMagic,
    InvariantViolation,
    ModeFieldMismatch,
    NoCommonVersion,
    Overflow,
    Truncated,
    UnknownMessageType,
    UnknownWireType,
)

MAGIC = b"FRI1"
HEADER_SIZE = 12
CRC_SIZE = 4
MIN_FRAME_SIZE = HEADER_SIZE + CRC_SIZE
MAX_PAYLOAD = 0xFFFF

PROTOCOL_VERSIONS = (1, 2)
DEFAULT_PORT = 30200

_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_F64 = struct.Struct("<d")


class MessageType(enum.IntEnum):
    JOIN = 0x00
    MONITOR = 0x01
    COMMAND = 0x02
    BYE = 0x03


class SessionState(enum.IntEnum):
    IDLE = 0
    MONITORING_WAIT = 1
    MONITORING_READY = 2
    COMMANDING_WAIT = 3
    COMMANDING_ACTIVE = 4


class ConnectionQuality(enum.IntEnum):
    POOR = 0
    FAIR = 1
    GOOD = 2
    EXCELLENT = 3


class CommandMode(enum.IntEnum):
    POSITION = 0
    TORQUE = 1
    WRENCH = 2
    CARTESIAN_POSE = 3


# Optional command fields demanded by each mode.
MODE_FIELDS = {
    CommandMode.POSITION: ("joint_position",),
    CommandMode.TORQUE: ("joint_position", "torque_overlay"),
    CommandMode.WRENCH: ("wrench_overlay",),
    CommandMode.CARTESIAN_POSE: ("cartesian_pose",),
}

QUAT_NORM_TOL = 1e-9


def supported_modes(version: int) -> frozenset[CommandMode]:
    """Command modes available under a protocol version.

    Version 1 carries position, joint-impedance (torque overlay) and
    cartesian-impedance (wrench overlay) commands; direct cartesian pose
    commands exist from version 2 on.
    """
    if version == 1:
        return frozenset({CommandMode.POSITION, CommandMode.TORQUE, CommandMode.WRENCH})
    if version == 2:
        return frozenset(
            {CommandMode.POSITION, CommandMode.TORQUE, CommandMode.WRENCH, CommandMode.CARTESIAN_POSE}
        )
    raise InvariantViolation(f"unknown protocol version {version}")


def negotiate_version(client_supported, server_version: int) -> int:
    """Pick the highest version both sides speak.

    Returns max(client_supported ∩ {1..server_version}); raises
    NoCommonVersion when the intersection is empty.
    """
    if not client_supported:
        raise NoCommonVersion("client supports no versions")
    common = set(client_supported) & set(range(1, server_version + 1))
    if not common:
        raise NoCommonVersion(
            f"client supports {sorted(client_supported)}, server offers 1..{server_version}"
        )
    return max(common)


def _check_vec(name: str, values, length: int) -> tuple[float, ...]:
    vec = tuple(float(v) for v in values)
    if len(vec) != length:
        raise InvariantViolation(f"{name} must have {length} entries, got {len(vec)}")
    for v in vec:
        if not math.isfinite(v):
            raise InvariantViolation(f"{name} contains non-finite value {v!r}")
    return vec


@dataclass(frozen=True)
class FrameHeader:
    protocol_version: int
    message_type: MessageType
    sequence: int

    def validate(self) -> None:
        if self.protocol_version not in PROTOCOL_VERSIONS:
            raise InvariantViolation(f"protocol_version must be 1 or 2, got {self.protocol_version}")
        if not 0 <= self.sequence <= 0xFFFFFFFF:
            raise InvariantViolation(f"sequence {self.sequence} outside u32 range")
        if self.message_type not in MessageType.__members__.values():
            raise InvariantViolation(f"unknown message type {self.message_type}")


@dataclass(frozen=True)
class MonitorMessage:
    """Controller → client state sample, one per tick."""

    session_state: SessionState
    connection_quality: ConnectionQuality
    control_mode: CommandMode
    sample_period: float
    measured_joint_position: tuple[float, ...]
    measured_torque: tuple[float, ...]
    external_torque: tuple[float, ...]
    interpolated_command_position: tuple[float, ...]
    timestamp_s: int
    timestamp_ns: int
    monitor_sequence: int

    def validate(self) -> "MonitorMessage":
        msg = replace(
            self,
            session_state=SessionState(self.session_state),
            connection_quality=ConnectionQuality(self.connection_quality),
            control_mode=CommandMode(self.control_mode),
            measured_joint_position=_check_vec("measured_joint_position", self.measured_joint_position, 7),
            measured_torque=_check_vec("measured_torque", self.measured_torque, 7),
            external_torque=_check_vec("external_torque", self.external_torque, 7),
            interpolated_command_position=_check_vec(
                "interpolated_command_position", self.interpolated_command_position, 7
            ),
        )
        if not (math.isfinite(msg.sample_period) and msg.sample_period > 0):
            raise InvariantViolation(f"sample_period must be > 0, got {msg.sample_period}")
        if not 0 <= msg.timestamp_s <= 0xFFFFFFFF:
            raise InvariantViolation("timestamp seconds outside u32 range")
        if not 0 <= msg.timestamp_ns < 1_000_000_000:
            raise InvariantViolation(f"timestamp nanoseconds must be < 1e9, got {msg.timestamp_ns}")
        if not 0 <= msg.monitor_sequence <= 0xFFFFFFFF:
            raise InvariantViolation("monitor_sequence outside u32 range")
        return msg


@dataclass(frozen=True)
class CommandMessage:
    """Client → controller answer with mode-dependent setpoints."""

    client_command_mode: CommandMode
    reflected_sequence: int
    joint_position: Optional[tuple[float, ...]] = None
    torque_overlay: Optional[tuple[float, ...]] = None
    wrench_overlay: Optional[tuple[float, ...]] = None
    cartesian_pose: Optional[tuple[float, ...]] = None

    _OPTIONAL = ("joint_position", "torque_overlay", "wrench_overlay", "cartesian_pose")
    _LENGTHS = {"joint_position": 7, "torque_overlay": 7, "wrench_overlay": 6, "cartesian_pose": 7}

    def present_fields(self) -> tuple[str, ...]:
        return tuple(n for n in self._OPTIONAL if getattr(self, n) is not None)

    def validate(self, known_optional: Optional[set] = None) -> "CommandMessage":
        """Check mode/field pairing and value invariants.

        known_optional restricts which optional fields the reader could have
        decoded; requirements on fields outside that set are waived so that an
        old reader accepts commands whose newer fields were skipped.
        """
        mode = CommandMode(self.client_command_mode)
        if not 0 <= self.reflected_sequence <= 0xFFFFFFFF:
            raise InvariantViolation("reflected_sequence outside u32 range")
        required = set(MODE_FIELDS[mode])
        if known_optional is not None:
            required &= known_optional
        present = set(self.present_fields())
        if present != required:
            raise ModeFieldMismatch(
                f"mode {mode.name} requires fields {sorted(required)}, got {sorted(present)}"
            )
        checked = {}
        for name in present:
            checked[name] = _check_vec(name, getattr(self, name), self._LENGTHS[name])
        msg = replace(self, client_command_mode=mode, **checked)
        if msg.cartesian_pose is not None:
            norm = math.sqrt(sum(c * c for c in msg.cartesian_pose[3:7]))
            if abs(norm - 1.0) > QUAT_NORM_TOL:
                raise InvariantViolation(f"cartesian_pose quaternion norm {norm} not unit")
        return msg


Payload = Union[MonitorMessage, CommandMessage, None]


@dataclass(frozen=True)
class DecodedFrame:
    header: FrameHeader
    payload: Payload
    skipped_fields: tuple[int, ...] = ()


# Wire types.
WT_U32 = 0
WT_F64 = 1
WT_F64_ARRAY = 2
WT_ENUM = 3

# field_id -> (attribute, wire_type); normative for golden-frame tests.
MONITOR_FIELDS = {
    1: ("session_state", WT_ENUM),
    2: ("connection_quality", WT_ENUM),
    3: ("control_mode", WT_ENUM),
    4: ("sample_period", WT_F64),
    5: ("measured_joint_position", WT_F64_ARRAY),
    6: ("measured_torque", WT_F64_ARRAY),
    7: ("external_torque", WT_F64_ARRAY),
    8: ("interpolated_command_position", WT_F64_ARRAY),
    9: ("timestamp_s", WT_U32),
    10: ("timestamp_ns", WT_U32),
    11: ("monitor_sequence", WT_U32),
}

COMMAND_FIELDS = {
    1: ("client_command_mode", WT_ENUM),
    2: ("joint_position", WT_F64_ARRAY),
    3: ("torque_overlay", WT_F64_ARRAY),
    4: ("wrench_overlay", WT_F64_ARRAY),
    5: ("reflected_sequence", WT_U32),
    6: ("cartesian_pose", WT_F64_ARRAY),
}

# Command field 6 (cartesian_pose) exists only from protocol version 2.
_COMMAND_IDS_BY_VERSION = {1: frozenset({1, 2, 3, 4, 5}), 2: frozenset({1, 2, 3, 4, 5, 6})}
_MONITOR_IDS_BY_VERSION = {1: frozenset(MONITOR_FIELDS), 2: frozenset(MONITOR_FIELDS)}


def encode_field(field_id: int, wire_type: int, value) -> bytes:
    """Encode one payload field. Exposed for tests that craft raw frames."""
    head = bytes((field_id, wire_type))
    if wire_type == WT_U32:
        return head + _U32.pack(int(value))
    if wire_type == WT_F64:
        return head + _F64.pack(float(value))
    if wire_type == WT_F64_ARRAY:
        vec = tuple(float(v) for v in value)
        if len(vec) > 0xFF:
            raise Overflow("array field longer than 255 entries")
        return head + bytes((len(vec),)) + b"".join(_F64.pack(v) for v in vec)
    if wire_type == WT_ENUM:
        return head + bytes((int(value),))
    raise UnknownWireType(f"wire type {wire_type}")


def _encode_payload(header: FrameHeader, payload: Payload) -> bytes:
    mtype = header.message_type
    if mtype in (MessageType.JOIN, MessageType.BYE):
        if payload is not None:
            raise InvariantViolation(f"{MessageType(mtype).name} frames carry no payload")
        return b""
    if mtype == MessageType.MONITOR:
        if not isinstance(payload, MonitorMessage):
            raise InvariantViolation("MONITOR frame requires a MonitorMessage payload")
        msg = payload.validate()
        return b"".join(
            encode_field(fid, wt, getattr(msg, attr))
            for fid, (attr, wt) in sorted(MONITOR_FIELDS.items())
        )
    if mtype == MessageType.COMMAND:
        if not isinstance(payload, CommandMessage):
            raise InvariantViolation("COMMAND frame requires a CommandMessage payload")
        msg = payload.validate()
        if msg.cartesian_pose is not None and header.protocol_version < 2:
            raise InvariantViolation("cartesian_pose commands require protocol version 2")
        out = []
        for fid, (attr, wt) in sorted(COMMAND_FIELDS.items()):
            value = getattr(msg, attr)
            if value is None:
                continue
            out.append(encode_field(fid, wt, value))
        return b"".join(out)
    raise UnknownMessageType(f"message type {mtype}")


def encode_frame(header: FrameHeader, payload: Payload = None) -> bytes:
    """Serialize a frame: header ‖ fields in ascending field_id ‖ CRC-32.

    Pure function of its arguments: identical input gives identical bytes.
    """
    header.validate()
    body = _encode_payload(header, payload)
    if len(body) > MAX_PAYLOAD:
        raise Overflow(f"payload of {len(body)} bytes exceeds {MAX_PAYLOAD}")
    head = (
        MAGIC
        + bytes((header.protocol_version, header.message_type))
        + _U32.pack(header.sequence)
        + _U16.pack(len(body))
    )
    frame = head + body
    return frame + _U32.pack(zlib.crc32(frame) & 0xFFFFFFFF)


def build_raw_frame(version: int, message_type: int, sequence: int, raw_payload: bytes) -> bytes:
    """Frame arbitrary payload bytes with a valid header and CRC (test helper)."""
    head = MAGIC + bytes((version, message_type)) + _U32.pack(sequence) + _U16.pack(len(raw_payload))
    frame = head + raw_payload
    return frame + _U32.pack(zlib.crc32(frame) & 0xFFFFFFFF)


def _field_length(wire_type: int, data: memoryview, offset: int) -> int:
    """Byte length of a field's value, computable without knowing field_id."""
    if wire_type == WT_U32:
        return 4
    if wire_type == WT_F64:
        return 8
    if wire_type == WT_F64_ARRAY:
        if offset >= len(data):
            raise Truncated("array field missing count byte")
        return 1 + 8 * data[offset]
    if wire_type == WT_ENUM:
        return 1
    raise UnknownWireType(f"wire type {wire_type}")


def _parse_fields(data: memoryview):
    """Yield (field_id, wire_type, value_bytes) triples from payload bytes."""
    offset = 0
    n = len(data)
    while offset < n:
        if n - offset < 2:
            raise Truncated("dangling field header")
        fid, wt = data[offset], data[offset + 1]
        offset += 2
        length = _field_length(wt, data, offset)
        if offset + length > n:
            raise Truncated(f"field {fid} value cut short")
        yield fid, wt, bytes(data[offset : offset + length])
        offset += length


def _decode_value(wire_type: int, raw: bytes):
    if wire_type == WT_U32:
        return _U32.unpack(raw)[0]
    if wire_type == WT_F64:
        return _F64.unpack(raw)[0]
    if wire_type == WT_F64_ARRAY:
        count = raw[0]
        return tuple(_F64.unpack_from(raw, 1 + 8 * i)[0] for i in range(count))
    return raw[0]  # WT_ENUM


def decode_frame(data: bytes, reader_version: int = 2) -> DecodedFrame:
    """Decode one datagram into (header, payload, skipped field ids).

    Fields whose id is unknown to reader_version are skipped structurally and
    reported, never treated as an error. Any corruption (magic, framing,
    checksum) raises a FrameDecodeError subclass.
    """
    view = memoryview(data)
    if len(view) < MIN_FRAME_SIZE:
        raise Truncated(f"frame of {len(view)} bytes, minimum is {MIN_FRAME_SIZE}")
    if bytes(view[0:4]) != MAGIC:
        raise BadMagic(f"bad magic {bytes(view[0:4])!r}")
    version = view[4]
    mtype_raw = view[5]
    sequence = _U32.unpack_from(view, 6)[0]
    plen = _U16.unpack_from(view, 10)[0]
    expected = HEADER_SIZE + plen + CRC_SIZE
    if len(view) < expected:
        raise Truncated(f"frame of {len(view)} bytes, header promises {expected}")
    if len(view) > expected:
        raise BadLength(f"{len(view) - expected} trailing bytes after frame")
    crc_stated = _U32.unpack_from(view, expected - CRC_SIZE)[0]
    crc_actual = zlib.crc32(view[: expected - CRC_SIZE]) & 0xFFFFFFFF
    if crc_stated != crc_actual:
        raise BadChecksum(f"crc {crc_stated:#010x}, computed {crc_actual:#010x}")
    if version not in PROTOCOL_VERSIONS:
        raise InvariantViolation(f"protocol version {version} not supported")
    try:
        mtype = MessageType(mtype_raw)
    except ValueError:
        raise UnknownMessageType(f"message type {mtype_raw:#04x}") from None
    header = FrameHeader(protocol_version=version, message_type=mtype, sequence=sequence)
    body = view[HEADER_SIZE : HEADER_SIZE + plen]

    if mtype in (MessageType.JOIN, MessageType.BYE):
        if plen != 0:
            raise InvariantViolation(f"{mtype.name} frame must carry an empty payload")
        return DecodedFrame(header, None)

    if mtype == MessageType.MONITOR:
        known = _MONITOR_IDS_BY_VERSION.get(reader_version, _MONITOR_IDS_BY_VERSION[2])
        schema = MONITOR_FIELDS
    else:
        known = _COMMAND_IDS_BY_VERSION.get(reader_version, _COMMAND_IDS_BY_VERSION[2])
        schema = COMMAND_FIELDS

    values = {}
    skipped = []
    for fid, wt, raw in _parse_fields(body):
        if fid not in known:
            skipped.append(fid)
            continue
        attr, expected_wt = schema[fid]
        if wt != expected_wt:
            raise InvariantViolation(f"field {fid} has wire type {wt}, schema says {expected_wt}")
        if attr in values:
            raise InvariantViolation(f"duplicate field {fid}")
        values[attr] = _decode_value(wt, raw)

    if mtype == MessageType.MONITOR:
        missing = [a for a, _ in MONITOR_FIELDS.values() if a not in values]
        if missing:
            raise InvariantViolation(f"monitor frame missing fields {missing}")
        payload: Payload = MonitorMessage(**values).validate()
    else:
        for req in ("client_command_mode", "reflected_sequence"):
            if req not in values:
                raise InvariantViolation(f"command frame missing {req}")
        known_optional = {
            COMMAND_FIELDS[fid][0] for fid in known if COMMAND_FIELDS[fid][0] in CommandMessage._OPTIONAL
        }
        try:
            mode = CommandMode(values["client_command_mode"])
        except ValueError:
            raise InvariantViolation(
                f"unknown command mode {values['client_command_mode']}"
            ) from None
        values["client_command_mode"] = mode
        payload = CommandMessage(**values).validate(known_optional=known_optional)

    return DecodedFrame(header, payload, tuple(skipped))


def dump_frame(data: bytes) -> str:
    """Human-readable frame dump: header summary, one `field_id wire_type value`
    line per payload field, then the checksum verdict."""
    lines = []
    view = memoryview(data)
    if len(view) < MIN_FRAME_SIZE:
        return f"truncated frame ({len(view)} bytes)"
    magic = bytes(view[0:4])
    version, mtype = view[4], view[5]
    sequence = _U32.unpack_from(view, 6)[0]
    plen = _U16.unpack_from(view, 10)[0]
    try:
        tname = MessageType(mtype).name
    except ValueError:
        tname = f"UNKNOWN({mtype:#04x})"
    lines.append(
        f"{magic.decode('ascii', 'replace')} version={version} type={tname} "
        f"seq={sequence} payload_length={plen}"
    )
    end = min(HEADER_SIZE + plen, len(view) - CRC_SIZE)
    try:
        for fid, wt, raw in _parse_fields(view[HEADER_SIZE:end]):
            value = _decode_value(wt, raw)
            if isinstance(value, tuple):
                rendered = "[" + " ".join(repr(v) for v in value) + "]"
            else:
                rendered = repr(value)
            lines.append(f"{fid} {wt} {rendered}")
    except Exception as exc:  # keep dumping; this is a debugging surface
        lines.append(f"payload parse error: {exc}")
    if len(view) >= HEADER_SIZE + plen + CRC_SIZE:
        stated = _U32.unpack_from(view, HEADER_SIZE + plen)[0]
        actual = zlib.crc32(view[: HEADER_SIZE + plen]) & 0xFFFFFFFF
        verdict = "ok" if stated == actual else f"MISMATCH (computed {actual:#010x})"
        lines.append(f"crc={stated:#010x} {verdict}")
    return "\n".join(lines)
