"""MAVLink 1.0 framing and the two-message dialect spoken between ACU and autopilot.

Frame layout (little-endian)::

    0      start sign 0xFE
    1      payload length n
    2      sequence (wraps 255 -> 0)
    3      system id (1-255)
    4      component id
    5      message id
    6..    payload (n bytes)
    n+6    checksum low byte
    n+7    checksum high byte

The checksum is CRC-16/X.25 over bytes 1..n+5 followed by the message's
extra seed byte.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

START_SIGN = 0xFE
HEADER_LEN = 6
CHECKSUM_LEN = 2
FRAME_OVERHEAD = HEADER_LEN + CHECKSUM_LEN

MSG_HEARTBEAT = 0
MSG_COMMAND = 76

# per-message extra seed byte folded into the checksum
CRC_EXTRA = {MSG_HEARTBEAT: 50, MSG_COMMAND: 152}

HEARTBEAT_STRUCT = struct.Struct("<BBBB")
# params 1-7, command, target system, target component, confirmation
COMMAND_STRUCT = struct.Struct("<7fHBBB")
PAYLOAD_LEN = {MSG_HEARTBEAT: HEARTBEAT_STRUCT.size, MSG_COMMAND: COMMAND_STRUCT.size}


class MavError(Exception):
    pass


class InvalidSystemError(MavError):
    pass


class UnsupportedCommandError(MavError):
    pass


class MavCmd(enum.IntEnum):
    NAV_WAYPOINT = 16
    NAV_LOITER_TIME = 19
    NAV_RETURN_TO_LAUNCH = 20
    NAV_LAND = 21
    NAV_TAKEOFF = 22
    DO_SET_MODE = 176
    DO_SET_SERVO = 183


SUPPORTED_COMMANDS = frozenset(int(c) for c in MavCmd)


class VehicleType(enum.IntEnum):
    GENERIC = 0
    FIXED_WING = 1
    QUADROTOR = 2
    HELICOPTER = 4
    GCS = 6
    ONBOARD_CONTROLLER = 18


class AutopilotType(enum.IntEnum):
    GENERIC = 0
    ARDUPILOTMEGA = 3
    INVALID = 8
    PX4 = 12


class ModeFlag(enum.IntFlag):
    NONE = 0
    ARMED = 1
    AUTONOMOUS = 2
    MANUAL = 4
    STABILIZE = 8


def _crc_accumulate(byte: int, crc: int) -> int:
    tmp = byte ^ (crc & 0xFF)
    tmp = (tmp ^ (tmp << 4)) & 0xFF
    return ((crc >> 8) ^ (tmp << 8) ^ (tmp << 3) ^ (tmp >> 4)) & 0xFFFF


def _build_table() -> list[int]:
    return [_crc_accumulate(b, 0) for b in range(256)]


_CRC_TABLE = _build_table()


def crc16(data: bytes, extra_seed: int | None = None) -> int:
    """CRC-16/X.25 of ``data`` with an optional trailing seed byte."""
    crc = 0xFFFF
    table = _CRC_TABLE
    for b in data:
        crc = (crc >> 8) ^ table[(crc ^ b) & 0xFF]
    if extra_seed is not None:
        crc = (crc >> 8) ^ table[(crc ^ extra_seed) & 0xFF]
    return crc ^ 0xFFFF


@dataclass(frozen=True)
class HeartbeatMsg:
    vehicle_type: VehicleType = VehicleType.QUADROTOR
    autopilot_type: AutopilotType = AutopilotType.ARDUPILOTMEGA
    mode: ModeFlag = ModeFlag.NONE
    mavlink_version: int = 1

    msgid = MSG_HEARTBEAT

    def pack(self) -> bytes:
        return HEARTBEAT_STRUCT.pack(
            int(self.vehicle_type), int(self.autopilot_type), int(self.mode), self.mavlink_version
        )

    @classmethod
    def unpack(cls, payload: bytes) -> HeartbeatMsg:
        vt, ap, mode, version = HEARTBEAT_STRUCT.unpack(payload)
        return cls(_enum_or_int(VehicleType, vt), _enum_or_int(AutopilotType, ap), ModeFlag(mode), version)

    @property
    def armed(self) -> bool:
        return bool(self.mode & ModeFlag.ARMED)


def _enum_or_int(enum_cls, value: int):
    try:
        return enum_cls(value)
    except ValueError:
        return value


def _f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


@dataclass(frozen=True)
class CommandMsg:
    command_id: int
    target_system: int
    target_component: int
    params: tuple[float, ...] = (0.0,) * 7
    confirmation: int = 0

    msgid = MSG_COMMAND

    def __post_init__(self):
        if len(self.params) != 7:
            raise ValueError("a command carries exactly seven parameters")
        # params travel as float32; store the wire value so round trips compare equal
        object.__setattr__(self, "params", tuple(_f32(float(p)) for p in self.params))

    def pack(self) -> bytes:
        return COMMAND_STRUCT.pack(*self.params, self.command_id, self.target_system, self.target_component, self.confirmation)

    @classmethod
    def unpack(cls, payload: bytes) -> CommandMsg:
        *params, cmd, tsys, tcomp, confirmation = COMMAND_STRUCT.unpack(payload)
        return cls(cmd, tsys, tcomp, tuple(params), confirmation)


Message = HeartbeatMsg | CommandMsg


@dataclass(frozen=True)
class MavFrame:
    length: int
    sequence: int
    system_id: int
    component_id: int
    message_id: int
    payload: bytes
    checksum: int

    start_sign = START_SIGN

    def to_bytes(self) -> bytes:
        return (
            bytes((START_SIGN, self.length, self.sequence, self.system_id, self.component_id, self.message_id))
            + self.payload
            + self.checksum.to_bytes(2, "little")
        )


def encode_frame(msg: Message, seq: int, sysid: int, compid: int) -> bytes:
    if not 1 <= sysid <= 255:
        raise InvalidSystemError(f"system id {sysid} outside 1..255")
    if not 0 <= compid <= 255:
        raise MavError(f"component id {compid} outside 0..255")
    payload = msg.pack()
    if len(payload) > 255:
        raise MavError("payload exceeds 255 bytes")
    header = bytes((len(payload), seq & 0xFF, sysid, compid, msg.msgid))
    crc = crc16(header + payload, CRC_EXTRA[msg.msgid])
    return bytes((START_SIGN,)) + header + payload + crc.to_bytes(2, "little")


def decode_message(frame: MavFrame) -> Message:
    if frame.message_id == MSG_HEARTBEAT:
        return HeartbeatMsg.unpack(frame.payload)
    if frame.message_id == MSG_COMMAND:
        return CommandMsg.unpack(frame.payload)
    raise MavError(f"unknown message id {frame.message_id}")


def map_execute_command(
    cmd_type: int,
    autopilot_id: int,
    component_id: int,
    p1: float = 0.0,
    p2: float = 0.0,
    p3: float = 0.0,
    p4: float = 0.0,
    p5: float = 0.0,
    p6: float = 0.0,
    p7: float = 0.0,
) -> CommandMsg:
    """Pack the ten-argument executeCommand call into a CommandMsg."""
    if cmd_type not in SUPPORTED_COMMANDS:
        raise UnsupportedCommandError(f"command {cmd_type} is not supported")
    return CommandMsg(int(cmd_type), autopilot_id, component_id, (p1, p2, p3, p4, p5, p6, p7))


@dataclass
class MavParser:
    """Incremental frame parser; resynchronises on the next start sign after a bad frame."""

    crc_extra: dict[int, int] = field(default_factory=lambda: dict(CRC_EXTRA))
    buffer: bytearray = field(default_factory=bytearray)
    skipped_bytes: int = 0
    bad_checksum: int = 0
    bad_length: int = 0
    unknown_msgid: int = 0
    frames_ok: int = 0

    def feed(self, data: bytes) -> list[MavFrame]:
        self.buffer.extend(data)
        buf = self.buffer
        out: list[MavFrame] = []
        while True:
            start = buf.find(START_SIGN)
            if start < 0:
                self.skipped_bytes += len(buf)
                buf.clear()
                break
            if start:
                self.skipped_bytes += start
                del buf[:start]
            if len(buf) < HEADER_LEN:
                break
            length, msgid = buf[1], buf[5]
            if msgid not in self.crc_extra:
                self.unknown_msgid += 1
                self._drop_start()
                continue
            expected = PAYLOAD_LEN.get(msgid)
            if expected is not None and length != expected:
                self.bad_length += 1
                self._drop_start()
                continue
            total = HEADER_LEN + length + CHECKSUM_LEN
            if len(buf) < total:
                break
            checksum = buf[total - 2] | (buf[total - 1] << 8)
            if crc16(bytes(buf[1 : HEADER_LEN + length]), self.crc_extra[msgid]) != checksum or buf[3] == 0:
                self.bad_checksum += 1
                self._drop_start()
                continue
            out.append(
                MavFrame(
                    length=length,
                    sequence=buf[2],
                    system_id=buf[3],
                    component_id=buf[4],
                    message_id=msgid,
                    payload=bytes(buf[HEADER_LEN : HEADER_LEN + length]),
                    checksum=checksum,
                )
            )
            self.frames_ok += 1
            del buf[:total]
        return out

    def _drop_start(self) -> None:
        self.skipped_bytes += 1
        del self.buffer[:1]


def decode_frames(data: bytes) -> list[Message]:
    """Decode every valid frame in a complete byte string."""
    return [decode_message(f) for f in MavParser().feed(data)]
