"""MAC frame: 12-byte header, PDU body, CRC32 trailer.

Layout (little-endian)::

    0   u32  sync word 0x1ACFFC1D
    4   u16  body length
    6   u8   hop sender
    7   u8   hop receiver (255 = broadcast)
    8   u16  MAC sequence number
    10  u16  flags (reserved, 0)
    12  ...  body (PDU bytes)
    -4  u32  CRC32 over header + body
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

SYNC_WORD = 0x1ACFFC1D
MAC_HEADER = struct.Struct("<IHBBHH")
MAC_HEADER_LEN = MAC_HEADER.size
CRC_LEN = 4
MAC_OVERHEAD = MAC_HEADER_LEN + CRC_LEN


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class MacFrame:
    sender: int
    receiver: int
    seq: int
    body: bytes
    flags: int = 0

    def encode(self) -> bytes:
        head = MAC_HEADER.pack(SYNC_WORD, len(self.body), self.sender, self.receiver, self.seq & 0xFFFF, self.flags)
        data = head + self.body
        return data + struct.pack("<I", zlib.crc32(data))

    def __len__(self) -> int:
        return MAC_OVERHEAD + len(self.body)


def crc_ok(raw: bytes) -> bool:
    if len(raw) < MAC_OVERHEAD:
        return False
    (crc,) = struct.unpack_from("<I", raw, len(raw) - CRC_LEN)
    return zlib.crc32(raw[:-CRC_LEN]) == crc


def decode_frame(raw: bytes) -> MacFrame:
    if not crc_ok(raw):
        raise FrameError("CRC32 mismatch")
    sync, length, sender, receiver, seq, flags = MAC_HEADER.unpack_from(raw)
    if sync != SYNC_WORD:
        raise FrameError("bad sync word")
    if length != len(raw) - MAC_OVERHEAD:
        raise FrameError("length field mismatch")
    return MacFrame(sender, receiver, seq, bytes(raw[MAC_HEADER_LEN:-CRC_LEN]), flags)


def mac_submit(pdu: bytes, sender: int, receiver: int, seq: int = 0) -> bytes:
    """Frame one PDU for transmission."""
    return MacFrame(sender, receiver, seq, bytes(pdu)).encode()
