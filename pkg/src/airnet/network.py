"""Network layer: send/receive buffering, datagram header, flooding relay.

PDU layout (little-endian, 16-byte header then payload)::

    0   u32  packet_id      unique per source
    4   u8   source_id      end-to-end
    5   u8   destination_id end-to-end, 255 = broadcast
    6   u8   sender_id      this hop
    7   u8   receiver_id    this hop, 255 = every neighbour
    8   u8   priority       lower is more important
    9   u8   ttl            hops left
    10  u32  deadline_ms    absolute simulation ms, 0xFFFFFFFF = none
    14  u16  payload_len
    16  ...  payload
"""

from __future__ import annotations

import logging
import struct
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable

from .logger import Category, EventLog

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<IBBBBBBIH")
HEADER_LEN = HEADER.size
BROADCAST = 255
MTU = 1024
DEFAULT_TTL = 8
NO_DEADLINE = 0xFFFFFFFF
PRIORITY_CONTROL = 0
PRIORITY_DATA = 1


class MtuExceededError(ValueError):
    pass


class PduParseError(ValueError):
    pass


@dataclass(frozen=True)
class Packet:
    packet_id: int
    source_id: int
    destination_id: int
    sender_id: int
    receiver_id: int
    priority: int
    ttl: int
    deadline_ms: int
    payload: bytes

    @property
    def size(self) -> int:
        return HEADER_LEN + len(self.payload)

    @property
    def deadline(self) -> float | None:
        return None if self.deadline_ms == NO_DEADLINE else self.deadline_ms / 1000.0

    @property
    def key(self) -> tuple[int, int]:
        return self.source_id, self.packet_id

    def encode(self) -> bytes:
        return (
            HEADER.pack(
                self.packet_id & 0xFFFFFFFF,
                self.source_id,
                self.destination_id,
                self.sender_id,
                self.receiver_id,
                self.priority,
                self.ttl,
                self.deadline_ms,
                len(self.payload),
            )
            + self.payload
        )

    @classmethod
    def decode(cls, pdu: bytes) -> Packet:
        if len(pdu) < HEADER_LEN:
            raise PduParseError(f"pdu of {len(pdu)} bytes is shorter than the header")
        pid, src, dst, snd, rcv, prio, ttl, deadline, plen = HEADER.unpack_from(pdu)
        if len(pdu) != HEADER_LEN + plen:
            raise PduParseError(f"payload length {plen} does not match pdu size {len(pdu)}")
        return cls(pid, src, dst, snd, rcv, prio, ttl, deadline, bytes(pdu[HEADER_LEN:]))

    def log_fields(self) -> dict:
        return dict(
            packet_id=self.packet_id,
            size=self.size,
            source=self.source_id,
            destination=self.destination_id,
            sender=self.sender_id,
            receiver=self.receiver_id,
            priority=self.priority,
        )


class FloodingRouter:
    """Duplicate-suppressed flooding; the default routing policy."""

    def should_relay(self, net: Network, packet: Packet) -> bool:
        return packet.ttl - 1 > 0


class Network:
    def __init__(
        self,
        node_id: int,
        log: EventLog,
        time_source: Callable[[], float],
        router: FloodingRouter | None = None,
        default_ttl: int = DEFAULT_TTL,
    ):
        if not 1 <= node_id < BROADCAST:
            raise ValueError("node ids are 1..254; 255 is broadcast")
        self.node_id = node_id
        self.log = log
        self.now = time_source
        self.router = router or FloodingRouter()
        self.default_ttl = default_ttl
        self._next_id = 1
        self.send_queues: dict[int, deque[Packet]] = {}
        self.receive_buffer: deque[bytes] = deque()
        self.seen: set[tuple[int, int]] = set()
        self.delivered: set[tuple[int, int]] = set()
        self.received_listeners: list[Callable[[Packet], None]] = []
        self.queue_listeners: list[Callable[[], None]] = []
        # returns True when the packet was taken into custody instead of relayed
        self.custody_hook: Callable[[Packet], bool] | None = None
        self.duplicates = 0
        self.parse_errors = 0

    def _record(self, ev: str, packet: Packet, **extra) -> None:
        self.log.record(self.now(), self.node_id, Category.PACKET, ev=ev, **packet.log_fields(), **extra)

    def send_data(
        self,
        dest: int,
        payload: bytes,
        priority: int = PRIORITY_DATA,
        deadline: float | None = None,
        ttl: int | None = None,
    ) -> int:
        """Build a packet and queue it; ``deadline`` is seconds from now."""
        payload = bytes(payload)
        if len(payload) > MTU:
            raise MtuExceededError(f"payload of {len(payload)} bytes exceeds MTU {MTU}")
        now = self.now()
        deadline_ms = NO_DEADLINE if deadline is None else int(round((now + deadline) * 1000))
        packet = Packet(
            packet_id=self._next_id,
            source_id=self.node_id,
            destination_id=dest,
            sender_id=self.node_id,
            receiver_id=BROADCAST,
            priority=priority,
            ttl=self.default_ttl if ttl is None else ttl,
            deadline_ms=deadline_ms,
            payload=payload,
        )
        self._next_id += 1
        self.seen.add(packet.key)
        self._record("send", packet, deadline=packet.deadline, ttl=packet.ttl)
        self._enqueue(packet)
        return packet.packet_id

    def _enqueue(self, packet: Packet) -> None:
        self.send_queues.setdefault(packet.priority, deque()).append(packet)
        for listener in self.queue_listeners:
            listener()

    def has_pending(self) -> bool:
        return any(self.send_queues.values())

    def queued(self) -> int:
        return sum(len(q) for q in self.send_queues.values())

    def next_pdu(self) -> Packet | None:
        """Pop the oldest packet of the most important non-empty class."""
        for prio in sorted(self.send_queues):
            q = self.send_queues[prio]
            if q:
                return q.popleft()
        return None

    def get_data(self) -> bytes:
        if self.receive_buffer:
            return self.receive_buffer.popleft()
        return b""

    def on_pdu_from_mac(self, pdu: bytes) -> str:
        """Handle one PDU that passed the MAC CRC; returns deliver/relay/drop/custody."""
        try:
            packet = Packet.decode(pdu)
        except PduParseError as exc:
            self.parse_errors += 1
            self.log.record(self.now(), self.node_id, Category.ERROR, ev="pdu_unparseable", reason=str(exc))
            return "drop"
        if packet.key in self.seen:
            self.duplicates += 1
            return "drop"
        self.seen.add(packet.key)
        packet = replace(packet, receiver_id=self.node_id)
        self._record("rx", packet, ttl=packet.ttl)

        outcome = "drop"
        if packet.destination_id in (self.node_id, BROADCAST):
            self._deliver(packet)
            outcome = "deliver"
            if packet.destination_id == self.node_id:
                return outcome

        if packet.destination_id != BROADCAST and self.custody_hook is not None and self.custody_hook(packet):
            return "custody"

        if self.router.should_relay(self, packet):
            relayed = replace(packet, ttl=packet.ttl - 1, sender_id=self.node_id, receiver_id=BROADCAST)
            self._record("relay", relayed, ttl=relayed.ttl)
            self._enqueue(relayed)
            return "relay" if outcome == "drop" else outcome
        if outcome == "drop":
            self._record("drop", packet, reason="ttl")
        return outcome

    def _deliver(self, packet: Packet) -> None:
        if packet.key in self.delivered:
            return
        self.delivered.add(packet.key)
        now = self.now()
        late = packet.deadline is not None and now > packet.deadline + 1e-9
        self._record("deliver", packet, ttl=packet.ttl, late=late)
        self.receive_buffer.append(packet.payload)
        for listener in self.received_listeners:
            listener(packet)

    def reinject(self, packet: Packet) -> None:
        """Release a custody-held packet back into the network from this node."""
        out = replace(packet, ttl=self.default_ttl, sender_id=self.node_id, receiver_id=BROADCAST)
        self._record("release", out, ttl=out.ttl)
        self._enqueue(out)
