"""Media links between the ACU and the autopilot.

A serial link serialises bytes at baud_rate with 8N1 framing (10 line bits
per byte). Each direction keeps its own busy-until time in microseconds, so
sends queue FIFO behind earlier traffic; a chunk is handed to the peer
during the tick in which its last bit arrives.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

from .simcore import TICK_US, Scheduler

logger = logging.getLogger(__name__)

BITS_PER_BYTE_8N1 = 10
DEFAULT_BAUD = 115_200


class LinkError(Exception):
    pass


class AlreadyOpenError(LinkError):
    pass


class LinkDownError(LinkError):
    pass


class LinkKind(str, enum.Enum):
    SERIAL = "serial"
    INPROC = "inproc"
    # declared for completeness; not modelled
    TCP = "tcp"
    UDP = "udp"
    TELEMETRY = "telemetry"


@dataclass(frozen=True)
class LinkConfig:
    kind: LinkKind = LinkKind.SERIAL
    port_name: str = "ttyACM0"
    baud_rate: int = DEFAULT_BAUD

    def __post_init__(self):
        if self.kind is LinkKind.SERIAL and self.baud_rate <= 0:
            raise ValueError("serial links need a positive baud rate")


@dataclass
class LinkEndpoint:
    link_id: int
    side: str
    owner: int
    peer: LinkEndpoint | None = None
    on_receive: Callable[[bytes], None] | None = None
    busy_until_us: int = 0
    bytes_sent: int = 0
    bytes_delivered: int = 0
    pending: list = field(default_factory=list)


@dataclass
class Link:
    link_id: int
    config: LinkConfig
    a: LinkEndpoint
    b: LinkEndpoint
    connected: bool = False


def serialization_us(nbytes: int, baud_rate: int) -> int:
    bits = BITS_PER_BYTE_8N1 * nbytes
    return -(-bits * 1_000_000 // baud_rate)


class LinkManager:
    """Owns every link of one run; both endpoints of a link share the owner node."""

    def __init__(self, scheduler: Scheduler):
        self.scheduler = scheduler
        self._links: dict[int, Link] = {}
        self._ids = itertools.count(1)
        self._ports: set[str] = set()

    def open_link(self, config: LinkConfig, owner: int = 0) -> int:
        if config.kind not in (LinkKind.SERIAL, LinkKind.INPROC):
            raise NotImplementedError(f"{config.kind.value} links are not modelled")
        if config.port_name in self._ports:
            raise AlreadyOpenError(f"port {config.port_name} already open")
        link_id = next(self._ids)
        a = LinkEndpoint(link_id, "a", owner)
        b = LinkEndpoint(link_id, "b", owner)
        a.peer, b.peer = b, a
        self._links[link_id] = Link(link_id, config, a, b)
        self._ports.add(config.port_name)
        return link_id

    def link(self, link_id: int) -> Link:
        return self._links[link_id]

    def endpoints(self, link_id: int) -> tuple[LinkEndpoint, LinkEndpoint]:
        link = self._links[link_id]
        return link.a, link.b

    def is_connected(self, link_id: int) -> bool:
        return self._links[link_id].connected

    def connect_link(self, link_id: int) -> None:
        self._links[link_id].connected = True

    def disconnect_link(self, link_id: int) -> None:
        link = self._links[link_id]
        link.connected = False
        for end in (link.a, link.b):
            for token in end.pending:
                token.cancel()
            end.pending.clear()
            end.busy_until_us = 0

    def send_bytes(self, link_id: int, data: bytes, side: str = "a") -> int:
        """Queue ``data`` from endpoint ``side`` to its peer; returns the delivery tick."""
        link = self._links[link_id]
        if not link.connected:
            raise LinkDownError(f"link {link_id} ({link.config.port_name}) is down")
        src = link.a if side == "a" else link.b
        now = self.scheduler.now
        data = bytes(data)
        if link.config.kind is LinkKind.INPROC:
            deliver_tick = now
        else:
            start_us = max(now * TICK_US, src.busy_until_us)
            done_us = start_us + serialization_us(len(data), link.config.baud_rate)
            src.busy_until_us = done_us
            deliver_tick = max(now, done_us // TICK_US)
        src.bytes_sent += len(data)
        dst = src.peer

        def deliver() -> None:
            src.pending.remove(token)
            dst.bytes_delivered += len(data)
            if dst.on_receive is not None:
                dst.on_receive(data)

        token = self.scheduler.schedule_at(deliver_tick, src.owner, deliver)
        src.pending.append(token)
        return deliver_tick
