"""Shared radio medium and the channel-access schemes.

The medium keeps its own microsecond event queue. The scheduler calls
:meth:`Medium.pass_task` once at the end of every tick; it processes every
medium event inside that tick's 10 ms window, so MAC slots and frame airtimes
are resolved below tick granularity while the rest of the emulator stays on
the tick grid.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

from ..logger import Category, EventLog
from ..network import Network, Packet
from ..simcore import TICK_US, RngRegistry, RngStream, Scheduler
from .channel import (
    CAPTURE_MARGIN_DB,
    ChannelParams,
    Jammer,
    JammerBehavior,
    Outcome,
    RadioConfig,
    co_channel,
    dbm_to_mw,
    distance3,
    mw_to_dbm,
)
from .frame import MacFrame, crc_ok, decode_frame

logger = logging.getLogger(__name__)

SLOT_US = 1_000
# the channel still counts as busy this long after a sensed frame ends
DIFS_US = SLOT_US
CW_MIN = 16
CW_MAX = 128
RETRY_LIMIT = 7
TDMA_SLOT_US = 50_000
TDMA_SLOT_TICKS = TDMA_SLOT_US // TICK_US
MEDIUM_OWNER = 1 << 30

Position = tuple[float, float, float]


class MacMode(str, enum.Enum):
    CSMA = "csma"
    TDMA = "tdma"
    ALOHA = "aloha"


@dataclass
class Transmission:
    tx_id: int
    node: int
    start_us: int
    end_us: int
    raw: bytes
    power: float
    frequency: float
    position: Position
    packet: Packet | None = None
    overlapped: bool = False

    def overlaps(self, start_us: int, end_us: int) -> bool:
        return self.start_us < end_us and start_us < self.end_us


@dataclass(frozen=True)
class Reception:
    rssi: float
    snr: float
    outcome: Outcome
    reason: str = ""
    per: float = 1.0


def decide_reception(
    rssi: float,
    noise_floor: float,
    interferers_dbm: list[float],
    jam_mw: float,
    params: ChannelParams,
    draw: Callable[[], float],
    lossless: bool = False,
) -> Reception:
    """Outcome of one frame at one receiver, given everything overlapping it."""
    noise_only = rssi - noise_floor
    if noise_only < params.sensitivity_snr:
        return Reception(rssi, noise_only, Outcome.BELOW_SENSITIVITY, "sensitivity", 1.0)
    interference_mw = sum(dbm_to_mw(x) for x in interferers_dbm) + jam_mw
    snr = rssi - mw_to_dbm(dbm_to_mw(noise_floor) + interference_mw)
    if any(i >= rssi - CAPTURE_MARGIN_DB for i in interferers_dbm):
        return Reception(rssi, snr, Outcome.CRC_FAIL, "collision", 1.0)
    per = params.per(snr)
    if lossless and jam_mw == 0.0 and not interferers_dbm:
        return Reception(rssi, snr, Outcome.DELIVERED, "", 0.0)
    u = draw()
    if u < per:
        return Reception(rssi, snr, Outcome.CRC_FAIL, "channel", per)
    return Reception(rssi, snr, Outcome.DELIVERED, "", per)


def tdma_slot_for(rank: int, n_nodes: int, t: int, slot_ticks: int = TDMA_SLOT_TICKS) -> bool:
    """Whether the node of schedule rank ``rank`` owns the slot containing tick ``t``."""
    return (t // slot_ticks) % n_nodes == rank


@dataclass
class MediumStats:
    frames_sent: int = 0
    frames_overlapped: int = 0
    mac_drops: int = 0
    outcomes: dict[str, int] = field(default_factory=lambda: {o.value: 0 for o in Outcome})
    crc_rejected: int = 0
    crc_passed: int = 0
    jam_events: int = 0


class Radio:
    def __init__(self, node_id: int, config: RadioConfig, network: Network, phy_rng: RngStream):
        self.node_id = node_id
        self.config = config
        self.network = network
        self.phy_rng = phy_rng
        self.mac: MacBase | None = None


class Medium:
    def __init__(
        self,
        params: ChannelParams,
        log: EventLog,
        rngs: RngRegistry,
        position_of: Callable[[int], Position],
        mac_mode: MacMode = MacMode.CSMA,
        lossless: bool = False,
    ):
        self.params = params
        self.log = log
        self.rngs = rngs
        self.position_of = position_of
        self.mac_mode = MacMode(mac_mode)
        self.lossless = lossless
        self.radios: dict[int, Radio] = {}
        self.jammers: list[Jammer] = []
        self.now_us = 0
        self._events: list = []
        self._seq = itertools.count()
        self._tx_ids = itertools.count(1)
        self.active: list[Transmission] = []
        self.stats = MediumStats()
        self.tdma_order: list[int] = []
        self.tx_observers: list[Callable[[Transmission], None]] = []

    # -- wiring -----------------------------------------------------------
    def add_radio(self, node_id: int, config: RadioConfig, network: Network) -> Radio:
        radio = Radio(node_id, config, network, self.rngs.rng_for(node_id, "phy"))
        self.radios[node_id] = radio
        mac_cls = {MacMode.CSMA: CsmaMac, MacMode.TDMA: TdmaMac, MacMode.ALOHA: AlohaMac}[self.mac_mode]
        radio.mac = mac_cls(self, radio, self.rngs.rng_for(node_id, "mac"))
        network.queue_listeners.append(radio.mac.kick)
        if self.mac_mode is MacMode.TDMA:
            self.tdma_order = sorted(self.radios)
        return radio

    def add_jammer(self, jammer: Jammer) -> None:
        self.jammers.append(jammer)

    def attach(self, scheduler: Scheduler) -> None:
        scheduler.every(1, MEDIUM_OWNER, lambda: self.pass_task(scheduler.now), start=scheduler.now)

    # -- event loop -------------------------------------------------------
    def time_s(self) -> float:
        return self.now_us / 1e6

    def schedule(self, t_us: int, node: int, fn: Callable[[], None]) -> None:
        if t_us < self.now_us:
            t_us = self.now_us
        heapq.heappush(self._events, (t_us, node, next(self._seq), fn))

    def run_until(self, end_us: int) -> None:
        events = self._events
        while events and events[0][0] < end_us:
            t_us, _, _, fn = heapq.heappop(events)
            self.now_us = t_us
            fn()
        self.now_us = end_us

    def pass_task(self, tick: int) -> None:
        self.run_until((tick + 1) * TICK_US)

    # -- carrier sense ----------------------------------------------------
    def _prune(self) -> None:
        # keep anything that could still overlap a frame whose end is not yet processed
        horizon = min([tx.start_us for tx in self.active if tx.end_us >= self.now_us] + [self.now_us])
        self.active = [tx for tx in self.active if tx.end_us + DIFS_US > horizon]

    def received_power(self, power: float, src: Position, node: int) -> float:
        radio = self.radios[node]
        d = distance3(src, self.position_of(node))
        return power - self.params.path_loss(d) + radio.config.rx_gain

    def detectable(self, rssi: float, node: int) -> bool:
        return rssi - self.radios[node].config.noise_floor >= self.params.sensitivity_snr

    def sensed_busy_until(self, node: int, t_us: int) -> int | None:
        """When the channel next looks idle to ``node``, or None if it is idle at ``t_us``.

        A frame keeps the channel busy until DIFS after its end; the node's own
        last frame counts too, so back-to-back senders and simultaneous relays
        go through backoff instead of colliding.
        """
        radio = self.radios[node]
        busy = None
        for tx in self.active:
            until = tx.end_us + DIFS_US
            if not (tx.start_us < t_us < until):
                continue
            if tx.node != node:
                if not co_channel(tx.frequency, radio.config.carrier_frequency):
                    continue
                if not self.detectable(self.received_power(tx.power, tx.position, node), node):
                    continue
            busy = until if busy is None else max(busy, until)
        return busy

    # -- transmission -----------------------------------------------------
    def start_tx(self, radio: Radio, raw: bytes, packet: Packet | None) -> Transmission:
        cfg = radio.config
        start = self.now_us
        tx = Transmission(
            tx_id=next(self._tx_ids),
            node=radio.node_id,
            start_us=start,
            end_us=start + cfg.airtime_us(len(raw)),
            raw=raw,
            power=cfg.tx_power,
            frequency=cfg.carrier_frequency,
            position=self.position_of(radio.node_id),
            packet=packet,
        )
        self._prune()
        for other in self.active:
            if other.overlaps(tx.start_us, tx.end_us) and co_channel(other.frequency, tx.frequency):
                if not other.overlapped:
                    other.overlapped = True
                    self.stats.frames_overlapped += 1
                if not tx.overlapped:
                    tx.overlapped = True
                    self.stats.frames_overlapped += 1
        self.active.append(tx)
        self.stats.frames_sent += 1
        if packet is not None:
            self.log.record(
                self.time_s(), radio.node_id, Category.PACKET, ev="tx", **packet.log_fields(),
                frame_bytes=len(raw), airtime=(tx.end_us - tx.start_us) / 1e6,
            )
        for obs in self.tx_observers:
            obs(tx)
        self.schedule(tx.end_us, radio.node_id, lambda: self.finish_tx(tx))
        return tx

    def jam_mw_at(self, node: int, tx: Transmission, concurrent: list[Transmission]) -> float:
        radio = self.radios[node]
        total = 0.0
        for j in self.jammers:
            if not co_channel(j.frequency, radio.config.carrier_frequency):
                continue
            if j.behavior is JammerBehavior.PASSIVE:
                on = j.passive_on_during(tx.start_us, tx.end_us)
            else:
                on = any(self._jammer_senses(j, c) for c in [tx, *concurrent])
            if on:
                total += dbm_to_mw(self.received_power(j.power, j.position, node))
        return total

    def _jammer_senses(self, j: Jammer, tx: Transmission) -> bool:
        if not co_channel(j.frequency, tx.frequency):
            return False
        if j.stop_us is not None and tx.start_us >= j.stop_us:
            return False
        if tx.end_us <= j.start_us:
            return False
        level = tx.power - self.params.path_loss(distance3(tx.position, j.position))
        return level >= j.sense_threshold

    def receive_decision(self, tx: Transmission, rx: int, concurrent: list[Transmission]) -> Reception:
        radio = self.radios[rx]
        rssi = self.received_power(tx.power, tx.position, rx)
        if any(c.node == rx for c in concurrent):
            return Reception(rssi, rssi - radio.config.noise_floor, Outcome.CRC_FAIL, "half_duplex", 1.0)
        interferers = [
            self.received_power(c.power, c.position, rx)
            for c in concurrent
            if c.node != tx.node and co_channel(c.frequency, radio.config.carrier_frequency)
        ]
        jam = self.jam_mw_at(rx, tx, concurrent)
        return decide_reception(
            rssi, radio.config.noise_floor, interferers, jam, self.params, radio.phy_rng.random, self.lossless
        )

    def finish_tx(self, tx: Transmission) -> None:
        concurrent = [c for c in self.active if c is not tx and c.overlaps(tx.start_us, tx.end_us)]
        for j in self.jammers:
            if j.behavior is JammerBehavior.ADAPTIVE and self._jammer_senses(j, tx):
                self.stats.jam_events += 1
                j.active_us += tx.end_us - tx.start_us
        for rx in sorted(self.radios):
            if rx == tx.node:
                continue
            radio = self.radios[rx]
            if not co_channel(tx.frequency, radio.config.carrier_frequency):
                continue
            rec = self.receive_decision(tx, rx, concurrent)
            self.stats.outcomes[rec.outcome.value] += 1
            if rec.outcome is Outcome.BELOW_SENSITIVITY:
                continue
            raw = tx.raw
            if rec.outcome is Outcome.CRC_FAIL:
                raw = _corrupt(raw, radio.phy_rng)
            attrs = dict(
                ev="rx", sender=tx.node, rssi=rec.rssi, snr=rec.snr, frequency=radio.config.carrier_frequency,
                gain=radio.config.rx_gain, outcome=rec.outcome.value,
            )
            if rec.reason:
                attrs["reason"] = rec.reason
            if tx.packet is not None:
                attrs.update(source=tx.packet.source_id, packet_id=tx.packet.packet_id)
            self.log.record(self.time_s(), rx, Category.RADIO, **attrs)
            if not crc_ok(raw):
                self.stats.crc_rejected += 1
                continue
            self.stats.crc_passed += 1
            frame = decode_frame(raw)
            radio.network.on_pdu_from_mac(frame.body)


def _corrupt(raw: bytes, rng: RngStream) -> bytes:
    """Errored or collided frames reach the deframer with damaged bits."""
    buf = bytearray(raw)
    idx = rng.integers(0, len(buf))
    buf[idx] ^= 1 << rng.integers(0, 8)
    return bytes(buf)


class MacBase:
    """Pulls PDUs from the network, frames them and hands them to the medium."""

    def __init__(self, medium: Medium, radio: Radio, rng: RngStream):
        self.medium = medium
        self.radio = radio
        self.rng = rng
        self.node_id = radio.node_id
        self.busy = False
        self.seq = 0
        self.current: tuple[Packet, bytes] | None = None
        self.retries = 0
        self.cw = CW_MIN
        self.sent = 0
        self.dropped = 0

    def kick(self) -> None:
        if not self.busy:
            self._next()

    def _next(self) -> None:
        packet = self.radio.network.next_pdu()
        if packet is None:
            self.busy = False
            self.current = None
            return
        self.busy = True
        raw = MacFrame(self.node_id, packet.receiver_id, self.seq, packet.encode()).encode()
        self.seq = (self.seq + 1) & 0xFFFF
        self.current = (packet, raw)
        self.retries = 0
        self.cw = CW_MIN
        self.medium.schedule(self.medium.now_us, self.node_id, self._attempt)

    def _attempt(self) -> None:
        raise NotImplementedError

    def _transmit(self) -> None:
        packet, raw = self.current
        tx = self.medium.start_tx(self.radio, raw, packet)
        self.sent += 1
        self.medium.schedule(tx.end_us, self.node_id, self._after_tx)

    def _after_tx(self) -> None:
        self.busy = False
        self._next()

    def _drop(self, reason: str) -> None:
        packet, _ = self.current
        self.dropped += 1
        self.medium.stats.mac_drops += 1
        self.medium.log.record(
            self.medium.time_s(), self.node_id, Category.PACKET, ev="drop", **packet.log_fields(), reason=reason
        )
        self.busy = False
        self._next()


class AlohaMac(MacBase):
    """No carrier sense: transmit as soon as a frame is ready."""

    def _attempt(self) -> None:
        self._transmit()


class CsmaMac(MacBase):
    def _attempt(self) -> None:
        busy_until = self.medium.sensed_busy_until(self.node_id, self.medium.now_us)
        if busy_until is None:
            self._transmit()
            return
        self.retries += 1
        if self.retries > RETRY_LIMIT:
            self._drop("retry_limit")
            return
        backoff = self.rng.integers(0, self.cw)
        self.cw = min(self.cw * 2, CW_MAX)
        self.medium.schedule(busy_until + backoff * SLOT_US, self.node_id, self._attempt)


class TdmaMac(MacBase):
    def _slot_bounds(self, t_us: int) -> tuple[int, int] | None:
        """Owned slot containing t_us, else None."""
        order = self.medium.tdma_order
        n = len(order)
        rank = order.index(self.node_id)
        idx = t_us // TDMA_SLOT_US
        if idx % n == rank:
            return idx * TDMA_SLOT_US, (idx + 1) * TDMA_SLOT_US
        return None

    def _next_owned_start(self, t_us: int) -> int:
        order = self.medium.tdma_order
        n = len(order)
        rank = order.index(self.node_id)
        idx = t_us // TDMA_SLOT_US + 1
        idx += (rank - idx) % n
        return idx * TDMA_SLOT_US

    def _attempt(self) -> None:
        _, raw = self.current
        airtime = self.radio.config.airtime_us(len(raw))
        if airtime > TDMA_SLOT_US:
            self._drop("slot_overflow")
            return
        now = self.medium.now_us
        bounds = self._slot_bounds(now)
        if bounds is not None and now + airtime <= bounds[1]:
            self._transmit()
            return
        self.medium.schedule(self._next_owned_start(now), self.node_id, self._attempt)
