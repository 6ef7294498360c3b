"""Autopilot Control Unit: vehicle proxies, outbound heartbeat, command dispatch."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from . import mavlink as mav
from .links import LinkDownError, LinkManager
from .logger import Category, EventLog
from .simcore import TICKS_PER_SECOND, Scheduler, ticks_to_seconds

logger = logging.getLogger(__name__)

ACU_COMPID = 191
HEARTBEAT_TIMEOUT_TICKS = 3 * TICKS_PER_SECOND


class UnknownVehicleError(LookupError):
    pass


@dataclass
class VehicleProxy:
    system_id: int
    autopilot_type: int
    vehicle_type: int
    last_heartbeat: int
    mode: mav.ModeFlag
    link_id: int
    timed_out: bool = False

    @property
    def armed(self) -> bool:
        return bool(self.mode & mav.ModeFlag.ARMED)

    def is_armed(self) -> bool:
        return self.armed


class ACU:
    def __init__(self, node_id: int, scheduler: Scheduler, log: EventLog, links: LinkManager, link_id: int):
        self.node_id = node_id
        self.sysid = node_id
        self.scheduler = scheduler
        self.log = log
        self.links = links
        self.link_id = link_id
        self.parser = mav.MavParser()
        self.proxies: dict[int, VehicleProxy] = {}
        self.seq = 0
        self.heartbeats_sent = 0
        self.heartbeats_skipped = 0
        self.halt_after: int | None = None
        self.proxy_listeners: list[Callable[[VehicleProxy], None]] = []
        self.timeout_listeners: list[Callable[[bool, int], None]] = []
        links.endpoints(link_id)[0].on_receive = self.on_bytes

    @property
    def t(self) -> float:
        return ticks_to_seconds(self.scheduler.now)

    def start(self) -> None:
        now = self.scheduler.now
        self.scheduler.every(TICKS_PER_SECOND, self.node_id, self.acu_heartbeat_tick, start=now)
        self.scheduler.every(1, self.node_id, self.check_timeouts, start=now + 1)

    def halt_heartbeats(self, after_tick: int) -> None:
        """Stop emitting heartbeats once the clock passes ``after_tick``."""
        self.halt_after = after_tick

    def on_bytes(self, data: bytes) -> None:
        for frame in self.parser.feed(data):
            self.on_frame(frame)

    def on_frame(self, frame: mav.MavFrame) -> str | None:
        now = self.scheduler.now
        self.log.record(
            self.t, self.node_id, Category.MAVLINK, dir="rx", side="acu",
            msgid=frame.message_id, seq=frame.sequence, sysid=frame.system_id,
        )
        if frame.message_id == mav.MSG_HEARTBEAT:
            hb = mav.HeartbeatMsg.unpack(frame.payload)
            proxy = self.proxies.get(frame.system_id)
            if proxy is None:
                proxy = VehicleProxy(
                    system_id=frame.system_id,
                    autopilot_type=int(hb.autopilot_type),
                    vehicle_type=int(hb.vehicle_type),
                    last_heartbeat=now,
                    mode=hb.mode,
                    link_id=self.link_id,
                )
                self.proxies[frame.system_id] = proxy
                self.log.record(
                    self.t, self.node_id, Category.MAVLINK, ev="proxy_created",
                    sysid=frame.system_id, autopilot=int(hb.autopilot_type), vehicle=int(hb.vehicle_type),
                )
                for listener in self.proxy_listeners:
                    listener(proxy)
                return "created"
            proxy.last_heartbeat = now
            proxy.mode = hb.mode
            if proxy.timed_out:
                proxy.timed_out = False
                for listener in self.timeout_listeners:
                    listener(False, proxy.system_id)
            return "updated"
        if frame.message_id == mav.MSG_COMMAND:
            cmd = mav.CommandMsg.unpack(frame.payload)
            if cmd.target_system != self.sysid:
                self.log.record(self.t, self.node_id, Category.ERROR, ev="frame_dropped", reason="not_addressed", target=cmd.target_system)
                return None
            self.log.record(self.t, self.node_id, Category.ERROR, ev="frame_dropped", reason="command_to_acu", command=cmd.command_id)
            return None
        self.log.record(self.t, self.node_id, Category.ERROR, ev="frame_dropped", reason="unknown_msgid", msgid=frame.message_id)
        return None

    def proxy(self, system_id: int) -> VehicleProxy:
        try:
            return self.proxies[system_id]
        except KeyError:
            raise UnknownVehicleError(f"no heartbeat seen from system {system_id}") from None

    def execute_command(
        self,
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
    ) -> int:
        """Send one command to a registered vehicle; returns the delivery tick."""
        proxy = self.proxy(autopilot_id)
        if not self.links.is_connected(proxy.link_id):
            raise LinkDownError(f"link {proxy.link_id} is down")
        cmd = mav.map_execute_command(cmd_type, autopilot_id, component_id, p1, p2, p3, p4, p5, p6, p7)
        self.log.record(
            self.t, self.node_id, Category.MAVLINK, ev="command", command=int(cmd_type),
            autopilot=autopilot_id, component=component_id, params=[p1, p2, p3, p4, p5, p6, p7],
        )
        return self._send(cmd)

    def _send(self, msg: mav.Message) -> int:
        frame = mav.encode_frame(msg, self.seq, self.sysid, ACU_COMPID)
        self.log.record(self.t, self.node_id, Category.MAVLINK, dir="tx", side="acu", msgid=msg.msgid, seq=self.seq, sysid=self.sysid)
        self.seq = (self.seq + 1) & 0xFF
        return self.links.send_bytes(self.link_id, frame, side="a")

    def acu_heartbeat_tick(self) -> None:
        if self.halt_after is not None and self.scheduler.now > self.halt_after:
            return
        if not self.links.is_connected(self.link_id):
            self.heartbeats_skipped += 1
            return
        self._send(mav.HeartbeatMsg(mav.VehicleType.ONBOARD_CONTROLLER, mav.AutopilotType.INVALID, mav.ModeFlag.NONE, 1))
        self.heartbeats_sent += 1

    def check_heartbeat_timeout(self, proxy: VehicleProxy) -> bool:
        """Edge-triggered: True only on the tick the silence first exceeds the timeout."""
        if proxy.timed_out:
            return False
        if self.scheduler.now - proxy.last_heartbeat <= HEARTBEAT_TIMEOUT_TICKS:
            return False
        proxy.timed_out = True
        self.log.record(
            self.t, self.node_id, Category.MAVLINK, ev="heartbeat_timeout",
            sysid=proxy.system_id, last=ticks_to_seconds(proxy.last_heartbeat),
        )
        for listener in self.timeout_listeners:
            listener(True, proxy.system_id)
        return True

    def check_timeouts(self) -> None:
        for proxy in self.proxies.values():
            self.check_heartbeat_timeout(proxy)
