"""Mission application driven by the periodic mission tracker.

The tracker returns immediately while the vehicle reports disarmed and
otherwise hands control to the node's behaviour: the reference
takeoff-loiter-land mission, an ordered waypoint plan, or a data ferry.
"""

from __future__ import annotations

import enum
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

from .acu import ACU, UnknownVehicleError, VehicleProxy
from .autopilot import ACCEPTANCE_RADIUS, FlightMode, VehicleState
from .geo import GeoPoint, horizontal_distance
from .links import LinkDownError
from .logger import Category, EventLog
from .mavlink import MavCmd, ModeFlag
from .network import BROADCAST, MTU, PRIORITY_CONTROL, PRIORITY_DATA, Network, Packet
from .simcore import Scheduler, seconds_to_ticks, ticks_to_seconds

logger = logging.getLogger(__name__)

LOITER_TIME_S = 20.0
STATUS_MSG_BYTES = 32


class TrackRate(enum.IntEnum):
    """Tracker period in ticks."""

    CRITICAL = 1
    NORMAL = 10
    RELAXED = 100


class Stage(str, enum.Enum):
    START = "STAGE_START"
    LOITER = "STAGE_LOITER"
    STOP = "STAGE_STOP"


@dataclass(frozen=True)
class PlanTask:
    target: GeoPoint
    deadline: float
    loiter_seconds: float = 0.0
    info_payload_size: int = 0
    report_to: int | None = None


@dataclass
class MissionPlan:
    tasks: list[PlanTask] = field(default_factory=list)

    def __post_init__(self):
        deadlines = [t.deadline for t in self.tasks]
        if any(b < a for a, b in zip(deadlines, deadlines[1:])):
            raise ValueError("task deadlines must be non-decreasing")


class Agent:
    def __init__(
        self,
        node_id: int,
        scheduler: Scheduler,
        log: EventLog,
        acu: ACU,
        network: Network,
        vehicle: Callable[[], VehicleState],
        behavior: Behavior | None = None,
        track_period: int = TrackRate.CRITICAL,
    ):
        if track_period < 1:
            raise ValueError("track period must be at least one tick")
        self.node_id = node_id
        self.scheduler = scheduler
        self.log = log
        self.acu = acu
        self.net = network
        self.vehicle = vehicle
        self.behavior = behavior
        self.track_period = int(track_period)
        self.uav: VehicleProxy | None = None
        self.tracker_calls = 0
        self.stage_actions = 0
        self.completed = False
        acu.proxy_listeners.append(self.handle_active_uav)
        acu.timeout_listeners.append(self.handle_heartbeat_timeout)
        if behavior is not None:
            behavior.bind(self)

    @property
    def now(self) -> int:
        return self.scheduler.now

    @property
    def t(self) -> float:
        return ticks_to_seconds(self.scheduler.now)

    def start(self) -> None:
        self.scheduler.every(self.track_period, self.node_id, self.mission_tracker, start=self.scheduler.now)
        if self.behavior is not None:
            self.behavior.on_start()

    def handle_active_uav(self, proxy: VehicleProxy) -> None:
        if self.uav is not None:
            return
        self.uav = proxy
        self.log.record(self.t, self.node_id, Category.MISSION, ev="active_uav", sysid=proxy.system_id)
        if self.behavior is not None and self.behavior.wants_flight:
            self.execute(MavCmd.DO_SET_MODE, float(ModeFlag.ARMED | ModeFlag.AUTONOMOUS))

    def handle_heartbeat_timeout(self, timed_out: bool, sysid: int) -> None:
        self.log.record(self.t, self.node_id, Category.MISSION, ev="heartbeat_timeout" if timed_out else "heartbeat_restored", sysid=sysid)

    def execute(self, cmd: int, p1=0.0, p2=0.0, p3=0.0, p4=0.0, p5=0.0, p6=0.0, p7=0.0) -> bool:
        if self.uav is None:
            return False
        try:
            self.acu.execute_command(cmd, self.uav.system_id, 0, p1, p2, p3, p4, p5, p6, p7)
        except (LinkDownError, UnknownVehicleError) as exc:
            self.log.record(self.t, self.node_id, Category.ERROR, ev="command_failed", command=int(cmd), note=str(exc))
            return False
        return True

    def mission_tracker(self) -> None:
        self.tracker_calls += 1
        if self.behavior is not None:
            self.behavior.observe()
        if self.uav is None or not self.uav.is_armed():
            return
        if self.behavior is not None:
            self.behavior.track()

    def action(self, name: str, **attrs) -> None:
        self.stage_actions += 1
        self.log.record(self.t, self.node_id, Category.MISSION, ev="action", action=name, **attrs)

    def mission_complete(self, **attrs) -> None:
        if self.completed:
            return
        self.completed = True
        self.log.record(self.t, self.node_id, Category.MISSION, ev="mission_complete", **attrs)


class Behavior:
    wants_flight = True

    def bind(self, agent: Agent) -> None:
        self.agent = agent

    def on_start(self) -> None:
        pass

    def observe(self) -> None:
        """Runs every tracker call, armed or not; must not command the vehicle."""

    def track(self) -> None:
        raise NotImplementedError


class ReferenceMission(Behavior):
    """Takeoff, loiter for LOITER_TIME, land, tell the peers."""

    def __init__(self, takeoff_altitude: float = 10.0, loiter_time: float = LOITER_TIME_S):
        self.takeoff_altitude = takeoff_altitude
        self.loiter_ticks = seconds_to_ticks(loiter_time)
        self.stage = Stage.START
        self.loiter_timer: int | None = None
        self.takeoff_sent = False
        self.trace: list[tuple[str, float]] = []

    def on_start(self) -> None:
        self._enter(Stage.START)

    def _enter(self, stage: Stage) -> None:
        self.stage = stage
        self.trace.append((stage.value, self.agent.t))
        self.agent.log.record(self.agent.t, self.agent.node_id, Category.MISSION, ev="stage", stage=stage.value)

    def observe(self) -> None:
        if self.stage is Stage.STOP and self.agent.vehicle().mode is FlightMode.DISARMED:
            self.agent.mission_complete(mission="reference")

    def track(self) -> None:
        if self.stage is Stage.START:
            self.stage_start()
        elif self.stage is Stage.LOITER:
            self.stage_loiter()
        elif self.stage is Stage.STOP:
            self.stage_stop()

    def stage_start(self) -> None:
        v = self.agent.vehicle()
        if not self.takeoff_sent:
            if self.agent.execute(MavCmd.NAV_TAKEOFF, p7=self.takeoff_altitude):
                self.takeoff_sent = True
                self.agent.action("takeoff", altitude=self.takeoff_altitude)
            return
        if v.holding and abs(v.position.altitude - self.takeoff_altitude) < 1e-3:
            self.loiter_timer = self.agent.now
            self.agent.action("loiter_start")
            self._enter(Stage.LOITER)

    def stage_loiter(self) -> None:
        if self.agent.now - self.loiter_timer > self.loiter_ticks:
            self.agent.execute(MavCmd.NAV_LAND, 0, 0, 0, 0, 0, 0, 0)
            self.agent.net.send_data(BROADCAST, bytes(STATUS_MSG_BYTES), priority=PRIORITY_CONTROL)
            self.agent.action("land", loitered=ticks_to_seconds(self.agent.now - self.loiter_timer))
            self._enter(Stage.STOP)

    def stage_stop(self) -> None:
        pass


class PlanMission(Behavior):
    """Visit the plan's targets in order, loiter and report at each."""

    def __init__(self, plan: MissionPlan, altitude: float = 10.0, on_complete: str = "land"):
        self.plan = plan
        self.altitude = altitude
        self.on_complete = on_complete
        self.phase = "start"
        self.index = 0
        self.plan_start: int | None = None
        self.takeoff_sent = False
        self.completions: list[dict] = []
        self.visited: list[int] = []

    @property
    def wants_flight(self) -> bool:
        return bool(self.plan.tasks)

    def on_start(self) -> None:
        if not self.plan.tasks:
            self.agent.mission_complete(mission="plan", tasks=0)

    def observe(self) -> None:
        v = self.agent.vehicle()
        if self.phase == "done" and v.mode is FlightMode.DISARMED:
            self.agent.mission_complete(mission="plan", tasks=len(self.completions))
        if self.phase not in ("done", "aborted") and v.endurance_exhausted:
            self.phase = "aborted"
            self.agent.log.record(
                self.agent.t, self.agent.node_id, Category.MISSION, ev="plan_aborted",
                reason="endurance", task=self.index, completed=len(self.completions),
            )

    def _goto(self, task: PlanTask) -> None:
        tgt = task.target
        self.agent.execute(MavCmd.NAV_WAYPOINT, 0, 0, 0, 0, tgt.latitude, tgt.longitude, tgt.altitude)
        self.agent.action("waypoint", task=self.index)

    def track(self) -> None:
        v = self.agent.vehicle()
        if self.phase == "start":
            if not self.takeoff_sent:
                if self.agent.execute(MavCmd.NAV_TAKEOFF, p7=self.altitude):
                    self.takeoff_sent = True
                    self.agent.action("takeoff", altitude=self.altitude)
            elif v.holding:
                self.plan_start = self.agent.now
                self.agent.log.record(self.agent.t, self.agent.node_id, Category.MISSION, ev="plan_start", tasks=len(self.plan.tasks))
                self.phase = "goto"
                self._goto(self.plan.tasks[0])
            return
        if self.phase == "goto":
            task = self.plan.tasks[self.index]
            if v.holding and horizontal_distance(v.position, task.target) <= ACCEPTANCE_RADIUS:
                if task.loiter_seconds > 0:
                    tgt = task.target
                    self.agent.execute(
                        MavCmd.NAV_LOITER_TIME, task.loiter_seconds, 0, ACCEPTANCE_RADIUS, 0,
                        tgt.latitude, tgt.longitude, tgt.altitude,
                    )
                    self.agent.action("loiter", task=self.index, seconds=task.loiter_seconds)
                    self.phase = "loiter"
                else:
                    self._complete_task(task)
            return
        if self.phase == "loiter":
            task = self.plan.tasks[self.index]
            if v.mode is FlightMode.LOITER and v.holding:
                self._complete_task(task)
            return

    def _complete_task(self, task: PlanTask) -> None:
        elapsed = ticks_to_seconds(self.agent.now - self.plan_start)
        met = elapsed <= task.deadline + 1e-9
        if task.info_payload_size > 0 and task.report_to is not None:
            self._report(task)
        self.visited.append(self.index)
        record = dict(task=self.index, elapsed=elapsed, deadline=task.deadline, met=met)
        self.completions.append(record)
        self.agent.log.record(self.agent.t, self.agent.node_id, Category.MISSION, ev="task_complete", **record)
        self.index += 1
        if self.index < len(self.plan.tasks):
            self.phase = "goto"
            self._goto(self.plan.tasks[self.index])
            return
        self.phase = "done"
        if self.on_complete == "rtl":
            self.agent.execute(MavCmd.NAV_RETURN_TO_LAUNCH)
            self.agent.action("rtl")
        elif self.on_complete == "land":
            self.agent.execute(MavCmd.NAV_LAND)
            self.agent.action("land")
        else:
            self.agent.mission_complete(mission="plan", tasks=len(self.completions))

    def _report(self, task: PlanTask) -> None:
        remaining = task.info_payload_size
        while remaining > 0:
            chunk = min(remaining, MTU)
            self.agent.net.send_data(task.report_to, bytes(chunk), priority=PRIORITY_DATA)
            remaining -= chunk


class FerryMission(Behavior):
    """Shuttle between two regions carrying packets across the partition."""

    def __init__(
        self,
        region_a: GeoPoint,
        region_b: GeoPoint,
        region_of: dict[int, str],
        altitude: float = 10.0,
        radius: float = 30.0,
        legs: int | None = None,
    ):
        self.regions = {"a": region_a, "b": region_b}
        self.region_of = dict(region_of)
        self.altitude = altitude
        self.radius = radius
        self.legs = legs
        self.phase = "start"
        self.heading_to = "a"
        self.legs_done = 0
        self.takeoff_sent = False
        self.custody: OrderedDict[tuple[int, int], Packet] = OrderedDict()
        self.taken = 0
        self.released = 0

    def bind(self, agent: Agent) -> None:
        super().bind(agent)
        agent.net.custody_hook = self.take_custody

    @property
    def held(self) -> int:
        return len(self.custody)

    def conserved(self) -> bool:
        return self.taken == self.released + self.held

    def near(self) -> str | None:
        pos = self.agent.vehicle().position
        for name, centre in self.regions.items():
            if horizontal_distance(pos, centre) <= self.radius:
                return name
        return None

    def take_custody(self, packet: Packet) -> bool:
        dest_region = self.region_of.get(packet.destination_id)
        if dest_region is None:
            return False
        here = self.near()
        if here == dest_region:
            return False
        if packet.key in self.custody:
            return True
        self.custody[packet.key] = packet
        self.taken += 1
        self.agent.log.record(
            self.agent.net.now(), self.agent.node_id, Category.MISSION, ev="custody_take",
            source=packet.source_id, packet_id=packet.packet_id, destination=packet.destination_id,
            held=self.held, region=here or "transit",
        )
        return True

    def release(self, region: str) -> int:
        count = 0
        for key in list(self.custody):
            packet = self.custody[key]
            if self.region_of.get(packet.destination_id) == region:
                del self.custody[key]
                self.released += 1
                count += 1
                self.agent.net.reinject(packet)
                self.agent.log.record(
                    self.agent.t, self.agent.node_id, Category.MISSION, ev="custody_release",
                    source=packet.source_id, packet_id=packet.packet_id, destination=packet.destination_id,
                    held=self.held, region=region,
                )
        return count

    def _fly_to(self, region: str) -> None:
        tgt = self.regions[region]
        self.heading_to = region
        self.agent.execute(MavCmd.NAV_WAYPOINT, 0, 0, 0, 0, tgt.latitude, tgt.longitude, self.altitude)
        self.agent.action("ferry_leg", to=region)

    def track(self) -> None:
        v = self.agent.vehicle()
        here = self.near()
        if here is not None and self.custody:
            self.release(here)
        if self.phase == "start":
            if not self.takeoff_sent:
                if self.agent.execute(MavCmd.NAV_TAKEOFF, p7=self.altitude):
                    self.takeoff_sent = True
                    self.agent.action("takeoff", altitude=self.altitude)
            elif v.holding:
                self.phase = "shuttle"
                self._fly_to("a")
            return
        if self.phase == "shuttle" and v.holding and horizontal_distance(v.position, self.regions[self.heading_to]) <= ACCEPTANCE_RADIUS:
            self.legs_done += 1
            if self.legs is not None and self.legs_done >= self.legs:
                self.phase = "done"
                self.agent.execute(MavCmd.NAV_LAND)
                self.agent.action("land")
                return
            self._fly_to("b" if self.heading_to == "a" else "a")


class IdleBehavior(Behavior):
    wants_flight = False

    def track(self) -> None:
        pass
