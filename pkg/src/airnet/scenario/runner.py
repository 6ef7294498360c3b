"""Builds every module for one scenario and drives the run to completion."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..acu import ACU
from ..agent import (
    Agent,
    Behavior,
    FerryMission,
    IdleBehavior,
    MissionPlan,
    PlanMission,
    PlanTask,
    ReferenceMission,
)
from ..autopilot import Autopilot, initial_state
from ..geo import GeoPoint, enu_offset, offset_point
from ..links import LinkConfig, LinkKind, LinkManager
from ..logger import Category, EventLog, LogHeader
from ..macphy.channel import ChannelParams, Jammer, JammerBehavior, RadioConfig
from ..macphy.medium import MacMode, Medium
from ..network import BROADCAST, Network
from ..simcore import TICK_US, RngRegistry, Scheduler, seconds_to_ticks
from .metrics import NODE_FINAL, RUN_END, MetricsReport, compute_metrics
from .schema import FerryPlan, FlowSpec, ReferencePlan, ScenarioSpec, TourPlan

logger = logging.getLogger(__name__)

US_PER_S = 1_000_000


class RunAborted(RuntimeError):
    def __init__(self, cause: BaseException, log: EventLog):
        self.cause = cause
        self.log = log
        super().__init__(f"run aborted: {cause.__class__.__name__}: {cause}")


@dataclass
class RunResult:
    report: MetricsReport
    log: EventLog
    seed: int


@dataclass
class NodeStack:
    node_id: int
    network: Network | None = None
    autopilot: Autopilot | None = None
    acu: ACU | None = None
    agent: Agent | None = None
    static_position: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class TrafficFlow:
    """One traffic source; arrivals are medium events at microsecond resolution."""

    spec: FlowSpec
    destination: int
    network: Network
    medium: Medium
    rng: object
    sent: int = 0
    stop_us: int | None = None

    def start(self, end_us: int) -> None:
        stop = end_us if self.spec.stop is None else min(end_us, round(self.spec.stop * US_PER_S))
        self.stop_us = stop
        self.medium.schedule(round(self.spec.start * US_PER_S), self.spec.source, self._fire)

    def _gap_us(self) -> int:
        if self.spec.arrival == "poisson":
            return max(1, round(self.rng.exponential(self.spec.period) * US_PER_S))
        return max(1, round(self.spec.period * US_PER_S))

    def _fire(self) -> None:
        if self.medium.now_us >= self.stop_us:
            return
        self.network.send_data(
            self.destination, bytes(self.spec.bytes), priority=self.spec.priority,
            deadline=self.spec.deadline, ttl=self.spec.ttl,
        )
        self.sent += 1
        self.medium.schedule(self.medium.now_us + self._gap_us(), self.spec.source, self._fire)


class Simulation:
    """A fully wired run. Build, optionally instrument, then :meth:`run`."""

    def __init__(self, spec: ScenarioSpec, seed: int | None = None):
        self.spec = spec
        self.seed = spec.seed if seed is None else int(seed)
        self.origin = GeoPoint(spec.origin.lat, spec.origin.lon, 0.0)
        self.end_tick = seconds_to_ticks(spec.duration)
        self.scheduler = Scheduler()
        self.rngs = RngRegistry(self.seed)
        self.log = EventLog(LogHeader(self.seed, spec.name, spec.network_nodes(), spec.duration))
        self.links = LinkManager(self.scheduler)
        self.stacks: dict[int, NodeStack] = {}
        self.flows: list[TrafficFlow] = []
        self.medium = Medium(
            ChannelParams(spec.channel.pl0, spec.channel.exponent, spec.channel.snr_threshold, spec.channel.slope, spec.channel.d0),
            self.log,
            self.rngs,
            self.position_of,
            MacMode(spec.mac),
            lossless=spec.channel.lossless,
        )
        self._started = False
        self._build()

    # -- geometry ---------------------------------------------------------
    def geo(self, east: float, north: float, up: float = 0.0) -> GeoPoint:
        return offset_point(self.origin, east, north, up)

    def position_of(self, node_id: int) -> tuple[float, float, float]:
        stack = self.stacks[node_id]
        if stack.autopilot is not None:
            return enu_offset(self.origin, stack.autopilot.state.position)
        return stack.static_position

    # -- wiring -----------------------------------------------------------
    def _build(self) -> None:
        spec = self.spec
        for n in sorted(spec.nodes, key=lambda n: n.id):
            stack = NodeStack(n.id, static_position=n.start.as_tuple())
            self.stacks[n.id] = stack
            if n.allegiance != "cooperative":
                continue
            stack.network = Network(n.id, self.log, self.medium.time_s)
            radio = RadioConfig(n.radio.tx_power, n.radio.frequency, n.radio.bitrate, n.radio.noise_floor, n.radio.rx_gain)
            self.medium.add_radio(n.id, radio, stack.network)
            if n.kind != "air":
                continue
            kind = LinkKind(n.link.kind)
            link_id = self.links.open_link(LinkConfig(kind, f"ttyACM{n.id}", n.link.baud_rate), owner=n.id)
            self.links.connect_link(link_id)
            start = self.geo(*n.start.as_tuple())
            stack.acu = ACU(n.id, self.scheduler, self.log, self.links, link_id)
            stack.autopilot = Autopilot(
                n.id, self.scheduler, self.log, self.links, link_id,
                initial_state(start, gps_lock=n.gps_lock, endurance_s=n.endurance),
            )
            autopilot = stack.autopilot
            stack.agent = Agent(
                n.id, self.scheduler, self.log, stack.acu, stack.network,
                lambda ap=autopilot: ap.state, self._behavior(n.id),
            )

        for j_idx, j in enumerate(spec.spectral.jammers):
            pos = j.position.as_tuple() if j.position is not None else self.stacks[j.node].static_position
            self.medium.add_jammer(
                Jammer(
                    jammer_id=j.node if j.node is not None else 1000 + j_idx,
                    position=pos,
                    power=j.power,
                    frequency=j.frequency,
                    behavior=JammerBehavior(j.behavior),
                    duty_cycle=j.duty_cycle,
                    period_us=round(j.period * US_PER_S),
                    start_us=round(j.start * US_PER_S),
                    stop_us=None if j.stop is None else round(j.stop * US_PER_S),
                    sense_threshold=j.sense_threshold,
                )
            )

        for f in spec.traffic:
            dest = f.destination
            if dest == "leader":
                dest = spec.leader
            elif dest == "broadcast":
                dest = BROADCAST
            flow_no = len(self.flows)
            self.flows.append(
                TrafficFlow(f, dest, self.stacks[f.source].network, self.medium, self.rngs.rng_for(f.source, f"flow{flow_no}"))
            )

        for fault in spec.faults.acu_heartbeat_halt:
            self.stacks[fault.node].acu.halt_heartbeats(seconds_to_ticks(fault.at))

    def _behavior(self, node_id: int) -> Behavior:
        plan = self.spec.plan_for(node_id)
        if isinstance(plan, ReferencePlan):
            return ReferenceMission(plan.altitude, plan.loiter_time)
        if isinstance(plan, TourPlan):
            leader = self.spec.leader
            tasks = [
                PlanTask(
                    target=self.geo(t.target.east, t.target.north, t.target.up or plan.altitude),
                    deadline=t.deadline,
                    loiter_seconds=t.loiter,
                    info_payload_size=t.info_bytes,
                    report_to=leader if t.report_to == "leader" else t.report_to,
                )
                for t in plan.tasks
            ]
            return PlanMission(MissionPlan(tasks), plan.altitude, plan.on_complete)
        if isinstance(plan, FerryPlan):
            region_of = {m: "a" for m in plan.group_a} | {m: "b" for m in plan.group_b}
            return FerryMission(
                self.geo(*plan.region_a.as_tuple()), self.geo(*plan.region_b.as_tuple()), region_of,
                plan.altitude, plan.radius, plan.legs,
            )
        return IdleBehavior()

    # -- accessors --------------------------------------------------------
    def agent(self, node_id: int) -> Agent:
        return self.stacks[node_id].agent

    def autopilot(self, node_id: int) -> Autopilot:
        return self.stacks[node_id].autopilot

    def network(self, node_id: int) -> Network:
        return self.stacks[node_id].network

    # -- execution --------------------------------------------------------
    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for node_id in sorted(self.stacks):
            stack = self.stacks[node_id]
            if stack.autopilot is not None:
                stack.autopilot.start()
                stack.acu.start()
                stack.agent.start()
        self.medium.attach(self.scheduler)
        end_us = self.end_tick * TICK_US
        for flow in self.flows:
            flow.start(end_us)

    def run(self) -> RunResult:
        """Execute the whole duration and compute the report from the log."""
        self.start()
        try:
            # the medium pass of the last tick closes the window at exactly `duration`
            self.scheduler.run(self.end_tick - 1)
        except Exception as exc:
            t = max(self.medium.time_s(), self.scheduler.now / 100.0)
            self.log.record(t, 0, Category.ERROR, ev="run_aborted", cause=f"{exc.__class__.__name__}: {exc}")
            raise RunAborted(exc, self.log) from exc
        self._finish()
        header = self.log.header
        return RunResult(compute_metrics(header, self.log.events), self.log, self.seed)

    def _finish(self) -> None:
        t_end = self.spec.duration
        for node_id in self.spec.network_nodes():
            stack = self.stacks[node_id]
            attrs: dict = dict(ev=NODE_FINAL)
            if stack.network is not None:
                attrs.update(queued=stack.network.queued(), duplicates=stack.network.duplicates)
            if stack.autopilot is not None:
                s = stack.autopilot.state
                attrs.update(
                    odometer=s.odometer, mode=s.mode.value, lat=s.position.latitude,
                    lon=s.position.longitude, alt=s.position.altitude,
                )
            behavior = stack.agent.behavior if stack.agent is not None else None
            if isinstance(behavior, FerryMission):
                attrs.update(taken=behavior.taken, released=behavior.released, held=behavior.held)
            self.log.record(t_end, node_id, Category.MISSION, **attrs)
        s = self.medium.stats
        self.log.record(
            t_end, 0, Category.MISSION, ev=RUN_END, frames_sent=s.frames_sent,
            frames_overlapped=s.frames_overlapped, mac_drops=s.mac_drops,
        )


def run(spec: ScenarioSpec, seed: int | None = None) -> RunResult:
    return Simulation(spec, seed).run()
