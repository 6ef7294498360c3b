"""Benchmark scenario documents: strict pydantic schema plus cross-field checks.

Positions are local east/north/up offsets in metres from the scenario origin;
every altitude is height above the launch field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..autopilot import DEFAULT_ENDURANCE_S
from ..macphy.channel import MAX_FREQ_HZ, MIN_FREQ_HZ
from ..network import MTU

SCHEMA_VERSION = 1

NodeId = Annotated[int, Field(ge=1, le=254)]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Origin(Strict):
    lat: float = Field(ge=-90, le=90)
    lon: float = Field(ge=-180, le=180)


class Enu(Strict):
    east: float = 0.0
    north: float = 0.0
    up: float = 0.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.east, self.north, self.up)


class RadioSpec(Strict):
    tx_power: float = 10.0
    frequency: float = Field(default=2.4e9, ge=MIN_FREQ_HZ, le=MAX_FREQ_HZ)
    bitrate: float = Field(default=250_000.0, gt=0)
    noise_floor: float = -95.0
    rx_gain: float = 0.0


class LinkSpec(Strict):
    kind: Literal["serial", "inproc"] = "serial"
    baud_rate: int = Field(default=115_200, gt=0)


class NodeSpec(Strict):
    id: NodeId
    kind: Literal["air", "ground"]
    allegiance: Literal["cooperative", "noncooperative"] = "cooperative"
    role: Literal["leader", "follower", "ferry"] = "follower"
    start: Enu = Enu()
    radio: RadioSpec = RadioSpec()
    endurance: float = Field(default=DEFAULT_ENDURANCE_S, gt=0)
    gps_lock: bool = True
    link: LinkSpec = LinkSpec()


class TaskSpec(Strict):
    target: Enu
    deadline: float = Field(ge=0)
    loiter: float = Field(default=0.0, ge=0)
    info_bytes: int = Field(default=0, ge=0)
    report_to: NodeId | Literal["leader"] | None = None


class ReferencePlan(Strict):
    node: NodeId
    mission: Literal["reference"]
    altitude: float = Field(default=10.0, gt=0)
    loiter_time: float = Field(default=20.0, ge=0)


class TourPlan(Strict):
    node: NodeId
    mission: Literal["tour"]
    altitude: float = Field(default=10.0, gt=0)
    tasks: list[TaskSpec] = []
    on_complete: Literal["land", "rtl", "hold"] = "land"

    @field_validator("tasks")
    @classmethod
    def _ordered(cls, tasks: list[TaskSpec]) -> list[TaskSpec]:
        deadlines = [t.deadline for t in tasks]
        if any(b < a for a, b in zip(deadlines, deadlines[1:])):
            raise ValueError("task deadlines must be non-decreasing")
        return tasks


class FerryPlan(Strict):
    node: NodeId
    mission: Literal["ferry"]
    altitude: float = Field(default=10.0, gt=0)
    region_a: Enu
    region_b: Enu
    group_a: list[NodeId]
    group_b: list[NodeId]
    radius: float = Field(default=30.0, gt=0)
    legs: int | None = Field(default=None, ge=1)


class IdlePlan(Strict):
    node: NodeId
    mission: Literal["none"]


PlanSpec = Annotated[Union[ReferencePlan, TourPlan, FerryPlan, IdlePlan], Field(discriminator="mission")]


class FlowSpec(Strict):
    source: NodeId
    destination: NodeId | Literal["leader", "broadcast"]
    bytes: int = Field(gt=0, le=MTU)
    period: float = Field(gt=0)
    priority: int = Field(default=1, ge=0, le=7)
    deadline: float | None = Field(default=None, gt=0)
    arrival: Literal["periodic", "poisson"] = "periodic"
    start: float = Field(default=0.0, ge=0)
    stop: float | None = Field(default=None, gt=0)
    ttl: int | None = Field(default=None, ge=1, le=255)


class JammerSpec(Strict):
    position: Enu | None = None
    node: NodeId | None = None
    power: float
    frequency: float = Field(ge=MIN_FREQ_HZ, le=MAX_FREQ_HZ)
    behavior: Literal["passive", "adaptive"] = "passive"
    duty_cycle: float = Field(default=1.0, ge=0, le=1)
    period: float = Field(default=0.1, gt=0)
    start: float = Field(default=0.0, ge=0)
    stop: float | None = None
    sense_threshold: float = -90.0


class SpectralSpec(Strict):
    mode: Literal["open", "congested", "contested"] = "open"
    jammers: list[JammerSpec] = []


class ChannelSpec(Strict):
    pl0: float = 40.0
    exponent: float = Field(default=2.7, gt=0)
    snr_threshold: float = 5.0
    slope: float = Field(default=2.0, gt=0)
    d0: float = Field(default=1.0, gt=0)
    lossless: bool = False


class AcuHaltFault(Strict):
    node: NodeId
    at: float = Field(ge=0)


class FaultSpec(Strict):
    acu_heartbeat_halt: list[AcuHaltFault] = []


class ScenarioSpec(Strict):
    schema_version: Literal[1]
    name: str = Field(min_length=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    duration: float = Field(gt=0)
    origin: Origin
    mac: Literal["csma", "tdma", "aloha"] = "csma"
    channel: ChannelSpec = ChannelSpec()
    spectral: SpectralSpec = SpectralSpec()
    nodes: list[NodeSpec] = Field(min_length=1)
    plans: list[PlanSpec] = []
    traffic: list[FlowSpec] = []
    faults: FaultSpec = FaultSpec()

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def leader(self) -> int | None:
        for n in self.nodes:
            if n.role == "leader" and n.allegiance == "cooperative":
                return n.id
        return None

    def plan_for(self, node_id: int) -> PlanSpec | None:
        for p in self.plans:
            if p.node == node_id:
                return p
        return None

    def network_nodes(self) -> list[int]:
        return sorted(n.id for n in self.nodes if n.allegiance == "cooperative")


@dataclass(frozen=True)
class Issue:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


class ScenarioError(ValueError):
    """Every problem found in one scenario document."""

    def __init__(self, issues: list[Issue]):
        self.issues = issues
        super().__init__("; ".join(str(i) for i in issues))


def _loc(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def semantic_issues(spec: ScenarioSpec) -> list[Issue]:
    issues: list[Issue] = []
    seen: dict[int, int] = {}
    for i, n in enumerate(spec.nodes):
        if n.id in seen:
            issues.append(Issue(f"nodes[{i}].id", f"duplicate node id {n.id} (first at nodes[{seen[n.id]}])"))
        else:
            seen[n.id] = i
        if n.allegiance == "noncooperative" and n.role != "follower":
            issues.append(Issue(f"nodes[{i}].role", "noncooperative nodes cannot hold a cooperative role"))
    coop = {n.id for n in spec.nodes if n.allegiance == "cooperative"}
    air = {n.id for n in spec.nodes if n.kind == "air" and n.allegiance == "cooperative"}
    hostile = {n.id for n in spec.nodes if n.allegiance == "noncooperative"}
    leader = spec.leader

    for i, f in enumerate(spec.traffic):
        where = f"traffic[{i}]"
        if f.source not in coop:
            issues.append(Issue(f"{where}.source", f"unknown cooperative node {f.source}"))
        if f.destination == "leader":
            if leader is None:
                issues.append(Issue(f"{where}.destination", "flow names the leader but no node has role leader"))
        elif isinstance(f.destination, int):
            if f.destination not in coop:
                issues.append(Issue(f"{where}.destination", f"unknown cooperative node {f.destination}"))
            elif f.destination == f.source:
                issues.append(Issue(f"{where}.destination", "flow source and destination are the same node"))
        if f.stop is not None and f.stop <= f.start:
            issues.append(Issue(f"{where}.stop", "stop must be after start"))

    planned: dict[int, int] = {}
    for i, p in enumerate(spec.plans):
        where = f"plans[{i}]"
        if p.node in planned:
            issues.append(Issue(f"{where}.node", f"node {p.node} already has a plan (plans[{planned[p.node]}])"))
        planned.setdefault(p.node, i)
        if p.mission != "none" and p.node not in air:
            issues.append(Issue(f"{where}.node", f"node {p.node} is not a cooperative air node"))
        if isinstance(p, TourPlan):
            for k, task in enumerate(p.tasks):
                if task.report_to == "leader" and leader is None:
                    issues.append(Issue(f"{where}.tasks[{k}].report_to", "no node has role leader"))
                elif isinstance(task.report_to, int) and task.report_to not in coop:
                    issues.append(Issue(f"{where}.tasks[{k}].report_to", f"unknown cooperative node {task.report_to}"))
        if isinstance(p, FerryPlan):
            for group in ("group_a", "group_b"):
                for k, member in enumerate(getattr(p, group)):
                    if member not in coop or member == p.node:
                        issues.append(Issue(f"{where}.{group}[{k}]", f"invalid group member {member}"))
            overlap = sorted(set(p.group_a) & set(p.group_b))
            if overlap:
                issues.append(Issue(where, f"nodes {overlap} are in both groups"))

    mode = spec.spectral.mode
    jammers = spec.spectral.jammers
    if mode == "contested" and not jammers:
        issues.append(Issue("spectral.jammers", "contested mode requires at least one jammer"))
    if mode == "open" and jammers:
        issues.append(Issue("spectral.jammers", "open mode allows no jammers"))
    for i, j in enumerate(jammers):
        where = f"spectral.jammers[{i}]"
        if (j.position is None) == (j.node is None):
            issues.append(Issue(where, "give exactly one of position or node"))
        elif j.node is not None and j.node not in hostile:
            issues.append(Issue(f"{where}.node", f"node {j.node} is not a noncooperative node"))
        if j.stop is not None and j.stop <= j.start:
            issues.append(Issue(f"{where}.stop", "stop must be after start"))

    for i, fault in enumerate(spec.faults.acu_heartbeat_halt):
        if fault.node not in air:
            issues.append(Issue(f"faults.acu_heartbeat_halt[{i}].node", f"node {fault.node} has no ACU"))

    if not coop:
        issues.append(Issue("nodes", "at least one cooperative node is required"))
    return issues


def validate(data: dict) -> ScenarioSpec:
    """Validate a parsed document; raises ScenarioError with every issue found."""
    try:
        spec = ScenarioSpec.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError([Issue(_loc(e["loc"]), e["msg"]) for e in exc.errors()]) from None
    issues = semantic_issues(spec)
    if issues:
        raise ScenarioError(issues)
    return spec


def loads(text: str) -> ScenarioSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([Issue(f"line {exc.lineno}", f"invalid JSON: {exc.msg}")]) from None
    if not isinstance(data, dict):
        raise ScenarioError([Issue("<root>", "scenario must be a JSON object")])
    return validate(data)


def load(path: str | Path) -> ScenarioSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([Issue(str(path), f"cannot read file: {exc.strerror}")]) from None
    return loads(text)
