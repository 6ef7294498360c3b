"""Cyber and physical mission metrics, computed from an event log alone."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..logger import Category, EventRecord, LogHeader
from ..network import BROADCAST, HEADER_LEN

REPORT_DIGITS = 9
RUN_END = "run_end"
NODE_FINAL = "node_final"


class PartialLogError(ValueError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__("log is incomplete; missing terminators: " + ", ".join(missing))


@dataclass
class ClassMetrics:
    offered: int = 0
    delivered: int = 0
    lost: int = 0
    late: int = 0
    throughput_bps: float = 0.0
    mean_delay: float | None = None
    p95_delay: float | None = None
    loss_ratio: float = 0.0
    deadline_miss_ratio: float = 0.0


@dataclass
class MetricsReport:
    scenario: str = ""
    seed: int = 0
    duration: float = 0.0
    classes: dict[str, ClassMetrics] = field(default_factory=dict)
    tasks: dict[str, list[dict]] = field(default_factory=dict)
    mission_completion: dict[str, float] = field(default_factory=dict)
    mission_completion_time: float | None = None
    distance: dict[str, float] = field(default_factory=dict)
    track: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _rounded(asdict(self))

    def dumps(self) -> str:
        """Canonical text form; identical reports give identical bytes."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _rounded(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        value = round(value, REPORT_DIGITS)
        return 0.0 if value == 0 else value
    if isinstance(value, dict):
        return {str(k): _rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v) for v in value]
    return value


def missing_terminators(header: LogHeader | None, records: list[EventRecord]) -> list[str]:
    finals = {r.node for r in records if r.category == Category.MISSION.value and r.ev == NODE_FINAL}
    missing = []
    if header is not None:
        missing += [f"{NODE_FINAL}(node {n})" for n in header.nodes if n not in finals]
    if not any(r.ev == RUN_END for r in records):
        missing.append(RUN_END)
    return missing


def compute_metrics(header: LogHeader | None, records: list[EventRecord]) -> MetricsReport:
    """Pure function of the log; an empty log yields the zeroed report."""
    if header is None and not records:
        return MetricsReport()
    missing = missing_terminators(header, records)
    if missing:
        raise PartialLogError(missing)

    report = MetricsReport(scenario=header.scenario, seed=header.seed, duration=header.duration)
    population = list(header.nodes)

    sends: dict[tuple[int, int], EventRecord] = {}
    delays: dict[int, list[float]] = defaultdict(list)
    stats: dict[int, ClassMetrics] = {}
    bits: dict[int, int] = defaultdict(int)
    counted: set[tuple[int, int, int]] = set()

    for r in records:
        if r.category == Category.PACKET.value:
            a = r.attrs
            if r.ev == "send":
                key = (a["source"], a["packet_id"])
                sends[key] = r
                cls = stats.setdefault(a["priority"], ClassMetrics())
                if a["destination"] == BROADCAST:
                    cls.offered += sum(1 for n in population if n != a["source"])
                else:
                    cls.offered += 1
            elif r.ev == "deliver":
                key = (a["source"], a["packet_id"])
                sent = sends.get(key)
                if sent is None or (key[0], key[1], r.node) in counted:
                    continue
                dest = sent.attrs["destination"]
                if dest != BROADCAST and dest != r.node:
                    continue
                counted.add((key[0], key[1], r.node))
                prio = sent.attrs["priority"]
                cls = stats[prio]
                cls.delivered += 1
                delays[prio].append(r.t - sent.t)
                bits[prio] += 8 * (sent.attrs["size"] - HEADER_LEN)
                deadline = sent.attrs.get("deadline")
                if deadline is not None and r.t > deadline + 1e-9:
                    cls.late += 1
        elif r.category == Category.MISSION.value:
            a = r.attrs
            node = str(r.node)
            if r.ev == "task_complete":
                report.tasks.setdefault(node, []).append(
                    dict(task=a["task"], t=r.t, elapsed=a["elapsed"], deadline=a["deadline"], met=a["met"])
                )
            elif r.ev == "mission_complete":
                report.mission_completion.setdefault(node, r.t)
            elif r.ev == NODE_FINAL and "odometer" in a:
                report.distance[node] = max(report.distance.get(node, 0.0), a["odometer"])
        elif r.category == Category.GPS.value:
            node = str(r.node)
            report.distance[node] = max(report.distance.get(node, 0.0), r.attrs["odometer"])
            if abs(r.t - round(r.t)) < 1e-9:
                report.track.append([r.t, r.node, r.attrs["lat"], r.attrs["lon"], r.attrs["alt"]])

    for prio, cls in stats.items():
        cls.lost = cls.offered - cls.delivered
        cls.loss_ratio = cls.lost / cls.offered if cls.offered else 0.0
        cls.deadline_miss_ratio = cls.late / cls.delivered if cls.delivered else 0.0
        cls.throughput_bps = bits[prio] / header.duration if header.duration > 0 else 0.0
        if delays[prio]:
            arr = np.asarray(delays[prio], dtype=float)
            cls.mean_delay = float(arr.mean())
            cls.p95_delay = float(np.percentile(arr, 95))
    report.classes = {str(p): stats[p] for p in sorted(stats)}
    if report.mission_completion:
        report.mission_completion_time = max(report.mission_completion.values())
    return report
