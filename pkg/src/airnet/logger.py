"""Structured, replayable event log.

One JSON object per line, fixed key order, floats rounded at record time so
an in-memory log and its replayed file compare equal. The first line is a
header carrying the schema version, seed and node list.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

LOG_SCHEMA_VERSION = 1
FLOAT_DIGITS = 8
TIME_DIGITS = 6


class Category(str, enum.Enum):
    GPS = "gps"
    MAVLINK = "mavlink"
    PACKET = "packet"
    RADIO = "radio"
    MODE = "mode"
    MISSION = "mission"
    ERROR = "error"


CATEGORIES = frozenset(c.value for c in Category)


class LogOrderError(RuntimeError):
    """A record arrived with a timestamp earlier than its predecessor."""


class LogParseError(ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def _canon(value: Any) -> Any:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, enum.Enum):
        return _canon(value.value)
    if isinstance(value, int):
        return int(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        r = round(value, FLOAT_DIGITS)
        return 0.0 if r == 0 else r
    if isinstance(value, (list, tuple)):
        return [_canon(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _canon(v) for k, v in value.items()}
    raise TypeError(f"cannot log value of type {type(value).__name__}")


@dataclass(frozen=True)
class EventRecord:
    t: float
    node: int
    category: str
    attrs: dict[str, Any] = field(default_factory=dict)

    @property
    def ev(self) -> str | None:
        return self.attrs.get("ev")

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "node": self.node, "cat": self.category, "attrs": self.attrs},
            separators=(",", ":"),
            allow_nan=False,
        )

    @classmethod
    def from_json(cls, line: str) -> EventRecord:
        obj = json.loads(line)
        return cls(float(obj["t"]), int(obj["node"]), str(obj["cat"]), dict(obj["attrs"]))


@dataclass
class LogHeader:
    seed: int
    scenario: str = ""
    nodes: list[int] = field(default_factory=list)
    duration: float = 0.0
    schema: int = LOG_SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {
                "log_schema": self.schema,
                "seed": self.seed,
                "scenario": self.scenario,
                "nodes": self.nodes,
                "duration": _canon(float(self.duration)),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> LogHeader:
        obj = json.loads(line)
        if "log_schema" not in obj:
            raise KeyError("log_schema")
        return cls(
            seed=int(obj["seed"]),
            scenario=str(obj.get("scenario", "")),
            nodes=[int(n) for n in obj.get("nodes", [])],
            duration=float(obj.get("duration", 0.0)),
            schema=int(obj["log_schema"]),
        )


class EventLog:
    """Append-only log of one run.

    ``events`` returns records ordered by (t, node, emission sequence).
    """

    def __init__(self, header: LogHeader | None = None):
        self.header = header or LogHeader(seed=0)
        self._records: list[tuple[float, int, int, EventRecord]] = []
        self._last_t = -math.inf
        self._sorted: list[EventRecord] | None = None
        self.subscribers: list[Callable[[EventRecord], None]] = []

    def __len__(self) -> int:
        return len(self._records)

    def record(self, t: float, node: int, category: Category | str, **attrs: Any) -> int:
        cat = category.value if isinstance(category, Category) else category
        if cat not in CATEGORIES:
            raise ValueError(f"unknown category {cat!r}")
        t = round(float(t), TIME_DIGITS)
        if t < self._last_t:
            raise LogOrderError(f"record at t={t} after t={self._last_t}")
        self._last_t = t
        rec = EventRecord(t, int(node), cat, _canon(attrs))
        pos = len(self._records)
        self._records.append((t, int(node), pos, rec))
        self._sorted = None
        for sub in self.subscribers:
            sub(rec)
        return pos

    def append(self, rec: EventRecord) -> int:
        return self.record(rec.t, rec.node, rec.category, **rec.attrs)

    @property
    def events(self) -> list[EventRecord]:
        if self._sorted is None:
            self._sorted = [r for *_, r in sorted(self._records, key=lambda x: x[:3])]
        return self._sorted

    def lines(self) -> Iterator[str]:
        yield self.header.to_json()
        for rec in self.events:
            yield rec.to_json()

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def flush(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.dumps(), encoding="utf-8")
        return path


def parse_log(text: str) -> tuple[LogHeader | None, list[EventRecord]]:
    """Parse log text; raises LogParseError naming the first bad line."""
    lines = text.split("\n")
    # a file written by flush ends with a newline; anything after it is a cut-off line
    if lines and lines[-1] == "":
        lines.pop()
    elif lines and text:
        # final line lacks its newline: treat as truncated
        last_no = len(lines)
        try:
            json.loads(lines[-1])
        except ValueError:
            raise LogParseError(last_no, "truncated line") from None
    header: LogHeader | None = None
    records: list[EventRecord] = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            raise LogParseError(i, "blank line")
        try:
            if i == 1:
                header = LogHeader.from_json(line)
                continue
            rec = EventRecord.from_json(line)
        except (ValueError, KeyError, TypeError) as exc:
            raise LogParseError(i, f"malformed record ({exc.__class__.__name__}: {exc})") from None
        if rec.category not in CATEGORIES:
            raise LogParseError(i, f"unknown category {rec.category!r}")
        records.append(rec)
    return header, records


def replay(path: str | Path) -> tuple[LogHeader | None, list[EventRecord]]:
    return parse_log(Path(path).read_text(encoding="utf-8"))


def iter_filtered(records: Iterable[EventRecord], category: str | None) -> Iterator[EventRecord]:
    for rec in records:
        if category is None or rec.category == category:
            yield rec


def format_trace(rec: EventRecord) -> str:
    attrs = " ".join(f"{k}={v}" for k, v in rec.attrs.items())
    return f"{rec.t:12.6f}  n{rec.node:<3d} {rec.category:<8s} {attrs}"
