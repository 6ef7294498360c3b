"""Command line: run, validate, metrics, replay.

Exit codes: 0 success, 2 input error, 3 runtime abort.
By default the core runs in-process; ``--server URL`` sends the same request
to a running ``airnet.service`` instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .logger import LogParseError, format_trace, iter_filtered, parse_log
from .scenario import PartialLogError, RunAborted, ScenarioError, compute_metrics
from .scenario.bundled import resolve
from .scenario.runner import Simulation
from .scenario.schema import ScenarioSpec, loads

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABORT = 3

LOG_NAME = "events.log"
METRICS_NAME = "metrics.json"

logger = logging.getLogger("airnet")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_spec(ref: str) -> tuple[ScenarioSpec | None, str | None, int]:
    try:
        text = resolve(ref)
    except FileNotFoundError:
        _err(f"error: scenario {ref!r} not found")
        return None, None, EXIT_INPUT
    try:
        return loads(text), text, EXIT_OK
    except ScenarioError as exc:
        _err(f"error: scenario {ref} is invalid ({len(exc.issues)} issue(s))")
        for issue in exc.issues:
            _err(f"  {issue}")
        return None, text, EXIT_INPUT


def _summary(spec_name: str, seed: int, out: Path, report) -> str:
    lines = [f"scenario {spec_name}  seed {seed}  duration {report.duration:g}s  -> {out}"]
    for prio, c in report.classes.items():
        delay = "-" if c.mean_delay is None else f"{c.mean_delay * 1000:.1f}ms"
        lines.append(
            f"  class {prio}: offered {c.offered}  delivered {c.delivered}  loss {c.loss_ratio:.3f}"
            f"  mean delay {delay}  late {c.deadline_miss_ratio:.3f}  {c.throughput_bps:.0f} bit/s"
        )
    for node, d in sorted(report.distance.items(), key=lambda kv: int(kv[0])):
        done = report.mission_completion.get(node)
        tail = f"  mission complete at {done:.2f}s" if done is not None else ""
        lines.append(f"  uav {node}: {d:.1f} m flown{tail}")
    return "\n".join(lines)


def _run_one(spec: ScenarioSpec, seed: int | None, out: Path) -> tuple[int, str]:
    sim = Simulation(spec, seed)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = sim.run()
    except RunAborted as exc:
        exc.log.flush(out / LOG_NAME)
        return EXIT_ABORT, f"error: run aborted: {exc.cause.__class__.__name__}: {exc.cause}"
    result.log.flush(out / LOG_NAME)
    (out / METRICS_NAME).write_text(result.report.dumps(), encoding="utf-8")
    return EXIT_OK, _summary(spec.name, result.seed, out, result.report)


def _run_job(args: tuple[str, int | None, str]) -> tuple[int, str]:
    text, seed, out = args
    return _run_one(loads(text), seed, Path(out))


def cmd_run(args: argparse.Namespace) -> int:
    if args.server:
        return _remote_run(args)
    spec, text, code = _load_spec(args.scenario)
    if spec is None:
        return code
    out = Path(args.out)
    base = spec.seed if args.seed is None else args.seed
    if args.runs <= 1:
        code, msg = _run_one(spec, args.seed, out)
        (print if code == EXIT_OK else _err)(msg)
        return code
    jobs = [(text, (base + i) % 2**64, str(out / f"run-{i:03d}")) for i in range(args.runs)]
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for code, msg in pool.map(_run_job, jobs):
            (print if code == EXIT_OK else _err)(msg)
            worst = max(worst, code)
    return worst


def cmd_validate(args: argparse.Namespace) -> int:
    if args.server:
        return _remote_validate(args)
    spec, _, code = _load_spec(args.scenario)
    if spec is None:
        return code
    print(f"{args.scenario}: valid ({len(spec.nodes)} nodes, {len(spec.traffic)} flows, {spec.duration:g}s)")
    return EXIT_OK


def _read_log(path: str) -> str | None:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"error: cannot read {path}: {exc.strerror}")
        return None


def cmd_metrics(args: argparse.Namespace) -> int:
    text = _read_log(args.log)
    if text is None:
        return EXIT_INPUT
    if args.server:
        return _remote(args.server, "/metrics", {"log": text}, lambda body: sys.stdout.write(body["metrics"]))
    try:
        header, records = parse_log(text)
        report = compute_metrics(header, records)
    except LogParseError as exc:
        _err(f"error: {args.log}: line {exc.line_no}: {exc.reason}")
        return EXIT_INPUT
    except PartialLogError as exc:
        _err(f"error: {args.log}: {exc}")
        return EXIT_INPUT
    sys.stdout.write(report.dumps())
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    text = _read_log(args.log)
    if text is None:
        return EXIT_INPUT
    try:
        _, records = parse_log(text)
    except LogParseError as exc:
        _err(f"error: {args.log}: line {exc.line_no}: {exc.reason}")
        return EXIT_INPUT
    for rec in iter_filtered(records, args.filter):
        print(format_trace(rec))
    return EXIT_OK


# -- remote mode --------------------------------------------------------------
def _remote(server: str, path: str, payload: dict, on_ok) -> int:
    import httpx

    try:
        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    except httpx.HTTPError as exc:
        _err(f"error: cannot reach {server}: {exc}")
        return EXIT_ABORT
    if resp.status_code == 200:
        on_ok(resp.json())
        return EXIT_OK
    detail = resp.json().get("detail")
    _err(f"error: server answered {resp.status_code}: {json.dumps(detail)[:2000]}")
    return EXIT_ABORT if resp.status_code >= 500 else EXIT_INPUT


def _scenario_doc(ref: str) -> dict | None:
    try:
        return json.loads(resolve(ref))
    except FileNotFoundError:
        _err(f"error: scenario {ref!r} not found")
    except json.JSONDecodeError as exc:
        _err(f"error: {ref}: line {exc.lineno}: invalid JSON: {exc.msg}")
    return None


def _remote_validate(args: argparse.Namespace) -> int:
    doc = _scenario_doc(args.scenario)
    if doc is None:
        return EXIT_INPUT

    valid = []

    def show(body: dict) -> None:
        valid.append(body["valid"])
        if body["valid"]:
            print(f"{args.scenario}: valid")
        else:
            _err(f"error: scenario {args.scenario} is invalid ({len(body['issues'])} issue(s))")
            for issue in body["issues"]:
                _err(f"  {issue['location']}: {issue['message']}")

    code = _remote(args.server, "/validate", {"scenario": doc}, show)
    if code == EXIT_OK and not all(valid):
        return EXIT_INPUT
    return code


def _remote_run(args: argparse.Namespace) -> int:
    doc = _scenario_doc(args.scenario)
    if doc is None:
        return EXIT_INPUT
    out = Path(args.out)

    def save(body: dict) -> None:
        out.mkdir(parents=True, exist_ok=True)
        (out / LOG_NAME).write_text(body["log"], encoding="utf-8")
        (out / METRICS_NAME).write_text(body["metrics"], encoding="utf-8")
        print(f"seed {body['seed']} -> {out}")

    return _remote(args.server, "/runs", {"scenario": doc, "seed": args.seed}, save)


# -- entry point --------------------------------------------------------------
def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airnet", description="Airborne networking emulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.add_argument("--seed", type=_seed, default=None, help="overrides the scenario seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--runs", type=int, default=1, help="batch of runs with consecutive seeds")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for --runs")
    p.add_argument("--server", default=None, help="use a running service instead of in-process")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a scenario")
    p.add_argument("scenario")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="recompute metrics from an event log")
    p.add_argument("log")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("replay", help="print an event log as a text trace")
    p.add_argument("log")
    p.add_argument("--filter", default=None, choices=["gps", "mavlink", "packet", "radio", "mode", "mission", "error"])
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "runs", 1) < 1:
        _err("error: --runs must be at least 1")
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
