"""HTTP front end over the scenario core.

Run with ``uvicorn airnet.service:app``. Every endpoint is a thin wrapper:
the same validation, run and metrics code paths the CLI uses in-process.
"""

from __future__ import annotations

import logging
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .logger import LogParseError, format_trace, iter_filtered, parse_log
from .scenario import PartialLogError, RunAborted, ScenarioError, compute_metrics, validate
from .scenario.bundled import bundled_names, bundled_text
from .scenario.runner import Simulation

logger = logging.getLogger(__name__)

app = FastAPI(title="airnet", version=__version__)


class IssueModel(BaseModel):
    location: str
    message: str


class ScenarioRequest(BaseModel):
    scenario: dict[str, Any]


class ValidateResponse(BaseModel):
    valid: bool
    issues: list[IssueModel] = []


class RunRequest(ScenarioRequest):
    seed: int | None = Field(default=None, ge=0, lt=2**64)


class RunResponse(BaseModel):
    seed: int
    metrics: str
    log: str


class LogRequest(BaseModel):
    log: str


class MetricsResponse(BaseModel):
    metrics: str


class ReplayRequest(LogRequest):
    category: str | None = None


class ReplayResponse(BaseModel):
    lines: list[str]


def _issues(exc: ScenarioError) -> list[dict]:
    return [{"location": i.location, "message": i.message} for i in exc.issues]


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/scenarios")
def scenarios() -> dict:
    return {"scenarios": bundled_names()}


@app.get("/scenarios/{name}")
def scenario(name: str) -> dict:
    try:
        return {"name": name, "text": bundled_text(name)}
    except KeyError:
        raise HTTPException(404, f"no bundled scenario {name!r}") from None


@app.post("/validate", response_model=ValidateResponse)
def validate_scenario(req: ScenarioRequest) -> ValidateResponse:
    try:
        validate(req.scenario)
    except ScenarioError as exc:
        return ValidateResponse(valid=False, issues=_issues(exc))
    return ValidateResponse(valid=True)


@app.post("/runs", response_model=RunResponse)
def run_scenario(req: RunRequest) -> RunResponse:
    try:
        spec = validate(req.scenario)
    except ScenarioError as exc:
        raise HTTPException(422, {"issues": _issues(exc)}) from None
    sim = Simulation(spec, req.seed)
    try:
        result = sim.run()
    except RunAborted as exc:
        raise HTTPException(500, {"cause": str(exc.cause), "log": exc.log.dumps()}) from None
    return RunResponse(seed=result.seed, metrics=result.report.dumps(), log=result.log.dumps())


@app.post("/metrics", response_model=MetricsResponse)
def metrics(req: LogRequest) -> MetricsResponse:
    try:
        header, records = parse_log(req.log)
        report = compute_metrics(header, records)
    except LogParseError as exc:
        raise HTTPException(400, {"line": exc.line_no, "reason": exc.reason}) from None
    except PartialLogError as exc:
        raise HTTPException(400, {"missing": exc.missing}) from None
    return MetricsResponse(metrics=report.dumps())


@app.post("/replay", response_model=ReplayResponse)
def replay(req: ReplayRequest) -> ReplayResponse:
    try:
        _, records = parse_log(req.log)
    except LogParseError as exc:
        raise HTTPException(400, {"line": exc.line_no, "reason": exc.reason}) from None
    return ReplayResponse(lines=[format_trace(r) for r in iter_filtered(records, req.category)])
