from __future__ import annotations

import copy

import pytest

ORIGIN = {"lat": 38.6317, "lon": -90.1932}


def scenario_doc(**overrides) -> dict:
    doc = {
        "schema_version": 1,
        "name": "unit",
        "seed": 5,
        "duration": 10,
        "origin": dict(ORIGIN),
        "nodes": [
            {"id": 1, "kind": "ground", "role": "leader"},
            {"id": 2, "kind": "ground", "start": {"east": 20}},
        ],
    }
    doc.update(copy.deepcopy(overrides))
    return doc


@pytest.fixture
def make_doc():
    return scenario_doc


# -- acceptance summary -------------------------------------------------------
_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    if call.when == "call" or failed:
        prev = _criteria.get(number, (title, "PASS"))[1]
        _criteria[number] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}  {verdict}  {title}")
