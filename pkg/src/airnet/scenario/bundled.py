"""Scenarios shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .schema import ScenarioSpec, loads


def _dir():
    return resources.files("airnet").joinpath("scenarios")


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".json"))


def bundled_text(name: str) -> str:
    name = name[:-5] if name.endswith(".json") else name
    if name not in bundled_names():
        raise KeyError(name)
    return _dir().joinpath(f"{name}.json").read_text(encoding="utf-8")


def load_bundled(name: str) -> ScenarioSpec:
    return loads(bundled_text(name))


def resolve(ref: str) -> str:
    """Scenario text from a file path, or from a bundled scenario name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    try:
        return bundled_text(ref)
    except KeyError:
        raise FileNotFoundError(ref) from None
