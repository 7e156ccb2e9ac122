#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Bundled fixtures: quorum tables, scripted scenarios and golden snapshots.

Paths that are not found as given are looked up in the fixtures directory,
so both ``quorums_s2_n13`` and ``path/to/my_quorums.json`` work everywhere.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel, ValidationError

from pyquorum.core.config import get_settings
from pyquorum.core.errors import FixtureError
from pyquorum.schemas import GoldenFile, Scenario
from pyquorum.services.quorum_system import QuorumSystem, load_quorums, validate

log = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

BUNDLED_QUORUMS = ("quorums_s3_n3", "quorums_s3_n7", "quorums_s3_n13", "quorums_s2_n13")
BUNDLED_SCENARIOS = {
    "section3b":      ("scenario_section3b", "golden_section3b"),
    "fig4-basic":     ("scenario_fig4_basic", "golden_fig4_basic"),
    "fig4-full":      ("scenario_fig4_full", "golden_fig4_full"),
    "single-request": ("scenario_single_request", None),
}

# both n=13 tables also answer to their section names
_ALIASES = {"quorums_s2": "quorums_s2_n13", "quorums_s3": "quorums_s3_n13"}


# -----------------------------------------------------------------------------

def fixture_path(name: str | Path, base: Path | None = None) -> Path:
    """Resolve ``name`` as given, then relative to ``base``, then in the fixtures dir."""
    p = Path(name)
    candidates = [p]
    if not p.is_absolute():
        if base is not None:
            candidates.append(base / p)
        candidates.append(get_settings().fixtures_dir / p)
    for c in list(candidates):
        if c.suffix != ".json":
            candidates.append(c.with_name(c.name + ".json"))
    for c in candidates:
        if c.is_file():
            return c
    if p.stem in _ALIASES:
        return fixture_path(_ALIASES[p.stem])
    if p.name != str(name):
        return fixture_path(p.name)
    raise FixtureError(f"fixture '{name}' not found")


def _load_model(path: Path, model: type[M]) -> M:
    try:
        return model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise FixtureError(f"{path}: invalid {model.__name__}: {exc}") from None


# -----------------------------------------------------------------------------

def load_quorum_fixture(name: str | Path, *, check: bool = True) -> QuorumSystem:
    qs = load_quorums(fixture_path(name))
    if check and not validate(qs).passed:
        raise FixtureError(f"quorum fixture '{name}' fails validation")
    return qs


def load_scenario(name: str | Path) -> tuple[Scenario, QuorumSystem]:
    """The scenario plus its quorum system, resolved next to the scenario file."""
    path = fixture_path(name)
    scenario = _load_model(path, Scenario)
    qs = load_quorums(fixture_path(scenario.quorum_file, base=path.parent))
    log.debug("loaded scenario '%s' from %s", scenario.name, path)
    return scenario, qs


def load_golden(name: str | Path) -> GoldenFile:
    return _load_model(fixture_path(name), GoldenFile)


def load_fixtures() -> dict[str, QuorumSystem | Scenario]:
    """Every bundled quorum table and scenario, keyed by fixture name."""
    out: dict[str, QuorumSystem | Scenario] = {}
    for name in BUNDLED_QUORUMS:
        out[name] = load_quorum_fixture(name)
    for scenario_name, _ in BUNDLED_SCENARIOS.values():
        out[scenario_name] = load_scenario(scenario_name)[0]
    return out


# -----------------------------------------------------------------------------
