#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Output files
============
  trace.jsonl     one TraceRecord per line, fixed key order, compact separators
  stats.csv       one CsStatsRow per CS request
  *.json          verdicts, quorum reports, golden comparisons
  RESULTS.md      human summary rendered from templates/results.md.j2

Nothing written here contains a timestamp, so re-running a command gives
byte-identical files.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from pyquorum.core.config import get_settings
from pyquorum.schemas import STATS_HEADER, CsStatsRow, GoldenFile, NodeSnapshot, TraceRecord
from pyquorum.services.simnet import RunResult

log = logging.getLogger(__name__)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Trace / stats
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def trace_line(record: TraceRecord) -> str:
    data = record.model_dump(mode="json")
    if data["msg"] is not None and data["msg"]["ts"] is None:
        del data["msg"]["ts"]
    return json.dumps(data, separators=(",", ":"))


def write_trace(trace: Iterable[TraceRecord], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in trace:
            fh.write(trace_line(record) + "\n")
    return path


def write_stats(rows: Iterable[CsStatsRow], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STATS_HEADER)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row.model_dump().values()])
    return path


def write_json(payload: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def append_warnings(records: Iterable[dict], command: str, path: Path) -> Path:
    """Append captured log records, oldest first, tagged with the command that logged them."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8", newline="\n") as fh:
        for r in sorted(records, key=lambda r: r["seq"]):
            entry = {"command": command, "level": r["level"], "logger": r["logger"],
                     "message": r["message"]}
            fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
    return path


def read_warnings(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


def write_run(result: RunResult, out_dir: Path) -> tuple[Path, Path]:
    trace = write_trace(result.trace, out_dir / "trace.jsonl")
    stats = write_stats(result.stats.rows, out_dir / "stats.csv")
    log.info("wrote %s and %s", trace, stats)
    return trace, stats


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Golden comparison
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

_IDLE = NodeSnapshot(stat="Passive")


def normalize_snapshot(snapshot: dict[str, dict]) -> dict[str, NodeSnapshot]:
    """Keep only stat / queue / blocked, which is what the golden tables pin."""
    return {
        pid: NodeSnapshot(stat=s["stat"], queue=s["queue"], blocked=s["blocked"])
        for pid, s in snapshot.items()
    }


def compare_snapshot(actual: dict[str, dict],
                     expected: dict[str, NodeSnapshot]) -> list[str]:
    """Differences between a world snapshot and a golden table; unlisted nodes must be idle."""
    got = normalize_snapshot(actual)
    problems: list[str] = []
    for pid in sorted(got, key=int):
        want = expected.get(pid, _IDLE)
        if got[pid] != want:
            problems.append(f"node {pid}: expected {want.model_dump()} got {got[pid].model_dump()}")
    for pid in sorted(set(expected) - set(got), key=int):
        problems.append(f"node {pid}: not in snapshot")
    return problems


def golden_mismatches(result: RunResult, outcome: str, golden: GoldenFile) -> list[str]:
    problems: list[str] = []
    if outcome != golden.outcome:
        problems.append(f"outcome: expected {golden.outcome} got {outcome}")

    for label, table in golden.snapshots.items():
        if label not in result.snapshots:
            problems.append(f"{label}: no snapshot taken")
            continue
        problems += [f"{label}: {p}" for p in compare_snapshot(result.snapshots[label], table)]

    if golden.blocked_on is not None:
        want = sorted(tuple(e) for e in golden.blocked_on)
        if result.blocked_on != want:
            problems.append(f"blocked_on: expected {want} got {result.blocked_on}")
    if golden.entered is not None and sorted(result.entered) != sorted(golden.entered):
        problems.append(f"entered: expected {sorted(golden.entered)} got {sorted(result.entered)}")
    return problems


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Results document
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _environment() -> Environment:
    return Environment(
        loader=FileSystemLoader(str(get_settings().templates_dir)),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


def _ctx(**extra: Any) -> dict[str, Any]:
    settings = get_settings()
    return {
        "app_name": settings.app_name,
        "app_version": settings.app_version,
        **extra,
    }


def render_results(**context: Any) -> str:
    return _environment().get_template("results.md.j2").render(**_ctx(**context))


def write_results(path: Path, **context: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_results(**context), encoding="utf-8")
    return path


# -----------------------------------------------------------------------------
