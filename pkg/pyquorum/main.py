#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
pyquorum command line
=====================

  pyquorum quorum-gen N [--out FILE]
  pyquorum quorum-check FILE
  pyquorum run SCENARIO [--trace-out FILE] [--stats-out FILE]
  pyquorum explore QUORUMS --algo ALGO --requesters 1,2,4 [--depth D] [--states S] [--exhaustive] [--out FILE]
  pyquorum replay VERDICT
  pyquorum replay-paper {section3b,fig4-basic,fig4-full,single-request}
  pyquorum sweep QUORUMS [--algo ALGO]
  pyquorum report

Exit codes: 0 success, 1 validation or verdict failure, 2 usage error.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from pyquorum.core.config import Settings, get_settings
from pyquorum.core.errors import BoundExceeded, PyQuorumError, QuiescenceWithWaiters, ScenarioError
from pyquorum.core.logging_buffer import clear as clear_log_buffer, get_records, install as install_log_buffer
from pyquorum.schemas import ALGORITHMS, ScenarioEvent, VerdictFile
from pyquorum.services.explorer import ExploreConfig, explore, replay
from pyquorum.services.fixtures import (
    BUNDLED_QUORUMS, BUNDLED_SCENARIOS, fixture_path, load_golden, load_quorum_fixture,
    load_scenario,
)
from pyquorum.services.quorum_system import build_quorums, dump_quorums, load_quorums, to_model, validate
from pyquorum.services.reporting import (
    append_warnings, golden_mismatches, read_warnings, write_json, write_results, write_run,
    write_stats, write_trace,
)
from pyquorum.services.simnet import RunResult, delay_violations, run

log = logging.getLogger(__name__)

# warnings from every command, appended in the order they were logged
WARNINGS_FILE = "warnings.jsonl"


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------

def _settings(args: argparse.Namespace) -> Settings:
    """Settings with explicit CLI flags applied on top."""
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "jobs", "log_level", "results_dir")
        if getattr(args, key, None) is not None
    }
    if getattr(args, "count_self_messages", False):
        overrides["count_self_messages"] = True
    return get_settings().model_copy(update=overrides)


def _requesters(text: str) -> tuple[int, ...]:
    try:
        return tuple(sorted({int(p) for p in text.split(",") if p.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a comma separated list of ids") from None


def _run_outcome(scenario, qs, settings) -> tuple[RunResult, str]:
    try:
        return run(scenario, qs, settings=settings), "quiescent"
    except QuiescenceWithWaiters as exc:
        return exc.result, "deadlock"


def _print_deadlock(result: RunResult) -> None:
    print(f"deadlock: waiting {result.waiting}")
    pairs = ", ".join(f"{w} waits {a}" for w, a in result.blocked_on)
    print(f"  blocked on: {pairs}")
    if result.cycle:
        print("  cycle: " + " -> ".join(str(a) for a, _ in result.cycle) + f" -> {result.cycle[0][0]}")


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------

def cmd_quorum_gen(args: argparse.Namespace, settings: Settings) -> int:
    qs = build_quorums(args.n)
    if args.out:
        dump_quorums(qs, Path(args.out))
        print(f"wrote n={qs.n} k={qs.k} to {args.out}")
    else:
        print(to_model(qs).model_dump_json(indent=2))
    return 0


def cmd_quorum_check(args: argparse.Namespace, settings: Settings) -> int:
    qs = load_quorums(fixture_path(args.file))
    report = validate(qs)
    print(f"{args.file}: n={qs.n} k={qs.k}")
    for name, cond in report.conditions().items():
        print(f"  {name:<30} {'pass' if cond.passed else 'FAIL'}")
    for msg in report.messages:
        print(f"  {msg}")
    if args.json:
        write_json(report.to_dict(), Path(args.json))
    return 0 if report.passed else 1


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    scenario, qs = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.delay_model.seed = args.seed

    result, outcome = _run_outcome(scenario, qs, settings)
    out_dir = settings.results_dir_resolved / (scenario.name or "run")
    write_trace(result.trace, Path(args.trace_out) if args.trace_out else out_dir / "trace.jsonl")
    write_stats(result.stats.rows, Path(args.stats_out) if args.stats_out else out_dir / "stats.csv")

    stats = result.stats
    print(f"{scenario.name}: {result.steps} steps, {result.ticks} ticks, "
          f"{stats.total_messages} messages, entered {result.entered}")
    if outcome == "deadlock":
        _print_deadlock(result)
        return 1
    return 0


def cmd_explore(args: argparse.Namespace, settings: Settings) -> int:
    path = fixture_path(args.quorums)
    cfg = ExploreConfig(
        qs=load_quorums(path),
        algo=args.algo,
        requesters=args.requesters,
        depth_bound=args.depth if args.depth is not None else settings.depth_bound,
        state_bound=args.states if args.states is not None else settings.state_bound,
        count_self_messages=settings.count_self_messages,
        quorum_file=str(path),
    )
    if any(not 1 <= r <= cfg.qs.n for r in cfg.requesters):
        raise ScenarioError(f"requesters {list(cfg.requesters)} outside 1..{cfg.qs.n}")

    partial: BoundExceeded | None = None
    try:
        verdict = explore(cfg, jobs=settings.jobs, strict=args.exhaustive)
    except BoundExceeded as exc:
        verdict, partial = exc.verdict, exc
    out = Path(args.out) if args.out else settings.results_dir_resolved / "deadlock-verdict.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(verdict.to_model(cfg).model_dump_json(indent=2) + "\n", encoding="utf-8")

    scope = "bounded" if verdict.frontier_truncated else "exhaustive"
    print(f"{cfg.algo} on {path.name}, requesters {list(cfg.requesters)}: "
          f"{verdict.states_visited} states, depth {verdict.max_depth} ({scope})")
    print(f"  safety:   {verdict.safety}" + (f" {verdict.ready}" if verdict.ready else ""))
    print(f"  deadlock: {verdict.deadlock}")
    for found in verdict.deadlocks:
        print("  blocked on: " + ", ".join(f"{w} waits {a}" for w, a in found.blocked_on))
    print(f"  verdict written to {out}")
    if partial is not None:
        raise partial
    return 1 if verdict.safety == "violated" else 0


def cmd_replay(args: argparse.Namespace, settings: Settings) -> int:
    path = Path(args.verdict)
    try:
        data = VerdictFile.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such verdict file") from None
    except ValidationError as exc:
        raise ScenarioError(f"{path}: invalid verdict file: {exc}") from None

    if data.counterexample is None:
        print(f"{path}: no counterexample to replay")
        return 0

    cfg = ExploreConfig(
        qs=load_quorums(fixture_path(data.quorum_file)),
        algo=data.algo,
        requesters=tuple(data.requesters),
        depth_bound=data.depth_bound,
        state_bound=data.state_bound,
        count_self_messages=data.count_self_messages,
        quorum_file=data.quorum_file,
    )
    expect = "safety" if data.safety == "violated" else "deadlock"
    outcome = replay(cfg, data.counterexample, expect=expect)
    out = Path(args.trace_out) if args.trace_out else settings.results_dir_resolved / "replay" / "trace.jsonl"
    write_trace(outcome.result.trace, out)
    print(f"replayed {len(data.counterexample)} steps: {expect} reproduced "
          f"(ready {outcome.ready}, waiting {outcome.waiting}); trace in {out}")
    if expect == "deadlock":
        others = [d for d in data.deadlocks if d.blocked_on != data.blocked_on]
        for found in others:
            replay(cfg, found.counterexample, expect="deadlock")
        if others:
            print(f"  {len(others)} further deadlock(s) reproduced")
    return 0


def cmd_replay_paper(args: argparse.Namespace, settings: Settings) -> int:
    scenario_name, golden_name = BUNDLED_SCENARIOS[args.name]
    scenario, qs = load_scenario(scenario_name)
    result, outcome = _run_outcome(scenario, qs, settings)
    out_dir = settings.results_dir_resolved / args.name
    write_run(result, out_dir)

    if golden_name is not None:
        problems = golden_mismatches(result, outcome, load_golden(golden_name))
    else:
        # one uncontended request costs 2k-1 ring messages
        expected = 2 * qs.k - 1
        got = result.stats.rows[0].messages_attributed if result.stats.rows else 0
        problems = [] if got == expected else [f"messages: expected {expected} got {got}"]

    write_json({
        "name": args.name,
        "outcome": outcome,
        "passed": not problems,
        "problems": problems,
        "entered": result.entered,
        "blocked_on": [list(e) for e in result.blocked_on],
        "cycle": [list(e) for e in result.cycle] if result.cycle else None,
        "snapshots": result.snapshots,
        "messages": result.stats.total_messages,
    }, out_dir / "comparison.json")

    print(f"{args.name}: {outcome}, entered {result.entered}")
    if outcome == "deadlock":
        _print_deadlock(result)
    for p in problems:
        print(f"  MISMATCH {p}")
    print(f"  {'PASS' if not problems else 'FAIL'} (outputs in {out_dir})")
    return 0 if not problems else 1


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    path = fixture_path(args.quorums)
    qs = load_quorum_fixture(path)
    scenario, _ = load_scenario("scenario_single_request")
    scenario.quorum_file = str(path)
    scenario.algo = args.algo
    scenario.count_self_messages = settings.count_self_messages

    if args.algo == "ring":
        expected = 2 * qs.k - 1
    elif settings.count_self_messages:
        expected = 3 * qs.k
    else:
        expected = 3 * (qs.k - 1)

    rows = []
    for origin in qs.processes:
        scenario.events = [ScenarioEvent(at=0, node=origin)]
        result = run(scenario, qs, settings=settings)
        row = result.stats.rows[0]
        rows.append(row)
        cs = scenario.cs_duration or settings.cs_duration
        bad = delay_violations(result.stats, qs.k, cs, settings.wait_bound_factor)
        if bad:
            log.warning("origin %d waited %s ticks", origin, row.wait_ticks)

    counts = [r.messages_attributed for r in rows]
    out_dir = settings.results_dir_resolved
    write_stats(rows, out_dir / f"sweep-{args.algo}-{path.stem}.csv")
    write_json({
        "quorum_file": path.name,
        "algo": args.algo,
        "n": qs.n,
        "k": qs.k,
        "expected": expected,
        "min": min(counts),
        "max": max(counts),
        "max_wait_ticks": max(r.wait_ticks or 0 for r in rows),
    }, out_dir / f"sweep-{args.algo}-{path.stem}.json")

    print(f"{args.algo} on {path.name}: messages per CS min {min(counts)} max {max(counts)} "
          f"(expected {expected})")
    return 0 if set(counts) == {expected} else 1


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    results = settings.results_dir_resolved

    quorums = []
    for name in BUNDLED_QUORUMS:
        qs = load_quorum_fixture(name, check=False)
        report = validate(qs)
        quorums.append({"name": name, "n": qs.n, "k": qs.k, "passed": report.passed,
                        "conditions": {c: r.passed for c, r in report.conditions().items()}})

    def _read(pattern: str) -> list[dict]:
        return [json.loads(p.read_text(encoding="utf-8")) | {"file": p.name}
                for p in sorted(results.glob(pattern))]

    verdicts = _read("*verdict*.json")
    replays = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(results.glob("*/comparison.json"))]
    sweeps = _read("sweep-*.json")

    out = write_results(
        results / "RESULTS.md",
        quorums=quorums,
        replays=replays,
        verdicts=verdicts,
        sweeps=sweeps,
        logs=read_warnings(results / WARNINGS_FILE),
    )
    print(f"wrote {out}")
    return 0


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyquorum",
        description="Ring-ordered quorum mutual exclusion: quorum tools, simulator and explorer.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed for random delay models")
    parser.add_argument("--jobs", type=int, default=None, metavar="N",
                        help="Parallel explorer workers")
    parser.add_argument("--log-level", dest="log_level", default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--results-dir", dest="results_dir", type=Path, default=None,
                        help="Where outputs go (default ./results)")
    parser.add_argument("--count-self-messages", action="store_true",
                        help="Route Maekawa self-addressed messages through the network")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("quorum-gen", help="Build a quorum system for n = k(k-1)+1")
    p.add_argument("n", type=int)
    p.add_argument("--out", default=None, metavar="FILE")
    p.set_defaults(func=cmd_quorum_gen)

    p = sub.add_parser("quorum-check", help="Validate a quorum file against the four conditions")
    p.add_argument("file")
    p.add_argument("--json", default=None, metavar="FILE", help="Also write the report as JSON")
    p.set_defaults(func=cmd_quorum_check)

    p = sub.add_parser("run", help="Run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--trace-out", default=None, metavar="FILE")
    p.add_argument("--stats-out", default=None, metavar="FILE")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explore", help="Bounded exhaustive exploration")
    p.add_argument("quorums")
    p.add_argument("--algo", choices=ALGORITHMS, default="ring")
    p.add_argument("--requesters", type=_requesters, required=True, metavar="IDS")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--states", type=int, default=None)
    p.add_argument("--exhaustive", action="store_true",
                   help="Fail (exit 1) when a bound cuts the search short")
    p.add_argument("--out", default=None, metavar="FILE")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("replay", help="Replay a persisted counterexample")
    p.add_argument("verdict")
    p.add_argument("--trace-out", default=None, metavar="FILE")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("replay-paper", help="Reproduce a bundled scenario and compare with its golden file")
    p.add_argument("name", choices=sorted(BUNDLED_SCENARIOS))
    p.set_defaults(func=cmd_replay_paper)

    p = sub.add_parser("sweep", help="Messages per CS for a lone requester at every origin")
    p.add_argument("quorums")
    p.add_argument("--algo", choices=ALGORITHMS, default="ring")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="Render RESULTS.md from the results directory")
    p.set_defaults(func=cmd_report)

    return parser


# -----------------------------------------------------------------------------

def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    settings = _settings(args)
    logging.basicConfig(
        level=settings.log_level,
        format="%(levelname)-7s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.getLogger("pyquorum").setLevel(settings.log_level)
    install_log_buffer()
    clear_log_buffer()

    try:
        return args.func(args, settings)
    except PyQuorumError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code
    finally:
        records = get_records()
        if records and args.command != "report":
            append_warnings(records, args.command, settings.results_dir_resolved / WARNINGS_FILE)


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()


# -----------------------------------------------------------------------------
