#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Discrete-event network simulator.

One SimWorld holds every node state plus one FIFO channel per ordered pair
(src, dst).  Time is an integer tick; nothing reads the wall clock, so a run
is a pure function of (scenario, seed).

Ordering rules inside a step:

  * scenario events (requests, automatic releases) due at or before the next
    delivery fire first; releases before requests, then by node id
  * deliveries due at the same tick go in (src, dst) order
  * a channel never reorders: a later send is clamped to arrive no earlier
    than the message ahead of it

When a delivery script is present the scripted steps run one tick apart and
replace the delay model until the script is exhausted; timed delivery then
resumes for whatever is still in flight.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import hashlib
import heapq
import itertools
import logging
import random
from collections import Counter, deque
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from typing import Any, Optional

from pyquorum.core.config import Settings, get_settings
from pyquorum.core.errors import (
    QuiescenceWithWaiters, SafetyViolation, ScenarioError, StepLimitExceeded,
)
from pyquorum.schemas import CsStatsRow, DelayModel, Scenario, ScriptStep, TraceRecord
from pyquorum.services.protocols import (
    Edge, Protocol, attributed_to, find_wait_cycle, get_protocol,
)
from pyquorum.services.quorum_system import ProcessId, QuorumSystem, validate
from pyquorum.services.ring_mutex import Stat

log = logging.getLogger(__name__)

DelayFn = Callable[[ProcessId, ProcessId], int]

_RELEASE = 0
_REQUEST = 1


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Delay models
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def make_delay(model: DelayModel, default_seed: int = 0) -> DelayFn:
    match model.kind:
        case "unit":
            return lambda src, dst: 1
        case "fixed":
            table = {
                tuple(int(p) for p in key.split(",")): ticks
                for key, ticks in model.ticks.items()
            }
            return lambda src, dst: table.get((src, dst), model.default)
        case "uniform":
            rng = random.Random(model.seed if model.seed is not None else default_seed)
            return lambda src, dst: rng.randint(model.lo, model.hi)
    raise ValueError(f"unknown delay model '{model.kind}'")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# State identity
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

StateKey = tuple[tuple[Any, ...], tuple[tuple[Edge, tuple[Any, ...]], ...]]


def make_key(nodes: dict[ProcessId, Any],
             channels: dict[Edge, Iterable[Any]]) -> StateKey:
    """Node states in id order plus the message contents of every non-empty channel."""
    return (
        tuple(nodes[p] for p in sorted(nodes)),
        tuple((edge, tuple(msgs)) for edge, msgs in sorted(channels.items()) if msgs),
    )


def _canon(obj: Any) -> Any:
    if is_dataclass(obj) and not isinstance(obj, type):
        return (type(obj).__name__,) + tuple(_canon(getattr(obj, f.name)) for f in fields(obj))
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (frozenset, set)):
        return tuple(sorted((_canon(x) for x in obj), key=repr))
    if isinstance(obj, (tuple, list)):
        return tuple(_canon(x) for x in obj)
    return obj


def canonical_hash(key: StateKey) -> str:
    """Digest of a state key that is stable across processes and platforms."""
    return hashlib.blake2b(repr(_canon(key)).encode(), digest_size=16).hexdigest()


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Results
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

@dataclass
class RunStats:
    rows: list[CsStatsRow]
    messages_by_kind: dict[str, int]
    total_messages: int

    @property
    def max_wait_ticks(self) -> int:
        waits = [r.wait_ticks for r in self.rows if r.wait_ticks is not None]
        return max(waits, default=0)


@dataclass
class RunResult:
    name: str
    algo: str
    trace: list[TraceRecord]
    snapshots: dict[str, dict[str, dict]]
    final: dict[str, dict]
    entered: list[ProcessId]
    waiting: list[ProcessId]
    wait_for: list[Edge]
    blocked_on: list[Edge]
    cycle: Optional[list[Edge]]
    steps: int
    ticks: int
    _stats: Optional[RunStats] = field(default=None, repr=False)

    @property
    def stats(self) -> RunStats:
        if self._stats is None:
            self._stats = collect_stats(self.trace)
        return self._stats


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# World
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class SimWorld:
    """
    Mutable simulation state.  ``cs_duration=None`` disables automatic
    release; the caller (or the script) must release explicitly.
    """

    def __init__(
        self,
        qs: QuorumSystem,
        protocol: Protocol,
        *,
        delay: DelayFn | None = None,
        cs_duration: int | None = 1,
        script: Iterable[ScriptStep] | None = None,
        monitor_safety: bool = True,
        name: str = "",
    ) -> None:
        self.qs = qs
        self.protocol = protocol
        self.name = name
        self.delay: DelayFn = delay or (lambda src, dst: 1)
        self.cs_duration = cs_duration
        self.monitor_safety = monitor_safety

        self.time = 0
        self.steps = 0
        self.nodes: dict[ProcessId, Any] = {p: protocol.initial(qs, p) for p in qs.processes}
        self.channels: dict[Edge, deque[tuple[int, Any]]] = {}
        self.trace: list[TraceRecord] = []
        self.snapshots: dict[str, dict[str, dict]] = {}
        self.entered: list[ProcessId] = []

        self._last_arrival: dict[Edge, int] = {}
        self._events: list[tuple[int, int, ProcessId, int]] = []
        self._seq = itertools.count()
        self._deferred: Counter[ProcessId] = Counter()
        self._script: deque[ScriptStep] = deque(script or ())
        self._script_pos = 0
        # scripts that release explicitly own every release until they run out
        self._manual_release = any(s.kind == "release" for s in self._script)

    # ── Scheduling ─────────────────────────────────────────────────────────

    def schedule_request(self, at: int, node: ProcessId) -> None:
        heapq.heappush(self._events, (at, _REQUEST, node, next(self._seq)))

    def schedule_release(self, at: int, node: ProcessId) -> None:
        heapq.heappush(self._events, (at, _RELEASE, node, next(self._seq)))

    def pending_events(self) -> int:
        return len(self._events)

    def in_flight(self) -> int:
        return sum(len(q) for q in self.channels.values())

    def has_work(self) -> bool:
        return bool(self._events or self._script or self.in_flight())

    @property
    def script_exhausted(self) -> bool:
        return not self._script

    # ── Stepping ───────────────────────────────────────────────────────────

    def step(self) -> list[TraceRecord]:
        """Advance by one event or delivery; returns the records it produced."""
        start = len(self.trace)

        if self._script:
            if self._events and self._events[0][0] <= self.time + 1:
                self._fire_event()
            else:
                self._scripted_step()
        else:
            nxt = self._next_delivery()
            if self._events and (nxt is None or self._events[0][0] <= nxt[0]):
                self._fire_event()
            elif nxt is not None:
                tick, edge = nxt
                self.time = tick
                self._deliver(edge)
            else:
                return []

        self.steps += 1
        if self.monitor_safety:
            ready = self.ready()
            if len(ready) > 1:
                raise SafetyViolation(ready, self.result())
        return self.trace[start:]

    def _next_delivery(self) -> tuple[int, Edge] | None:
        best: tuple[int, Edge] | None = None
        for edge, q in self.channels.items():
            if not q:
                continue
            cand = (max(q[0][0], self.time), edge)
            if best is None or cand < best:
                best = cand
        return best

    def _fire_event(self) -> None:
        tick, kind, node, _ = heapq.heappop(self._events)
        self.time = max(self.time, tick)
        state = self.nodes[node]

        if kind == _REQUEST:
            if self.protocol.stat(state) is not Stat.PASSIVE:
                self._deferred[node] += 1
                log.debug("t=%d node %d busy, request deferred", self.time, node)
                return
            self._apply(node, "request")
        else:
            if not self.protocol.is_ready(state):
                log.debug("t=%d node %d already left the CS", self.time, node)
                return
            self._apply(node, "release")

    def _scripted_step(self) -> None:
        step = self._script.popleft()
        self._script_pos += 1
        self.time += 1

        if step.kind == "deliver":
            edge = (step.src, step.dst)
            if not self.channels.get(edge):
                raise ScenarioError(
                    f"script step {self._script_pos}: channel {step.src}->{step.dst} is empty"
                )
            self._deliver(edge)
        else:
            if step.node not in self.nodes or not self.protocol.is_ready(self.nodes[step.node]):
                raise ScenarioError(
                    f"script step {self._script_pos}: node {step.node} is not in the CS"
                )
            self._apply(step.node, "release")

        if step.label:
            self.snapshots[step.label] = self.snapshot()

        if self._manual_release and not self._script and self.cs_duration is not None:
            for p in self.ready():
                self.schedule_release(self.time + self.cs_duration, p)

    # ── Transitions ────────────────────────────────────────────────────────

    def _deliver(self, edge: Edge) -> None:
        _, msg = self.channels[edge].popleft()
        src, dst = edge
        self._record("deliver", src=src, dst=dst, msg=msg)
        self._apply(dst, "deliver", msg)

    def _apply(self, node: ProcessId, event: str, msg: Any = None) -> None:
        proto = self.protocol
        old = self.nodes[node]
        was_ready = proto.is_ready(old)

        if event == "request":
            new, out = proto.request(self.qs, old)
        elif event == "release":
            new, out = proto.release(self.qs, old)
        else:
            new, out = proto.deliver(self.qs, old, msg)
        self.nodes[node] = new

        if new != old:
            self._record("state_change", node=node, detail={"event": event, **proto.snapshot(new)})
        for dst, m in out:
            self._send(node, dst, m)

        now_ready = proto.is_ready(new)
        if now_ready and not was_ready:
            self._record("cs_enter", node=node)
            self.entered.append(node)
            if self.cs_duration is not None and not (self._manual_release and self._script):
                self.schedule_release(self.time + self.cs_duration, node)
        elif was_ready and not now_ready:
            self._record("cs_exit", node=node)
            if self._deferred[node]:
                self._deferred[node] -= 1
                self.schedule_request(self.time, node)

        for problem in proto.check_invariants(self.qs, new):
            log.warning("t=%d %s", self.time, problem)

    def _send(self, src: ProcessId, dst: ProcessId, msg: Any) -> None:
        edge = (src, dst)
        arrival = max(self.time + self.delay(src, dst), self._last_arrival.get(edge, 0))
        self._last_arrival[edge] = arrival
        self.channels.setdefault(edge, deque()).append((arrival, msg))
        self._record("send", src=src, dst=dst, msg=msg)

    def _record(self, kind: str, *, src: ProcessId | None = None, dst: ProcessId | None = None,
                msg: Any = None, node: ProcessId | None = None, detail: dict | None = None) -> None:
        self.trace.append(TraceRecord(
            tick=self.time,
            kind=kind,
            src=src,
            dst=dst,
            msg=self.protocol.trace_message(msg) if msg is not None else None,
            node=node,
            detail=detail,
        ))

    # ── Inspection ─────────────────────────────────────────────────────────

    def ready(self) -> list[ProcessId]:
        return [p for p, s in sorted(self.nodes.items()) if self.protocol.is_ready(s)]

    def waiting(self) -> list[ProcessId]:
        return [p for p, s in sorted(self.nodes.items()) if self.protocol.is_waiting(s)]

    def snapshot(self) -> dict[str, dict]:
        return {str(p): self.protocol.snapshot(s) for p, s in sorted(self.nodes.items())}

    def wait_for_edges(self) -> list[Edge]:
        edges: set[Edge] = set()
        for s in self.nodes.values():
            edges |= self.protocol.wait_for_edges(s)
        return sorted(edges)

    def blocked_on(self) -> list[Edge]:
        edges: set[Edge] = set()
        for s in self.nodes.values():
            edges |= self.protocol.blocked_on(s)
        return sorted(edges)

    def state_key(self) -> StateKey:
        return make_key(
            self.nodes,
            {edge: [m for _, m in q] for edge, q in self.channels.items()},
        )

    def result(self) -> RunResult:
        waiting = self.waiting()
        wait_for = self.wait_for_edges()
        return RunResult(
            name=self.name,
            algo=self.protocol.name,
            trace=list(self.trace),
            snapshots=dict(self.snapshots),
            final=self.snapshot(),
            entered=list(self.entered),
            waiting=waiting,
            wait_for=wait_for,
            blocked_on=self.blocked_on() if waiting else [],
            cycle=find_wait_cycle(wait_for) if waiting else None,
            steps=self.steps,
            ticks=self.time,
        )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Running scenarios
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def check_scenario(scenario: Scenario, qs: QuorumSystem) -> None:
    report = validate(qs)
    if not report.passed:
        raise ScenarioError(f"quorum file '{scenario.quorum_file}' fails validation")
    for ev in scenario.events:
        if not 1 <= ev.node <= qs.n:
            raise ScenarioError(f"event for unknown process {ev.node}")
    for i, step in enumerate(scenario.delivery_script or (), start=1):
        ids = [step.node] if step.kind == "release" else [step.src, step.dst]
        if any(not 1 <= p <= qs.n for p in ids):
            raise ScenarioError(f"script step {i} names an unknown process")


def build_world(scenario: Scenario, qs: QuorumSystem,
                settings: Settings | None = None) -> SimWorld:
    settings = settings or get_settings()
    check_scenario(scenario, qs)
    protocol = get_protocol(
        scenario.algo,
        count_self_messages=scenario.count_self_messages or settings.count_self_messages,
    )
    world = SimWorld(
        qs,
        protocol,
        delay=make_delay(scenario.delay_model, settings.seed),
        cs_duration=scenario.cs_duration or settings.cs_duration,
        script=scenario.delivery_script,
        name=scenario.name,
    )
    for ev in sorted(scenario.events, key=lambda e: (e.at, e.node)):
        world.schedule_request(ev.at, ev.node)
    return world


def run(scenario: Scenario, qs: QuorumSystem, *, settings: Settings | None = None,
        max_steps: int | None = None) -> RunResult:
    """
    Run a scenario to quiescence.

    Raises QuiescenceWithWaiters when the run stops with some process still
    waiting, StepLimitExceeded when it does not stop, and SafetyViolation the
    moment two processes are in the CS together.  Each error carries the
    partial RunResult.
    """
    settings = settings or get_settings()
    world = build_world(scenario, qs, settings)
    limit = max_steps or settings.max_steps

    while world.has_work():
        if world.steps >= limit or world.time > settings.max_ticks:
            raise StepLimitExceeded(limit, world.result())
        world.step()

    result = world.result()
    log.info("run '%s' (%s): %d steps, %d ticks, entered %s",
             scenario.name, scenario.algo, result.steps, result.ticks, result.entered)
    if result.waiting:
        raise QuiescenceWithWaiters(result, result.waiting)
    return result


# -----------------------------------------------------------------------------

def random_scenario(qs: QuorumSystem, *, seed: int | None = None, algo: str = "ring",
                    requests: int | None = None, horizon: int = 50,
                    nodes: Iterable[ProcessId] | None = None,
                    cs_duration: int | None = None, delay_lo: int | None = None,
                    delay_hi: int | None = None, quorum_file: str = "",
                    settings: Settings | None = None) -> Scenario:
    """
    Seeded random workload: ``requests`` request events over [0, horizon),
    drawn from ``nodes`` (default: every process).  Anything left as None
    comes from Settings.
    """
    settings = settings or get_settings()
    seed = settings.seed if seed is None else seed
    rng = random.Random(seed)
    pool = sorted(nodes) if nodes is not None else list(qs.processes)
    count = requests if requests is not None else qs.n
    events = [
        {"at": rng.randrange(horizon), "node": rng.choice(pool)}
        for _ in range(count)
    ]
    return Scenario(
        name=f"random-{seed}",
        quorum_file=quorum_file,
        algo=algo,
        events=events,
        cs_duration=cs_duration or settings.cs_duration,
        delay_model=DelayModel(
            kind="uniform",
            lo=delay_lo or settings.delay_lo,
            hi=delay_hi or settings.delay_hi,
            seed=seed,
        ),
    )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Statistics
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def collect_stats(trace: list[TraceRecord]) -> RunStats:
    """
    One row per CS request.  A request's window runs from its request
    state_change record to its cs_exit record; sends inside the window that
    serve the request are attributed to it.
    """
    rows: list[CsStatsRow] = []
    active: dict[ProcessId, CsStatsRow] = {}
    by_kind: Counter[str] = Counter()

    for rec in trace:
        match rec.kind:
            case "state_change" if rec.detail and rec.detail.get("event") == "request":
                row = CsStatsRow(origin=rec.node, request_tick=rec.tick)
                active[rec.node] = row
                rows.append(row)
            case "send":
                by_kind[rec.msg.kind] += 1
                owner = attributed_to(rec.src, rec.dst, rec.msg)
                if owner in active:
                    active[owner].messages_attributed += 1
            case "cs_enter" if rec.node in active:
                active[rec.node].cs_enter_tick = rec.tick
            case "cs_exit" if rec.node in active:
                active.pop(rec.node).cs_exit_tick = rec.tick

        if rec.kind == "state_change" and rec.detail:
            depth = len(rec.detail.get("queue", ()))
            for row in active.values():
                row.max_wait_queue = max(row.max_wait_queue, depth)

    return RunStats(rows=rows, messages_by_kind=dict(by_kind), total_messages=sum(by_kind.values()))


def wait_bound(k: int, concurrent: int, cs_duration: int, factor: int) -> int:
    return factor * k * max(concurrent, 1) * cs_duration


def delay_violations(stats: RunStats, k: int, cs_duration: int, factor: int) -> list[CsStatsRow]:
    """Requests whose wait exceeded factor·k·R·cs_duration, R = requests issued in the run."""
    bound = wait_bound(k, len(stats.rows), cs_duration, factor)
    return [r for r in stats.rows if r.wait_ticks is not None and r.wait_ticks > bound]


# -----------------------------------------------------------------------------
