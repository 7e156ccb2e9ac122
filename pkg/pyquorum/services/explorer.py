#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Bounded explicit-state explorer.

A global state is every node state plus the contents of every FIFO channel;
no ticks.  Each requester issues exactly one request up front, then the
enabled transitions are

  deliver   the head of any non-empty channel
  release   any node currently in the CS

The search is a depth-first walk with an explicit stack.  A state seen again
at a shallower depth is expanded again so the depth bound cannot hide paths.
Every state is checked for mutual exclusion (at most one Ready node); a state
with no enabled transition and some node still waiting is a deadlock.
Every distinct deadlock (by its blocked-on pairs) is kept with the shortest
path found to it; the verdict leads with the smallest blocked-on set.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional

from pyquorum.core.errors import BoundExceeded, ReplayDivergence, ScenarioError
from pyquorum.schemas import CounterexampleStep, DeadlockReport, VerdictFile
from pyquorum.services.protocols import Edge, Protocol, find_wait_cycle, get_protocol
from pyquorum.services.quorum_system import ProcessId, QuorumSystem
from pyquorum.services.simnet import RunResult, SimWorld, StateKey, canonical_hash

log = logging.getLogger(__name__)

# ("deliver", src, dst) or ("release", node)
Step = tuple


# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class ExploreConfig:
    qs: QuorumSystem
    algo: str = "ring"
    requesters: tuple[ProcessId, ...] = ()
    depth_bound: int = 200
    state_bound: int = 2_000_000
    count_self_messages: bool = False
    quorum_file: str = ""


@dataclass(frozen=True)
class Deadlock:
    path: tuple[Step, ...]
    blocked_on: list[Edge]
    wait_for_cycle: Optional[list[Edge]]

    def to_model(self) -> DeadlockReport:
        return DeadlockReport(
            blocked_on=self.blocked_on,
            wait_for_cycle=self.wait_for_cycle,
            counterexample=[step_to_model(s) for s in self.path],
        )


@dataclass
class Verdict:
    safety: Literal["ok", "violated"] = "ok"
    deadlock: Literal["none_found", "found"] = "none_found"
    states_visited: int = 0
    max_depth: int = 0
    frontier_truncated: bool = False
    safety_path: Optional[tuple[Step, ...]] = None
    deadlock_path: Optional[tuple[Step, ...]] = None
    ready: Optional[list[ProcessId]] = None
    wait_for_cycle: Optional[list[Edge]] = None
    blocked_on: Optional[list[Edge]] = None
    deadlocks: list[Deadlock] = field(default_factory=list)

    def add_deadlock(self, found: Deadlock) -> None:
        """Keep one entry per blocked-on set, with the shortest path seen."""
        for i, known in enumerate(self.deadlocks):
            if known.blocked_on == found.blocked_on:
                if len(found.path) < len(known.path):
                    self.deadlocks[i] = found
                break
        else:
            self.deadlocks.append(found)
        self.deadlocks.sort(key=lambda d: (d.blocked_on, len(d.path), d.path))

        first = self.deadlocks[0]
        self.deadlock = "found"
        self.deadlock_path = first.path
        self.wait_for_cycle = first.wait_for_cycle
        self.blocked_on = first.blocked_on

    @property
    def counterexample(self) -> Optional[tuple[Step, ...]]:
        if self.safety == "violated":
            return self.safety_path
        return self.deadlock_path

    @property
    def exhaustive(self) -> bool:
        return not self.frontier_truncated

    def to_model(self, cfg: ExploreConfig) -> VerdictFile:
        steps = self.counterexample
        return VerdictFile(
            quorum_file=cfg.quorum_file,
            algo=cfg.algo,
            requesters=list(cfg.requesters),
            depth_bound=cfg.depth_bound,
            state_bound=cfg.state_bound,
            count_self_messages=cfg.count_self_messages,
            safety=self.safety,
            deadlock=self.deadlock,
            states_visited=self.states_visited,
            max_depth=self.max_depth,
            frontier_truncated=self.frontier_truncated,
            counterexample=[step_to_model(s) for s in steps] if steps is not None else None,
            wait_for_cycle=self.wait_for_cycle,
            blocked_on=self.blocked_on,
            ready=self.ready,
            deadlocks=[d.to_model() for d in self.deadlocks],
        )


def step_to_model(step: Step) -> CounterexampleStep:
    if step[0] == "deliver":
        return CounterexampleStep(kind="deliver", src=step[1], dst=step[2])
    return CounterexampleStep(kind="release", node=step[1])


def step_from_model(step: CounterexampleStep) -> Step:
    if step.kind == "deliver":
        return ("deliver", step.src, step.dst)
    return ("release", step.node)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Explorer
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class Explorer:

    def __init__(self, cfg: ExploreConfig) -> None:
        self.cfg = cfg
        self.qs = cfg.qs
        self.protocol: Protocol = get_protocol(cfg.algo, cfg.count_self_messages)
        # state -> shallowest depth reached so far
        self.visited: dict[StateKey, int] = {}
        self._parent: dict[StateKey, tuple[StateKey, Step]] = {}

    # ── State space ────────────────────────────────────────────────────────

    def initial(self) -> StateKey:
        nodes = [self.protocol.initial(self.qs, p) for p in self.qs.processes]
        channels: dict[Edge, tuple] = {}
        for r in sorted(self.cfg.requesters):
            nodes[r - 1], out = self.protocol.request(self.qs, nodes[r - 1])
            for dst, msg in out:
                channels[(r, dst)] = channels.get((r, dst), ()) + (msg,)
        return tuple(nodes), tuple(sorted(channels.items()))

    def enabled(self, key: StateKey) -> list[Step]:
        nodes, channels = key
        steps: list[Step] = [("deliver", src, dst) for (src, dst), _ in channels]
        steps += [
            ("release", i + 1) for i, s in enumerate(nodes) if self.protocol.is_ready(s)
        ]
        return steps

    def apply(self, key: StateKey, step: Step) -> StateKey:
        nodes = list(key[0])
        channels = dict(key[1])

        if step[0] == "deliver":
            _, src, dst = step
            msgs = channels[(src, dst)]
            if len(msgs) > 1:
                channels[(src, dst)] = msgs[1:]
            else:
                del channels[(src, dst)]
            pid = dst
            nodes[pid - 1], out = self.protocol.deliver(self.qs, nodes[pid - 1], msgs[0])
        else:
            pid = step[1]
            nodes[pid - 1], out = self.protocol.release(self.qs, nodes[pid - 1])

        for dst, msg in out:
            channels[(pid, dst)] = channels.get((pid, dst), ()) + (msg,)
        return tuple(nodes), tuple(sorted(channels.items()))

    def follow(self, steps: tuple[Step, ...]) -> StateKey:
        key = self.initial()
        for step in steps:
            if step not in self.enabled(key):
                raise ReplayDivergence(f"step {step} is not enabled")
            key = self.apply(key, step)
        return key

    def ready(self, key: StateKey) -> list[ProcessId]:
        return [i + 1 for i, s in enumerate(key[0]) if self.protocol.is_ready(s)]

    def waiting(self, key: StateKey) -> list[ProcessId]:
        return [i + 1 for i, s in enumerate(key[0]) if self.protocol.is_waiting(s)]

    def _path(self, key: StateKey) -> tuple[Step, ...]:
        steps: list[Step] = []
        while key in self._parent:
            key, step = self._parent[key]
            steps.append(step)
        return tuple(reversed(steps))

    # ── Search ─────────────────────────────────────────────────────────────

    def run(self, prefix: tuple[Step, ...] = ()) -> Verdict:
        cfg = self.cfg
        verdict = Verdict()

        root = self.follow(prefix)
        self.visited = {root: len(prefix)}
        self._parent = {}
        prefix_len = len(prefix)
        stack: list[tuple[StateKey, int]] = [(root, prefix_len)]

        while stack:
            key, depth = stack.pop()
            if self.visited.get(key, depth) < depth:
                continue        # superseded by a shallower visit
            verdict.max_depth = max(verdict.max_depth, depth)

            ready = self.ready(key)
            if len(ready) > 1:
                verdict.safety = "violated"
                verdict.ready = ready
                verdict.safety_path = prefix + self._path(key)
                log.warning("safety violated: %s in the CS together", ready)
                break

            steps = self.enabled(key)
            if not steps:
                if self.waiting(key):
                    self._record_deadlock(verdict, key, prefix)
                continue

            if depth >= cfg.depth_bound:
                verdict.frontier_truncated = True
                continue

            for step in reversed(steps):
                nxt = self.apply(key, step)
                seen = self.visited.get(nxt)
                if seen is not None and seen <= depth + 1:
                    continue
                if seen is None and len(self.visited) >= cfg.state_bound:
                    verdict.frontier_truncated = True
                    continue
                self.visited[nxt] = depth + 1
                self._parent[nxt] = (key, step)
                stack.append((nxt, depth + 1))

        verdict.states_visited = len(self.visited)
        log.info("explored %d states (max depth %d, truncated=%s): safety=%s deadlock=%s",
                 verdict.states_visited, verdict.max_depth, verdict.frontier_truncated,
                 verdict.safety, verdict.deadlock)
        return verdict

    def _record_deadlock(self, verdict: Verdict, key: StateKey, prefix: tuple[Step, ...]) -> None:
        edges: set[Edge] = set()
        blocked: set[Edge] = set()
        for s in key[0]:
            edges |= self.protocol.wait_for_edges(s)
            blocked |= self.protocol.blocked_on(s)
        path = prefix + self._path(key)
        verdict.add_deadlock(Deadlock(path=path, blocked_on=sorted(blocked),
                                      wait_for_cycle=find_wait_cycle(edges)))
        log.info("deadlock after %d steps, waiting %s", len(path), self.waiting(key))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Entry points
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _explore_branch(cfg: ExploreConfig, step: Step) -> tuple[Verdict, set[str]]:
    ex = Explorer(cfg)
    verdict = ex.run(prefix=(step,))
    return verdict, {canonical_hash(k) for k in ex.visited}


def explore(cfg: ExploreConfig, jobs: int = 1, *, strict: bool = False) -> Verdict:
    """
    Explore from the state where every requester has asked for the CS.

    With ``jobs > 1`` each successor of the initial state is searched in its
    own process and the verdicts are merged in successor order.  Each branch
    applies ``state_bound`` on its own.

    A truncated search logs a warning; with ``strict`` it raises BoundExceeded
    carrying the partial verdict.
    """
    verdict = _explore(cfg, jobs)
    if verdict.frontier_truncated:
        log.warning("%s search truncated at depth %d / %d states; verdict is partial",
                    cfg.algo, cfg.depth_bound, cfg.state_bound)
        if strict:
            raise BoundExceeded(verdict)
    return verdict


def _explore(cfg: ExploreConfig, jobs: int) -> Verdict:
    if jobs <= 1:
        return Explorer(cfg).run()

    ex = Explorer(cfg)
    root = ex.initial()
    steps = ex.enabled(root)
    if len(ex.ready(root)) > 1 or not steps:
        return ex.run()

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_explore_branch, [cfg] * len(steps), steps))

    merged = Verdict(max_depth=0)
    seen: set[str] = {canonical_hash(root)}
    for verdict, hashes in results:
        seen |= hashes
        merged.max_depth = max(merged.max_depth, verdict.max_depth)
        merged.frontier_truncated |= verdict.frontier_truncated
        if verdict.safety == "violated" and merged.safety == "ok":
            merged.safety = "violated"
            merged.safety_path = verdict.safety_path
            merged.ready = verdict.ready
        for found in verdict.deadlocks:
            merged.add_deadlock(found)
    merged.states_visited = len(seen)
    return merged


# -----------------------------------------------------------------------------

@dataclass
class Replay:
    result: RunResult
    ready: list[ProcessId] = field(default_factory=list)
    waiting: list[ProcessId] = field(default_factory=list)


def replay(cfg: ExploreConfig, steps: tuple[Step, ...] | list[CounterexampleStep],
           expect: Literal["safety", "deadlock"] | None = None) -> Replay:
    """
    Re-run a counterexample in the simulator: requesters ask at tick 0, then
    the steps are played as a delivery script with manual releases.  The final
    simulator state must equal the explorer's, and show the expected defect.
    """
    steps = tuple(step_from_model(s) if isinstance(s, CounterexampleStep) else s for s in steps)
    target = Explorer(cfg).follow(steps)

    protocol = get_protocol(cfg.algo, cfg.count_self_messages)
    world = SimWorld(
        cfg.qs,
        protocol,
        cs_duration=None,
        script=[step_to_model(s).to_script() for s in steps],
        monitor_safety=False,
        name="replay",
    )
    for r in sorted(cfg.requesters):
        world.schedule_request(0, r)

    try:
        while world.pending_events() or not world.script_exhausted:
            world.step()
    except ScenarioError as exc:
        raise ReplayDivergence(f"replay diverged: {exc.detail}") from exc

    if world.state_key() != target:
        raise ReplayDivergence("replayed state differs from the explored state")

    out = Replay(result=world.result(), ready=world.ready(), waiting=world.waiting())
    if expect == "safety" and len(out.ready) < 2:
        raise ReplayDivergence(f"expected two processes in the CS, found {out.ready}")
    if expect == "deadlock" and (not out.waiting or world.in_flight() or out.ready):
        raise ReplayDivergence("expected a deadlock at the end of the replay")
    return out


# -----------------------------------------------------------------------------
