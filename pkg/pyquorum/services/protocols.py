#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Protocol adapters.

The simulator and the explorer drive any algorithm through the same small
interface: initial state, request, release, deliver, plus the inspection
hooks needed for monitoring and deadlock reporting.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterable
from typing import Any

import networkx as nx

from pyquorum.schemas import TraceMessage
from pyquorum.services import maekawa, ring_mutex
from pyquorum.services.quorum_system import ProcessId, QuorumSystem
from pyquorum.services.ring_mutex import Stat

Edge = tuple[ProcessId, ProcessId]

# arbiter replies belong to the request of the process they are addressed to
_REPLY_KINDS = frozenset({"LOCKED", "FAILED", "INQUIRE"})


# -----------------------------------------------------------------------------

class Protocol(ABC):
    name: str = ""

    @abstractmethod
    def initial(self, qs: QuorumSystem, pid: ProcessId) -> Any: ...

    @abstractmethod
    def request(self, qs: QuorumSystem, state: Any) -> tuple[Any, tuple]: ...

    @abstractmethod
    def release(self, qs: QuorumSystem, state: Any) -> tuple[Any, tuple]: ...

    @abstractmethod
    def deliver(self, qs: QuorumSystem, state: Any, msg: Any) -> tuple[Any, tuple]: ...

    @abstractmethod
    def snapshot(self, state: Any) -> dict: ...

    @abstractmethod
    def wait_for_edges(self, state: Any) -> frozenset[Edge]: ...

    @abstractmethod
    def blocked_on(self, state: Any) -> frozenset[Edge]: ...

    @abstractmethod
    def check_invariants(self, qs: QuorumSystem, state: Any) -> list[str]: ...

    @abstractmethod
    def trace_message(self, msg: Any) -> TraceMessage: ...

    def stat(self, state: Any) -> Stat:
        return state.stat

    def is_ready(self, state: Any) -> bool:
        return state.stat is Stat.READY

    def is_waiting(self, state: Any) -> bool:
        return state.stat is Stat.WAIT


# -----------------------------------------------------------------------------

class RingProtocol(Protocol):
    name = "ring"

    def initial(self, qs, pid):
        return ring_mutex.initial_state(qs, pid)

    def request(self, qs, state):
        return ring_mutex.on_request_cs(qs, state)

    def release(self, qs, state):
        return ring_mutex.on_release_cs(qs, state)

    def deliver(self, qs, state, msg):
        return ring_mutex.on_message(qs, state, msg)

    def snapshot(self, state):
        return ring_mutex.snapshot(state)

    def wait_for_edges(self, state):
        return ring_mutex.wait_for_edges(state)

    def blocked_on(self, state):
        return frozenset((p, state.id) for p in state.queue[1:])

    def check_invariants(self, qs, state):
        return ring_mutex.check_invariants(qs, state)

    def trace_message(self, msg):
        return TraceMessage(kind=msg.kind, origin=msg.origin)


# -----------------------------------------------------------------------------

class MaekawaProtocol(Protocol):

    def __init__(self, mode: maekawa.Mode, loopback: bool = False) -> None:
        self.mode = mode
        self.loopback = loopback
        self.name = f"maekawa-{mode}"

    def initial(self, qs, pid):
        return maekawa.initial_state(qs, pid, mode=self.mode, loopback=self.loopback)

    def request(self, qs, state):
        return maekawa.mk_request_cs(qs, state)

    def release(self, qs, state):
        return maekawa.mk_release_cs(qs, state)

    def deliver(self, qs, state, msg):
        return maekawa.mk_on_message(qs, state, msg)

    def snapshot(self, state):
        return maekawa.snapshot(state)

    def wait_for_edges(self, state):
        return maekawa.wait_for_edges(state)

    def blocked_on(self, state):
        return maekawa.blocked_on(state)

    def check_invariants(self, qs, state):
        return maekawa.check_invariants(qs, state)

    def trace_message(self, msg):
        return TraceMessage(
            kind=msg.kind,
            origin=msg.origin,
            ts=msg.ts.as_list() if msg.ts is not None else None,
        )


# -----------------------------------------------------------------------------

def get_protocol(algo: str, count_self_messages: bool = False) -> Protocol:
    match algo:
        case "ring":
            return RingProtocol()
        case "maekawa-basic":
            return MaekawaProtocol("basic", loopback=count_self_messages)
        case "maekawa-full":
            return MaekawaProtocol("full", loopback=count_self_messages)
    raise ValueError(f"unknown algorithm '{algo}'")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Shared helpers
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def attributed_to(src: ProcessId, dst: ProcessId, msg: TraceMessage) -> ProcessId:
    """The process whose CS request a message serves."""
    if msg.kind in _REPLY_KINDS:
        return dst
    return msg.origin


def wait_for_graph(edges: Iterable[Edge]) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_edges_from(sorted(edges))
    return graph


def find_wait_cycle(edges: Iterable[Edge]) -> list[Edge] | None:
    """First cycle of the wait-for graph, rotated to start at its smallest process."""
    graph = wait_for_graph(edges)
    cycles = sorted(
        (_rotate(c) for c in nx.simple_cycles(graph)),
        key=lambda c: (len(c), c),
    )
    if not cycles:
        return None
    nodes = cycles[0]
    return [(nodes[i], nodes[(i + 1) % len(nodes)]) for i in range(len(nodes))]


def _rotate(cycle: list[ProcessId]) -> list[ProcessId]:
    i = cycle.index(min(cycle))
    return cycle[i:] + cycle[:i]


# -----------------------------------------------------------------------------
