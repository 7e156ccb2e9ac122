#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Ring-ordered quorum mutual exclusion
====================================
Each process P_i keeps

  stat        Passive | Wait | Ready
  queue       F_i, FIFO of origins whose request passed through (or waits at) P_i
  blocked     B_i, bookkeeping only, exported in snapshots
  circulated  set once P_i's own request has travelled the whole ring and come back
  stamps      request number of every queued origin

A request Req(i) walks the ascending circular list L_i of S_i one member at a
time.  A member forwards Req(p) only while p heads its queue, so when Req(i)
returns to i every member of S_i is held for i.  P_i enters the CS when its
own request has circulated and i heads F_i.

Every request carries its origin's request number.  A Req for a newer
request than the queued one means the origin already left the CS and its Rel
is still in flight: the old entry is released on the spot, and the late Rel
no longer matches anything.

All handlers are pure: (quorums, state, event) -> (state', outbox), where the
outbox is an ordered tuple of (destination, RingMessage).  Forwarding always
targets the successor of the current node on the ring of the message origin.
A message addressed to the sender itself (singleton rings) is applied locally
and never reaches the outbox.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Literal

from pyquorum.core.errors import NotInCriticalSection, NotPassive, UnexpectedMessage
from pyquorum.services.quorum_system import (
    ProcessId, QuorumSystem, RingView, min_of, ring_of, successor,
)

log = logging.getLogger(__name__)


# -----------------------------------------------------------------------------

class Stat(str, Enum):
    PASSIVE = "Passive"
    WAIT    = "Wait"
    READY   = "Ready"


@dataclass(frozen=True, slots=True)
class RingMessage:
    kind:   Literal["Req", "Rel"]
    origin: ProcessId
    seq:    int = 0

    def __str__(self) -> str:
        return f"{self.kind}({self.origin})"


@dataclass(frozen=True, slots=True)
class RingNodeState:
    id:         ProcessId
    stat:       Stat
    group:      RingView
    queue:      tuple[ProcessId, ...] = ()
    blocked:    bool = False
    circulated: bool = False
    requests:   int = 0
    stamps:     tuple[tuple[ProcessId, int], ...] = ()

    @property
    def head(self) -> ProcessId | None:
        return self.queue[0] if self.queue else None

    def stamp(self, origin: ProcessId) -> int:
        """Request number of the queued entry for ``origin`` (0 if unknown)."""
        return dict(self.stamps).get(origin, 0)


Outbox = tuple[tuple[ProcessId, RingMessage], ...]


# -----------------------------------------------------------------------------

def initial_state(qs: QuorumSystem, pid: ProcessId) -> RingNodeState:
    return RingNodeState(id=pid, stat=Stat.PASSIVE, group=ring_of(qs, pid))


def _req(origin: ProcessId, seq: int) -> RingMessage:
    return RingMessage("Req", origin, seq)


def _rel(origin: ProcessId, seq: int) -> RingMessage:
    return RingMessage("Rel", origin, seq)


def _stamped(stamps: tuple[tuple[ProcessId, int], ...], origin: ProcessId,
             seq: int | None) -> tuple[tuple[ProcessId, int], ...]:
    """``stamps`` with ``origin`` set to ``seq``, or dropped when ``seq`` is None."""
    kept = {p: n for p, n in stamps if p != origin}
    if seq is not None:
        kept[origin] = seq
    return tuple(sorted(kept.items()))


# -----------------------------------------------------------------------------

def _settle(qs: QuorumSystem, s: RingNodeState,
            out: list[tuple[ProcessId, RingMessage]]) -> tuple[RingNodeState, Outbox]:
    """Apply self-addressed messages locally; keep the rest in send order."""
    network: list[tuple[ProcessId, RingMessage]] = []
    pending = list(out)
    while pending:
        dst, msg = pending.pop(0)
        if dst != s.id:
            network.append((dst, msg))
            continue
        if msg.kind == "Req":
            s, more = _receive_req(qs, s, msg.origin, msg.seq)
        else:
            s, more = _receive_rel(qs, s, msg.origin, msg.seq)
        pending[0:0] = more
    return s, tuple(network)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Handlers
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def on_request_cs(qs: QuorumSystem, s: RingNodeState) -> tuple[RingNodeState, Outbox]:
    if s.stat is not Stat.PASSIVE:
        raise NotPassive(s.id, s.stat.value)

    ring = s.group
    seq = s.requests + 1
    out: list[tuple[ProcessId, RingMessage]] = []
    if s.id == min_of(ring):
        queue = s.queue + (s.id,)
        blocked = s.blocked
        if queue[0] == s.id:
            out.append((successor(ring, s.id), _req(s.id, seq)))
            blocked = True
        s = replace(s, stat=Stat.WAIT, queue=queue, blocked=blocked, requests=seq,
                    stamps=_stamped(s.stamps, s.id, seq))
    else:
        # for the ring maximum the successor is Min(L_i)
        out.append((successor(ring, s.id), _req(s.id, seq)))
        s = replace(s, stat=Stat.WAIT, requests=seq)

    log.debug("node %d requests the CS", s.id)
    return _settle(qs, s, out)


# -----------------------------------------------------------------------------

def _receive_req(qs: QuorumSystem, s: RingNodeState, origin: ProcessId,
                 seq: int) -> tuple[RingNodeState, list[tuple[ProcessId, RingMessage]]]:
    ring = ring_of(qs, origin)
    if s.id not in ring:
        raise UnexpectedMessage(s.id, f"Req({origin}) from outside S_{origin}")

    if origin in s.queue and origin != s.id:
        held = s.stamp(origin)
        if seq <= held:
            log.debug("node %d absorbs duplicate Req(%d)", s.id, origin)
            return s, []
        # newer request: the origin has left the CS for the held one
        log.debug("node %d drops stale entry %d#%d for #%d", s.id, origin, held, seq)
        s, out = _receive_rel(qs, s, origin, held)
        s, more = _receive_req(qs, s, origin, seq)
        return s, out + more

    queue = s.queue if origin in s.queue else s.queue + (origin,)
    stamps = _stamped(s.stamps, origin, seq)

    if origin == s.id:
        if s.stat is not Stat.WAIT or s.circulated:
            raise UnexpectedMessage(s.id, f"own Req({origin}) while {s.stat.value}")
        if queue[0] == s.id:
            return replace(s, queue=queue, stamps=stamps, circulated=True,
                           stat=Stat.READY, blocked=True), []
        return replace(s, queue=queue, stamps=stamps, circulated=True), []

    if queue[0] == origin:
        nxt = successor(ring, s.id)
        return replace(s, queue=queue, stamps=stamps, blocked=True), [(nxt, _req(origin, seq))]

    return replace(s, queue=queue, stamps=stamps), []


def on_receive_req(qs: QuorumSystem, s: RingNodeState, origin: ProcessId,
                   seq: int = 0) -> tuple[RingNodeState, Outbox]:
    s, out = _receive_req(qs, s, origin, seq)
    return _settle(qs, s, out)


# -----------------------------------------------------------------------------

def on_release_cs(qs: QuorumSystem, s: RingNodeState) -> tuple[RingNodeState, Outbox]:
    if s.stat is not Stat.READY:
        raise NotInCriticalSection(s.id, s.stat.value)

    out: list[tuple[ProcessId, RingMessage]] = [
        (p, _rel(s.id, s.requests)) for p in s.group.members if p != s.id
    ]
    queue = s.queue[1:]
    stamps = _stamped(s.stamps, s.id, None)
    if queue:
        h = queue[0]
        out.append((successor(ring_of(qs, h), s.id), _req(h, s.stamp(h))))
        blocked = True
    else:
        blocked = False

    log.debug("node %d leaves the CS", s.id)
    s = replace(s, stat=Stat.PASSIVE, queue=queue, stamps=stamps, blocked=blocked,
                circulated=False)
    return _settle(qs, s, out)


# -----------------------------------------------------------------------------

def _receive_rel(qs: QuorumSystem, s: RingNodeState, releaser: ProcessId,
                 seq: int) -> tuple[RingNodeState, list[tuple[ProcessId, RingMessage]]]:
    if releaser not in s.queue or s.stamp(releaser) != seq:
        log.debug("node %d absorbs Rel(%d) for an absent entry", s.id, releaser)
        return s, []

    was_head = s.queue[0] == releaser
    queue = tuple(p for p in s.queue if p != releaser)
    s = replace(s, queue=queue, stamps=_stamped(s.stamps, releaser, None))
    if not queue:
        return replace(s, blocked=False), []
    if not was_head:
        # the head was already forwarded
        return replace(s, blocked=True), []

    h = queue[0]
    if h == s.id:
        if s.circulated:
            return replace(s, blocked=True, stat=Stat.READY), []
        return replace(s, blocked=True), [(successor(s.group, s.id), _req(s.id, s.requests))]
    return replace(s, blocked=True), [(successor(ring_of(qs, h), s.id), _req(h, s.stamp(h)))]


def on_receive_rel(qs: QuorumSystem, s: RingNodeState, releaser: ProcessId,
                   seq: int = 0) -> tuple[RingNodeState, Outbox]:
    s, out = _receive_rel(qs, s, releaser, seq)
    return _settle(qs, s, out)


# -----------------------------------------------------------------------------

def on_message(qs: QuorumSystem, s: RingNodeState,
               msg: RingMessage) -> tuple[RingNodeState, Outbox]:
    if msg.kind == "Req":
        return on_receive_req(qs, s, msg.origin, msg.seq)
    return on_receive_rel(qs, s, msg.origin, msg.seq)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Inspection
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def wait_for_edges(s: RingNodeState) -> frozenset[tuple[ProcessId, ProcessId]]:
    """(waiter, holder) for every queued origin parked behind the head."""
    if len(s.queue) <= 1:
        return frozenset()
    head = s.queue[0]
    return frozenset((p, head) for p in s.queue[1:])


def snapshot(s: RingNodeState) -> dict:
    return {"stat": s.stat.value, "queue": list(s.queue), "blocked": s.blocked}


def check_invariants(qs: QuorumSystem, s: RingNodeState) -> list[str]:
    problems: list[str] = []
    if s.stat is Stat.READY and s.head != s.id:
        problems.append(f"node {s.id} Ready but head is {s.head}")
    if len(set(s.queue)) != len(s.queue):
        problems.append(f"node {s.id} queue has duplicates {list(s.queue)}")
    for p in s.queue:
        if s.id not in qs.group(p):
            problems.append(f"node {s.id} queues {p} but is not in S_{p}")
    if s.circulated and s.stat is Stat.PASSIVE:
        problems.append(f"node {s.id} circulated while Passive")
    for p, _ in s.stamps:
        if p not in s.queue:
            problems.append(f"node {s.id} keeps a request number for unqueued {p}")
    return problems


# -----------------------------------------------------------------------------
