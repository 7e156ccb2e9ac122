#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Maekawa baseline
================
Maekawa's quorum algorithm as a pure per-node state machine.  Every node is
both a requester (collecting LOCKED from all of S_i) and an arbiter (granting
its single lock to one requester at a time).

Two modes:

  basic   REQUEST / LOCKED / RELEASE only, FIFO arbiter queues, timestamps
          ignored.  Deadlocks under unlucky interleavings.
  full    adds FAILED / INQUIRE / RELINQUISH and orders requests by Lamport
          timestamps (clock, id).

Self-addressed messages are applied locally unless ``loopback`` is set, in
which case they travel through the network like any other message.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal

from pyquorum.core.errors import NotInCriticalSection, NotPassive, UnexpectedMessage
from pyquorum.services.quorum_system import ProcessId, QuorumSystem
from pyquorum.services.ring_mutex import Stat

log = logging.getLogger(__name__)

MaekawaKind = Literal["REQUEST", "LOCKED", "RELEASE", "FAILED", "INQUIRE", "RELINQUISH"]
Mode = Literal["basic", "full"]


# -----------------------------------------------------------------------------

@dataclass(frozen=True, slots=True, order=True)
class Timestamp:
    """(H_i, i): Lamport clock value with the process id as tiebreaker."""

    clock: int
    id:    ProcessId

    def as_list(self) -> list[int]:
        return [self.clock, self.id]


@dataclass(frozen=True, slots=True)
class MaekawaMessage:
    kind:   MaekawaKind
    origin: ProcessId                 # sender
    ts:     Timestamp | None = None   # REQUEST only

    def __str__(self) -> str:
        if self.ts is not None:
            return f"{self.kind}({self.origin},{self.ts.clock})"
        return f"{self.kind}({self.origin})"


@dataclass(frozen=True, slots=True)
class OwnRequest:
    ts:        Timestamp
    grants:    frozenset[ProcessId] = frozenset()
    # arbiters that answered FAILED (or were relinquished to) and have not re-granted since
    faileds:   frozenset[ProcessId] = frozenset()
    # INQUIREs received before any FAILED; answered once one arrives
    inquiries: frozenset[ProcessId] = frozenset()


@dataclass(frozen=True, slots=True)
class MaekawaNodeState:
    id:          ProcessId
    group:       tuple[ProcessId, ...]
    mode:        Mode = "full"
    clock:       int = 0
    stat:        Stat = Stat.PASSIVE
    request:     OwnRequest | None = None
    # arbiter side
    locked_for:  tuple[ProcessId, Timestamp] | None = None
    pending:     tuple[tuple[Timestamp, ProcessId], ...] = ()
    inquired:    bool = False
    failed_sent: frozenset[ProcessId] = field(default=frozenset())
    loopback:    bool = False


Outbox = tuple[tuple[ProcessId, MaekawaMessage], ...]
_Out = list[tuple[ProcessId, MaekawaMessage]]


# -----------------------------------------------------------------------------

def initial_state(qs: QuorumSystem, pid: ProcessId, mode: Mode = "full",
                  loopback: bool = False) -> MaekawaNodeState:
    return MaekawaNodeState(
        id=pid,
        group=tuple(sorted(qs.group(pid))),
        mode=mode,
        loopback=loopback,
    )


# -----------------------------------------------------------------------------

def _settle(s: MaekawaNodeState, out: _Out) -> tuple[MaekawaNodeState, Outbox]:
    if s.loopback:
        return s, tuple(out)
    network: _Out = []
    pending = list(out)
    while pending:
        dst, msg = pending.pop(0)
        if dst != s.id:
            network.append((dst, msg))
            continue
        s, more = _dispatch(s, msg)
        pending[0:0] = more
    return s, tuple(network)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Requester side
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def mk_request_cs(qs: QuorumSystem, s: MaekawaNodeState) -> tuple[MaekawaNodeState, Outbox]:
    if s.stat is not Stat.PASSIVE:
        raise NotPassive(s.id, s.stat.value)
    clock = s.clock + 1
    ts = Timestamp(clock, s.id)
    s = replace(s, clock=clock, stat=Stat.WAIT, request=OwnRequest(ts=ts))
    out: _Out = [(p, MaekawaMessage("REQUEST", s.id, ts)) for p in s.group]
    log.debug("node %d requests the CS with ts %s", s.id, ts)
    return _settle(s, out)


def mk_release_cs(qs: QuorumSystem, s: MaekawaNodeState) -> tuple[MaekawaNodeState, Outbox]:
    if s.stat is not Stat.READY:
        raise NotInCriticalSection(s.id, s.stat.value)
    s = replace(s, stat=Stat.PASSIVE, request=None)
    out: _Out = [(p, MaekawaMessage("RELEASE", s.id)) for p in s.group]
    log.debug("node %d leaves the CS", s.id)
    return _settle(s, out)


# -----------------------------------------------------------------------------

def _relinquish(s: MaekawaNodeState, req: OwnRequest,
                arbiters: frozenset[ProcessId]) -> tuple[OwnRequest, _Out]:
    yielded = arbiters & req.grants
    req = replace(
        req,
        grants=req.grants - yielded,
        faileds=req.faileds | yielded,
        inquiries=req.inquiries - arbiters,
    )
    return req, [(j, MaekawaMessage("RELINQUISH", s.id)) for j in sorted(yielded)]


def _on_locked(s: MaekawaNodeState, j: ProcessId) -> tuple[MaekawaNodeState, _Out]:
    req = s.request
    if s.stat is not Stat.WAIT or req is None:
        raise UnexpectedMessage(s.id, f"LOCKED({j}) while {s.stat.value}")
    req = replace(req, grants=req.grants | {j}, faileds=req.faileds - {j})
    if req.grants == frozenset(s.group):
        return replace(s, request=replace(req, inquiries=frozenset()), stat=Stat.READY), []
    return replace(s, request=req), []


def _on_failed(s: MaekawaNodeState, j: ProcessId) -> tuple[MaekawaNodeState, _Out]:
    req = s.request
    if s.stat is not Stat.WAIT or req is None:
        log.debug("node %d ignores FAILED(%d) while %s", s.id, j, s.stat.value)
        return s, []
    req = replace(req, faileds=req.faileds | {j})
    req, out = _relinquish(s, req, req.inquiries)
    return replace(s, request=req), out


def _on_inquire(s: MaekawaNodeState, j: ProcessId) -> tuple[MaekawaNodeState, _Out]:
    req = s.request
    if s.stat is not Stat.WAIT or req is None or j not in req.grants:
        # stale: already in the CS, released, or the grant was given back
        return s, []
    if req.faileds:
        req, out = _relinquish(s, req, frozenset({j}))
        return replace(s, request=req), out
    return replace(s, request=replace(req, inquiries=req.inquiries | {j})), []


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Arbiter side
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _grant_next(s: MaekawaNodeState) -> tuple[MaekawaNodeState, _Out]:
    if not s.pending:
        return replace(s, locked_for=None, inquired=False), []
    if s.mode == "basic":
        chosen = s.pending[0]
    else:
        chosen = min(s.pending)
    ts, p = chosen
    pending = tuple(e for e in s.pending if e != chosen)
    s = replace(
        s,
        locked_for=(p, ts),
        pending=pending,
        inquired=False,
        failed_sent=s.failed_sent - {p},
    )
    return s, [(p, MaekawaMessage("LOCKED", s.id))]


def _on_request(s: MaekawaNodeState, i: ProcessId, ts: Timestamp) -> tuple[MaekawaNodeState, _Out]:
    if s.locked_for is None:
        return replace(s, locked_for=(i, ts)), [(i, MaekawaMessage("LOCKED", s.id))]

    earlier = s.pending
    s = replace(s, pending=earlier + ((ts, i),))
    if s.mode == "basic":
        return s, []

    holder, holder_ts = s.locked_for
    out: _Out = []
    if holder_ts < ts or any(pts < ts for pts, _ in earlier):
        out.append((i, MaekawaMessage("FAILED", s.id)))
        return replace(s, failed_sent=s.failed_sent | {i}), out

    # i now outranks the holder and everything already waiting here
    failed_sent = set(s.failed_sent)
    for _, p in earlier:
        if p not in failed_sent:
            out.append((p, MaekawaMessage("FAILED", s.id)))
            failed_sent.add(p)
    inquired = s.inquired
    if not inquired:
        out.append((holder, MaekawaMessage("INQUIRE", s.id)))
        inquired = True
    return replace(s, failed_sent=frozenset(failed_sent), inquired=inquired), out


def _on_release(s: MaekawaNodeState, i: ProcessId) -> tuple[MaekawaNodeState, _Out]:
    if s.locked_for is None or s.locked_for[0] != i:
        raise UnexpectedMessage(s.id, f"RELEASE({i}) while locked for {s.locked_for}")
    return _grant_next(s)


def _on_relinquish(s: MaekawaNodeState, k: ProcessId) -> tuple[MaekawaNodeState, _Out]:
    if s.locked_for is None or s.locked_for[0] != k:
        raise UnexpectedMessage(s.id, f"RELINQUISH({k}) while locked for {s.locked_for}")
    _, k_ts = s.locked_for
    s = replace(s, pending=s.pending + ((k_ts, k),), failed_sent=s.failed_sent | {k})
    return _grant_next(s)


# -----------------------------------------------------------------------------

def _dispatch(s: MaekawaNodeState, msg: MaekawaMessage) -> tuple[MaekawaNodeState, _Out]:
    if msg.ts is not None:
        s = replace(s, clock=max(s.clock, msg.ts.clock) + 1)
    else:
        s = replace(s, clock=s.clock + 1)

    if msg.kind in ("FAILED", "INQUIRE", "RELINQUISH") and s.mode == "basic":
        raise UnexpectedMessage(s.id, f"{msg} in basic mode")

    match msg.kind:
        case "REQUEST":
            if msg.ts is None:
                raise UnexpectedMessage(s.id, f"{msg} without timestamp")
            return _on_request(s, msg.origin, msg.ts)
        case "LOCKED":
            return _on_locked(s, msg.origin)
        case "RELEASE":
            return _on_release(s, msg.origin)
        case "FAILED":
            return _on_failed(s, msg.origin)
        case "INQUIRE":
            return _on_inquire(s, msg.origin)
        case "RELINQUISH":
            return _on_relinquish(s, msg.origin)
    raise UnexpectedMessage(s.id, str(msg))


def mk_on_message(qs: QuorumSystem, s: MaekawaNodeState,
                  msg: MaekawaMessage) -> tuple[MaekawaNodeState, Outbox]:
    s, out = _dispatch(s, msg)
    return _settle(s, out)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Inspection
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def wait_for_edges(s: MaekawaNodeState) -> frozenset[tuple[ProcessId, ProcessId]]:
    """(waiter, holder) for every request queued at this arbiter behind its lock holder."""
    if s.locked_for is None:
        return frozenset()
    holder = s.locked_for[0]
    return frozenset((p, holder) for _, p in s.pending if p != holder)


def blocked_on(s: MaekawaNodeState) -> frozenset[tuple[ProcessId, ProcessId]]:
    """(waiter, arbiter) pairs: "2 waits 8"."""
    if s.locked_for is None:
        return frozenset()
    return frozenset((p, s.id) for _, p in s.pending)


def snapshot(s: MaekawaNodeState) -> dict:
    return {
        "stat":       s.stat.value,
        "queue":      [p for _, p in s.pending],
        "blocked":    s.locked_for is not None,
        "locked_for": s.locked_for[0] if s.locked_for else None,
        "grants":     sorted(s.request.grants) if s.request else [],
    }


def check_invariants(qs: QuorumSystem, s: MaekawaNodeState) -> list[str]:
    problems: list[str] = []
    if s.stat is Stat.READY and (s.request is None or s.request.grants != frozenset(s.group)):
        problems.append(f"node {s.id} Ready without all grants")
    if s.locked_for is not None and any(p == s.locked_for[0] for _, p in s.pending):
        problems.append(f"node {s.id} holder {s.locked_for[0]} also pending")
    return problems


# -----------------------------------------------------------------------------
