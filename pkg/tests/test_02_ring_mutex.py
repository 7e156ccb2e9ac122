#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""Tests for the ring-ordered handlers, one worked step at a time."""
# -----------------------------------------------------------------------------

from __future__ import annotations

import random
from collections import deque
from dataclasses import replace

import pytest

from pyquorum.core.errors import NotInCriticalSection, NotPassive, UnexpectedMessage
from pyquorum.services.quorum_system import QuorumSystem, ring_of
from pyquorum.services.ring_mutex import (
    RingMessage, Stat, check_invariants, initial_state, on_message, on_receive_rel,
    on_receive_req, on_release_cs, on_request_cs, snapshot, wait_for_edges,
)

from tests.conftest import drain, sends


def _state(qs, pid, **kw):
    return replace(initial_state(qs, pid), **kw)


# ── on_request_cs ───────────────────────────────────────────────────────────

def test_request_min_of_group(qs_n13):
    s, out = on_request_cs(qs_n13, initial_state(qs_n13, 2))
    assert s.stat is Stat.WAIT
    assert s.queue == (2,)
    assert s.blocked is True
    assert sends(out) == [(3, "Req", 2)]


def test_request_max_of_group(qs_n13):
    s, out = on_request_cs(qs_n13, initial_state(qs_n13, 9))
    assert s.stat is Stat.WAIT
    assert s.queue == ()
    assert s.blocked is False
    assert sends(out) == [(2, "Req", 9)]


def test_request_middle_of_group_goes_to_successor():
    # n=7 from base block {0,1,3}: S_5 = {5,6,1}, ring [1,5,6]
    qs = QuorumSystem.from_sets(7, 3, {
        1: [1, 2, 4], 2: [2, 3, 5], 3: [3, 4, 6], 4: [4, 5, 7],
        5: [5, 6, 1], 6: [6, 7, 2], 7: [7, 1, 3],
    })
    s, out = on_request_cs(qs, initial_state(qs, 5))
    assert sends(out) == [(6, "Req", 5)]
    assert s.queue == ()


def test_request_while_waiting(qs_n13):
    s, _ = on_request_cs(qs_n13, initial_state(qs_n13, 2))
    with pytest.raises(NotPassive):
        on_request_cs(qs_n13, s)


def test_singleton_system_enters_without_messages():
    qs = QuorumSystem.from_sets(1, 1, {1: [1]})
    s, out = on_request_cs(qs, initial_state(qs, 1))
    assert out == ()
    assert s.stat is Stat.READY
    assert s.queue == (1,)
    s, out = on_release_cs(qs, s)
    assert out == ()
    assert s.stat is Stat.PASSIVE
    assert s.queue == ()
    assert s.blocked is False


# ── on_receive_req ──────────────────────────────────────────────────────────

def test_receive_req_forwards_on_origin_ring(qs_n13):
    s, out = on_receive_req(qs_n13, initial_state(qs_n13, 3), 2)
    assert s.queue == (2,)
    assert s.blocked is True
    assert sends(out) == [(7, "Req", 2)]

    s, out = on_receive_req(qs_n13, initial_state(qs_n13, 7), 2)
    assert sends(out) == [(11, "Req", 2)]


def test_receive_req_at_1_forwards_to_2(qs_n13):
    s, out = on_receive_req(qs_n13, initial_state(qs_n13, 1), 13)
    assert s.queue == (13,)
    assert sends(out) == [(2, "Req", 13)]


def test_receive_req_parks_behind_head(qs_n13):
    s, _ = on_request_cs(qs_n13, initial_state(qs_n13, 2))
    s, out = on_receive_req(qs_n13, s, 9)
    assert s.queue == (2, 9)
    assert out == ()
    assert s.stat is Stat.WAIT


def test_own_request_returns_and_enters(qs_n13):
    s = _state(qs_n13, 2, stat=Stat.WAIT, queue=(2, 9, 13), blocked=True)
    s, out = on_receive_req(qs_n13, s, 2)
    assert s.stat is Stat.READY
    assert s.circulated is True
    assert s.queue == (2, 9, 13)
    assert out == ()


def test_own_request_returns_behind_other_head(qs_n13):
    s = _state(qs_n13, 9, stat=Stat.WAIT, queue=(11,), blocked=True)
    s, out = on_receive_req(qs_n13, s, 9)
    assert s.stat is Stat.WAIT
    assert s.circulated is True
    assert s.queue == (11, 9)
    assert out == ()


def test_duplicate_req_absorbed(qs_n13):
    s = _state(qs_n13, 2, queue=(13,), blocked=True)
    s2, out = on_receive_req(qs_n13, s, 13)
    assert s2 == s
    assert out == ()


def test_newer_req_releases_stale_entry(qs_n13):
    # S_1 = {1,4,5,7}, ring [1,4,5,7]: node 1 left the CS and asked again,
    # and its new Req reached 5 before the old Rel did
    s = _state(qs_n13, 5, queue=(1,), stamps=((1, 1),), blocked=True)
    s, out = on_receive_req(qs_n13, s, 1, 2)
    assert s.queue == (1,)
    assert s.stamp(1) == 2
    assert sends(out) == [(7, "Req", 1)]
    assert out[0][1].seq == 2

    late, out = on_receive_rel(qs_n13, s, 1, 1)
    assert late == s
    assert out == ()

    s, out = on_receive_rel(qs_n13, s, 1, 2)
    assert s.queue == ()
    assert s.stamps == ()
    assert s.blocked is False


def test_stale_entry_release_passes_on_to_next_head(qs_n13):
    # node 2 sits in S_2, S_9 and S_13; the stale 13 entry heads its queue
    s = _state(qs_n13, 2, queue=(13, 9), stamps=((9, 1), (13, 1)), blocked=True)
    s, out = on_receive_req(qs_n13, s, 13, 2)
    assert s.queue == (9, 13)
    assert s.stamp(13) == 2
    # ring of 9 is [2,4,8,9]
    assert sends(out) == [(4, "Req", 9)]
    assert check_invariants(qs_n13, s) == []


def test_req_from_outside_group(qs_n13):
    # 5 is not in S_2 = {2,3,7,11}
    with pytest.raises(UnexpectedMessage):
        on_receive_req(qs_n13, initial_state(qs_n13, 5), 2)


# ── on_release_cs ───────────────────────────────────────────────────────────

def test_release_passes_on_to_next_head(qs_n13):
    s = _state(qs_n13, 2, stat=Stat.READY, queue=(2, 9, 13), blocked=True, circulated=True)
    s, out = on_release_cs(qs_n13, s)
    assert sends(out) == [(3, "Rel", 2), (7, "Rel", 2), (11, "Rel", 2), (4, "Req", 9)]
    assert s.stat is Stat.PASSIVE
    assert s.queue == (9, 13)
    assert s.blocked is True
    assert s.circulated is False


def test_release_last_entry(qs_n13):
    s = _state(qs_n13, 13, stat=Stat.READY, queue=(13,), blocked=True, circulated=True)
    s, out = on_release_cs(qs_n13, s)
    assert sends(out) == [(1, "Rel", 13), (2, "Rel", 13), (12, "Rel", 13)]
    assert s.queue == ()
    assert s.blocked is False


def test_release_when_not_in_cs(qs_n13):
    with pytest.raises(NotInCriticalSection):
        on_release_cs(qs_n13, initial_state(qs_n13, 2))


# ── on_receive_rel ──────────────────────────────────────────────────────────

def test_rel_forwards_next_head(qs_n13):
    s = _state(qs_n13, 2, queue=(9, 13), blocked=True)
    s, out = on_receive_rel(qs_n13, s, 9)
    assert s.queue == (13,)
    assert sends(out) == [(12, "Req", 13)]


def test_rel_empties_queue(qs_n13):
    s = _state(qs_n13, 3, queue=(2,), blocked=True)
    s, out = on_receive_rel(qs_n13, s, 2)
    assert s.queue == ()
    assert s.blocked is False
    assert out == ()


def test_rel_lets_circulated_node_enter(qs_n13):
    s = _state(qs_n13, 9, stat=Stat.WAIT, queue=(4, 9), blocked=True, circulated=True)
    s, out = on_receive_rel(qs_n13, s, 4)
    assert s.stat is Stat.READY
    assert s.queue == (9,)
    assert out == ()


def test_rel_starts_deferred_traversal(qs_n13):
    # 2 requested while 13 headed its queue; its own Req has not gone round yet
    s = _state(qs_n13, 2, stat=Stat.WAIT, queue=(13, 2), blocked=True)
    s, out = on_receive_rel(qs_n13, s, 13)
    assert s.stat is Stat.WAIT
    assert s.queue == (2,)
    assert sends(out) == [(3, "Req", 2)]


def test_rel_for_absent_entry_absorbed(qs_n13):
    s = _state(qs_n13, 4, queue=(9,), blocked=True)
    s2, out = on_receive_rel(qs_n13, s, 2)
    assert s2 == s
    assert out == ()


def test_rel_of_non_head_sends_nothing(qs_n13):
    s = _state(qs_n13, 2, queue=(9, 13), blocked=True)
    s, out = on_receive_rel(qs_n13, s, 13)
    assert s.queue == (9,)
    assert out == ()


# ── inspection ──────────────────────────────────────────────────────────────

def test_wait_for_edges(qs_n13):
    assert wait_for_edges(_state(qs_n13, 2, queue=(2, 9, 13))) == {(9, 2), (13, 2)}
    assert wait_for_edges(_state(qs_n13, 2, queue=(2,))) == set()
    assert wait_for_edges(initial_state(qs_n13, 2)) == set()


def test_snapshot_shape(qs_n13):
    s = _state(qs_n13, 2, stat=Stat.READY, queue=(2, 9), blocked=True, circulated=True)
    assert snapshot(s) == {"stat": "Ready", "queue": [2, 9], "blocked": True}


def test_check_invariants(qs_n13):
    assert check_invariants(qs_n13, initial_state(qs_n13, 2)) == []
    bad = _state(qs_n13, 2, stat=Stat.READY, queue=(9, 2))
    assert check_invariants(qs_n13, bad)


def test_handlers_are_pure(qs_n13):
    s = _state(qs_n13, 2, stat=Stat.READY, queue=(2, 9, 13), blocked=True, circulated=True)
    assert on_release_cs(qs_n13, s) == on_release_cs(qs_n13, s)
    assert on_message(qs_n13, s, RingMessage("Rel", 9)) == on_message(qs_n13, s, RingMessage("Rel", 9))


# ── full ring traversal ─────────────────────────────────────────────────────

@pytest.mark.parametrize("origin", range(1, 14))
def test_lone_request_visits_each_member_once(qs_n13, origin):
    nodes = {p: initial_state(qs_n13, p) for p in qs_n13.processes}
    nodes[origin], out = on_request_cs(qs_n13, nodes[origin])
    delivered = drain(qs_n13, nodes, [(origin, d, m) for d, m in out], on_message)

    receivers = [dst for _, dst, m in delivered if m.kind == "Req"]
    assert sorted(receivers) == sorted(qs_n13.group(origin))
    assert nodes[origin].stat is Stat.READY
    assert sum(1 for s in nodes.values() if s.stat is Stat.READY) == 1
    assert ring_of(qs_n13, origin).members[0] in receivers


def test_request_numbers_advance(qs_n13):
    nodes = {p: initial_state(qs_n13, p) for p in qs_n13.processes}
    for expected in (1, 2):
        nodes[2], out = on_request_cs(qs_n13, nodes[2])
        assert [m.seq for _, m in out] == [expected]
        drain(qs_n13, nodes, [(2, d, m) for d, m in out], on_message)
        assert nodes[2].stat is Stat.READY

        nodes[2], out = on_release_cs(qs_n13, nodes[2])
        assert {m.seq for _, m in out} == {expected}
        drain(qs_n13, nodes, [(2, d, m) for d, m in out], on_message)
        assert all(s.queue == () and s.stamps == () for s in nodes.values())


# ── random handler sequences ────────────────────────────────────────────────

def _walk(qs, rounds: dict[int, int], seed: int) -> dict[int, int]:
    """
    Drive the handlers in a random order over FIFO channels until nothing is
    enabled.  Requesters ask again as soon as they leave the CS.
    """
    rng = random.Random(seed)
    nodes = {p: initial_state(qs, p) for p in qs.processes}
    channels: dict[tuple[int, int], deque] = {}
    left = dict(rounds)
    entered = {p: 0 for p in rounds}

    def post(src, out):
        for dst, msg in out:
            channels.setdefault((src, dst), deque()).append(msg)

    for _ in range(20_000):
        options = [("deliver", c) for c in sorted(channels) if channels[c]]
        options += [("request", p) for p in sorted(left)
                    if left[p] and nodes[p].stat is Stat.PASSIVE]
        options += [("release", p) for p in sorted(nodes) if nodes[p].stat is Stat.READY]
        if not options:
            break

        kind, target = rng.choice(options)
        if kind == "deliver":
            src, dst = target
            nodes[dst], out = on_message(qs, nodes[dst], channels[target].popleft())
            post(dst, out)
        elif kind == "request":
            left[target] -= 1
            nodes[target], out = on_request_cs(qs, nodes[target])
            post(target, out)
        else:
            entered[target] += 1
            nodes[target], out = on_release_cs(qs, nodes[target])
            post(target, out)

        for s in nodes.values():
            assert check_invariants(qs, s) == [], (seed, kind, target)
        assert sum(1 for s in nodes.values() if s.stat is Stat.READY) <= 1, seed
    else:
        pytest.fail(f"seed {seed}: walk did not settle")

    assert all(s.stat is Stat.PASSIVE for s in nodes.values()), seed
    assert all(s.queue == () and s.stamps == () for s in nodes.values()), seed
    return entered


@pytest.mark.parametrize("seed", range(60))
def test_random_walk_keeps_invariants(qs_n13, seed):
    # S_2, S_9 and S_13 meet only at node 2
    assert _walk(qs_n13, {2: 2, 9: 2, 13: 2}, seed) == {2: 2, 9: 2, 13: 2}


@pytest.mark.parametrize("seed", range(60))
def test_random_walk_repeated_requester(qs_n13, seed):
    assert _walk(qs_n13, {1: 4}, seed) == {1: 4}


# -----------------------------------------------------------------------------
