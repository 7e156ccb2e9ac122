#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Pytest fixtures and helpers for pyquorum tests.
Everything runs in-process; outputs go to a per-test temporary directory.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import os
from collections import deque
from pathlib import Path

import pytest

# Force test-safe settings before any module caches them
os.environ["PYQUORUM_ENVIRONMENT"] = "testing"

from pyquorum.core.config import get_settings
get_settings.cache_clear()

from pyquorum.schemas import TraceRecord
from pyquorum.services.fixtures import load_quorum_fixture, load_scenario
from pyquorum.services.quorum_system import QuorumSystem


# -----------------------------------------------------------------------------

@pytest.fixture(scope="function")
def results_dir(tmp_path: Path, monkeypatch) -> Path:
    """Isolated results directory wired through the environment."""
    out = tmp_path / "results"
    monkeypatch.setenv("PYQUORUM_RESULTS_DIR", str(out))
    get_settings.cache_clear()
    yield out
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def qs_n3() -> QuorumSystem:
    return load_quorum_fixture("quorums_s3_n3")


@pytest.fixture(scope="session")
def qs_n7() -> QuorumSystem:
    return load_quorum_fixture("quorums_s3_n7")


@pytest.fixture(scope="session")
def qs_n13() -> QuorumSystem:
    """Ring-ordered n=13 table used by the worked ring example."""
    return load_quorum_fixture("quorums_s3_n13")


@pytest.fixture(scope="session")
def qs_fig() -> QuorumSystem:
    """n=13 table used by the Maekawa deadlock scenarios."""
    return load_quorum_fixture("quorums_s2_n13")


# -----------------------------------------------------------------------------
# Helper functions for tests
# -----------------------------------------------------------------------------

def scenario(name: str, **changes):
    """Load a bundled scenario, optionally overriding fields."""
    sc, qs = load_scenario(name)
    for key, value in changes.items():
        setattr(sc, key, value)
    return sc, qs


def drain(qs: QuorumSystem, nodes: dict, pending, deliver) -> list[tuple]:
    """Deliver (src, dst, msg) triples in one global FIFO order until nothing is left."""
    queue = deque(pending)
    delivered: list[tuple] = []
    while queue:
        src, dst, msg = queue.popleft()
        nodes[dst], out = deliver(qs, nodes[dst], msg)
        delivered.append((src, dst, msg))
        queue.extend((dst, d, m) for d, m in out)
    return delivered


def sends(outbox) -> list[tuple[int, str, int]]:
    """Outbox as (dst, kind, origin) triples."""
    return [(dst, msg.kind, msg.origin) for dst, msg in outbox]


def per_channel(trace: list[TraceRecord], kind: str) -> dict[tuple[int, int], list]:
    out: dict[tuple[int, int], list] = {}
    for rec in trace:
        if rec.kind == kind:
            out.setdefault((rec.src, rec.dst), []).append(rec.msg)
    return out


# -----------------------------------------------------------------------------
