#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Exception hierarchy.

Every error carries a human-readable ``detail``; ``main.dispatch`` turns any
PyQuorumError into its ``exit_code`` and a one-line message on stderr.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

from typing import Any


# -----------------------------------------------------------------------------

class PyQuorumError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


# ── Quorum systems ──────────────────────────────────────────────────────────

class NoValidK(PyQuorumError):
    def __init__(self, n: int) -> None:
        super().__init__(f"No integer k satisfies k(k-1)+1 = {n}")
        self.n = n


class ConstructionFailed(PyQuorumError):
    def __init__(self, n: int) -> None:
        super().__init__(f"No cyclic quorum system found for n={n}")
        self.n = n


class UnknownProcess(PyQuorumError):
    def __init__(self, pid: int, n: int) -> None:
        super().__init__(f"Process {pid} is not in 1..{n}")
        self.pid = pid


class NotAMember(PyQuorumError):
    def __init__(self, pid: int, members: tuple[int, ...]) -> None:
        super().__init__(f"Process {pid} is not a member of ring {list(members)}")
        self.pid = pid


# ── Protocol handlers ───────────────────────────────────────────────────────

class NotPassive(PyQuorumError):
    def __init__(self, pid: int, stat: str) -> None:
        super().__init__(f"Process {pid} cannot request the CS while {stat}")


class NotInCriticalSection(PyQuorumError):
    def __init__(self, pid: int, stat: str) -> None:
        super().__init__(f"Process {pid} cannot release the CS while {stat}")


class UnexpectedMessage(PyQuorumError):
    def __init__(self, pid: int, message: str) -> None:
        super().__init__(f"Process {pid} received unexpected {message}")


# ── Simulation / exploration ────────────────────────────────────────────────

class ScenarioError(PyQuorumError):
    pass


class QuiescenceWithWaiters(PyQuorumError):
    """Run reached quiescence while some process still waits (deadlock)."""

    def __init__(self, result: Any, waiters: list[int]) -> None:
        super().__init__(f"Quiescent with waiting processes {waiters}")
        self.result = result
        self.waiters = waiters


class StepLimitExceeded(PyQuorumError):
    def __init__(self, steps: int, result: Any = None) -> None:
        super().__init__(f"Step limit of {steps} exceeded")
        self.result = result


class SafetyViolation(PyQuorumError):
    def __init__(self, ready: list[int], result: Any = None) -> None:
        super().__init__(f"Mutual exclusion violated: {ready} simultaneously in the CS")
        self.ready = ready
        self.result = result


class BoundExceeded(PyQuorumError):
    def __init__(self, verdict: Any) -> None:
        super().__init__("Exploration bound exceeded; verdict is partial")
        self.verdict = verdict


class ReplayDivergence(PyQuorumError):
    pass


class FixtureError(PyQuorumError):
    pass


# -----------------------------------------------------------------------------
