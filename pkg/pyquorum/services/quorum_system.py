#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Quorum systems
==============
Construct, load, validate and dump quorum systems satisfying Maekawa's four
conditions, and expose each group as an ascending circular ring.

  1. every pair of groups intersects
  2. node i belongs to S_i
  3. |S_i| = k for every i
  4. every node appears in exactly k groups

Generated systems are shifted copies of a cyclic planar difference set
modulo n = k(k-1)+1, mapped onto process ids 1..n.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path

from pydantic import ValidationError

from pyquorum.core.errors import (
    ConstructionFailed, FixtureError, NoValidK, NotAMember, UnknownProcess,
)
from pyquorum.schemas import QuorumFile

log = logging.getLogger(__name__)

ProcessId = int


# -----------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RingView:
    """Members of S_origin sorted ascending; the successor of the last is the first."""

    origin: ProcessId
    members: tuple[ProcessId, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"ring of {self.origin} is empty")
        if any(a >= b for a, b in zip(self.members, self.members[1:])):
            raise ValueError(f"ring members {list(self.members)} are not strictly ascending")

    def __contains__(self, pid: object) -> bool:
        return pid in self.members

    def __len__(self) -> int:
        return len(self.members)


# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class QuorumSystem:
    """n processes, nominal group size k, and S_i for every i in 1..n.

    Construction enforces only well-formedness (a nonempty group per process,
    members in 1..n).  Maekawa's conditions are checked by validate().
    """

    n: int
    k: int
    groups: tuple[frozenset[ProcessId], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.groups) != self.n:
            raise ValueError(f"expected {self.n} groups, got {len(self.groups)}")
        for i, group in enumerate(self.groups, start=1):
            if not group:
                raise ValueError(f"S_{i} is empty")
            bad = sorted(p for p in group if not 1 <= p <= self.n)
            if bad:
                raise ValueError(f"S_{i} has members outside 1..{self.n}: {bad}")

    @classmethod
    def from_sets(cls, n: int, k: int, sets: Mapping[int, Iterable[int]]) -> QuorumSystem:
        missing = [i for i in range(1, n + 1) if i not in sets]
        if missing:
            raise ValueError(f"no group given for processes {missing}")
        extra = sorted(i for i in sets if not 1 <= i <= n)
        if extra:
            raise ValueError(f"groups given for unknown processes {extra}")
        return cls(n=n, k=k, groups=tuple(frozenset(sets[i]) for i in range(1, n + 1)))

    @property
    def sets(self) -> dict[ProcessId, frozenset[ProcessId]]:
        return {i: g for i, g in enumerate(self.groups, start=1)}

    @property
    def processes(self) -> range:
        return range(1, self.n + 1)

    def group(self, pid: ProcessId) -> frozenset[ProcessId]:
        if not 1 <= pid <= self.n:
            raise UnknownProcess(pid, self.n)
        return self.groups[pid - 1]

    @cached_property
    def rings(self) -> tuple[RingView, ...]:
        return tuple(
            RingView(origin=i, members=tuple(sorted(g)))
            for i, g in enumerate(self.groups, start=1)
        )

    def membership_counts(self) -> dict[ProcessId, int]:
        counts: Counter[int] = Counter()
        for g in self.groups:
            counts.update(g)
        return {p: counts.get(p, 0) for p in self.processes}

    def intersections(self) -> dict[tuple[ProcessId, ProcessId], frozenset[ProcessId]]:
        return {
            (i, j): self.groups[i - 1] & self.groups[j - 1]
            for i, j in combinations(self.processes, 2)
        }


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Validation
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    # offending pairs (cond 1), ids (cond 2), sizes (cond 3), counts (cond 4)
    detail: object = None


@dataclass(frozen=True)
class ValidationReport:
    cond1_pairwise_intersection: ConditionResult
    cond2_self_membership: ConditionResult
    cond3_equal_size: ConditionResult
    cond4_equal_responsibility: ConditionResult
    k: int = 0
    messages: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions().values())

    def conditions(self) -> dict[str, ConditionResult]:
        return {
            "cond1_pairwise_intersection": self.cond1_pairwise_intersection,
            "cond2_self_membership":       self.cond2_self_membership,
            "cond3_equal_size":            self.cond3_equal_size,
            "cond4_equal_responsibility":  self.cond4_equal_responsibility,
        }

    def to_dict(self) -> dict:
        out: dict = {"k": self.k, "passed": self.passed}
        for name, cond in self.conditions().items():
            detail = cond.detail
            if isinstance(detail, dict):
                detail = {str(key): val for key, val in detail.items()}
            out[name] = {"passed": cond.passed, "detail": detail}
        out["messages"] = list(self.messages)
        return out


# -----------------------------------------------------------------------------

def validate(qs: QuorumSystem) -> ValidationReport:
    """Check all four conditions exhaustively; failures are reported, never raised."""
    messages: list[str] = []

    disjoint = [(i, j) for (i, j), common in qs.intersections().items() if not common]
    if disjoint:
        messages.append(f"condition 1: {len(disjoint)} disjoint pair(s), first {disjoint[0]}")

    not_self = [i for i in qs.processes if i not in qs.group(i)]
    if not_self:
        messages.append(f"condition 2: processes {not_self} missing from their own group")

    sizes = {i: len(qs.group(i)) for i in qs.processes}
    wrong_size = {i: s for i, s in sizes.items() if s != qs.k}
    if wrong_size:
        messages.append(f"condition 3: sizes differ from k={qs.k}: {wrong_size}")

    counts = qs.membership_counts()
    wrong_count = {p: c for p, c in counts.items() if c != qs.k}
    if wrong_count:
        messages.append(f"condition 4: membership counts differ from k={qs.k}: {wrong_count}")

    return ValidationReport(
        cond1_pairwise_intersection=ConditionResult(not disjoint, disjoint),
        cond2_self_membership=ConditionResult(not not_self, not_self),
        cond3_equal_size=ConditionResult(not wrong_size, sizes),
        cond4_equal_responsibility=ConditionResult(not wrong_count, counts),
        k=qs.k,
        messages=tuple(messages),
    )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Construction
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def solve_k(n: int) -> int:
    """The unique positive k with k(k-1)+1 = n."""
    if n < 1:
        raise NoValidK(n)
    disc = 4 * n - 3
    root = math.isqrt(disc)
    if root * root != disc or (1 + root) % 2:
        raise NoValidK(n)
    return (1 + root) // 2


# -----------------------------------------------------------------------------

def find_difference_set(n: int, k: int, max_nodes: int = 5_000_000) -> tuple[int, ...] | None:
    """Lexicographically first planar difference set of size k modulo n.

    Every nonzero residue occurs exactly once as a difference of two members.
    Any such set can be translated to contain 0 and 1, so the search fixes
    both and backtracks over the rest.
    """
    if k == 1:
        return (0,) if n == 1 else None
    if k * (k - 1) + 1 != n:
        return None

    block = [0, 1]
    used = {1, n - 1}
    nodes = 0

    def extend(start: int) -> bool:
        nonlocal nodes
        if len(block) == k:
            return True
        for c in range(start, n):
            nodes += 1
            if nodes > max_nodes:
                return False
            new: list[int] = []
            ok = True
            for d in block:
                for diff in ((c - d) % n, (d - c) % n):
                    if diff in used or diff in new:
                        ok = False
                        break
                    new.append(diff)
                if not ok:
                    break
            if not ok:
                continue
            block.append(c)
            used.update(new)
            if extend(c + 1):
                return True
            block.pop()
            used.difference_update(new)
        return False

    return tuple(block) if extend(2) else None


# -----------------------------------------------------------------------------

def from_base_block(n: int, block: Iterable[int]) -> QuorumSystem:
    """S_i = {((i-1) + d) mod n + 1 : d in block}."""
    base = sorted({d % n for d in block})
    if 0 not in base:
        raise ValueError("base block must contain 0 so that i is in S_i")
    groups = tuple(
        frozenset(((i - 1 + d) % n) + 1 for d in base)
        for i in range(1, n + 1)
    )
    return QuorumSystem(n=n, k=len(base), groups=groups)


# -----------------------------------------------------------------------------

def build_quorums(n: int) -> QuorumSystem:
    """Deterministic quorum system for n = k(k-1)+1 processes."""
    k = solve_k(n)
    block = find_difference_set(n, k)
    if block is None:
        raise ConstructionFailed(n)
    qs = from_base_block(n, block)
    log.info("built quorum system n=%d k=%d from base block %s", n, k, list(block))
    return qs


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Rings
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def ring_of(qs: QuorumSystem, origin: ProcessId) -> RingView:
    if not 1 <= origin <= qs.n:
        raise UnknownProcess(origin, qs.n)
    return qs.rings[origin - 1]


def successor(ring: RingView, member: ProcessId) -> ProcessId:
    members = ring.members
    try:
        idx = members.index(member)
    except ValueError:
        raise NotAMember(member, members) from None
    return members[(idx + 1) % len(members)]


def min_of(ring: RingView) -> ProcessId:
    return ring.members[0]


def max_of(ring: RingView) -> ProcessId:
    return ring.members[-1]


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# File format
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def from_model(data: QuorumFile) -> QuorumSystem:
    sets = {int(key): members for key, members in data.sets.items()}
    return QuorumSystem.from_sets(data.n, data.k, sets)


def to_model(qs: QuorumSystem) -> QuorumFile:
    return QuorumFile(
        n=qs.n,
        k=qs.k,
        sets={str(i): sorted(g) for i, g in qs.sets.items()},
    )


# -----------------------------------------------------------------------------

def load_quorums(path: Path | str) -> QuorumSystem:
    path = Path(path)
    try:
        data = QuorumFile.model_validate_json(path.read_text(encoding="utf-8"))
        return from_model(data)
    except FileNotFoundError:
        raise FixtureError(f"{path}: no such quorum file") from None
    except (ValidationError, ValueError) as exc:
        raise FixtureError(f"{path}: invalid quorum file: {exc}") from None


def dump_quorums(qs: QuorumSystem, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = to_model(qs).model_dump()
    # keep numeric id order in the file rather than lexical
    payload["sets"] = {str(i): payload["sets"][str(i)] for i in qs.processes}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# -----------------------------------------------------------------------------
