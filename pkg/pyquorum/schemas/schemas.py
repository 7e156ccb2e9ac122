#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Pydantic v2 schemas for every file the tools read or write.

Protocol states and messages are plain dataclasses in the service modules;
the models here only describe what goes to and comes from disk.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


ALGORITHMS = ("ring", "maekawa-basic", "maekawa-full")
Algorithm = Literal["ring", "maekawa-basic", "maekawa-full"]


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Quorum file
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class QuorumFile(BaseModel):
    """``{"n": int, "k": int, "sets": {"<id>": [ints]}}``"""

    n: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    sets: dict[str, list[int]]

    @field_validator("sets")
    @classmethod
    def decimal_keys(cls, v: dict[str, list[int]]) -> dict[str, list[int]]:
        for key in v:
            if not key.isdecimal():
                raise ValueError(f"set key '{key}' is not a decimal process id")
        return v


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Scenarios
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class DelayModel(BaseModel):
    kind: Literal["unit", "fixed", "uniform"] = "unit"
    # fixed: per-channel latency keyed "src,dst"; channels not listed use `default`
    ticks: dict[str, int] = Field(default_factory=dict)
    default: int = Field(default=1, ge=1)
    # uniform: inclusive bounds and its own seed (None: the configured seed)
    lo: int = Field(default=1, ge=1)
    hi: int = Field(default=1, ge=1)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_bounds(self) -> DelayModel:
        if self.hi < self.lo:
            raise ValueError(f"uniform delay bounds inverted: lo={self.lo} hi={self.hi}")
        for key, ticks in self.ticks.items():
            parts = key.split(",")
            if len(parts) != 2 or not all(p.strip().isdecimal() for p in parts):
                raise ValueError(f"fixed delay key '{key}' is not 'src,dst'")
            if ticks < 1:
                raise ValueError(f"fixed delay for '{key}' must be >= 1")
        return self


# -----------------------------------------------------------------------------

class ScenarioEvent(BaseModel):
    at: int = Field(..., ge=0)
    node: int = Field(..., ge=1)
    action: Literal["request"] = "request"


# -----------------------------------------------------------------------------

class ScriptStep(BaseModel):
    """One pinned step: deliver the head of channel (src, dst), or make ``node`` leave the CS."""

    kind: Literal["deliver", "release"] = "deliver"
    src: Optional[int] = None
    dst: Optional[int] = None
    node: Optional[int] = None
    label: Optional[str] = None

    @model_validator(mode="after")
    def check_fields(self) -> ScriptStep:
        if self.kind == "deliver" and (self.src is None or self.dst is None):
            raise ValueError("deliver step needs src and dst")
        if self.kind == "release" and self.node is None:
            raise ValueError("release step needs node")
        return self


# -----------------------------------------------------------------------------

class Scenario(BaseModel):
    name: str = ""
    quorum_file: str
    algo: Algorithm = "ring"
    events: list[ScenarioEvent] = Field(default_factory=list)
    cs_duration: Optional[int] = Field(default=None, ge=1)    # None: the configured duration
    delay_model: DelayModel = Field(default_factory=DelayModel)
    delivery_script: Optional[list[ScriptStep]] = None
    count_self_messages: bool = False


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Traces and stats
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

TRACE_KINDS = ("send", "deliver", "state_change", "cs_enter", "cs_exit")


class TraceMessage(BaseModel):
    kind: str
    origin: int
    ts: Optional[list[int]] = None      # [clock, id]; REQUEST only


class TraceRecord(BaseModel):
    tick: int
    kind: Literal["send", "deliver", "state_change", "cs_enter", "cs_exit"]
    src: Optional[int] = None
    dst: Optional[int] = None
    msg: Optional[TraceMessage] = None
    node: Optional[int] = None
    detail: Optional[dict[str, Any]] = None


# -----------------------------------------------------------------------------

STATS_HEADER = (
    "origin", "request_tick", "cs_enter_tick", "cs_exit_tick",
    "messages_attributed", "max_wait_queue",
)


class CsStatsRow(BaseModel):
    origin: int
    request_tick: int
    cs_enter_tick: Optional[int] = None
    cs_exit_tick: Optional[int] = None
    messages_attributed: int = 0
    max_wait_queue: int = 0

    @property
    def wait_ticks(self) -> Optional[int]:
        if self.cs_enter_tick is None:
            return None
        return self.cs_enter_tick - self.request_tick


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Golden snapshots
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class NodeSnapshot(BaseModel):
    stat: Literal["Passive", "Wait", "Ready"]
    queue: list[int] = Field(default_factory=list)
    blocked: bool = False


class GoldenFile(BaseModel):
    name: str
    scenario: str
    # label -> {"<id>": NodeSnapshot}; nodes not listed are Passive, empty, unblocked
    snapshots: dict[str, dict[str, NodeSnapshot]] = Field(default_factory=dict)
    outcome: Literal["quiescent", "deadlock"] = "quiescent"
    blocked_on: Optional[list[tuple[int, int]]] = None
    entered: Optional[list[int]] = None


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Exploration verdicts
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class CounterexampleStep(BaseModel):
    kind: Literal["deliver", "release"] = "deliver"
    src: Optional[int] = None
    dst: Optional[int] = None
    node: Optional[int] = None

    def to_script(self) -> ScriptStep:
        return ScriptStep(kind=self.kind, src=self.src, dst=self.dst, node=self.node)


class DeadlockReport(BaseModel):
    blocked_on: list[tuple[int, int]]
    wait_for_cycle: Optional[list[tuple[int, int]]] = None
    counterexample: list[CounterexampleStep]


class VerdictFile(BaseModel):
    quorum_file: str
    algo: Algorithm
    requesters: list[int]
    depth_bound: int
    state_bound: int
    count_self_messages: bool = False
    safety: Literal["ok", "violated"]
    deadlock: Literal["none_found", "found"]
    states_visited: int
    max_depth: int
    frontier_truncated: bool
    counterexample: Optional[list[CounterexampleStep]] = None
    wait_for_cycle: Optional[list[tuple[int, int]]] = None
    blocked_on: Optional[list[tuple[int, int]]] = None
    ready: Optional[list[int]] = None
    # every distinct deadlock, smallest blocked_on first
    deadlocks: list[DeadlockReport] = Field(default_factory=list)


# -----------------------------------------------------------------------------
