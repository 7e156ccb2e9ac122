from pyquorum.schemas.schemas import (
    ALGORITHMS, Algorithm,
    QuorumFile,
    DelayModel, ScenarioEvent, ScriptStep, Scenario,
    TRACE_KINDS, TraceMessage, TraceRecord,
    STATS_HEADER, CsStatsRow,
    NodeSnapshot, GoldenFile,
    CounterexampleStep, DeadlockReport, VerdictFile,
)

__all__ = [
    "ALGORITHMS", "Algorithm",
    "QuorumFile",
    "DelayModel", "ScenarioEvent", "ScriptStep", "Scenario",
    "TRACE_KINDS", "TraceMessage", "TraceRecord",
    "STATS_HEADER", "CsStatsRow",
    "NodeSnapshot", "GoldenFile",
    "CounterexampleStep", "DeadlockReport", "VerdictFile",
]
