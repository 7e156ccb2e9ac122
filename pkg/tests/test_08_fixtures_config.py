#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""Tests for bundled fixtures, settings, the log buffer and the results template."""
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging

import pytest

from pyquorum.core import logging_buffer
from pyquorum.core.config import Settings, get_settings
from pyquorum.core.errors import FixtureError
from pyquorum.schemas import DelayModel, Scenario
from pyquorum.services.fixtures import (
    BUNDLED_QUORUMS, BUNDLED_SCENARIOS, fixture_path, load_fixtures, load_golden,
    load_quorum_fixture, load_scenario,
)
from pyquorum.services.quorum_system import QuorumSystem
from pyquorum.services.reporting import render_results, trace_line
from pyquorum.services.simnet import random_scenario, run


# ── fixtures ────────────────────────────────────────────────────────────────

def test_load_fixtures():
    fixtures = load_fixtures()
    for name in BUNDLED_QUORUMS:
        assert isinstance(fixtures[name], QuorumSystem)
    for scenario_name, _ in BUNDLED_SCENARIOS.values():
        assert isinstance(fixtures[scenario_name], Scenario)

    assert fixtures["quorums_s3_n7"].group(4) == {4, 2, 3}
    assert fixtures["quorums_s2_n13"].group(13) == {13, 4, 6, 8}


def test_section_tables():
    s3 = load_quorum_fixture("quorums_s3_n13")
    assert s3.group(2) == {2, 3, 7, 11}
    assert s3.group(9) == {2, 4, 8, 9}
    assert s3.group(13) == {1, 2, 12, 13}
    s2 = load_quorum_fixture("quorums_s2_n13")
    assert s2.group(2) == {2, 5, 8, 11}
    assert s2.group(13) == {13, 4, 6, 8}


def test_aliases():
    assert fixture_path("quorums_s2") == fixture_path("quorums_s2_n13")
    assert load_quorum_fixture("quorums_s3") == load_quorum_fixture("quorums_s3_n13")


def test_fixture_path_forms(tmp_path):
    assert fixture_path("quorums_s3_n7.json") == fixture_path("quorums_s3_n7")
    assert fixture_path("somewhere/else/quorums_s3_n7.json").name == "quorums_s3_n7.json"
    own = tmp_path / "mine.json"
    own.write_text('{"n": 1, "k": 1, "sets": {"1": [1]}}')
    assert fixture_path(own) == own


def test_broken_fixtures():
    with pytest.raises(FixtureError):
        load_quorum_fixture("broken/quorums_s3_n7_missing6")
    assert load_quorum_fixture("broken/quorums_s3_n7_missing6", check=False).n == 7
    with pytest.raises(FixtureError):
        load_quorum_fixture("broken/quorums_bad_key")


def test_scenario_resolves_quorum_file():
    sc, qs = load_scenario("scenario_fig4_full")
    assert sc.algo == "maekawa-full"
    assert qs.n == 13
    assert len(sc.delivery_script) == 9


def test_golden_shape():
    golden = load_golden("golden_fig4_basic")
    assert golden.outcome == "deadlock"
    assert golden.blocked_on == [(2, 8), (9, 11), (13, 4)]


# ── settings ────────────────────────────────────────────────────────────────

def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("PYQUORUM_WAIT_BOUND_FACTOR", "7")
    monkeypatch.setenv("PYQUORUM_COUNT_SELF_MESSAGES", "true")
    s = Settings()
    assert s.wait_bound_factor == 7
    assert s.count_self_messages is True


def test_settings_defaults():
    s = get_settings()
    assert s.is_testing
    assert s.cs_duration == 1
    assert s.wait_bound_factor == 5
    assert s.fixtures_dir.joinpath("quorums_s3_n13.json").is_file()


@pytest.fixture
def tuned(monkeypatch):
    """Settings with every run knob moved off its default."""
    monkeypatch.setenv("PYQUORUM_SEED", "7")
    monkeypatch.setenv("PYQUORUM_DELAY_LO", "2")
    monkeypatch.setenv("PYQUORUM_DELAY_HI", "3")
    monkeypatch.setenv("PYQUORUM_CS_DURATION", "3")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


def test_random_workload_uses_settings(tuned, qs_n13):
    sc = random_scenario(qs_n13, requests=3)
    assert sc.name == "random-7"
    assert sc.delay_model.seed == 7
    assert (sc.delay_model.lo, sc.delay_model.hi) == (2, 3)
    assert sc.cs_duration == 3

    pinned = random_scenario(qs_n13, seed=1, requests=3, cs_duration=2, delay_lo=4, delay_hi=4)
    assert pinned.delay_model.seed == 1
    assert (pinned.delay_model.lo, pinned.delay_model.hi) == (4, 4)
    assert pinned.cs_duration == 2


def test_scenario_cs_duration_defaults_from_settings(tuned, qs_n13):
    sc = Scenario(name="t", quorum_file="quorums_s3_n13.json", events=[{"at": 0, "node": 1}])
    row = run(sc, qs_n13).stats.rows[0]
    assert row.cs_exit_tick - row.cs_enter_tick == 3

    sc = Scenario(name="t", quorum_file="quorums_s3_n13.json", cs_duration=2,
                  events=[{"at": 0, "node": 1}])
    row = run(sc, qs_n13).stats.rows[0]
    assert row.cs_exit_tick - row.cs_enter_tick == 2


def test_unseeded_delay_model_uses_settings_seed(tuned, qs_n13):
    def three_way(seed):
        return Scenario(
            name="t", quorum_file="quorums_s3_n13.json",
            events=[{"at": 0, "node": p} for p in (2, 9, 13)],
            delay_model=DelayModel(kind="uniform", lo=1, hi=5, seed=seed),
        )

    unseeded = [trace_line(r) for r in run(three_way(None), qs_n13).trace]
    assert unseeded == [trace_line(r) for r in run(three_way(7), qs_n13).trace]


def test_results_dir_created(results_dir):
    assert not results_dir.exists()
    assert get_settings().results_dir_resolved == results_dir
    assert results_dir.is_dir()


# ── log buffer ──────────────────────────────────────────────────────────────

def test_log_buffer_keeps_warnings():
    logging_buffer.install()
    logging_buffer.clear()
    log = logging.getLogger("pyquorum.tests")
    log.warning("first")
    log.info("ignored")
    log.error("second")

    records = logging_buffer.get_records()
    assert [r["message"] for r in records] == ["second", "first"]
    assert records[0]["level"] == "ERROR"
    assert records[1]["seq"] == 1
    logging_buffer.clear()
    assert logging_buffer.get_records() == []


# ── results document ────────────────────────────────────────────────────────

def test_render_empty_results():
    text = render_results(quorums=[], replays=[], verdicts=[], sweeps=[], logs=[])
    assert text.startswith("# pyquorum results")
    assert "No `replay-paper` output found." in text
    assert "## Warnings" not in text


def test_render_verdict_row():
    verdict = {
        "file": "deadlock-verdict.json", "algo": "maekawa-basic",
        "quorum_file": "/x/quorums_s3_n3.json", "requesters": [1, 2, 3],
        "states_visited": 8, "max_depth": 3, "frontier_truncated": False,
        "safety": "ok", "deadlock": "found",
    }
    text = render_results(quorums=[], replays=[], verdicts=[verdict], sweeps=[], logs=[])
    assert ("| deadlock-verdict.json | maekawa-basic | quorums_s3_n3.json | 1,2,3 "
            "| 8 | 3 | exhaustive | ok | found |") in text


# -----------------------------------------------------------------------------
