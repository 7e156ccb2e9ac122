#!/usr/bin/env python
#
#
# -----------------------------------------------------------------------------
"""
Runtime configuration.

Every value can be overridden via PYQUORUM_* environment variables or a .env
file; CLI flags override both.  Nothing here depends on the wall clock.
"""
# -----------------------------------------------------------------------------

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict

from pyquorum._version import __version__ as _pkg_version


# -----------------------------------------------------------------------------

PACKAGE_DIR = Path(__file__).resolve().parent.parent


# -----------------------------------------------------------------------------

class Settings(BaseSettings):

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PYQUORUM_",
        case_sensitive=False,
        extra="ignore",
    )

    # ── Application ────────────────────────────────────────────────────────

    app_name: str = "pyquorum"
    app_version: str = _pkg_version
    environment: Literal["development", "testing"] = "development"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"

    # ── Simulation ─────────────────────────────────────────────────────────

    seed: int = 0
    cs_duration: int = 1                 # ticks a node holds the CS
    max_steps: int = 200_000
    max_ticks: int = 1_000_000
    delay_lo: int = 1                    # uniform delay model bounds (inclusive)
    delay_hi: int = 5
    count_self_messages: bool = False    # Maekawa self-messages go through the network
    wait_bound_factor: int = 5           # C in C·k·R·cs_duration

    # ── Exploration ────────────────────────────────────────────────────────

    depth_bound: int = 200
    state_bound: int = 2_000_000
    jobs: int = 1

    # ── Paths ──────────────────────────────────────────────────────────────

    fixtures_dir: Path = PACKAGE_DIR / "fixtures"
    templates_dir: Path = PACKAGE_DIR / "templates"
    results_dir: Path = Path("./results")

    @property
    def is_testing(self) -> bool:
        return self.environment == "testing"

    @property
    def results_dir_resolved(self) -> Path:
        p = self.results_dir
        p.mkdir(parents=True, exist_ok=True)
        return p


# -----------------------------------------------------------------------------

@lru_cache
def get_settings() -> Settings:
    return Settings()


# -----------------------------------------------------------------------------
