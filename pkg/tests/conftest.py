"""Shared fixtures: session-cached scenario runs and convergence studies.

Several suites (unit, integration, acceptance) read the same scenario
outcomes; caching one run per (name, resolution) keeps the whole suite at
a few minutes instead of re-solving 64-cube problems per test.
"""

from __future__ import annotations

import pytest

from stharm.runner import convergence_study, run_scenario
from stharm.scenarios import builtin_config


@pytest.fixture(scope="session")
def outcome_cache():
    """Callable (name, resolution=None) -> RunOutcome, memoized."""
    cache = {}

    def get(name, resolution=None):
        key = (name, resolution)
        if key not in cache:
            cache[key] = run_scenario(name, resolution=resolution, write=False)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def study_cache():
    """Callable (name, resolutions=(16, 32, 64)) -> StudyResult, memoized."""
    cache = {}

    def get(name, resolutions=(16, 32, 64)):
        key = (name, tuple(int(r) for r in resolutions))
        if key not in cache:
            cache[key] = convergence_study(builtin_config(name),
                                           list(key[1]), write=False)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def get_report(outcome_cache):
    """Callable (scenario, report_name, resolution=None) -> VerificationReport."""

    def get(name, report_name, resolution=None):
        outcome = outcome_cache(name, resolution)
        for rep in outcome.reports:
            if rep.name == report_name:
                return rep
        known = sorted(r.name for r in outcome.reports)
        raise KeyError(f"{report_name!r} not among {known}")

    return get
