"""Acceptance criteria, one test per criterion.

The suite runs once per session at the tier named by ``ACCEPTANCE_TIER``
(default ``full``). Each test prints its PASS/FAIL line so ``pytest -s`` or
the captured output shows the measured value next to the pinned threshold.
"""
from __future__ import annotations

import os

import pytest

from delaybandits.acceptance import AcceptanceSuite, exit_status

TIER = os.environ.get("ACCEPTANCE_TIER", "full")

# every tolerance is pinned here; a change in the suite must change this table
PINNED = {
    "1": "<= 1",
    "2": "each in [0.40, 0.60]",
    "3": "<= 1",
    "4": "each in [0.60, 0.90]",
    "5": "<= 4 standard errors",
    "6": "0 violations",
    "7a": "sum/cap <= 1",
    "7b": "<= 0",
    "7c": "<= 0",
    "8": "<= 1",
    "9": "ne_gap <= 0.1 and value error <= 0.05",
    "10a": ">= 0.1500",
    "10b": "strictly decreasing",
    "11": "cce_gap <= 0.1 and inequality at every checkpoint",
    "12": "0 mismatches, error <= 1e-12",
}


@pytest.fixture(scope="module")
def results():
    lines: list[str] = []
    res = AcceptanceSuite(tier=TIER).run(echo=lines.append)
    print("\n" + "\n".join(lines))
    return {r.cid: r for r in res}


def test_every_criterion_reported(results):
    assert set(results) == set(PINNED)


@pytest.mark.parametrize("cid", list(PINNED))
def test_criterion(results, cid):
    r = results[cid]
    print(r.line())
    assert r.threshold == PINNED[cid]
    if r.advisory:
        pytest.skip(f"advisory at the {TIER} tier: {r.line()}")
    assert r.passed, r.line()


def test_sabotage_is_detected():
    res = AcceptanceSuite(tier="fast", sabotage=True).run(only=["6"])
    assert [r.cid for r in res] == ["6"]
    assert not res[0].passed
    assert exit_status(res) == 1
