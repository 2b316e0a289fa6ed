"""Acceptance suite: each criterion at its stated tolerance, one PASS/FAIL line apiece.

The lines are printed as the tests run (visible with ``-s``) and repeated in the
terminal summary.
"""

import warnings

import pytest

from infoqm.acceptance import CRITERIA, run_criterion

RESULTS = {}


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=[f"criterion_{n:02d}" for n in sorted(CRITERIA)])
def test_criterion(number):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_criterion(number, seed=0)
    line = res.line() + f" budget {res.budget_seconds:.0f}s"
    RESULTS[number] = line
    print(line)
    if res.note:
        print("    " + res.note)
    assert res.passed, line
