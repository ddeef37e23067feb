"""Acceptance criteria 1-13 at the pinned sample sizes.

Each test prints one ``[PASS]``/``[FAIL]`` line straight to the terminal
(outside pytest's capture) and then asserts.  Tolerances live in
:mod:`solbranch.verify`; this file only drives the "full" suite.
"""
import json
import time

import pytest

from solbranch.cli import _json_safe
from solbranch.verify import CRITERIA, CriterionResult


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    t0 = time.perf_counter()
    try:
        res = CRITERIA[number]("full")
    except Exception as exc:  # report a crash as a failed line, then re-raise
        res = CriterionResult(number, CRITERIA[number].__name__, False, {"error": repr(exc)})
        res.elapsed = time.perf_counter() - t0
        with capsys.disabled():
            print("\n" + res.line())
        raise
    res.elapsed = time.perf_counter() - t0
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, json.dumps(_json_safe(res.measured), default=str)[:4000]
