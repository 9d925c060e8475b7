"""Acceptance criteria, each at its stated tolerance, with runtime budgets.

A PASS/FAIL line per criterion is printed (visible with ``-s``) and repeated
in the terminal summary.
"""

import json

import pytest

from exmarkov import acceptance, rng
from exmarkov.cli import main

LINES: list[str] = []


@pytest.fixture(scope="module")
def suite():
    return {r.id: r for r in acceptance.run_suite(seed=7, quick=False)}


def _report(line):
    LINES.append(line)
    print(line)


@pytest.mark.parametrize("cid", range(1, 10))
def test_criterion(suite, cid):
    res = suite[cid]
    within_budget = res.budget is None or res.seconds <= res.budget
    passed = res.passed and within_budget
    _report(res.line().replace("[PASS]", "[PASS]" if passed else "[FAIL]"))
    assert res.passed, json.dumps(res.to_dict(), indent=1)
    assert within_budget, f"{res.seconds:.1f}s exceeds {res.budget}s"


def test_determinism_across_threads(tmp_path):
    """Criterion 10: ``verify-all --seed 7`` is byte-identical for 1 and 4 threads."""
    before = rng.get_threads()
    try:
        codes = [main(["verify-all", "--seed", "7", "--threads", str(t), "--out", str(tmp_path / f"t{t}.json")]) for t in (1, 4)]
    finally:
        rng.set_threads(before)
    same = all(
        (tmp_path / f"t1{suffix}").read_bytes() == (tmp_path / f"t4{suffix}").read_bytes()
        for suffix in (".json", ".json.manifest.json")
    )
    _report(f"[{'PASS' if same and codes == [0, 0] else 'FAIL'}] 10 determinism across thread counts")
    assert codes == [0, 0]
    assert same
