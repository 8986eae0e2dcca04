import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coolopt.verification import CRITERIA, DESK_OVERRIDES, VerificationReport, desk_config, verify_formulas

checks = st.lists(st.tuples(st.floats(-10, 10), st.sampled_from(["<", "<=", ">", ">="]), st.floats(-10, 10),
                            st.sampled_from([None, *CRITERIA])), max_size=15)


@given(checks)
def test_report_passes_iff_every_check_passes(items):
    r = VerificationReport("t")
    for i, (v, rel, thr, crit) in enumerate(items):
        r.check(f"c{i}", v, rel, thr, crit)
    assert r.passed == all(c.passed for c in r.checks)
    assert len({c.name for c in r.checks}) == len(items)
    for k, ok in r.criteria().items():
        assert ok == all(c.passed for c in r.checks if c.criterion == k)
    assert len(r.criterion_lines()) == len(r.criteria())
    assert json.loads(r.to_json())["passed"] == r.passed


def test_duplicate_and_nan_checks():
    r = VerificationReport("t")
    r.check("a", 1.0, "<", 2.0)
    with pytest.raises(ValueError):
        r.check("a", 1.0, "<", 2.0)
    assert not r.check("b", float("nan"), "<", 2.0).passed
    other = VerificationReport("u")
    other.check("a", 0.0, "<", 1.0)
    with pytest.raises(ValueError):
        r.extend(other)


def test_formula_battery_passes():
    report = verify_formulas()
    assert report.passed, report.to_text()
    assert report.criteria() == {1: True}


def test_desk_profile_is_pinned():
    cfg = desk_config("simultaneous", 50.0)
    assert (cfg.domain.nx, cfg.domain.ny) == (DESK_OVERRIDES["domain.nx"], DESK_OVERRIDES["domain.ny"])
    assert cfg.mode == "simultaneous" and cfg.p_in == 50.0
    assert cfg.optimizer.max_iters == 30
