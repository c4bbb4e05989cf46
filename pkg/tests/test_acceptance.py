"""One test per acceptance criterion; each prints a pass/fail line with the
measured values and the pinned tolerance (collected into a summary table)."""

import pytest

from halfflow import acceptance as acc


@pytest.mark.parametrize("fn", acc.CRITERIA, ids=lambda f: f.__name__)
def test_criterion(fn, record_acceptance, capsys):
    result = fn(acc.Settings())
    line = result.line()
    record_acceptance(line)
    with capsys.disabled():
        print("\n" + line)
    assert result.status == "pass", line


def test_fault_injection_breaks_stationarity():
    result = acc.criterion_04(acc.Settings(fault="corrupt_C_half"))
    assert result.status == "fail"
    assert result.measured["rhs_rel_err"] == pytest.approx(0.1, rel=1e-6)


def test_reduced_resolution_downgrades_refinement_criteria():
    st = acc.Settings(M_scale=0.25)
    assert st.under_resolved()
    for fn in (acc.criterion_10, acc.criterion_11, acc.criterion_13):
        assert fn(st).status == acc.UNDER_RESOLVED
    assert acc.criterion_03(st).status == "pass"
