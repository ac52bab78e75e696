"""Shared fixtures, plus the acceptance-criterion report.

Acceptance tests record one entry per criterion; after the run a
one-line PASS/FAIL verdict per criterion is appended to the terminal
summary so the acceptance status is readable at a glance.
"""

import pytest

CRITERION_TITLES = {
    1: "solver matches exhaustive grid search on tiny instances",
    2: "QP objective equals the explicit double-sum matching norm",
    3: "bound formulas reproduce independently derived golden values",
    4: "in-RKHS bound covers the realized error at the stated level",
    5: "KMM error on the smooth scenario shrinks at the parametric rate",
    6: "rough-regression scenario degrades the rate by a visible margin",
    7: "KMM rate exponent dominates the plug-in exponent for every theta",
    8: "KMM beats the plug-in estimator at fixed n on the smooth scenario",
    9: "weight error versus the true ratio does not grow with n",
    10: "invariant suites and CLI determinism run inside the time budget",
}

_ACCEPTANCE: dict[int, dict] = {}


@pytest.fixture
def criterion_report():
    """Record the verdict for one acceptance criterion."""

    def record(number: int, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE[number] = {
            "title": CRITERION_TITLES.get(number, "unknown criterion"),
            "passed": bool(passed),
            "detail": detail,
        }

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        verdict = "PASS" if entry["passed"] else "FAIL"
        detail = f" ({entry['detail']})" if entry["detail"] else ""
        tr.write_line(
            f"[{verdict}] criterion {number}: {entry['title']}{detail}"
        )
