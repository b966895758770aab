"""Shared fixtures: the acceptance-criterion recorder and its summary hook."""

import pytest

CRITERIA = {
    1: "exact-oracle agreement",
    2: "estimator triangle",
    3: "null-regime collapse",
    4: "double-robustness grid",
    5: "martingale means",
    6: "estimating-equation identities",
    7: "mesh refinement",
    8: "censoring recovery",
    9: "positivity failure surfacing",
    10: "determinism",
}

_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance-criterion outcome, then enforce it."""

    def check(number: int, passed: bool, detail: str = "") -> None:
        _RESULTS[number] = (bool(passed), detail)
        assert passed, f"criterion {number} ({CRITERIA[number]}): {detail}"

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in _RESULTS:
            passed, detail = _RESULTS[number]
            status = "PASS" if passed else "FAIL"
        else:
            status, detail = "NOT RUN", ""
        line = f"criterion {number:2d} [{status}] {title}"
        if detail:
            line = f"{line}: {detail}"
        terminalreporter.write_line(line)
