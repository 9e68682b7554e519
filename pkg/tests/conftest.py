"""Shared pytest configuration: per-criterion PASS/FAIL lines for the acceptance suite."""

import pytest

CRITERIA = {
    1: "kernel mass, closed forms and self-similarity",
    2: "linear L2 decay slopes",
    3: "ODE oracle and convergence orders",
    4: "mass identity across absorbing runs",
    5: "dichotomy of the limiting mass",
    6: "critical blow-up",
    7: "profile convergence",
    8: "composite inequality",
    9: "scaling law exponents",
    10: "small-data certificate",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(crit, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        count = len(results or [])
        terminalreporter.write_line(
            f"criterion {n:>2} {status:<7} {label} ({count} check{'' if count == 1 else 's'})"
        )
