from collections import defaultdict

import pytest
from hypothesis import settings

from dani.io import RawCascade

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

CRITERIA = {
    1: "worked example exactness (sequential and pipeline)",
    2: "oracle equivalence on 50 random corpora",
    3: "parallel determinism p in {1,2,4,8}",
    4: "recovery trend on the planted-partition benchmark",
    5: "structure preservation (JS vs random, no isolated nodes)",
    6: "runtime scaling when M doubles",
    7: "metric suite unit values",
    8: "invariant property suite",
}

_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[marker.args[0]].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {name}")


@pytest.fixture
def worked_cascades():
    """c1 infects a, b, c in that order; c2 infects b then a."""
    return [
        RawCascade("c1", (("a", 1.0), ("b", 2.0), ("c", 3.0))),
        RawCascade("c2", (("b", 1.0), ("a", 2.0))),
    ]


@pytest.fixture
def worked_weights():
    return {("a", "b"): 2.0, ("a", "c"): 2.0 / 3.0, ("b", "a"): 1.0, ("b", "c"): 1.0}
