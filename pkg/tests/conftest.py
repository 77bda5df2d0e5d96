"""Collects acceptance results and prints one PASS/FAIL line per criterion."""
import pytest

TITLES = {
    1: "center heatmap equals brute force",
    2: "noiseless round trip",
    3: "noise robustness",
    4: "loss oracles",
    5: "evaluation oracles",
    6: "distractor exclusion",
    7: "post-processing speed",
    8: "format stability",
}

_outcomes: dict[int, list[bool]] = {}
_metrics: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _outcomes.setdefault(marker.args[0], []).append(call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(TITLES):
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n} ({TITLES[n]}): {status}")
    for line in _metrics:
        terminalreporter.write_line(f"  {line}")


@pytest.fixture
def record_metric():
    """Measured values, printed under the criterion lines."""
    return _metrics.append
