import numpy as np
import pytest

from fracspde.specmodel import builtin_model

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    n, title = marker
    prev = _CRITERIA.get(n, (title, True))
    _CRITERIA[n] = (title, prev[1] and report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report._criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def heat():
    return builtin_model("heat_1d", {"K": 4, "theta": 1.0, "H": 0.5})


@pytest.fixture
def lap():
    return builtin_model("laplacian_power", {"K": 6, "theta": 1.5, "H": 0.35, "r": -1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
