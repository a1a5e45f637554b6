import re

import numpy as np
import pytest

from maskbench.dataset import generate_fixture_corpus


@pytest.fixture(scope="session")
def fixture_corpus():
    return generate_fixture_corpus(1, 4, 10, 92, 112)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    criterion, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _ACCEPTANCE.append((criterion, status, title, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, title, detail in sorted(_ACCEPTANCE, key=lambda r: (int(re.match(r"\d+", r[0]).group()), r[0])):
        line = f"C{criterion:<6} {status}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
