from __future__ import annotations

import numpy as np
import pytest

from matchexp import Schema

from _helpers import build_dataset

_acceptance_results: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): acceptance criterion metadata"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    recordable = report.when == "call" or (report.when == "setup" and report.skipped)
    if marker and recordable:
        number, title = marker.args
        if report.passed:
            status = "PASS"
        elif report.skipped:
            status = "SKIP"
        else:
            status = "FAIL"
        _acceptance_results.append((str(number), title, status))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, status in sorted(_acceptance_results, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number} ({title}): {status}")


@pytest.fixture
def rng():
    return np.random.default_rng(20210412)


@pytest.fixture
def tiny_schema():
    return Schema(
        granularity="hourly",
        covariates={"temperature": "numeric", "wind_direction": "categorical"},
        outcomes={"no2": "ug/m3"},
        interventions=("tonnage",),
    )


@pytest.fixture
def make_dataset():
    return build_dataset
