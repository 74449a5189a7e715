import os
from pathlib import Path

import pytest

from metricf.dataset import load_dataset

DATA = Path(os.environ.get("METRICF_DATA", Path(__file__).resolve().parents[1] / "data"))
ML100K = DATA / "ml-100k" / "u.data"
FILMTRUST = DATA / "filmtrust" / "ratings.txt"


@pytest.fixture(scope="session")
def ml100k():
    if not ML100K.exists():
        pytest.skip(f"{ML100K} missing; run scripts/fetch_data.py")
    return load_dataset(ML100K)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, [title, True])
    if report.failed or (report.when == "call" and report.skipped):
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}  {'PASS' if ok else 'FAIL'}  {title}")
