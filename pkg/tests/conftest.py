import numpy as np
import pytest

from ntt.config import ModelConfig
from ntt.simworld import DatasetConfig, generate_dataset

# small widths keep oracle comparisons fast; behaviour does not depend on d
SMALL = ModelConfig(d=8, n_modes=3, n_map=6, n_agents=4, max_segments=8)


@pytest.fixture(scope="session")
def small_cfg():
    return SMALL


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(DatasetConfig(n_train=32, n_val=16, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary -----------------------------------------------------
# Acceptance tests carry @pytest.mark.criterion(number, title) and may attach a
# ("detail", text) user property; the summary prints one PASS/FAIL line per criterion.

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or report.outcome != "passed":
        num, title = mark.args
        detail = dict(item.user_properties).get("detail", "")
        if report.outcome != "passed" and report.when != "call":
            detail = f"{report.when} error: {detail}" if detail else f"{report.when} error"
        _criteria[num] = (title, "PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status, detail = _criteria[num]
        terminalreporter.write_line(f"criterion {num:2d} {status}  {title}: {detail}")
