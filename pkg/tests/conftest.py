import copy
from pathlib import Path

import pytest

from sdwban.scenario import build_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

LOSSLESS = {
    "body": {"loss_prob": 0},
    "uplink": {"loss_prob": 0},
    "control": {"loss_prob": 0},
}


def make_doc(**kw) -> dict:
    """A one-patient, one-LC document; keyword args replace top-level keys."""
    doc = {
        "schema_version": 1,
        "name": "t",
        "duration_s": 10,
        "seed": 1,
        "topology": {"n_patients": 1, "j_controllers": 1},
        "link_defaults": copy.deepcopy(LOSSLESS),
        "sensors": [{"patient": 0, "app": "heart_rate", "period_s": 1.0, "phase_s": 1.0, "jitter_stddev": 0}],
    }
    doc.update(kw)
    return doc


def make_scenario(**kw):
    return build_scenario(make_doc(**kw))


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


# -- acceptance reporting: one pass/fail line per criterion ---------------

_criteria: list[tuple[int, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _criteria.append((mark.args[0], mark.args[1], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict in sorted(_criteria):
        terminalreporter.write_line(f"criterion {number:>2}  {verdict}  {title}")
