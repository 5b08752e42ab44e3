import pytest

from todsim.sampledata import make_human_episodes, make_world

_acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        _acceptance_results[item.name] = (report.passed, item.function.__doc__ or "")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        passed, doc = _acceptance_results[name]
        summary = doc.strip().splitlines()[0] if doc.strip() else name
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {summary}")


@pytest.fixture(scope="session")
def small_world():
    """2 domains x 2 intents x 2 slots, 3 goals per intent."""
    return make_world(2, goals_per_intent=3, seed=42)


@pytest.fixture(scope="session")
def small_episodes(small_world):
    fixture, goals, table = small_world
    return make_human_episodes(fixture, goals, table)
