import pytest

from eigenbehaviour import synth

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion reported in the summary")


@pytest.fixture(scope="session")
def small_cohort():
    return synth.generate_cohort(12, seed=7)


@pytest.fixture(scope="session")
def default_cohort():
    return synth.generate_cohort(48, seed=0)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        details = "; ".join(v for k, v in item.user_properties if k == "detail")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA.append((mark.args[0], status, mark.args[1], details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, title, details in sorted(_CRITERIA):
        line = f"C{num} {status}: {title}"
        terminalreporter.write_line(line + (f" [{details}]" if details else ""))
