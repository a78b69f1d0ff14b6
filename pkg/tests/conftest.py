import pytest

_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or not (rep.when == "call" or rep.failed):
        return
    n, title = m.args
    # a criterion passes only if every test carrying it passes
    if _results.get(n, ("PASS",))[0] == "PASS":
        _results[n] = ("PASS" if rep.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, title = _results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
