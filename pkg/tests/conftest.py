import pytest
from hypothesis import HealthCheck, settings

from _helpers import make_modes

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def five_modes():
    """Five well-separated noise-free modes at 44.1 kHz."""
    return make_modes([440.0, 1250.0, 3000.0, 7000.0, 12000.0],
                      [2e-4, 5e-4, 1e-3, 3e-4, 8e-4],
                      [0.3, -0.2, 0.1, 0.5, -0.4],
                      [1.0, 0.7, -0.5, 0.25, 0.6])


# ---------------------------------------------------------------- acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
