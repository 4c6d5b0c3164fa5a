import pytest

from crocs.attributes import AttributeSpace
from crocs.data import NormMode, bin_ages, generate_synthetic, normalize, split_patients

from desk import Desk

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[marker.args[0]] = (report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        passed, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def desk():
    return Desk()


def make_tiny(seed=0, patients=20, segments=3, D=388, noise=0.1, space=AttributeSpace(2, 2, 2)):
    ds = generate_synthetic(space, patients, segments, D, noise, seed)
    return normalize(bin_ages(split_patients(ds, seed=seed)), NormMode.MINMAX)


@pytest.fixture(scope="session")
def tiny():
    return make_tiny()
