import hashlib

import pytest

from lattice_abe.lsss import compile_lsss, parse_policy
from lattice_abe.params import select_params
from lattice_abe.sampling import RandomSource
from lattice_abe.scheme import keygen, setup

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def seeded(label: str) -> RandomSource:
    """Deterministic source derived from a readable label."""
    return RandomSource(hashlib.sha256(label.encode()).digest())


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        prev = _ACCEPTANCE.get(number)
        if prev is None or prev[0] == "PASS":
            _ACCEPTANCE[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


@pytest.fixture(scope="session")
def toy_params():
    return select_params(4, 2, "toy")


@pytest.fixture(scope="session")
def toy_system(toy_params):
    pp, msk = setup(toy_params, seeded("toy-system"))
    return pp, msk


def make_key(pp, msk, text: str, label: str):
    policy = compile_lsss(parse_policy(text), pp.modulus).padded(pp.params.cap_l)
    return keygen(pp, msk, policy, seeded(label))


@pytest.fixture(scope="session")
def and_key(toy_system):
    pp, msk = toy_system
    return make_key(pp, msk, "a AND b", "and-key")
