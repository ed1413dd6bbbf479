import pytest

import helpers


@pytest.fixture(scope="session")
def gen():
    return helpers.genealogy()


@pytest.fixture(scope="session")
def gen_raw():
    return helpers.genealogy(analyzer=False)


@pytest.fixture
def inst(gen):
    return helpers.fixture_instance(gen)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
