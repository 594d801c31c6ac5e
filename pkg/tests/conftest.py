import pytest

from corpus import ACCEPTANCE, classified_triangle, triangle


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def t1():
    return triangle()


@pytest.fixture
def t1_classified():
    return classified_triangle()
