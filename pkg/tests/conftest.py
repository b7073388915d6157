import contextlib

import pytest

# (number, title, passed, detail), filled by the acceptance tests
CRITERIA = []


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record one PASS/FAIL line for an acceptance criterion.

    The body may set ``info["detail"]`` to attach the measured numbers.
    """
    info = {"detail": ""}
    try:
        yield info
    except BaseException as exc:
        line = f"criterion {number:>2} FAIL  {title}  {info['detail']}  ({type(exc).__name__})"
        CRITERIA.append((number, line))
        print(line)
        raise
    line = f"criterion {number:>2} PASS  {title}  {info['detail']}"
    CRITERIA.append((number, line))
    print(line)


@pytest.fixture
def acceptance():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERIA):
        terminalreporter.write_line(line)
