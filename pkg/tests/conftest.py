import pytest

_RESULTS = {}


class Criteria:
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def record(self, key, passed, detail):
        _RESULTS[key] = ("PASS" if passed else "FAIL", detail)
        return bool(passed)

    def info(self, key, detail):
        _RESULTS[key] = ("INFO", detail)


@pytest.fixture(scope="session")
def criteria():
    return Criteria()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: (int("".join(c for c in k if c.isdigit()) or 0), k)):
        verdict, detail = _RESULTS[key]
        terminalreporter.write_line(f"{verdict}  criterion {key}: {detail}")
