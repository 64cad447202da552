import pytest

_LINES: list[str] = []


class _Recorder:
    def __call__(self, cid: str, name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  [{cid}] {name}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
