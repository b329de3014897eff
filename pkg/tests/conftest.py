import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


class Recorder:
    def __call__(self, criterion: str, ok: bool, detail: str = "") -> None:
        _RESULTS[criterion] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
        assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="session")
def criterion():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS):
        ok, detail = _RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
