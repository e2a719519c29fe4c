import pytest

_RESULTS_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion."""
    store = request.config.stash[_RESULTS_KEY]

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_RESULTS_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        terminalreporter.write_line(store[k])
