import pytest

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture()
def criterion(request):
    """Record and print a PASS/FAIL line for an acceptance criterion."""
    store = request.config.stash.setdefault(_RESULTS, {})

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        store[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_RESULTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
