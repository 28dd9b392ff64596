import pytest

_CRITERIA_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict line; printed in the terminal summary."""
    table = request.config.stash.setdefault(_CRITERIA_KEY, {})

    def record(number, ok, detail):
        table[number] = ("PASS" if ok else "FAIL", detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_CRITERIA_KEY, {})
    skipped = [r for r in terminalreporter.stats.get("skipped", []) if "test_acceptance" in str(r.nodeid)]
    for r in skipped:
        num = r.nodeid.split("::")[-1].split("_")[1]
        if num.isdigit():
            reason = r.longrepr[-1] if isinstance(r.longrepr, tuple) else str(r.longrepr)
            table.setdefault(int(num), ("SKIP", reason))
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        verdict, detail = table[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")
