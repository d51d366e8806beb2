from __future__ import annotations

import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; returns the pass flag so tests can assert on it."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(line)
        lines.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
