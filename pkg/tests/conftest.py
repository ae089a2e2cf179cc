"""Shared pytest plumbing: collect acceptance results and print them at the end."""

from __future__ import annotations

import pytest

ACCEPTANCE: dict[int, object] = {}


@pytest.fixture(scope="session")
def benchmark_results():
    """Baseline/FCL/PCL x 5 seeds on the default benchmark, trained once per session."""
    from pclab.checks import benchmark_grid

    return benchmark_grid()


@pytest.fixture
def record_acceptance():
    def _record(result):
        ACCEPTANCE[result.number] = result
        return result

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number].line())
    passed = sum(r.passed for r in ACCEPTANCE.values())
    terminalreporter.write_line(f"{passed}/{len(ACCEPTANCE)} criteria pass")
