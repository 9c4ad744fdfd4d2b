import pytest

from gaswlan.phy import DEFAULT_PHY, PhyProfile


@pytest.fixture
def phy():
    return DEFAULT_PHY


@pytest.fixture
def phy300():
    # round-number profile: 9 us empty slot, 300 us busy slot
    return PhyProfile(T_e=9e-6, T_t=300e-6, l=12000.0)


VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line, then fail the test if the criterion is not met."""

    def record(criterion: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion:>2}: {detail}"
        request.config.stash.setdefault(VERDICTS, {})[criterion] = line
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(VERDICTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
