import pytest

from handoffsim.model import Scenario, validate_scenario


@pytest.fixture
def small():
    """A short, busy guard-dual-queue scenario with every timer active."""
    return validate_scenario(Scenario(
        n_channels=3, guard_channels=1, cap_handoff_queue=2, cap_new_queue=2,
        lambda_new=1.5, lambda_handoff=1.0, eta_dwell=0.5,
        theta_renege_handoff=0.5, theta_renege_new=0.5,
        sim_time=300.0, warmup_time=20.0, replications=3, seed=7,
    ))


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line and fail the test if the criterion failed."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(criterion: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
