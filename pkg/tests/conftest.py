import numpy as np
import pytest

from coldcharge.model import EvSession, Scenario, ThermalParams


def make_session(i, t_arrive, t_depart, e_initial=10.0, e_depart=12.0, e_cap=50.0, t_initial=2.0, thermal=None):
    return EvSession(i, t_arrive, t_depart, e_initial, e_depart, e_cap, t_initial, thermal or ThermalParams())


def flat_scenario(sessions, horizon=24, ambient=-10.0, price=0.01, pv=0.0, price_cap=0.05):
    return Scenario.build(
        np.full(horizon, ambient), np.full(horizon, price), np.full(horizon, pv), sessions, price_cap
    )


@pytest.fixture
def params():
    return ThermalParams()


@pytest.fixture
def small_scenario():
    sessions = [
        make_session(0, 0, 12, e_initial=10.0, e_depart=14.0, t_initial=3.0),
        make_session(1, 2, 20, e_initial=5.0, e_depart=12.0, t_initial=1.0),
        make_session(2, 5, 24, e_initial=20.0, e_depart=22.0, t_initial=4.5),
    ]
    rng = np.random.default_rng(7)
    h = 24
    return Scenario.build(
        -10.0 + rng.uniform(-2, 2, h), rng.uniform(0.002, 0.02, h), rng.uniform(0, 6, h), sessions, 0.05
    )


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}" + (f"  [{detail}]" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
