"""Shared simulation runs and the per-criterion acceptance report."""

import numpy as np
import pytest

from kldrl.game import congestion_game, rps_zero_sum_game
from kldrl.pdm import Delayed, Smoothing
from kldrl.protocol import Protocol
from kldrl.sim import Scenario, batch_run, integrate, random_initial_states

X0 = np.array([0.7, 0.2, 0.1, 0.1, 0.1, 0.8])

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def delayed_congestion(eta, x0=X0, T=100.0, algorithm1=True, kind="kldrl", stride=1):
    g = congestion_game()
    proto = Protocol.kldrl(g.layout, eta) if kind == "kldrl" else Protocol.logit(g.layout, eta)
    return Scenario(g, Delayed(1.0, 1.0), proto, x0, T=T, algorithm1=algorithm1, record_stride=stride)


def smoothing_rps(eta, x0=X0, T=200.0, algorithm1=True, kind="kldrl", stride=1):
    g = rps_zero_sum_game()
    proto = Protocol.kldrl(g.layout, eta) if kind == "kldrl" else Protocol.logit(g.layout, eta)
    return Scenario(g, Smoothing(1.0, 0.1), proto, x0, T=T, algorithm1=algorithm1, record_stride=stride)


@pytest.fixture(scope="session")
def congestion_runs():
    """Eight random interior starts, KLD-RL with theta updates, T = 100."""
    x0s = random_initial_states(congestion_game().layout, 8, seed=2024)
    runs = batch_run([delayed_congestion(4.5, x0) for x0 in x0s])
    assert all(runs), [r for r in runs if not r]
    return runs


@pytest.fixture(scope="session")
def rps_run():
    return integrate(smoothing_rps(0.6))


@pytest.fixture(scope="session")
def logit_runs():
    return {
        ("congestion", 0.1): integrate(delayed_congestion(0.1, kind="logit", algorithm1=False)),
        ("congestion", 4.5): integrate(delayed_congestion(4.5, kind="logit", algorithm1=False)),
        ("rps", 0.1): integrate(smoothing_rps(0.1, kind="logit", algorithm1=False)),
        ("rps", 0.6): integrate(smoothing_rps(0.6, kind="logit", algorithm1=False)),
    }


@pytest.fixture(scope="session")
def speed_runs():
    """Long horizons for the eta comparison; also reused as convergence evidence."""
    return {
        ("congestion", 4.5): integrate(delayed_congestion(4.5, T=600.0, stride=10)),
        ("congestion", 9.0): integrate(delayed_congestion(9.0, T=600.0, stride=10)),
        ("rps", 0.6): integrate(smoothing_rps(0.6, T=1000.0, stride=10)),
        ("rps", 1.2): integrate(smoothing_rps(1.2, T=1000.0, stride=10)),
    }
