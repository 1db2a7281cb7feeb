from types import SimpleNamespace

import numpy as np
import pytest

from kldrl import diagnostics as dg
from kldrl.game import CONGESTION_NE, RPS_NE, AffineGame, congestion_game, rps_zero_sum_game
from kldrl.pdm import Static
from kldrl.protocol import Protocol
from kldrl.sim import Scenario, integrate
from kldrl.simplex import DomainError, PopulationLayout

from conftest import X0

L33 = PopulationLayout((3, 3))


def fake(game, states, times=None):
    states = np.atleast_2d(states)
    times = np.arange(len(states), dtype=float) if times is None else times
    return SimpleNamespace(game=game, layout=game.layout, times=times, states=states)


def test_kl_to_target_constant():
    tr = fake(congestion_game(), np.tile(CONGESTION_NE, (5, 1)))
    assert np.array_equal(dg.kl_to_target(tr, CONGESTION_NE).values, np.zeros(5))
    assert np.array_equal(dg.kl_to_target(tr, CONGESTION_NE, population=1).values, np.zeros(5))


def test_kl_to_target_support_mismatch():
    tr = fake(congestion_game(), X0)
    with pytest.raises(DomainError):
        dg.kl_to_target(tr, np.array([1.0, 0, 0, 1.0, 0, 0]))


def test_average_payoff():
    assert dg.average_payoff(fake(congestion_game(), CONGESTION_NE)).final == pytest.approx(-22 / 9)
    assert dg.average_payoff(fake(congestion_game(), CONGESTION_NE)).final == pytest.approx(-2.44, abs=0.01)
    assert dg.average_payoff(fake(AffineGame.zero(L33), X0)).final == 0.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        half = rng.dirichlet(np.ones(3))
        assert dg.average_payoff(fake(rps_zero_sum_game(), np.concatenate([half, half]))).final == pytest.approx(0.0, abs=1e-15)


def test_max_gain():
    g = rps_zero_sum_game()
    assert dg.max_gain(fake(g, RPS_NE), 1).final == pytest.approx(g(RPS_NE)[3:].max())
    assert dg.max_gain(fake(AffineGame.zero(L33), X0), 0).final == 0.0


def test_oscillation_amplitude():
    t = np.linspace(0, 20 * np.pi, 20001)
    const = fake(congestion_game(), np.tile(X0, (len(t), 1)), t)
    assert dg.oscillation_amplitude(const, 0, 0.2) == 0.0
    states = np.tile(X0, (len(t), 1))
    states[:, 0] += 0.05 * np.sin(t)
    assert dg.oscillation_amplitude(fake(congestion_game(), states, t), 0, 0.2) == pytest.approx(0.1, abs=1e-5)
    with pytest.raises(ValueError):
        dg.oscillation_amplitude(const, 0, 0.0)


def test_convergence_time():
    t = np.arange(11.0)
    assert dg.convergence_time(dg.MetricSeries("z", t, np.zeros(11)), 1e-3) == 0.0
    vals = np.where(t < 5, 1.0, 1e-4)
    assert dg.convergence_time(dg.MetricSeries("s", t, vals), 1e-3) == 5.0
    assert dg.convergence_time(dg.MetricSeries("n", t, np.ones(11)), 1e-3) is None
    bounce = vals.copy()
    bounce[7] = 1.0
    assert dg.convergence_time(dg.MetricSeries("b", t, bounce), 1e-3) == 8.0
    with pytest.raises(ValueError):
        dg.convergence_time(dg.MetricSeries("z", t, np.zeros(11)), 0.0)


def test_metric_series_alignment():
    with pytest.raises(ValueError):
        dg.MetricSeries("bad", np.arange(3.0), np.arange(4.0))


def test_passivity_static_contractive():
    g = congestion_game()
    tr = integrate(Scenario(g, Static(), Protocol.logit(L33, 0.3), X0, T=15.0))
    assert dg.passivity_check(tr, 0.0) >= -1e-6


def test_passivity_detects_violation():
    # an anti-contractive game with nu = 0 stores energy it never had
    g = AffineGame(L33, 2.0 * np.eye(6), np.zeros(6))
    tr = integrate(Scenario(g, Static(), Protocol.logit(L33, 1.0), X0, T=10.0))
    assert dg.passivity_check(tr, 0.0) < -1e-3


def test_passivity_needs_samples():
    tr = SimpleNamespace(times=np.arange(2.0))
    with pytest.raises(ValueError):
        dg.passivity_check(tr, 0.0)
