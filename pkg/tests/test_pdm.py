import numpy as np
import pytest

from kldrl.game import AffineGame, congestion_game, rps_zero_sum_game
from kldrl.pdm import (
    Delayed,
    DelayHistory,
    HistoryUnderrun,
    MultiDelay,
    Smoothing,
    Static,
    antipassivity_deficit,
    delayed_stored_energy,
    pdm_init,
    pdm_output,
    smoothing_derivative,
    smoothing_stored_energy,
)
from kldrl.protocol import Protocol
from kldrl.sim import Scenario, integrate

X0 = np.array([0.7, 0.2, 0.1, 0.1, 0.1, 0.8])
X1 = np.array([0.1, 0.1, 0.8, 0.5, 0.25, 0.25])


def test_kind_validation():
    with pytest.raises(ValueError):
        Delayed(0.0)
    with pytest.raises(ValueError):
        Delayed(1.0, B_d=0.5)
    assert Delayed(1.0).B_d == 1.0
    with pytest.raises(ValueError):
        Smoothing(0.0)
    with pytest.raises(ValueError):
        Smoothing(1.0, gamma=1.0)


def test_delayed_output_is_initial_payoff_before_d():
    g = congestion_game()
    st = pdm_init(g, Delayed(1.0), X0)
    assert np.array_equal(pdm_output(st, 0.5), g(X0))


def test_delayed_piecewise_history_lookup():
    g = congestion_game()
    st = pdm_init(g, Delayed(1.0), X0)
    t = 0.0
    for _ in range(150):
        t = round(t + 0.01, 10)
        st.commit(t, X0 if t < 0.3 else X1)
    assert np.allclose(pdm_output(st, 1.2), g(X0))
    # halfway between the samples at 0.29 (X0) and 0.30 (X1)
    assert np.allclose(pdm_output(st, 1.295), g(0.5 * X0 + 0.5 * X1))


def test_history_underrun():
    h = DelayHistory(0.0, X0, span=1.0, capacity=8)
    for k in range(1, 40):
        h.append(k * 0.1, X1)
    with pytest.raises(HistoryUnderrun):
        h(0.5)
    with pytest.raises(HistoryUnderrun):
        h(100.0)
    assert np.array_equal(h(3.5), X1)


def test_static_and_zero_delay_multidelay_agree():
    g = congestion_game()
    st = pdm_init(g, Static(), X0)
    md = pdm_init(g, MultiDelay.split(g, [0.0, 0.0], [0.3, 0.7]), X0)
    assert np.allclose(pdm_output(st, 3.0, X1), g(X1))
    assert np.allclose(pdm_output(md, 0.0, X1), g(X1), atol=1e-15)


def test_multidelay_terms_must_sum_to_game():
    g = congestion_game()
    bad = MultiDelay.split(rps_zero_sum_game(), [1.0])
    with pytest.raises(ValueError):
        pdm_init(g, bad, X0)
    with pytest.raises(ValueError):
        MultiDelay.split(g, [1.0, 2.0], [0.5, 0.6])


def test_smoothing_initial_and_rate():
    g = rps_zero_sum_game()
    st = pdm_init(g, Smoothing(1.0), X0, p0=np.zeros(6))
    assert np.array_equal(st.p, np.zeros(6))
    assert np.allclose(smoothing_derivative(st, X0), g(X0))
    st = pdm_init(g, Smoothing(2.0), X0)
    assert np.array_equal(smoothing_derivative(st, X0), np.zeros(6))
    with pytest.raises(TypeError):
        smoothing_derivative(pdm_init(g, Static(), X0), X0)


def test_smoothing_filter_decays_exponentially():
    # x frozen at a logit fixed point so only p moves
    g = rps_zero_sum_game()
    lay = g.layout
    zero = AffineGame.zero(lay)
    x = lay.uniform_state()
    p0 = np.array([1.0, -1.0, 0.5, 0.2, 0.0, -0.2])
    s = Scenario(zero, Smoothing(1.0), Protocol.kldrl(lay, 1.0), x, T=2.0, p0=p0)
    tr = integrate(s)
    for t in (1.0, 2.0):
        i = int(round(t / 0.01))
        assert np.linalg.norm(tr.payoffs[i]) == pytest.approx(np.linalg.norm(p0) * np.exp(-t), abs=1e-6)


def test_deficits():
    c, r = congestion_game(), rps_zero_sum_game()
    assert antipassivity_deficit(pdm_init(c, Delayed(1.0), X0)) == pytest.approx(np.linalg.norm(c.F, 2))
    assert antipassivity_deficit(pdm_init(r, Smoothing(1.0), X0)) == pytest.approx(0.5612486, abs=1e-6)
    assert antipassivity_deficit(pdm_init(c, Smoothing(1.0), X0)) == pytest.approx(0.0, abs=1e-15)
    assert antipassivity_deficit(pdm_init(c, Static(), X0)) == 0.0
    md = MultiDelay.split(c, [0.5, 1.0])
    assert antipassivity_deficit(pdm_init(c, md, X0)) == pytest.approx(np.linalg.norm(c.F, 2))
    noncontractive = AffineGame(c.layout, np.eye(6), np.zeros(6))
    with pytest.raises(ValueError):
        antipassivity_deficit(pdm_init(noncontractive, Smoothing(1.0), X0))


def test_stored_energy():
    times = np.linspace(0, 5, 501)
    assert delayed_stored_energy(4.0, 1.0, times, np.zeros(501), 3.0) == 0.0
    assert delayed_stored_energy(4.0, 1.0, times, np.full(501, 0.3), 3.0) == pytest.approx(0.5 * 4 * 0.09 * 1.0)
    g = congestion_game()
    assert smoothing_stored_energy(g, X0, g(X0)) == 0.0
