"""Longer horizons than the acceptance defaults; the limit points are the same."""

import numpy as np
import pytest

from kldrl import diagnostics as dg
from kldrl.game import CONGESTION_NE, RPS_NE
from kldrl.sim import sup_distance

pytestmark = pytest.mark.slow

TARGET = {"congestion": CONGESTION_NE, "rps": RPS_NE}


@pytest.mark.parametrize("key", [("congestion", 4.5), ("rps", 0.6)])
def test_long_run_reaches_nash(speed_runs, key):
    tr = speed_runs[key]
    assert sup_distance(tr.final_state, TARGET[key[0]]) <= 1e-2
    assert dg.kl_to_target(tr, TARGET[key[0]]).final <= 1e-3


def test_kl_tail_is_nonincreasing(speed_runs):
    series = dg.kl_to_target(speed_runs[("congestion", 4.5)], CONGESTION_NE)
    assert np.diff(series.tail(0.1).values).max() <= 1e-6


def test_theta_sequence_monotone_on_long_runs(speed_runs):
    from kldrl.update import kl_decrease_slack

    for (game, _), tr in speed_runs.items():
        assert kl_decrease_slack(TARGET[game], tr.thetas).min() >= -1e-6


def test_rps_max_gain_below_logit(speed_runs, logit_runs):
    kld = dg.max_gain(speed_runs[("rps", 0.6)], 1).final
    for eta in (0.1, 0.6):
        assert kld <= dg.max_gain(logit_runs[("rps", eta)], 1).final
