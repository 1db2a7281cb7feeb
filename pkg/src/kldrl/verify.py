"""Built-in invariant suite behind ``kldrl verify``.

Each check reports a slack: tolerance minus measured error (or a margin
that must be nonnegative).  A check passes iff its slack is >= 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from .game import (
    CONGESTION_NE,
    RPS_NE,
    AffineGame,
    congestion_game,
    nash_oracle,
    rps_zero_sum_game,
    skew_deficit,
)
from .pdm import Delayed, Smoothing, Static
from .protocol import (
    Protocol,
    generic_edm_field,
    kldrl_choice,
    logit_choice,
    storage_function,
    target_independent,
    GenericProtocol,
)
from .sim import Scenario, integrate
from .simplex import (
    PopulationLayout,
    interior_clamp,
    kl_divergence,
    kl_gradient,
    linear_argmax,
    random_state,
)
from .update import CriterionParams, UpdateMonitor, kl_decrease_slack, perturbed_nash


@dataclass(frozen=True)
class CheckResult:
    name: str
    slack: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.slack) and self.slack >= 0.0)


def _kl_example():
    err = abs(kl_divergence([0.5, 0.5], [0.25, 0.75]) - 0.143841)
    return 1e-6 - err, "KL((.5,.5)||(.25,.75)) = 0.143841"


def _logit_example():
    err = np.abs(logit_choice([1.0, 0.0], 1.0) - [0.73106, 0.26894]).max()
    return 1e-5 - err, "logit((1,0), 1)"


def _argmax_bruteforce():
    rng = np.random.default_rng(11)
    layout = PopulationLayout((3, 2, 4))
    verts = list(layout.vertices())
    worst = 0.0
    for _ in range(200):
        r = rng.standard_normal(layout.n)
        _, val = linear_argmax(r, layout)
        worst = max(worst, abs(val - max(float(v @ r) for v in verts)))
    return 1e-12 - worst, "200 random payoffs vs all vertices"


def _uniform_theta_is_logit():
    rng = np.random.default_rng(12)
    layout = PopulationLayout((3, 3))
    worst = 0.0
    for _ in range(200):
        r = rng.standard_normal(6) * 5
        eta = rng.uniform(0.05, 5)
        worst = max(worst, np.abs(kldrl_choice(layout.uniform_state(), r, eta, layout) - logit_choice(r, eta, layout)).max())
    return 1e-14 - worst, "KLD-RL with uniform theta vs logit"


def _kl_gradient_fd():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(50):
        x, y = rng.dirichlet(np.ones(4) * 3), rng.dirichlet(np.ones(4))
        v = rng.standard_normal(4)
        v -= v.mean()
        step = 1e-6
        fd = (kl_divergence(x + step * v, y) - kl_divergence(x - step * v, y)) / (2 * step)
        worst = max(worst, abs(fd - v @ kl_gradient(x, y)))
    return 1e-6 - worst, "tangent directional derivative vs centered differences"


def _generic_edm():
    rng = np.random.default_rng(14)
    layout = PopulationLayout((3, 3))
    eta = 0.7
    gp = GenericProtocol(layout, target_independent(lambda k, r: logit_choice(r, eta)))
    proto = Protocol.logit(layout, eta)
    worst = 0.0
    for _ in range(100):
        x = random_state(layout, rng)
        p = rng.standard_normal(6)
        worst = max(worst, np.abs(generic_edm_field(gp, x, p) - (proto.choice(p) - x)).max())
    return 1e-12 - worst, "generic revision field vs choice(p) - x"


def _storage_zero_at_choice():
    rng = np.random.default_rng(15)
    layout = PopulationLayout((3, 3))
    worst_zero, worst_neg = 0.0, 0.0
    for _ in range(100):
        theta = random_state(layout, rng)
        r = rng.standard_normal(6)
        eta = rng.uniform(0.1, 3)
        c = kldrl_choice(theta, r, eta, layout)
        worst_zero = max(worst_zero, abs(storage_function(theta, eta, c, r, layout)))
        z = random_state(layout, rng)
        worst_neg = min(worst_neg, storage_function(theta, eta, z, r, layout))
    return min(1e-10 - worst_zero, worst_neg + 1e-12), "storage is 0 at the choice, >= 0 elsewhere"


def _case_zero_payoff():
    layout = PopulationLayout((3, 3))
    theta = np.array([0.2, 0.3, 0.5, 0.6, 0.3, 0.1])
    x = perturbed_nash(AffineGame.zero(layout), 1.0, theta, tol=1e-13)
    return 1e-12 - np.abs(x - theta).max(), "zero game: perturbed equilibrium is theta"


def _case_uniform_is_logit():
    game = congestion_game()
    eta = 4.5
    x = perturbed_nash(game, eta, game.layout.uniform_state(), tol=1e-13)
    err = np.abs(logit_choice(game(x), eta, game.layout) - x).max()
    return 1e-10 - err, "uniform theta: perturbed equilibrium is a logit fixed point"


def _nash(game, target):
    x = nash_oracle(game, tol=1e-10)
    return 1e-6 - np.abs(x - target).max()


def _nash_congestion():
    return _nash(congestion_game(), CONGESTION_NE), "extragradient vs (4,1,4,4,1,4)/9"


def _nash_rps():
    return _nash(rps_zero_sum_game(), RPS_NE), "extragradient vs (1,10,5,1,10,5)/16"


def _pne_at_ne():
    game = congestion_game()
    x = perturbed_nash(game, 4.5, CONGESTION_NE, tol=1e-13)
    return 1e-9 - np.abs(x - CONGESTION_NE).max(), "theta = NE gives back NE"


def _skew_deficit_oracle():
    game = rps_zero_sum_game()
    K = game.F - game.F.T
    oracle = 0.25 * np.sqrt(np.linalg.eigvalsh(K.T @ K).max())
    return 1e-3 - abs(skew_deficit(game) - 0.5612486) - abs(skew_deficit(game) - oracle), "(1/4)||F - F^T|| vs eigenvalue oracle"


def _clamp_floor():
    layout = PopulationLayout((3, 3))
    x = np.array([1.0, 0.0, 0.0, 0.5, 0.5, 0.0])
    y = interior_clamp(x, layout, 1e-9)
    return min(y.min() - 1e-9 + 1e-18, 1e-12 - np.abs(layout.block_sum(y) - 1).max()), "clamped entries >= eps, sums 1"


def _passivity_static():
    game = congestion_game()
    s = Scenario(game, Static(), Protocol.logit(game.layout, 0.5), np.array([0.7, 0.2, 0.1, 0.1, 0.1, 0.8]), T=10.0)
    return dg.passivity_check(integrate(s), 0.0) + 1e-6, "static contractive PDM, nu = 0"


def _passivity_delayed():
    game = congestion_game()
    nu = float(np.linalg.norm(game.F, 2)) + 0.05
    s = Scenario(game, Delayed(1.0), Protocol.logit(game.layout, 0.1), np.array([0.7, 0.2, 0.1, 0.1, 0.1, 0.8]), T=20.0)
    return dg.passivity_check(integrate(s), nu, dg.delayed_alpha_fn(nu - 0.05, 1.0)) + 1e-5, "delayed congestion"


def _passivity_smoothing():
    game = rps_zero_sum_game()
    nu = skew_deficit(game) + 0.05
    s = Scenario(game, Smoothing(1.0), Protocol.logit(game.layout, 0.1), np.array([0.7, 0.2, 0.1, 0.1, 0.1, 0.8]), T=20.0)
    return dg.passivity_check(integrate(s), nu, dg.smoothing_alpha_fn(game)) + 1e-5, "smoothing RPS"


def _kl_monotone():
    game = congestion_game()
    s = Scenario(game, Delayed(1.0), Protocol.kldrl(game.layout, 4.5), np.array([0.7, 0.2, 0.1, 0.1, 0.1, 0.8]), T=30.0, algorithm1=True)
    tr = integrate(s)
    if len(tr.theta_events) < 2:
        return -1.0, "too few updates"
    return float(kl_decrease_slack(CONGESTION_NE, tr.thetas).min()) + 1e-6, f"{len(tr.theta_events)} updates"


def _distributed_sound():
    rng = np.random.default_rng(16)
    layout = PopulationLayout((3, 3))
    worst = np.inf
    hits = 0
    for i, smooth in itertools.product(range(100), (False, True)):
        params = (
            CriterionParams(eta=1.0, M=2, B_DF=2.0, B_F=3.0, lam=1.0, gamma=0.1)
            if smooth
            else CriterionParams(eta=1.0, M=2, B_DF=2.0, B_d=1.0)
        )
        mon, t1, x, p = random_snapshot(layout, params, rng)
        mg = mon.margins(t1, x, p)
        if np.all(mg[1:] >= 0):
            hits += 1
            worst = min(worst, mg[0])
    if hits == 0:
        return -1.0, "no snapshot satisfied all distributed checks"
    return worst, f"{hits} all-true snapshots"


def random_snapshot(layout, params, rng, steps: int = 60, h: float = 0.05):
    """A monitor filled with random decaying samples, plus a state near the
    perturbed equilibrium of its theta."""
    theta = random_state(layout, rng)
    mon = UpdateMonitor(layout, theta, params)
    scale = 10.0 ** rng.uniform(-7, -1)
    t = 0.0
    for _ in range(steps):
        mon.record(t, rng.standard_normal(layout.n) * scale * np.exp(-t), rng.standard_normal(layout.n))
        t += h
    t1 = t - h
    x = random_state(layout, rng)
    x = 0.5 * x + 0.5 * theta
    p = params.eta * np.log(x / theta) + rng.standard_normal(layout.n) * 10.0 ** rng.uniform(-6, -1)
    return mon, t1, x, p


CHECKS = {
    "kl_divergence_example": _kl_example,
    "logit_example": _logit_example,
    "linear_argmax_vs_vertices": _argmax_bruteforce,
    "kldrl_uniform_theta_is_logit": _uniform_theta_is_logit,
    "kl_gradient_finite_difference": _kl_gradient_fd,
    "generic_edm_closed_form": _generic_edm,
    "storage_function_zero_at_choice": _storage_zero_at_choice,
    "zero_game_perturbed_is_theta": _case_zero_payoff,
    "uniform_theta_perturbed_is_logit": _case_uniform_is_logit,
    "nash_congestion": _nash_congestion,
    "nash_rps": _nash_rps,
    "perturbed_nash_at_nash": _pne_at_ne,
    "skew_deficit_oracle": _skew_deficit_oracle,
    "interior_clamp_floor": _clamp_floor,
    "passivity_static": _passivity_static,
    "passivity_delayed": _passivity_delayed,
    "passivity_smoothing": _passivity_smoothing,
    "theta_kl_monotone": _kl_monotone,
    "distributed_implies_centralized": _distributed_sound,
}


def run_checks(names=None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        if names is not None and name not in names:
            continue
        try:
            slack, detail = fn()
        except Exception as exc:
            slack, detail = float("-inf"), f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, float(slack), detail))
    return out


def render(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'status':<6}  {'slack':>12}  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.slack:>12.4g}  {r.detail}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
