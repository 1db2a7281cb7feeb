"""KL-divergence regularized learning in population games with dynamic payoffs."""

from .diagnostics import (
    MetricSeries,
    average_payoff,
    convergence_time,
    delayed_alpha_fn,
    kl_to_target,
    max_gain,
    oscillation_amplitude,
    passivity_check,
    smoothing_alpha_fn,
)
from .game import (
    CONGESTION_NE,
    RPS_NE,
    AffineGame,
    ConvergenceError,
    bounds,
    builtin_game,
    congestion_game,
    is_contractive,
    load_game,
    nash_oracle,
    nash_residual,
    rps_zero_sum_game,
    skew_deficit,
)
from .pdm import Delayed, MultiDelay, Smoothing, Static, antipassivity_deficit, pdm_init
from .protocol import (
    Protocol,
    edm_vector_field,
    kldrl_choice,
    logit_choice,
    mixed_equilibrium_residual,
    storage_function,
)
from .sim import Scenario, SimulationError, Trajectory, batch_run, integrate
from .simplex import PopulationLayout, interior_clamp, kl_divergence, kl_gradient, linear_argmax
from .update import (
    CriterionParams,
    UpdateMonitor,
    check_delay_criterion,
    check_distributed,
    check_smoothing_criterion,
    lhs_stationarity,
    perturbed_nash,
    trigger_update,
)

__version__ = "0.1.0"
