"""Leader-follower elastic-averaging SGD: simulator, privacy accounting and
convergence-bound verification."""

from .backends import get_backend
from .errors import RunAbort, ValidationError
from .harness import RunConfig, comm_accounting, export, load_config, run_experiment
from .optimizer import (
    HyperParams,
    WorkerState,
    elastic_pair_update,
    follower_multi_pull,
    local_sgd_step,
    run_async,
    run_local_sgd,
    run_sync,
)
from .privacy import (
    PrivacyConfig,
    PrivacyLedger,
    account_step,
    calibrate_sigma,
    clip_gradient,
    privatize_gradient,
    spent_epsilon,
    strong_composition_epsilon,
)
from .problems import (
    DataShard,
    GradientSample,
    Problem,
    estimate_sigma1,
    full_gradient,
    full_loss,
    loss,
    make_logistic,
    make_mlp,
    make_quadratic,
    mlp_forward_backward,
    stochastic_gradient,
)
from .rng import seed_streams
from .theory import (
    DistanceSeries,
    TheoryParams,
    check_bound_dominance,
    derive_theory_params,
    distance_bound,
    measure_distance_series,
    privacy_tradeoff_floor,
    rate_comparison,
)
from .topology import Pairing, Roster, draw_pairing, initial_roster, recat_message_cost, recategorize
from .trace import RunTrace

__version__ = "0.1.0"
