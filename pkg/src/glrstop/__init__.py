"""Anytime-valid stopping certification for contextual best-action selection.

Two precision targets are supported over a finite context/action space with
Gaussian noise of unknown, heterogeneous variance: a context-wise guarantee
(each context's selected action is within delta of its best, weighted by the
context distribution) and an aggregate one (the selected policy's expected
value is within delta of optimal).  Evidence is accumulated through plug-in
generalized likelihood ratio statistics compared against time-uniform
boundaries, so the data collection may stop the first moment the target is
certified, under any adapted sampling strategy.

Layout: ``stats`` holds the shared state accumulators, ``boundary`` the
threshold calibrations, ``unstructured``/``linear`` the two estimation
backends and their stopping checks, ``environments``/``sampling``/``harness``
the synthetic benchmarks and Monte Carlo machinery, ``martingales``/
``oracles`` the validation suites, and ``service``/``cli`` the HTTP and
command-line front ends.
"""

from .boundary import (
    CRITERIA,
    ErrorBudget,
    asymptotic_reference,
    boundary_linear,
    boundary_unstructured,
    gamma,
    gamma_l,
    make_budget,
    rho,
    rho_l,
)
from .decision import ContextDiagnostics, StopDecision
from .environments import (
    LinearEnvironment,
    TabularEnvironment,
    OfflineLog,
    Simulation,
    Online,
    Hybrid,
    best_actions,
    delta_optimal_mask,
    dixon_price_env,
    dump_environment,
    environment_from_dict,
    load_environment,
    make_environment,
    matyas_env,
    next_context,
    optimal_value,
    policy_value,
    random_linear_env,
    sample,
    standard_linear_env,
    toy_env,
    true_means,
    validate_source,
)
from .errors import ConfigurationError, NotReadyError, PreconditionError, SourceExhausted
from .harness import (
    AggregateReport,
    ExperimentConfig,
    ReplicationResult,
    emit_boundary_csv,
    run_experiment,
    run_replication,
    write_results_csv,
)
from .linear import (
    LinearState,
    certified_slack_linear,
    check_stop_p1_linear,
    check_stop_p2_linear,
    glr_statistic_linear,
    pair_boundary_linear,
)
from .sampling import (
    STRATEGY_NAMES,
    SamplingDecision,
    Strategy,
    equal_allocation,
    greedy_challenger,
    make_strategy,
    uniform_random,
)
from .stats import ContextSpace, PairStats, LinearActionStats
from .unstructured import (
    UnstructuredState,
    certified_slack,
    check_stop_p1,
    check_stop_p2,
    context_regret,
    empirical_best,
    glr_statistic,
)

__version__ = "0.1.0"

__all__ = [
    "CRITERIA",
    "STRATEGY_NAMES",
    "AggregateReport",
    "ConfigurationError",
    "ContextDiagnostics",
    "ContextSpace",
    "ErrorBudget",
    "ExperimentConfig",
    "Hybrid",
    "LinearActionStats",
    "LinearEnvironment",
    "LinearState",
    "NotReadyError",
    "OfflineLog",
    "Online",
    "PairStats",
    "PreconditionError",
    "ReplicationResult",
    "SamplingDecision",
    "Simulation",
    "SourceExhausted",
    "StopDecision",
    "Strategy",
    "TabularEnvironment",
    "UnstructuredState",
    "asymptotic_reference",
    "best_actions",
    "boundary_linear",
    "boundary_unstructured",
    "certified_slack",
    "certified_slack_linear",
    "check_stop_p1",
    "check_stop_p1_linear",
    "check_stop_p2",
    "check_stop_p2_linear",
    "context_regret",
    "delta_optimal_mask",
    "dixon_price_env",
    "dump_environment",
    "emit_boundary_csv",
    "empirical_best",
    "environment_from_dict",
    "equal_allocation",
    "gamma",
    "gamma_l",
    "glr_statistic",
    "glr_statistic_linear",
    "greedy_challenger",
    "load_environment",
    "make_budget",
    "make_environment",
    "make_strategy",
    "matyas_env",
    "next_context",
    "optimal_value",
    "pair_boundary_linear",
    "policy_value",
    "random_linear_env",
    "rho",
    "rho_l",
    "run_experiment",
    "run_replication",
    "sample",
    "standard_linear_env",
    "toy_env",
    "true_means",
    "uniform_random",
    "validate_source",
    "write_results_csv",
]
