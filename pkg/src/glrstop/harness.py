"""Experiment configuration, Monte Carlo replication, aggregation, CSV output.

run_replication drives one source -> strategy -> sample -> update -> check
loop to its stopping time and scores the returned policy against the
environment's exact ground truth.  run_experiment fans replications out
over a process pool; replication r always uses the substream
SeedSequence(entropy=seed, spawn_key=(r,)), so reports are identical for
any worker count.  Censored runs (no stop by t_max) are counted at t_max
and flagged, never dropped.

Equal-allocation simulation runs in the unstructured model go through a
specialized engine that batches noise draws one sweep at a time and
memoizes boundary lookups; its stage-by-stage decisions match the
reference checks exactly (covered by tests).
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .boundary import (
    CRITERIA,
    ErrorBudget,
    asymptotic_reference,
    boundary_unstructured,
    boundary_unstructured_array,
    gamma_curve,
    make_budget,
    stage_grid,
)
from .environments import (
    Environment,
    Hybrid,
    OfflineLog,
    Online,
    Simulation,
    make_environment,
    next_context,
    validate_source,
)
from .errors import ConfigurationError
from .linear import LinearState, check_stop_p1_linear, check_stop_p2_linear
from .sampling import STRATEGY_NAMES, Strategy, feasible_pair_cycle, make_strategy
from .stats import ContextSpace
from .unstructured import DENOM_FLOOR, UnstructuredState

SETTINGS = ("unstructured", "linear")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, JSON round-trippable."""

    environment: Union[str, Mapping]
    setting: str
    criterion: str
    alpha: float
    delta: float
    strategy: str = "equal_allocation"
    n0: int = 10
    check_interval: int = 1
    source: Union[str, Mapping] = "simulation"
    replications: int = 1
    seed: int = 0
    t_max: int = 10**7
    output: Optional[str] = None

    def __post_init__(self) -> None:
        if self.setting not in SETTINGS:
            raise ConfigurationError(f"setting must be one of {SETTINGS}")
        if self.criterion not in CRITERIA:
            raise ConfigurationError(f"criterion must be one of {CRITERIA}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.delta < 0.0:
            raise ConfigurationError("delta must be nonnegative")
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        if self.n0 < 2:
            raise ConfigurationError("n0 must be at least 2")
        if self.check_interval < 1:
            raise ConfigurationError("check_interval must be >= 1")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if self.t_max < 1:
            raise ConfigurationError("t_max must be >= 1")

    def to_dict(self) -> dict:
        out = {
            "environment": self.environment,
            "setting": self.setting,
            "criterion": self.criterion,
            "alpha": self.alpha,
            "delta": self.delta,
            "strategy": self.strategy,
            "n0": self.n0,
            "check_interval": self.check_interval,
            "source": self.source,
            "replications": self.replications,
            "seed": self.seed,
            "t_max": self.t_max,
        }
        if self.output is not None:
            out["output"] = self.output
        return out

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ExperimentConfig":
        known = {
            "environment", "setting", "criterion", "alpha", "delta",
            "strategy", "n0", "check_interval", "source", "replications",
            "seed", "t_max", "output",
        }
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "environment" not in payload:
            raise ConfigurationError("config needs an 'environment'")
        kwargs = dict(payload)
        for key in ("n0", "check_interval", "replications", "seed", "t_max"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class ReplicationResult:
    """One replication's stopping time, policy and precision indicators."""

    rep_index: int
    stop_time: int
    censored: bool
    policy: Mapping[str, str]
    p1_indicator: float
    p2_indicator: int


@dataclass(frozen=True)
class AggregateReport:
    """Across-replication summary; std uses the n-1 divisor and censored
    runs enter the averages at t_max."""

    avg_ssize: float
    std_ssize: float
    empirical_p1: float
    empirical_p2: float
    censor_count: int
    replications: int
    config: Mapping
    wall_time_s: float
    results: Sequence[ReplicationResult] = field(default_factory=tuple)


# ---------------------------------------------------------------------------
# Source configuration.


def make_source(spec: Union[str, Mapping]):
    """Build a data-source mode from its JSON form."""
    if isinstance(spec, str):
        if spec == "simulation":
            return Simulation()
        if spec == "online":
            return Online()
        raise ConfigurationError(f"unknown source {spec!r}")
    cfg = dict(spec)
    mode = cfg.get("mode")
    if mode == "simulation":
        return Simulation()
    if mode == "online":
        return Online()
    if mode == "offline":
        return OfflineLog(pairs=[tuple(p) for p in cfg["pairs"]])
    if mode == "hybrid":
        segments = []
        for seg in cfg["schedule"]:
            seg = dict(seg)
            count = int(seg.pop("count"))
            segments.append((make_source(seg), count))
        return Hybrid(schedule=segments)
    raise ConfigurationError(f"unknown source mode {mode!r}")


# ---------------------------------------------------------------------------
# Ground-truth scoring.


def _tables(env: Environment) -> tuple[np.ndarray, np.ndarray]:
    mu = env.truth
    if env.kind == "tabular":
        sd = env.noise_sd
    else:
        sd = np.broadcast_to(env.noise_sd, mu.shape)
    return mu, sd


def _score(env: Environment, policy_idx: np.ndarray, delta: float) -> tuple[float, int]:
    space = env.space
    rows = np.arange(space.m)
    masked = np.where(space.feasible_mask, env.truth, -np.inf)
    top = masked.max(axis=1)
    chosen = env.truth[rows, policy_idx]
    p1 = float(space.weights @ (chosen >= top - delta))
    p2 = int(float(space.weights @ chosen) >= float(space.weights @ top) - delta)
    return p1, p2


def _policy_ids(space: ContextSpace, policy_idx: np.ndarray) -> dict:
    return {
        space.context_ids[x]: space.action_ids[int(policy_idx[x])]
        for x in range(space.m)
    }


def _fallback_policy(space: ContextSpace, n: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Empirical best among sampled arms; first feasible arm when nothing
    is sampled yet (censoring before readiness)."""
    policy = np.zeros(space.m, dtype=np.intp)
    for x in range(space.m):
        actions = space.feasible_actions(x)
        sampled = [a for a in actions if n[x, a] > 0]
        if not sampled:
            policy[x] = actions[0]
        else:
            policy[x] = max(sampled, key=lambda a: (mean[x, a], -a))
    return policy


# ---------------------------------------------------------------------------
# Unstructured engines.


def _drive_unstructured_fast(
    env: Environment,
    budget: ErrorBudget,
    rng: np.random.Generator,
    criterion: str,
    delta: float,
    t_max: int,
    check_interval: int,
    n0: int,
) -> tuple[int, bool, np.ndarray]:
    """Equal-allocation simulation loop in plain Python.

    The sweep order makes counts deterministic, so noise is drawn one sweep
    at a time (stream-identical to per-stage draws) and boundary values are
    memoized by (n_best, n_challenger, budget).  After the warm-up gate only
    the context touched at each stage is re-evaluated; every other context's
    statistics and boundaries are unchanged, so its clearance state is still
    exact.
    """
    space = env.space
    m, k = space.m, space.k
    cycle = feasible_pair_cycle(space)
    P = len(cycle)
    mu_t, sd_t = _tables(env)
    mu_flat = [float(mu_t[x, a]) for x, a in cycle]
    sd_flat = [float(sd_t[x, a]) for x, a in cycle]
    slot = [x * k + a for x, a in cycle]

    n = [0] * (m * k)
    mean = [0.0] * (m * k)
    m2 = [0.0] * (m * k)
    feas = [list(space.feasible_actions(x)) for x in range(m)]
    wlist = [float(w) for w in space.weights]
    budget_of = dict(budget.per_context)
    p1_mode = criterion == "P1"

    cleared = [len(feas[x]) == 1 for x in range(m)]
    uncleared = sum(1 for x in range(m) if not cleared[x])
    regret = [0.0 if len(feas[x]) == 1 else math.inf for x in range(m)]
    inf_count = uncleared
    weighted_finite = 0.0

    memo: dict = {}
    inf_ = math.inf
    sqrt = math.sqrt

    def eval_ctx(x: int) -> None:
        nonlocal uncleared, inf_count, weighted_finite
        base = x * k
        acts = feas[x]
        bud = budget_of[x]
        best = acts[0]
        best_mean = mean[base + best]
        for a in acts[1:]:
            mu = mean[base + a]
            if mu > best_mean:
                best, best_mean = a, mu
        i_best = base + best
        n_best = n[i_best]
        var_best = m2[i_best] / (n_best - 1)
        vb_over = var_best / n_best
        if p1_mode:
            ok = True
            for a in acts:
                if a == best:
                    continue
                i = base + a
                n_a = n[i]
                key = (n_best, n_a, bud)
                phi = memo.get(key)
                if phi is None:
                    phi = boundary_unstructured(n_best, n_a, bud)
                    memo[key] = phi
                num = best_mean - mean[i] + delta
                denom = vb_over + m2[i] / (n_a - 1) / n_a
                if denom < DENOM_FLOOR:
                    z = 0.0 if num == 0.0 else inf_
                else:
                    z = 0.5 * num * num / denom
                if not z > phi:
                    ok = False
                    break
            if ok != cleared[x]:
                cleared[x] = ok
                uncleared += -1 if ok else 1
            return
        worst = 0.0
        for a in acts:
            if a == best:
                continue
            i = base + a
            n_a = n[i]
            key = (n_best, n_a, bud)
            phi = memo.get(key)
            if phi is None:
                phi = boundary_unstructured(n_best, n_a, bud)
                memo[key] = phi
            if phi == inf_:
                worst = inf_
                break
            denom = vb_over + m2[i] / (n_a - 1) / n_a
            w = sqrt(2.0 * phi * denom) - (best_mean - mean[i])
            if w > worst:
                worst = w
        old = regret[x]
        if worst != old:
            regret[x] = worst
            if old == inf_:
                inf_count -= 1
                weighted_finite += wlist[x] * worst
            elif worst == inf_:
                inf_count += 1
                weighted_finite -= wlist[x] * old
            else:
                weighted_finite += wlist[x] * (worst - old)

    n0f = max(2, n0)
    gate_t = n0f * P
    nonsingle = [x for x in range(m) if len(feas[x]) > 1]
    buf = None
    buf_pos = 0
    t = 0
    stopped = False
    while t < t_max:
        pos = t % P
        if pos == 0:
            block = min(P, t_max - t)
            buf = rng.standard_normal(block)
            buf_pos = 0
        x, _a = cycle[pos]
        i = slot[pos]
        y = mu_flat[pos] + sd_flat[pos] * buf[buf_pos]
        buf_pos += 1
        t += 1
        cnt = n[i] + 1
        n[i] = cnt
        mv = mean[i]
        dlt = y - mv
        mv += dlt / cnt
        mean[i] = mv
        m2[i] += dlt * (y - mv)
        if t < gate_t:
            continue
        if t == gate_t:
            for xx in nonsingle:
                eval_ctx(xx)
        elif len(feas[x]) > 1:
            eval_ctx(x)
        if t % check_interval:
            continue
        if p1_mode:
            if uncleared == 0:
                stopped = True
                break
        elif inf_count == 0 and weighted_finite <= delta:
            stopped = True
            break

    policy = np.zeros(m, dtype=np.intp)
    for x in range(m):
        acts = feas[x]
        base = x * k
        best = -1
        best_mean = -inf_
        for a in acts:
            if n[base + a] > 0 and mean[base + a] > best_mean:
                best, best_mean = a, mean[base + a]
        policy[x] = best if best >= 0 else acts[0]
    return t, not stopped, policy


def _drive_unstructured_general(
    env: Environment,
    budget: ErrorBudget,
    strategy: Strategy,
    source,
    rng: np.random.Generator,
    criterion: str,
    delta: float,
    t_max: int,
    check_interval: int,
    n0: int,
) -> tuple[int, bool, np.ndarray]:
    """Reference unstructured loop: any strategy, any data source."""
    space = env.space
    m = space.m
    state = UnstructuredState(space)
    mu_t, sd_t = _tables(env)
    feas_idx = [np.asarray(space.feasible_actions(x), dtype=np.intp) for x in range(m)]
    nonsingle = [x for x in range(m) if feas_idx[x].size > 1]
    flat_feas = np.flatnonzero(space.feasible_mask.ravel())
    p1_mode = criterion == "P1"

    cleared = np.ones(m, dtype=bool)
    regret = np.zeros(m)
    for x in nonsingle:
        cleared[x] = False
        regret[x] = np.inf

    def eval_ctx(x: int) -> None:
        idx = feas_idx[x]
        nr = state.n[x, idx].astype(np.float64)
        mu = state.mean[x, idx]
        var = state.m2[x, idx] / (nr - 1.0)
        lead = int(np.argmax(mu))
        drop = np.arange(idx.size) != lead
        denom = var[lead] / nr[lead] + var[drop] / nr[drop]
        phi = boundary_unstructured_array(nr[lead], nr[drop], budget.per_context[x])
        gap = mu[lead] - mu[drop]
        if p1_mode:
            num = gap + delta
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(
                    denom >= DENOM_FLOOR,
                    0.5 * num * num / denom,
                    np.where(num == 0.0, 0.0, np.inf),
                )
            cleared[x] = bool((z > phi).all())
        else:
            w = np.where(
                np.isinf(phi), np.inf, np.maximum(0.0, np.sqrt(2.0 * phi * denom) - gap)
            )
            regret[x] = float(w.max()) if w.size else 0.0

    n0f = max(2, n0)
    gate_min = n0f * flat_feas.size
    gated = False
    is_sim = isinstance(source, Simulation)
    t = 0
    stopped = False
    while t < t_max:
        t += 1
        if is_sim:
            x, a = strategy.decide(state, rng).pair
        else:
            arrival = next_context(source, space, rng, t)
            if arrival is None:
                x, a = strategy.decide(state, rng).pair
            elif isinstance(arrival, tuple):
                x = space.context_index(arrival[0])
                a = space.action_index(arrival[1])
            else:
                x = space.context_index(arrival)
                a = strategy.decide(state, rng, context=x).action
        y = float(mu_t[x, a]) + float(sd_t[x, a]) * float(rng.standard_normal())
        state.update(x, a, y)
        if not gated:
            if t < gate_min or int(state.n.ravel()[flat_feas].min()) < n0f:
                continue
            gated = True
            for xx in nonsingle:
                eval_ctx(xx)
        elif feas_idx[x].size > 1:
            eval_ctx(x)
        if t % check_interval:
            continue
        if p1_mode:
            if cleared.all():
                stopped = True
                break
        elif float(space.weights @ regret) <= delta:
            stopped = True
            break

    policy = _fallback_policy(space, state.n, state.mean)
    return t, not stopped, policy


# ---------------------------------------------------------------------------
# Linear engine.


def _drive_linear(
    env: Environment,
    budget: ErrorBudget,
    strategy: Strategy,
    source,
    rng: np.random.Generator,
    criterion: str,
    delta: float,
    t_max: int,
    check_interval: int,
    n0: int,
) -> tuple[int, bool, np.ndarray]:
    space = env.space
    state = LinearState(space)
    mu_t, sd_t = _tables(env)
    check = check_stop_p1_linear if criterion == "P1" else check_stop_p2_linear
    floor = max(state.d + 1, n0)
    gated = False
    is_sim = isinstance(source, Simulation)
    decision = None
    t = 0
    while t < t_max:
        t += 1
        if is_sim:
            x, a = strategy.decide(state, rng).pair
        else:
            arrival = next_context(source, space, rng, t)
            if arrival is None:
                x, a = strategy.decide(state, rng).pair
            elif isinstance(arrival, tuple):
                x = space.context_index(arrival[0])
                a = space.action_index(arrival[1])
            else:
                x = space.context_index(arrival)
                a = strategy.decide(state, rng, context=x).action
        y = float(mu_t[x, a]) + float(sd_t[x, a]) * float(rng.standard_normal())
        state.update(x, a, y)
        if not gated:
            if t < floor * space.k or not (
                state.all_ready and int(state.counts().min()) >= floor
            ):
                continue
            gated = True
        if t % check_interval:
            continue
        decision = check(state, budget, delta)
        if decision.stop:
            break

    stopped = decision is not None and decision.stop
    if stopped:
        policy = np.array(
            [space.action_index(decision.policy[cid]) for cid in space.context_ids],
            dtype=np.intp,
        )
    else:
        policy = _linear_fallback_policy(space, state)
    return t, not stopped, policy


def _linear_fallback_policy(space: ContextSpace, state: LinearState) -> np.ndarray:
    policy = np.zeros(space.m, dtype=np.intp)
    for x in range(space.m):
        actions = space.feasible_actions(x)
        fitted = [
            (float(space.features[x] @ state.beta(a)), -a)
            for a in actions
            if state.solved(a)
        ]
        if not fitted:
            policy[x] = actions[0]
        else:
            best_val = max(fitted)
            policy[x] = -best_val[1]
    return policy


# ---------------------------------------------------------------------------
# Replication and experiment drivers.


def run_replication(config: ExperimentConfig, rep_index: int) -> ReplicationResult:
    env = make_environment(config.environment)
    space = env.space
    if config.setting == "linear" and space.features is None:
        raise ConfigurationError("linear setting needs an environment with features")
    budget = make_budget(space, config.alpha, config.criterion)
    source = make_source(config.source)
    validate_source(source, space)
    strategy = make_strategy(
        config.strategy,
        n0=config.n0,
        delta=config.delta,
        budget=budget,
        design=env.design_points if env.kind == "linear" else None,
    )
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(rep_index,))
    )

    if config.setting == "linear":
        stop_time, censored, policy_idx = _drive_linear(
            env, budget, strategy, source, rng, config.criterion,
            config.delta, config.t_max, config.check_interval, config.n0,
        )
    elif config.strategy == "equal_allocation" and isinstance(source, Simulation):
        stop_time, censored, policy_idx = _drive_unstructured_fast(
            env, budget, rng, config.criterion,
            config.delta, config.t_max, config.check_interval, config.n0,
        )
    else:
        stop_time, censored, policy_idx = _drive_unstructured_general(
            env, budget, strategy, source, rng, config.criterion,
            config.delta, config.t_max, config.check_interval, config.n0,
        )

    p1, p2 = _score(env, policy_idx, config.delta)
    return ReplicationResult(
        rep_index=rep_index,
        stop_time=int(stop_time),
        censored=bool(censored),
        policy=_policy_ids(space, policy_idx),
        p1_indicator=p1,
        p2_indicator=p2,
    )


def run_experiment(config: ExperimentConfig, workers: int = 1) -> AggregateReport:
    """All replications plus order-independent aggregation."""
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    started = time.perf_counter()
    reps = range(config.replications)
    if workers == 1:
        results = [run_replication(config, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replication, [config] * len(reps), reps))
    results.sort(key=lambda r: r.rep_index)
    wall = time.perf_counter() - started

    times = [r.stop_time for r in results]
    nrep = len(results)
    avg = sum(times) / nrep
    if nrep > 1:
        std = math.sqrt(sum((s - avg) ** 2 for s in times) / (nrep - 1))
    else:
        std = math.nan
    return AggregateReport(
        avg_ssize=avg,
        std_ssize=std,
        empirical_p1=sum(r.p1_indicator for r in results) / nrep,
        empirical_p2=sum(r.p2_indicator for r in results) / nrep,
        censor_count=sum(1 for r in results if r.censored),
        replications=nrep,
        config=config.to_dict(),
        wall_time_s=wall,
        results=tuple(results),
    )


# ---------------------------------------------------------------------------
# CSV output.


def write_results_csv(report: AggregateReport, path: Union[str, Path]) -> None:
    """One row per replication plus a trailing summary row.

    In the summary row: rep holds the replication count, stop_time the
    average sample size, censored the censor count, and policy the std of
    the sample size and the wall time.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# schema=1\n")
        fh.write(f"# config={json.dumps(report.config, sort_keys=True)}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["record", "rep", "stop_time", "censored", "p1_indicator", "p2_indicator", "policy"]
        )
        for r in report.results:
            writer.writerow(
                [
                    "replication",
                    r.rep_index,
                    r.stop_time,
                    int(r.censored),
                    f"{r.p1_indicator:.10g}",
                    r.p2_indicator,
                    ";".join(f"{c}:{a}" for c, a in r.policy.items()),
                ]
            )
        writer.writerow(
            [
                "summary",
                report.replications,
                f"{report.avg_ssize:.10g}",
                report.censor_count,
                f"{report.empirical_p1:.10g}",
                f"{report.empirical_p2:.10g}",
                f"std={report.std_ssize:.10g};wall_s={report.wall_time_s:.3f}",
            ]
        )


def emit_boundary_csv(
    alphas: Sequence[float],
    path: Union[str, Path],
    t_max: int = 10**8,
    points: int = 200,
) -> None:
    """gamma(t, alpha) on a log-spaced stage grid, one row per (alpha, t),
    with the asymptotic reference 2*ln(1/alpha) + ln(t+1) alongside."""
    if not alphas:
        raise ConfigurationError("need at least one alpha")
    grid = stage_grid(t_max=t_max, points=points)
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# schema=1\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "alpha", "gamma", "asymptotic_reference"])
        for alpha in alphas:
            curve = gamma_curve(alpha, grid)
            for t, g in zip(grid, curve):
                writer.writerow(
                    [
                        int(t),
                        f"{alpha:.10g}",
                        "inf" if math.isinf(g) else f"{g:.12g}",
                        f"{asymptotic_reference(float(t), alpha):.12g}",
                    ]
                )
