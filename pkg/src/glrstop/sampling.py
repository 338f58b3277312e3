"""Pluggable sampling strategies.

The stopping guarantees hold for any adapted sampler, so this module is
deliberately open: a strategy is anything that maps the current state to a
feasible decision.  In simulation mode the decision is a (context, action)
pair; in online mode the context arrives exogenously and the decision is an
action for it.  Everything here is replayable: decisions depend only on the
state, the strategy's own configuration, and (for the randomized strategy)
the supplied generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .boundary import boundary_unstructured
from .errors import ConfigurationError
from .linear import LinearState, glr_statistic_linear, pair_boundary_linear
from .stats import ContextSpace
from .unstructured import UnstructuredState, empirical_best, glr_statistic

State = "UnstructuredState | LinearState"


@dataclass(frozen=True)
class SamplingDecision:
    """pair is set in simulation mode, action in online mode (never both)."""

    pair: Optional[tuple] = None
    action: Optional[int] = None


def feasible_pair_cycle(space: ContextSpace) -> list:
    """Lexicographic (context, action) order used for round-robin cycling."""
    return [(x, a) for x in range(space.m) for a in space.feasible_actions(x)]


def _row_total(state, x: int) -> int:
    counts = state.n if isinstance(state, UnstructuredState) else state.pair_n
    return int(counts[x].sum())


def equal_allocation(
    state,
    mode: str,
    context: Optional[int] = None,
    design: Optional[tuple] = None,
) -> SamplingDecision:
    """Deterministic round-robin.

    Simulation mode cycles feasible (context, action) pairs lexicographically
    (unstructured) or actions fastest with contexts advancing every k stages
    (linear), so after k*T stages every action holds exactly T samples.  In
    the linear case the contexts cycled are the design points when supplied
    (sampling at the corners of the feature range is what makes pooled
    regression informative); otherwise the whole grid.  Online mode cycles
    the feasible actions of the supplied context.
    """
    if mode == "online":
        if context is None:
            raise ConfigurationError("online mode needs the arriving context")
        actions = state.space.feasible_actions(context)
        return SamplingDecision(action=actions[_row_total(state, context) % len(actions)])
    if mode != "simulation":
        raise ConfigurationError(f"unknown sampling mode {mode!r}")
    if isinstance(state, LinearState):
        space = state.space
        cycle = design if design else tuple(range(space.m))
        a = state.t % space.k
        x = cycle[(state.t // space.k) % len(cycle)]
        if not space.feasible_mask[x, a]:
            raise ConfigurationError("linear round-robin assumes all pairs feasible")
        return SamplingDecision(pair=(x, a))
    cycle = feasible_pair_cycle(state.space)
    return SamplingDecision(pair=cycle[state.t % len(cycle)])


def uniform_random(
    state, mode: str, rng: np.random.Generator, context: Optional[int] = None
) -> SamplingDecision:
    """Uniform draw over feasible pairs (simulation) or actions (online)."""
    if mode == "online":
        if context is None:
            raise ConfigurationError("online mode needs the arriving context")
        actions = state.space.feasible_actions(context)
        return SamplingDecision(action=actions[int(rng.integers(len(actions)))])
    if mode != "simulation":
        raise ConfigurationError(f"unknown sampling mode {mode!r}")
    cycle = feasible_pair_cycle(state.space)
    return SamplingDecision(pair=cycle[int(rng.integers(len(cycle)))])


def _units_ready(state, n0: int) -> bool:
    if isinstance(state, LinearState):
        floor = max(state.d + 1, n0)
        return state.all_ready and bool((state.counts() >= floor).all())
    floor = max(2, n0)
    mask = state.space.feasible_mask
    return bool((state.n[mask] >= floor).all())


def _margin(z: float, phi: float) -> float:
    if math.isinf(phi):
        return -math.inf
    if math.isinf(z):
        return math.inf
    return z - phi


def _pair_margin(state, x: int, best: int, b: int, budget_x: float, delta: float) -> float:
    if isinstance(state, LinearState):
        z = glr_statistic_linear(state, x, best, b, delta)
        phi = pair_boundary_linear(state, x, best, b, budget_x)
    else:
        z = glr_statistic(state, x, best, b, delta)
        phi = boundary_unstructured(int(state.n[x, best]), int(state.n[x, b]), budget_x)
    return _margin(z, phi)


def _best_at(state, x: int) -> int:
    if isinstance(state, LinearState):
        actions = state.space.feasible_actions(x)
        fx = state.space.features[x]
        return max(actions, key=lambda a: float(fx @ state.beta(a)))
    return empirical_best(state, x)


def greedy_challenger(
    state,
    mode: str,
    budget,
    delta: float,
    context: Optional[int] = None,
    n0: int = 10,
    rng: Optional[np.random.Generator] = None,
    design: Optional[tuple] = None,
) -> SamplingDecision:
    """Sample the challenger in the currently tightest comparison.

    The tightest comparison is the (context, challenger) pair minimizing the
    certified margin Z - phi against the empirical leader; ties go to the
    challenger with the fewest samples, then to lexicographic order.  Until
    every unit has n0 samples (and the estimators are defined) this falls
    back to equal allocation.  In linear simulation mode the chosen action
    is paired with a design-point context (round-robin by that action's
    count); the margin scan still ranges over the whole grid.
    """
    if not _units_ready(state, n0):
        return equal_allocation(state, mode, context, design=design)
    space = state.space
    counts = state.n if isinstance(state, UnstructuredState) else state.pair_n

    def scan(rows):
        best_key, best_dec = None, None
        for x in rows:
            actions = space.feasible_actions(x)
            if len(actions) == 1:
                continue
            leader = _best_at(state, x)
            for b in actions:
                if b == leader:
                    continue
                key = (
                    _pair_margin(state, x, leader, b, budget.per_context[x], delta),
                    int(counts[x, b]),
                    x,
                    b,
                )
                if best_key is None or key < best_key:
                    best_key, best_dec = key, (x, b)
        return best_dec

    if mode == "online":
        if context is None:
            raise ConfigurationError("online mode needs the arriving context")
        found = scan([context])
        if found is None:
            return equal_allocation(state, mode, context)
        return SamplingDecision(action=found[1])
    if mode != "simulation":
        raise ConfigurationError(f"unknown sampling mode {mode!r}")
    found = scan(range(space.m))
    if found is None:
        return equal_allocation(state, mode, context, design=design)
    if isinstance(state, LinearState) and design:
        b = found[1]
        x = design[int(state.counts()[b]) % len(design)]
        if state.space.feasible_mask[x, b]:
            return SamplingDecision(pair=(x, b))
    return SamplingDecision(pair=found)


class Strategy:
    """A named sampling rule bound to its configuration.

    decide() dispatches on mode: context=None means simulation (returns a
    pair), otherwise online (returns an action for that context).  n0 is the
    per-unit warm-up floor; the stopping checks only start once every unit
    has n0 samples.
    """

    def __init__(
        self,
        name: str,
        n0: int = 10,
        delta: float = 0.0,
        budget=None,
        design: Optional[tuple] = None,
    ):
        if n0 < 2:
            raise ConfigurationError("n0 must be at least 2 (variances need two samples)")
        self.name = name
        self.n0 = int(n0)
        self.delta = float(delta)
        self.budget = budget
        self.design = tuple(design) if design else None
        self._cycle: Optional[list] = None

    def decide(self, state, rng: np.random.Generator, context: Optional[int] = None) -> SamplingDecision:
        mode = "simulation" if context is None else "online"
        if self.name == "equal_allocation":
            # Cache the pair cycle; rebuilding it every stage dominates
            # the per-stage cost for unstructured runs.
            if mode == "simulation" and isinstance(state, UnstructuredState):
                if self._cycle is None:
                    self._cycle = feasible_pair_cycle(state.space)
                return SamplingDecision(pair=self._cycle[state.t % len(self._cycle)])
            return equal_allocation(state, mode, context, design=self.design)
        if self.name == "uniform_random":
            return uniform_random(state, mode, rng, context)
        if self.name == "greedy_challenger":
            if self.budget is None:
                raise ConfigurationError("greedy_challenger needs an error budget")
            return greedy_challenger(
                state, mode, self.budget, self.delta, context,
                n0=self.n0, rng=rng, design=self.design,
            )
        raise ConfigurationError(f"unknown strategy {self.name!r}")


STRATEGY_NAMES = ("equal_allocation", "uniform_random", "greedy_challenger")


def make_strategy(
    name: str, n0: int = 10, delta: float = 0.0, budget=None, design=None
) -> Strategy:
    if name not in STRATEGY_NAMES:
        raise ConfigurationError(
            f"unknown strategy {name!r}; available: {', '.join(STRATEGY_NAMES)}"
        )
    return Strategy(name, n0=n0, delta=delta, budget=budget, design=design)
