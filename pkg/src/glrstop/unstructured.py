"""Plug-in GLR statistics and stopping rules for the unstructured setting.

Each (context, action) pair keeps its own Welford accumulator.  The
statistic for a pair of actions under a context is the plug-in GLR

    Z(a, b; eta) = (mean_a - mean_b + eta)^2 / (2 * (S_a^2/n_a + S_b^2/n_b))

compared against a time-uniform boundary.  Two stopping rules are built on
top of it: the context-wise rule certifies every context's empirical best
against all challengers at slack delta, and the aggregate rule certifies
that the weighted sum of per-context slacks is below delta.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .boundary import ErrorBudget, boundary_unstructured
from .decision import ContextDiagnostics, StopDecision
from .errors import NotReadyError
from .stats import ContextSpace, PairStats

# Denominators below this are treated as exactly zero (degenerate branch).
DENOM_FLOOR = 1e-300


class UnstructuredState:
    """All pair accumulators for one experiment, indexed by (context, action).

    Internally uses flat arrays so the hot loops stay cheap; the ``stats``
    view exposes the per-pair accumulators as a mapping for inspection.
    """

    def __init__(self, space: ContextSpace) -> None:
        self.space = space
        m, k = space.m, space.k
        self.n = np.zeros((m, k), dtype=np.int64)
        self.mean = np.zeros((m, k), dtype=np.float64)
        self.m2 = np.zeros((m, k), dtype=np.float64)
        self.t = 0

    def update(self, x: int, a: int, y: float) -> None:
        if not self.space.feasible_mask[x, a]:
            raise NotReadyError(
                f"action {self.space.action_ids[a]!r} is infeasible under "
                f"context {self.space.context_ids[x]!r}"
            )
        n = self.n[x, a] + 1
        self.n[x, a] = n
        mean = self.mean[x, a]
        delta = y - mean
        mean += delta / n
        self.mean[x, a] = mean
        self.m2[x, a] += delta * (y - mean)
        self.t += 1

    def pair(self, x: int, a: int) -> PairStats:
        return PairStats(
            n=int(self.n[x, a]), mean=float(self.mean[x, a]), m2=float(self.m2[x, a])
        )

    @property
    def stats(self) -> Mapping[tuple[str, str], PairStats]:
        out: dict[tuple[str, str], PairStats] = {}
        for x in range(self.space.m):
            for a in self.space.feasible_actions(x):
                out[(self.space.context_ids[x], self.space.action_ids[a])] = self.pair(x, a)
        return out

    def variance(self, x: int, a: int) -> float:
        n = self.n[x, a]
        if n < 2:
            raise NotReadyError(f"pair ({x}, {a}) has n={n} < 2")
        return float(self.m2[x, a]) / (n - 1)


def scalar_statistic(
    mean_a: float, var_a: float, n_a: int, mean_b: float, var_b: float, n_b: int, eta: float
) -> float:
    """Core GLR formula on plain floats (shared by ops and the fast engine)."""
    num = mean_a - mean_b + eta
    denom = var_a / n_a + var_b / n_b
    if denom < DENOM_FLOOR:
        return 0.0 if num == 0.0 else math.inf
    return 0.5 * num * num / denom


def scalar_slack(
    mean_a: float, var_a: float, n_a: int, mean_b: float, var_b: float, n_b: int, phi: float
) -> float:
    """Certified slack w = [sqrt(2*phi*(S_a^2/n_a + S_b^2/n_b)) - gap]_+."""
    if math.isinf(phi):
        return math.inf
    denom = var_a / n_a + var_b / n_b
    return max(0.0, math.sqrt(2.0 * phi * denom) - (mean_a - mean_b))


def glr_statistic(state: UnstructuredState, x: int, a: int, b: int, eta: float) -> float:
    """Plug-in GLR of action a over action b under context x at slack eta.

    Requires n >= 2 on both sides.  If both sample variances vanish the
    statistic degenerates: +inf when the effective gap is nonzero
    (infinitely strong evidence), 0 when it is zero.
    """
    n_a, n_b = int(state.n[x, a]), int(state.n[x, b])
    if n_a < 2 or n_b < 2:
        raise NotReadyError(f"need n >= 2 on both actions, got {n_a} and {n_b}")
    return scalar_statistic(
        float(state.mean[x, a]),
        state.variance(x, a),
        n_a,
        float(state.mean[x, b]),
        state.variance(x, b),
        n_b,
        eta,
    )


def certified_slack(state: UnstructuredState, x: int, a: int, b: int, phi: float) -> float:
    """Smallest slack at which the pair's statistic reaches the boundary phi;
    +inf while phi is +inf (inactive boundary)."""
    if math.isinf(phi):
        return math.inf
    n_a, n_b = int(state.n[x, a]), int(state.n[x, b])
    if n_a < 2 or n_b < 2:
        raise NotReadyError(f"need n >= 2 on both actions, got {n_a} and {n_b}")
    return scalar_slack(
        float(state.mean[x, a]),
        state.variance(x, a),
        n_a,
        float(state.mean[x, b]),
        state.variance(x, b),
        n_b,
        phi,
    )


def empirical_best(state: UnstructuredState, x: int) -> int:
    """Index of the highest sample mean among feasible actions.

    Every feasible action needs at least one sample; ties break toward the
    lowest action index (= lowest action id in declaration order).
    """
    best = -1
    best_mean = -math.inf
    for a in state.space.feasible_actions(x):
        if state.n[x, a] < 1:
            raise NotReadyError(
                f"context {state.space.context_ids[x]!r} has unsampled feasible actions"
            )
        mean = float(state.mean[x, a])
        if mean > best_mean:
            best, best_mean = a, mean
    return best


def context_regret(state: UnstructuredState, x: int, best: int, budget_x: float) -> float:
    """r(x, t): largest certified slack over challengers of the best action.

    Singleton contexts carry no regret.  An unready challenger (or an
    inactive boundary) keeps the context at +inf.
    """
    actions = state.space.feasible_actions(x)
    if len(actions) == 1:
        return 0.0
    n_best = int(state.n[x, best])
    if n_best < 2:
        return math.inf
    mean_best = float(state.mean[x, best])
    var_best = state.variance(x, best)
    worst = 0.0
    for a in actions:
        if a == best:
            continue
        n_a = int(state.n[x, a])
        if n_a < 2:
            return math.inf
        phi = boundary_unstructured(n_best, n_a, budget_x)
        w = scalar_slack(
            mean_best, var_best, n_best, float(state.mean[x, a]), state.variance(x, a), n_a, phi
        )
        if w > worst:
            worst = w
            if math.isinf(worst):
                return math.inf
    return worst


def _policy_and_readiness(
    state: UnstructuredState,
) -> tuple[dict[str, str], dict[int, int], bool]:
    """Assign the empirical-best policy; singleton contexts need no samples."""
    space = state.space
    policy: dict[str, str] = {}
    best_by_index: dict[int, int] = {}
    all_ready = True
    for x in range(space.m):
        actions = space.feasible_actions(x)
        if len(actions) == 1:
            best_by_index[x] = actions[0]
            policy[space.context_ids[x]] = space.action_ids[actions[0]]
            continue
        try:
            best = empirical_best(state, x)
        except NotReadyError:
            all_ready = False
            continue
        best_by_index[x] = best
        policy[space.context_ids[x]] = space.action_ids[best]
    return policy, best_by_index, all_ready


def check_stop_p1(
    state: UnstructuredState, budget: ErrorBudget, delta: float
) -> StopDecision:
    """Context-wise rule: stop when every challenger in every context is
    beaten strictly beyond its boundary at slack delta."""
    space = state.space
    policy, best_by_index, all_ready = _policy_and_readiness(state)
    diagnostics: dict[str, ContextDiagnostics] = {}
    stop = all_ready

    for x in range(space.m):
        cid = space.context_ids[x]
        actions = space.feasible_actions(x)
        if len(actions) == 1:
            diagnostics[cid] = ContextDiagnostics(
                best=space.action_ids[actions[0]], ready=True,
                statistic=math.inf, boundary=0.0, slack=0.0, regret=0.0,
            )
            continue
        if x not in best_by_index:
            diagnostics[cid] = ContextDiagnostics(best="", ready=False)
            stop = False
            continue
        best = best_by_index[x]
        n_best = int(state.n[x, best])
        if n_best < 2 or any(state.n[x, a] < 2 for a in actions):
            diagnostics[cid] = ContextDiagnostics(
                best=space.action_ids[best], ready=False
            )
            stop = False
            continue
        budget_x = budget.per_context[x]
        mean_best = float(state.mean[x, best])
        var_best = state.variance(x, best)
        binding_margin = math.inf
        binding: tuple[float, float, float, int] | None = None
        cleared = True
        for a in actions:
            if a == best:
                continue
            n_a = int(state.n[x, a])
            z = scalar_statistic(
                mean_best, var_best, n_best,
                float(state.mean[x, a]), state.variance(x, a), n_a, delta,
            )
            phi = boundary_unstructured(n_best, n_a, budget_x)
            if not z > phi:
                cleared = False
            margin = z - phi if math.isfinite(z) and math.isfinite(phi) else (
                -math.inf if math.isinf(phi) else math.inf
            )
            if binding is None or margin < binding_margin:
                binding_margin = margin
                w = scalar_slack(
                    mean_best, var_best, n_best,
                    float(state.mean[x, a]), state.variance(x, a), n_a, phi,
                )
                binding = (z, phi, w, a)
        assert binding is not None
        diagnostics[cid] = ContextDiagnostics(
            best=space.action_ids[best],
            ready=True,
            statistic=binding[0],
            boundary=binding[1],
            slack=binding[2],
            regret=context_regret(state, x, best, budget_x),
            challenger=space.action_ids[binding[3]],
        )
        if not cleared:
            stop = False

    return StopDecision(stop=stop, policy=policy, diagnostics=diagnostics)


def check_stop_p2(
    state: UnstructuredState, budget: ErrorBudget, delta: float
) -> StopDecision:
    """Aggregate rule: stop when sum_x p(x) * r(x, t) <= delta.

    All-singleton spaces stop immediately with zero weighted regret.
    """
    space = state.space
    policy, best_by_index, all_ready = _policy_and_readiness(state)
    diagnostics: dict[str, ContextDiagnostics] = {}
    weighted = 0.0

    for x in range(space.m):
        cid = space.context_ids[x]
        actions = space.feasible_actions(x)
        if len(actions) == 1:
            diagnostics[cid] = ContextDiagnostics(
                best=space.action_ids[actions[0]], ready=True,
                statistic=math.inf, boundary=0.0, slack=0.0, regret=0.0,
            )
            continue
        if x not in best_by_index:
            diagnostics[cid] = ContextDiagnostics(best="", ready=False)
            weighted = math.inf
            continue
        best = best_by_index[x]
        budget_x = budget.per_context[x]
        try:
            r = context_regret(state, x, best, budget_x)
        except NotReadyError:
            r = math.inf
        diagnostics[cid] = ContextDiagnostics(
            best=space.action_ids[best],
            ready=math.isfinite(r) or r == 0.0,
            regret=r,
        )
        weighted += float(space.weights[x]) * r

    stop = all_ready and weighted <= delta
    return StopDecision(
        stop=stop, policy=policy, diagnostics=diagnostics, weighted_regret=weighted
    )
