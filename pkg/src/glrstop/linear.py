"""Feasible GLR statistics and stopping rules for the linear setting.

Responses follow y = f(x)^T beta(a) + sigma(a) * noise, with one
coefficient vector per action.  The feasible statistic plugs OLS
estimates and the residual variance S^2(a) = RSS / (n - d) into

    Z(a, b; eta) = (f^T beta_a - f^T beta_b + eta)^2
                   / (2 * (S_a^2 Sigma(x,a) + S_b^2 Sigma(x,b)))

where Sigma(x, a) = f(x)^T D_t(a)^{-1} f(x) is the directional variance
of the design.  Stopping checks are gated on every action having a
positive-definite Gram matrix with at least d + 1 samples.
"""

from __future__ import annotations

import math

import numpy as np

from .boundary import ErrorBudget, boundary_linear, boundary_linear_array
from .decision import ContextDiagnostics, StopDecision
from .errors import ConfigurationError, NotReadyError, PreconditionError
from .stats import ContextSpace, LinearActionStats, cholesky_if_pd
from .unstructured import DENOM_FLOOR


class LinearState:
    """Per-action OLS accumulators plus cached solutions for one space.

    The caches (Cholesky factor, coefficients, residual variance and the
    directional variances at every context) are invalidated on update and
    rebuilt lazily, so repeated stopping checks between updates are cheap.
    """

    def __init__(self, space: ContextSpace) -> None:
        if space.features is None:
            raise ConfigurationError("linear state needs a space with features")
        self.space = space
        self.d = space.d
        self.per_action = [LinearActionStats(d=self.d) for _ in range(space.k)]
        self.pair_n = np.zeros((space.m, space.k), dtype=np.int64)
        self.t = 0
        self._dirty = [True] * space.k
        self._chol: list[np.ndarray | None] = [None] * space.k
        self._beta = np.zeros((space.k, self.d), dtype=np.float64)
        self._s2 = np.full(space.k, np.nan)
        self._solved = [False] * space.k
        # Directional variances Sigma(x, a) for every context, per action.
        self._sigma = np.full((space.m, space.k), np.nan)

    def update(self, x: int, a: int, y: float) -> None:
        if not self.space.feasible_mask[x, a]:
            raise NotReadyError(
                f"action {self.space.action_ids[a]!r} is infeasible under "
                f"context {self.space.context_ids[x]!r}"
            )
        self.per_action[a].push(self.space.features[x], float(y))
        self.pair_n[x, a] += 1
        self.t += 1
        self._dirty[a] = True

    def _refresh(self, a: int) -> None:
        if not self._dirty[a]:
            return
        stats = self.per_action[a]
        self._dirty[a] = False
        self._solved[a] = False
        self._chol[a] = None
        if stats.n < self.d + 1:
            return
        lower = cholesky_if_pd(stats.gram)
        if lower is None:
            return
        z = np.linalg.solve(lower, stats.moment)
        beta = np.linalg.solve(lower.T, z)
        rss = max(0.0, stats.yy - float(stats.moment @ beta))
        self._chol[a] = lower
        self._beta[a] = beta
        self._s2[a] = rss / (stats.n - self.d)
        w = np.linalg.solve(lower, self.space.features.T)
        self._sigma[:, a] = np.einsum("ij,ij->j", w, w)
        self._solved[a] = True

    def solved(self, a: int) -> bool:
        self._refresh(a)
        return self._solved[a]

    @property
    def all_ready(self) -> bool:
        """The warm-up gate: every action PD with n >= d + 1."""
        return all(self.solved(a) for a in range(self.space.k))

    def beta(self, a: int) -> np.ndarray:
        if not self.solved(a):
            raise NotReadyError(f"action {self.space.action_ids[a]!r} is not ready")
        return self._beta[a].copy()

    def s2(self, a: int) -> float:
        if not self.solved(a):
            raise NotReadyError(f"action {self.space.action_ids[a]!r} is not ready")
        return float(self._s2[a])

    def sigma(self, x: int, a: int) -> float:
        if not self.solved(a):
            raise NotReadyError(f"action {self.space.action_ids[a]!r} is not ready")
        return float(self._sigma[x, a])

    def counts(self) -> np.ndarray:
        return np.array([s.n for s in self.per_action], dtype=np.int64)

    def snapshot(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(fitted (m,k), sigma (m,k), s2 (k,), n (k,)) with caches fresh.

        Only valid when ``all_ready`` holds.
        """
        if not self.all_ready:
            raise NotReadyError("snapshot requires every action to be ready")
        fitted = self.space.features @ self._beta.T
        return fitted, self._sigma, self._s2.copy(), self.counts()


def glr_statistic_linear(state: LinearState, x: int, a: int, b: int, eta: float) -> float:
    """Feasible GLR of action a over b at context x with slack eta.

    Degenerate denominators follow the unstructured convention: +inf for
    a nonzero effective gap, 0 otherwise.
    """
    if not (state.solved(a) and state.solved(b)):
        raise NotReadyError("both actions need a positive-definite design with n >= d+1")
    f = state.space.features[x]
    num = float(f @ state._beta[a] - f @ state._beta[b]) + eta
    denom = 2.0 * (
        float(state._s2[a]) * float(state._sigma[x, a])
        + float(state._s2[b]) * float(state._sigma[x, b])
    )
    if denom < DENOM_FLOOR:
        return 0.0 if num == 0.0 else math.inf
    return num * num / denom


def certified_slack_linear(state: LinearState, x: int, a: int, b: int, phi: float) -> float:
    """Smallest extra margin that would put the (a, b) statistic at phi.

    Inverts Z(a, b; w) = phi for w and clips at zero; +inf while the
    boundary itself is +inf (inactive stage).
    """
    if not (state.solved(a) and state.solved(b)):
        raise NotReadyError("both actions need a positive-definite design with n >= d+1")
    if math.isinf(phi):
        return math.inf
    f = state.space.features[x]
    gap = float(f @ state._beta[a] - f @ state._beta[b])
    spread = (
        float(state._s2[a]) * float(state._sigma[x, a])
        + float(state._s2[b]) * float(state._sigma[x, b])
    )
    return max(0.0, math.sqrt(2.0 * phi * spread) - gap)


def pair_boundary_linear(
    state: LinearState, x: int, a: int, b: int, budget_x: float
) -> float:
    """Boundary for the (a, b) pair at context x from current information."""
    if not (state.solved(a) and state.solved(b)):
        raise NotReadyError("both actions need a positive-definite design with n >= d+1")
    lam_a = 1.0 / float(state._sigma[x, a])
    lam_b = 1.0 / float(state._sigma[x, b])
    return boundary_linear(
        state.per_action[a].n, lam_a, state.per_action[b].n, lam_b, budget_x, state.d
    )


def glr_closed_form_known_variance(
    stats_a: LinearActionStats,
    stats_b: LinearActionStats,
    f: np.ndarray,
    delta: float,
    var_a: float,
    var_b: float,
    signed: bool = False,
) -> float:
    """Known-variance GLR in closed form.

    Valid when the fitted gap f^T (beta_a - beta_b) is >= -delta; outside
    that region the closed form does not describe the constrained fit and
    a PreconditionError is raised, unless ``signed`` is set, in which case
    the antisymmetric extension -Z(b, a) is returned.
    """
    f = np.asarray(f, dtype=np.float64)
    gap = float(f @ _ols_or_raise(stats_a) - f @ _ols_or_raise(stats_b))
    spread = var_a * _dirvar(stats_a, f) + var_b * _dirvar(stats_b, f)
    if gap < -delta:
        if not signed:
            raise PreconditionError(
                f"fitted gap {gap:.6g} < -delta; closed form invalid for this ordering"
            )
        return -((-gap + delta) ** 2) / (2.0 * spread)
    return (gap + delta) ** 2 / (2.0 * spread)


def _ols_or_raise(stats: LinearActionStats) -> np.ndarray:
    lower = cholesky_if_pd(stats.gram)
    if lower is None or stats.n < stats.d + 1:
        raise NotReadyError("design is not ready for OLS")
    z = np.linalg.solve(lower, stats.moment)
    return np.linalg.solve(lower.T, z)


def _dirvar(stats: LinearActionStats, f: np.ndarray) -> float:
    lower = cholesky_if_pd(stats.gram)
    if lower is None:
        raise NotReadyError("design is not positive definite")
    w = np.linalg.solve(lower, f)
    return float(w @ w)


def _vector_check(
    state: LinearState, budget: ErrorBudget, delta: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Shared vectorized core over the full (m, k) grid.

    Returns (best (m,), z (m,k), phi (m,k), slack (m,k), regret (m,)).
    Entries for infeasible actions and the best action itself are masked
    so they never block stopping and never contribute regret.
    """
    space = state.space
    fitted, sigma, s2, n = state.snapshot()
    mask = space.feasible_mask
    masked_fit = np.where(mask, fitted, -np.inf)
    best = np.argmax(masked_fit, axis=1)
    rows = np.arange(space.m)

    lam = 1.0 / sigma
    s2sig = s2[None, :] * sigma
    gap = fitted[rows, best][:, None] - fitted
    spread = s2sig[rows, best][:, None] + s2sig

    num = gap + delta
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(
            2.0 * spread >= DENOM_FLOOR,
            num * num / (2.0 * spread),
            np.where(num == 0.0, 0.0, np.inf),
        )

    phi = np.full((space.m, space.k), np.inf)
    active = np.flatnonzero(
        np.array([x in budget.per_context for x in range(space.m)], dtype=bool)
    )
    if active.size:
        budget_col = np.array([budget.per_context[int(x)] for x in active])
        phi[active] = boundary_linear_array(
            n[None, :],
            lam[active],
            n[best[active], None],
            lam[active, best[active]][:, None],
            budget_col[:, None],
            state.d,
        )

    slack = np.where(
        np.isinf(phi), np.inf, np.maximum(0.0, np.sqrt(2.0 * phi * spread) - gap)
    )
    blocked = ~mask
    z = np.where(blocked, np.inf, z)
    phi = np.where(blocked, 0.0, phi)
    slack = np.where(blocked, 0.0, slack)
    z[rows, best] = np.inf
    phi[rows, best] = 0.0
    slack[rows, best] = 0.0
    regret = slack.max(axis=1)
    return best, z, phi, slack, regret


def check_stop_p1_linear(
    state: LinearState, budget: ErrorBudget, delta: float
) -> StopDecision:
    """Context-wise linear rule, gated on the warm-up readiness condition."""
    space = state.space
    if not state.all_ready:
        return StopDecision(stop=False, policy={}, diagnostics={})
    best, z, phi, slack, regret = _vector_check(state, budget, delta)
    stop = bool((z > phi).all())
    policy = {
        space.context_ids[x]: space.action_ids[int(best[x])] for x in range(space.m)
    }
    diagnostics = _diagnostics(space, best, z, phi, slack, regret)
    return StopDecision(stop=stop, policy=policy, diagnostics=diagnostics)


def check_stop_p2_linear(
    state: LinearState, budget: ErrorBudget, delta: float
) -> StopDecision:
    """Aggregate linear rule: weight-averaged certified slack below delta."""
    space = state.space
    if not state.all_ready:
        return StopDecision(stop=False, policy={}, diagnostics={})
    best, z, phi, slack, regret = _vector_check(state, budget, 0.0)
    weighted = float(space.weights @ regret)
    policy = {
        space.context_ids[x]: space.action_ids[int(best[x])] for x in range(space.m)
    }
    diagnostics = _diagnostics(space, best, z, phi, slack, regret)
    return StopDecision(
        stop=weighted <= delta,
        policy=policy,
        diagnostics=diagnostics,
        weighted_regret=weighted,
    )


def _diagnostics(
    space: ContextSpace,
    best: np.ndarray,
    z: np.ndarray,
    phi: np.ndarray,
    slack: np.ndarray,
    regret: np.ndarray,
) -> dict[str, ContextDiagnostics]:
    rows = np.arange(space.m)
    margin = np.where(np.isinf(phi), -np.inf, z - phi)
    margin[rows, best] = np.inf
    margin = np.where(space.feasible_mask, margin, np.inf)
    binding = np.argmin(margin, axis=1)
    out: dict[str, ContextDiagnostics] = {}
    for x in range(space.m):
        cid = space.context_ids[x]
        if space.is_singleton(x):
            out[cid] = ContextDiagnostics(
                best=space.action_ids[int(best[x])], ready=True,
                statistic=math.inf, boundary=0.0, slack=0.0, regret=0.0,
            )
            continue
        a = int(binding[x])
        out[cid] = ContextDiagnostics(
            best=space.action_ids[int(best[x])],
            ready=True,
            statistic=float(z[x, a]),
            boundary=float(phi[x, a]),
            slack=float(slack[x, a]),
            regret=float(regret[x]),
            challenger=space.action_ids[a],
        )
    return out
