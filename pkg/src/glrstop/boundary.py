"""Time-uniform GLR stopping boundaries and error-budget allocation.

The core objects are the boundary functions gamma (unstructured) and
gamma_l (linear), both derived from Gaussian mixture martingales via
Ville's inequality.  Each is finite only after an initial inactive stage
where the underlying rho term is nonpositive; during that stage the
boundary is +inf and nothing can be certified.

All powers are evaluated in log space so the functions stay accurate for
stage counts up to 2**63 - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, NotReadyError
from .stats import ContextSpace

# Criterion labels: P1 is the context-wise (weighted) guarantee, P2 the
# aggregate policy-value guarantee.
CRITERIA = ("P1", "P2")


def _validate_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha!r}")


def rho(t: int, alpha: float) -> float:
    """rho(t, alpha) = (alpha^2/(t+1))^(1/t) * (t+1) - 1.

    Computed as (t+1)*expm1(c/t) + t with c = 2*ln(alpha) - ln(t+1), which
    is exact in log space and avoids overflow for astronomically large t.
    """
    t = int(t)
    if t < 1:
        raise ConfigurationError(f"t must be a positive integer, got {t}")
    _validate_alpha(alpha)
    c = 2.0 * math.log(alpha) - math.log1p(t)
    return (t + 1.0) * math.expm1(c / t) + t


def gamma(t: int, alpha: float) -> float:
    """Deviation boundary t^2/rho - t, or +inf while rho(t, alpha) <= 0.

    The +inf branch realizes the vanishing-epsilon truncation: during the
    inactive stage no deviation can be certified.
    """
    t = int(t)
    if t < 1:
        raise ConfigurationError(f"t must be a positive integer, got {t}")
    _validate_alpha(alpha)
    c = 2.0 * math.log(alpha) - math.log1p(t)
    e = math.expm1(c / t)
    r = (t + 1.0) * e + t
    if r <= 0.0:
        return math.inf
    # t - rho = -(t+1)*e, so gamma = t*(t - rho)/rho without cancellation.
    return -t * (t + 1.0) * e / r


def gamma_l(t1: int, t2: float, alpha: float, d: int) -> float:
    """Linear-design boundary (t1-d)*t2/rho_l - (t1-d), +inf while inactive.

    t1 is the per-action sample count, t2 the accumulated directional
    information Sigma^{-1} (any positive real), d the feature dimension.
    """
    t1 = int(t1)
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}")
    if t1 <= d:
        raise NotReadyError(f"gamma_l needs t1 > d, got t1={t1}, d={d}")
    if not (t2 > 0.0 and math.isfinite(t2)):
        raise ConfigurationError(f"t2 must be a positive real, got {t2!r}")
    _validate_alpha(alpha)
    c = 2.0 * math.log(alpha) - math.log1p(t2)
    e = math.expm1(c / (t1 - d + 1.0))
    r = (t2 + 1.0) * e + t2
    if r <= 0.0:
        return math.inf
    return -(t1 - d) * (t2 + 1.0) * e / r


def rho_l(t1: int, t2: float, alpha: float, d: int) -> float:
    """Linear analogue of rho with exponent 1/(t1-d+1) on the same base."""
    t1 = int(t1)
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}")
    if t1 <= d:
        raise NotReadyError(f"rho_l needs t1 > d, got t1={t1}, d={d}")
    if not (t2 > 0.0 and math.isfinite(t2)):
        raise ConfigurationError(f"t2 must be a positive real, got {t2!r}")
    _validate_alpha(alpha)
    c = 2.0 * math.log(alpha) - math.log1p(t2)
    return (t2 + 1.0) * math.expm1(c / (t1 - d + 1.0)) + t2


def asymptotic_reference(t: float, alpha: float) -> float:
    """Large-t approximation 2*ln(1/alpha) + ln(t+1) of the boundary."""
    _validate_alpha(alpha)
    if t < 1:
        raise ConfigurationError(f"t must be >= 1, got {t!r}")
    return 2.0 * math.log(1.0 / alpha) + math.log1p(t)


@dataclass(frozen=True)
class ErrorBudget:
    """Per-context error allocation for one precision criterion.

    Contexts with a single feasible action need no comparisons and are
    excluded from the map (they are auto-certified).
    """

    criterion: str
    alpha: float
    per_context: Mapping[int, float]

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise ConfigurationError(f"criterion must be one of {CRITERIA}")


def make_budget(space: ContextSpace, alpha: float, criterion: str) -> ErrorBudget:
    """Split alpha across contexts and challenger comparisons.

    P1 budgets alpha / ((k_x - 1) * m * p(x)) per context; P2 drops the
    p(x) division.  Any computed budget >= 1 means the configuration
    cannot be certified at this alpha and is rejected outright.
    """
    _validate_alpha(alpha)
    if criterion not in CRITERIA:
        raise ConfigurationError(f"criterion must be one of {CRITERIA}")
    per_context: dict[int, float] = {}
    m = space.m
    for x in range(m):
        k_x = len(space.feasible_actions(x))
        if k_x < 2:
            continue
        if criterion == "P1":
            budget = alpha / ((k_x - 1) * m * float(space.weights[x]))
        else:
            budget = alpha / ((k_x - 1) * m)
        if budget >= 1.0:
            raise ConfigurationError(
                f"context {space.context_ids[x]!r} receives error budget "
                f"{budget:.6g} >= 1; alpha={alpha} is not attainable"
            )
        per_context[x] = budget
    return ErrorBudget(criterion=criterion, alpha=alpha, per_context=per_context)


def boundary_unstructured(n_a: int, n_b: int, budget: float) -> float:
    """Pairwise stopping threshold in the unstructured model.

    max of half-gamma terms where each stream's miss probability is the
    context budget shrunk by sqrt(1/(n_other + 1)).
    """
    if n_a < 1 or n_b < 1:
        raise NotReadyError("both actions need at least one sample")
    beta_a = budget * math.sqrt(1.0 / (n_b + 1.0))
    beta_b = budget * math.sqrt(1.0 / (n_a + 1.0))
    if min(beta_a, beta_b) >= 1.0 or min(beta_a, beta_b) <= 0.0:
        raise ConfigurationError(
            f"shrunk budget {min(beta_a, beta_b):.6g} falls outside (0, 1)"
        )
    return max(0.5 * gamma(n_a, beta_a), 0.5 * gamma(n_b, beta_b))


def boundary_linear(
    n_a: int,
    sig_inv_a: float,
    n_b: int,
    sig_inv_b: float,
    budget: float,
    d: int,
) -> float:
    """Linear-setting threshold; the shrink factors use the directional
    information Sigma^{-1} of the opposite action."""
    beta_a = budget * math.sqrt(1.0 / (sig_inv_b + 1.0))
    beta_b = budget * math.sqrt(1.0 / (sig_inv_a + 1.0))
    if min(beta_a, beta_b) >= 1.0 or min(beta_a, beta_b) <= 0.0:
        raise ConfigurationError(
            f"shrunk budget {min(beta_a, beta_b):.6g} falls outside (0, 1)"
        )
    return max(
        0.5 * gamma_l(n_a, sig_inv_a, beta_a, d),
        0.5 * gamma_l(n_b, sig_inv_b, beta_b, d),
    )


def gamma_l_array(t1, t2, alpha, d: int) -> np.ndarray:
    """Elementwise gamma_l over broadcastable arrays (inactive -> inf).

    Engine-internal fast path: arguments are assumed already validated
    (t1 > d, t2 > 0, alpha in (0, 1)).
    """
    t1, t2, alpha = np.broadcast_arrays(
        np.asarray(t1, dtype=np.float64),
        np.asarray(t2, dtype=np.float64),
        np.asarray(alpha, dtype=np.float64),
    )
    c = 2.0 * np.log(alpha) - np.log1p(t2)
    e = np.expm1(c / (t1 - d + 1.0))
    r = (t2 + 1.0) * e + t2
    out = np.full(t1.shape, np.inf)
    active = r > 0.0
    out[active] = -(t1[active] - d) * (t2[active] + 1.0) * e[active] / r[active]
    return out


def gamma_array(t, alpha) -> np.ndarray:
    """Elementwise gamma over broadcastable stage/alpha arrays (inactive -> inf).

    Engine-internal fast path: arguments are assumed already validated
    (t >= 1, alpha in (0, 1)).
    """
    t, alpha = np.broadcast_arrays(
        np.asarray(t, dtype=np.float64), np.asarray(alpha, dtype=np.float64)
    )
    c = 2.0 * np.log(alpha) - np.log1p(t)
    e = np.expm1(c / t)
    r = (t + 1.0) * e + t
    out = np.full(t.shape, np.inf)
    active = r > 0.0
    out[active] = -t[active] * (t[active] + 1.0) * e[active] / r[active]
    return out


def boundary_unstructured_array(n_a, n_b, budget) -> np.ndarray:
    """Vectorized boundary_unstructured over broadcastable count arrays."""
    n_a = np.asarray(n_a, dtype=np.float64)
    n_b = np.asarray(n_b, dtype=np.float64)
    beta_a = budget * np.sqrt(1.0 / (n_b + 1.0))
    beta_b = budget * np.sqrt(1.0 / (n_a + 1.0))
    return np.maximum(0.5 * gamma_array(n_a, beta_a), 0.5 * gamma_array(n_b, beta_b))


def boundary_linear_array(n_a, lam_a, n_b, lam_b, budget, d: int) -> np.ndarray:
    """Vectorized boundary_linear over broadcastable arrays."""
    beta_a = budget * np.sqrt(1.0 / (np.asarray(lam_b, dtype=np.float64) + 1.0))
    beta_b = budget * np.sqrt(1.0 / (np.asarray(lam_a, dtype=np.float64) + 1.0))
    return np.maximum(
        0.5 * gamma_l_array(n_a, lam_a, beta_a, d),
        0.5 * gamma_l_array(n_b, lam_b, beta_b, d),
    )


def stage_grid(t_max: int = 10**8, points: int = 200) -> np.ndarray:
    """Log-spaced integer stage grid on [1, t_max].

    Rounding to integers collapses duplicates at the small-t end, so the
    returned grid may hold slightly fewer than ``points`` entries.
    """
    if t_max < 1 or points < 2:
        raise ConfigurationError("need t_max >= 1 and points >= 2")
    raw = np.logspace(0.0, math.log10(t_max), points)
    return np.unique(np.rint(raw).astype(np.int64))


def gamma_curve(alpha: float, t_grid: np.ndarray) -> np.ndarray:
    """Vectorized gamma over an integer stage grid (inactive stages -> inf)."""
    _validate_alpha(alpha)
    t = np.asarray(t_grid, dtype=np.float64)
    c = 2.0 * math.log(alpha) - np.log1p(t)
    e = np.expm1(c / t)
    r = (t + 1.0) * e + t
    out = np.full(t.shape, np.inf)
    active = r > 0.0
    out[active] = -t[active] * (t[active] + 1.0) * e[active] / r[active]
    return out
