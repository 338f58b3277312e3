"""Streaming sufficient statistics and the context/action space.

Two estimation backends are supported.  The unstructured backend keeps a
Welford accumulator per (context, action) pair.  The linear backend keeps,
per action, the Gram matrix, the moment vector and the response sum of
squares, from which the OLS solution and directional variances follow
without ever storing raw observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, NotReadyError

# Weights must sum to one within this slack after normalization.
WEIGHT_TOL = 1e-12

# Pivot threshold for declaring a Gram matrix positive definite: smallest
# Cholesky pivot must exceed PD_TOL * trace(gram) / d.
PD_TOL = 1e-10


class ContextSpace:
    """Finite context set with weights, optional features and feasible actions.

    Parameters
    ----------
    context_ids : sequence of unique context identifiers.
    action_ids : sequence of unique action identifiers.  Index order is the
        tie-breaking order everywhere.
    weights : context probabilities, strictly positive, summing to one
        within ``WEIGHT_TOL``.
    features : optional (m, d) array of context feature vectors (linear
        setting only).
    feasible : optional map from context id to the subset of action ids
        available under that context; defaults to all actions everywhere.
    """

    def __init__(
        self,
        context_ids: Sequence[str],
        action_ids: Sequence[str],
        weights: Sequence[float],
        features: Sequence[Sequence[float]] | None = None,
        feasible: Mapping[str, Sequence[str]] | None = None,
    ) -> None:
        self.context_ids = [str(c) for c in context_ids]
        self.action_ids = [str(a) for a in action_ids]
        if len(set(self.context_ids)) != len(self.context_ids):
            raise ConfigurationError("duplicate context ids")
        if len(set(self.action_ids)) != len(self.action_ids):
            raise ConfigurationError("duplicate action ids")
        if not self.context_ids or not self.action_ids:
            raise ConfigurationError("context and action sets must be nonempty")

        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (len(self.context_ids),):
            raise ConfigurationError("weights must have one entry per context")
        if np.any(self.weights <= 0.0):
            raise ConfigurationError("context weights must be strictly positive")
        if abs(float(self.weights.sum()) - 1.0) > WEIGHT_TOL:
            raise ConfigurationError(
                f"context weights sum to {self.weights.sum()!r}, expected 1"
            )

        if features is None:
            self.features = None
        else:
            self.features = np.asarray(features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != self.m:
                raise ConfigurationError("features must be an (m, d) array")

        self._ctx_index = {c: i for i, c in enumerate(self.context_ids)}
        self._act_index = {a: i for i, a in enumerate(self.action_ids)}

        mask = np.zeros((self.m, self.k), dtype=bool)
        if feasible is None:
            mask[:] = True
        else:
            for cid, acts in feasible.items():
                if cid not in self._ctx_index:
                    raise ConfigurationError(f"feasible map names unknown context {cid!r}")
                for aid in acts:
                    if aid not in self._act_index:
                        raise ConfigurationError(f"feasible map names unknown action {aid!r}")
                    mask[self._ctx_index[cid], self._act_index[aid]] = True
            # Contexts absent from the map keep the full action set.
            for cid in self.context_ids:
                if cid not in feasible:
                    mask[self._ctx_index[cid], :] = True
        if not mask.any(axis=1).all():
            raise ConfigurationError("every context needs at least one feasible action")
        self.feasible_mask = mask
        self._feasible_lists = [
            tuple(int(a) for a in np.flatnonzero(mask[i])) for i in range(self.m)
        ]

    @property
    def m(self) -> int:
        return len(self.context_ids)

    @property
    def k(self) -> int:
        return len(self.action_ids)

    @property
    def d(self) -> int:
        if self.features is None:
            raise ConfigurationError("space has no feature vectors")
        return int(self.features.shape[1])

    def context_index(self, context_id: str) -> int:
        try:
            return self._ctx_index[context_id]
        except KeyError:
            raise ConfigurationError(f"unknown context id {context_id!r}") from None

    def action_index(self, action_id: str) -> int:
        try:
            return self._act_index[action_id]
        except KeyError:
            raise ConfigurationError(f"unknown action id {action_id!r}") from None

    def feasible_actions(self, x: int) -> tuple[int, ...]:
        return self._feasible_lists[x]

    def is_singleton(self, x: int) -> bool:
        return len(self._feasible_lists[x]) == 1

    def to_dict(self) -> dict:
        out: dict = {
            "contexts": list(self.context_ids),
            "actions": list(self.action_ids),
            "weights": self.weights.tolist(),
        }
        if self.features is not None:
            out["features"] = self.features.tolist()
        if not self.feasible_mask.all():
            out["feasible"] = {
                cid: [self.action_ids[a] for a in self._feasible_lists[i]]
                for i, cid in enumerate(self.context_ids)
            }
        return out

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ContextSpace":
        return cls(
            context_ids=payload["contexts"],
            action_ids=payload["actions"],
            weights=payload["weights"],
            features=payload.get("features"),
            feasible=payload.get("feasible"),
        )


def normalized_weights(raw: Sequence[float]) -> np.ndarray:
    """Normalize positive weights to sum exactly to one."""
    w = np.asarray(raw, dtype=np.float64)
    if np.any(w <= 0.0):
        raise ConfigurationError("weights must be strictly positive")
    total = float(w.sum())
    if total <= 0.0 or not math.isfinite(total):
        raise ConfigurationError("weights must have a positive finite sum")
    w = w / total
    # Guard against residual rounding in the sum.
    return w / float(w.sum())


@dataclass
class PairStats:
    """Welford accumulator for one (context, action) sample stream."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, y: float) -> None:
        self.n += 1
        delta = y - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (y - self.mean)

    @property
    def variance(self) -> float:
        """Sample variance with the n-1 divisor; defined once n >= 2."""
        if self.n < 2:
            raise NotReadyError(f"variance undefined with n={self.n}")
        return self.m2 / (self.n - 1)


def update_pair(stats: PairStats, y: float) -> PairStats:
    """Streaming mean/variance update; returns the mutated accumulator."""
    stats.push(float(y))
    return stats


@dataclass
class LinearActionStats:
    """Per-action sufficient statistics for the linear response model."""

    d: int
    n: int = 0
    gram: np.ndarray = field(default=None)  # type: ignore[assignment]
    moment: np.ndarray = field(default=None)  # type: ignore[assignment]
    yy: float = 0.0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigurationError("feature dimension must be >= 1")
        if self.gram is None:
            self.gram = np.zeros((self.d, self.d), dtype=np.float64)
        if self.moment is None:
            self.moment = np.zeros(self.d, dtype=np.float64)

    def push(self, f: np.ndarray, y: float) -> None:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.d,):
            raise ConfigurationError(
                f"feature vector has shape {f.shape}, expected ({self.d},)"
            )
        self.n += 1
        self.gram += np.outer(f, f)
        self.moment += y * f
        self.yy += y * y


def update_linear(stats: LinearActionStats, f: Sequence[float], y: float) -> LinearActionStats:
    """Rank-one update of Gram/moment/yy; rejects dimension mismatches."""
    stats.push(np.asarray(f, dtype=np.float64), float(y))
    return stats


def cholesky_if_pd(gram: np.ndarray) -> np.ndarray | None:
    """Cholesky factor of a positive-definite Gram matrix, else None.

    Positive definiteness demands every pivot exceed
    ``PD_TOL * trace(gram) / d`` so nearly-singular designs are rejected.
    """
    d = gram.shape[0]
    trace = float(np.trace(gram))
    if not math.isfinite(trace) or trace <= 0.0:
        return None
    try:
        lower = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    pivots = np.diag(lower) ** 2
    if float(pivots.min()) <= PD_TOL * trace / d:
        return None
    return lower


@dataclass(frozen=True)
class OlsSolution:
    """OLS fit for one action: coefficients, noise variance, readiness flag."""

    beta: np.ndarray | None
    s2: float
    solved: bool


def ols_solution(stats: LinearActionStats) -> OlsSolution:
    """Solve the normal equations if the design permits.

    Ready means the Gram matrix is positive definite and n >= d + 1 (one
    residual degree of freedom).  An unready design yields
    ``OlsSolution(None, nan, False)`` rather than an exception, since
    callers routinely poll during warm-up.
    """
    if stats.n < stats.d + 1:
        return OlsSolution(None, math.nan, False)
    lower = cholesky_if_pd(stats.gram)
    if lower is None:
        return OlsSolution(None, math.nan, False)
    z = np.linalg.solve(lower, stats.moment)
    beta = np.linalg.solve(lower.T, z)
    rss = stats.yy - float(stats.moment @ beta)
    # Exact algebra gives rss >= 0; floating error may leave a tiny
    # negative residue which is clamped.
    rss = max(0.0, rss)
    s2 = rss / (stats.n - stats.d)
    return OlsSolution(beta, s2, True)


def directional_variance(stats: LinearActionStats, f: Sequence[float]) -> float:
    """Return f^T gram^{-1} f via one triangular solve on the Cholesky factor."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (stats.d,):
        raise ConfigurationError(
            f"query vector has shape {f.shape}, expected ({stats.d},)"
        )
    lower = cholesky_if_pd(stats.gram)
    if lower is None:
        raise NotReadyError("design matrix is not positive definite yet")
    w = np.linalg.solve(lower, f)
    return float(w @ w)
