"""Synthetic ground-truth environments and data-source regimes.

An environment owns the exact conditional means and noise levels, so the
harness can score a returned policy against the true best actions without
any estimation.  Two families are provided: tabular (one Gaussian per
feasible pair) and linear (one coefficient vector per action, shared
context features).  Observations are always mean plus independent Gaussian
noise.

Data sources model who picks the next sample: a predetermined offline log,
a simulator that lets the strategy pick the pair, an online stream that
draws the context from p(.) and lets the strategy pick the action, or a
hybrid schedule interleaving those segments.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigurationError, SourceExhausted
from .stats import ContextSpace, normalized_weights


def _fmt(value: float) -> str:
    return f"{float(value):g}"


class TabularEnvironment:
    """Ground truth for the unstructured setting.

    truth and noise_sd are (m, k) arrays; entries at infeasible pairs are
    ignored (NaN allowed there, nowhere else).
    """

    kind = "tabular"

    def __init__(
        self,
        space: ContextSpace,
        truth: Sequence[Sequence[float]],
        noise_sd: Sequence[Sequence[float]],
        meta: Mapping | None = None,
    ) -> None:
        self.space = space
        self.truth = np.asarray(truth, dtype=np.float64)
        self.noise_sd = np.asarray(noise_sd, dtype=np.float64)
        shape = (space.m, space.k)
        if self.truth.shape != shape or self.noise_sd.shape != shape:
            raise ConfigurationError("truth and noise_sd must be (m, k) arrays")
        mask = space.feasible_mask
        if not np.all(np.isfinite(self.truth[mask])):
            raise ConfigurationError("truth must be finite on every feasible pair")
        sd = self.noise_sd[mask]
        if not (np.all(np.isfinite(sd)) and np.all(sd > 0.0)):
            raise ConfigurationError("noise_sd must be positive and finite on feasible pairs")
        self.truth.flags.writeable = False
        self.noise_sd.flags.writeable = False
        self.meta = dict(meta) if meta else {}

    def mean(self, x: int, a: int) -> float:
        self._check(x, a)
        return float(self.truth[x, a])

    def sd(self, x: int, a: int) -> float:
        self._check(x, a)
        return float(self.noise_sd[x, a])

    def _check(self, x: int, a: int) -> None:
        if not self.space.feasible_mask[x, a]:
            raise ConfigurationError(f"pair (context {x}, action {a}) is infeasible")

    def to_dict(self) -> dict:
        mask = self.space.feasible_mask
        out = {"type": self.kind, **self.space.to_dict()}
        out["truth"] = np.where(mask, self.truth, np.nan).tolist()
        out["noise"] = np.where(mask, self.noise_sd, np.nan).tolist()
        if self.meta:
            out["meta"] = dict(self.meta)
        return out


def _corner_contexts(features: np.ndarray) -> tuple:
    """Contexts at an extreme of every non-constant feature column.

    With a linear response the most informative places to sample are the
    corners of the feature range, so simulation-mode strategies concentrate
    there by default.  Constant columns (the intercept) are ignored; if no
    context is extreme in every varying column at once, every context
    qualifies.
    """
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    varying = hi > lo
    if not varying.any():
        return tuple(range(features.shape[0]))
    f = features[:, varying]
    at_edge = np.isclose(f, lo[varying]) | np.isclose(f, hi[varying])
    ids = np.flatnonzero(at_edge.all(axis=1))
    if ids.size == 0:
        return tuple(range(features.shape[0]))
    return tuple(int(i) for i in ids)


class LinearEnvironment:
    """Ground truth for the linear setting: y(x, a) = f(x) . beta(a).

    design_points lists the contexts where choose-your-context sampling
    concentrates (the corners of the feature range by default).  Stopping
    checks and precision always cover the whole context grid regardless.
    """

    kind = "linear"

    def __init__(
        self,
        space: ContextSpace,
        betas: Sequence[Sequence[float]],
        noise_sd: Sequence[float],
        meta: Mapping | None = None,
        design: Sequence[int] | None = None,
    ) -> None:
        if space.features is None:
            raise ConfigurationError("linear environments need context features")
        self.space = space
        self.betas = np.asarray(betas, dtype=np.float64)
        self.noise_sd = np.asarray(noise_sd, dtype=np.float64)
        if self.betas.shape != (space.k, space.d):
            raise ConfigurationError("betas must be a (k, d) array")
        if self.noise_sd.shape != (space.k,):
            raise ConfigurationError("noise_sd must have one entry per action")
        if not np.all(np.isfinite(self.betas)):
            raise ConfigurationError("betas must be finite")
        if not (np.all(np.isfinite(self.noise_sd)) and np.all(self.noise_sd > 0.0)):
            raise ConfigurationError("noise_sd must be positive and finite")
        self.betas.flags.writeable = False
        self.noise_sd.flags.writeable = False
        # Cached (m, k) mean table; linear truth is dense over the grid.
        self.truth = self.space.features @ self.betas.T
        self.truth.flags.writeable = False
        if design is None:
            self.design_points = _corner_contexts(self.space.features)
        else:
            pts = tuple(int(i) for i in design)
            if not pts or len(set(pts)) != len(pts):
                raise ConfigurationError("design must list distinct context indices")
            if any(i < 0 or i >= space.m for i in pts):
                raise ConfigurationError("design context index out of range")
            self.design_points = pts
        self.meta = dict(meta) if meta else {}

    def mean(self, x: int, a: int) -> float:
        if not self.space.feasible_mask[x, a]:
            raise ConfigurationError(f"pair (context {x}, action {a}) is infeasible")
        return float(self.truth[x, a])

    def sd(self, x: int, a: int) -> float:
        if not self.space.feasible_mask[x, a]:
            raise ConfigurationError(f"pair (context {x}, action {a}) is infeasible")
        return float(self.noise_sd[a])

    def to_dict(self) -> dict:
        out = {"type": self.kind, **self.space.to_dict()}
        out["betas"] = self.betas.tolist()
        out["noise"] = self.noise_sd.tolist()
        out["design"] = list(self.design_points)
        if self.meta:
            out["meta"] = dict(self.meta)
        return out


Environment = Union[TabularEnvironment, LinearEnvironment]


def sample(env: Environment, x: int, a: int, rng: np.random.Generator) -> float:
    """One observation y(x, a) + sigma(x, a) * N(0, 1) from the given generator."""
    return env.mean(x, a) + env.sd(x, a) * float(rng.standard_normal())


def true_means(env: Environment) -> np.ndarray:
    """The (m, k) mean table with NaN at infeasible pairs."""
    return np.where(env.space.feasible_mask, env.truth, np.nan)


def best_actions(env: Environment) -> np.ndarray:
    """Index of the true best feasible action per context (lowest index on ties)."""
    masked = np.where(env.space.feasible_mask, env.truth, -np.inf)
    return masked.argmax(axis=1)


def delta_optimal_mask(env: Environment, delta: float) -> np.ndarray:
    """Boolean (m, k) mask of actions within delta of the context-wise best."""
    masked = np.where(env.space.feasible_mask, env.truth, -np.inf)
    top = masked.max(axis=1)
    return masked >= (top - float(delta))[:, None]


def policy_value(env: Environment, policy: Sequence[int]) -> float:
    """Expected performance sum_x p(x) y(x, policy(x)) of a context -> action map."""
    pol = np.asarray(policy, dtype=np.intp)
    if pol.shape != (env.space.m,):
        raise ConfigurationError("policy must assign one action per context")
    rows = np.arange(env.space.m)
    if not env.space.feasible_mask[rows, pol].all():
        raise ConfigurationError("policy selects an infeasible action")
    return float(env.space.weights @ env.truth[rows, pol])


def optimal_value(env: Environment) -> float:
    return policy_value(env, best_actions(env))


# ---------------------------------------------------------------------------
# Built-in environments.


def toy_env() -> TabularEnvironment:
    """10x10 tabular instance with means |i-j|(0.1+0.1(j-1)) and
    noise sd 0.1+0.1(i-1)+0.1(j-1); uniform context weights."""
    k = m = 10
    truth = np.empty((m, k))
    noise = np.empty((m, k))
    for j in range(1, m + 1):
        for i in range(1, k + 1):
            truth[j - 1, i - 1] = abs(i - j) * (0.1 + 0.1 * (j - 1))
            noise[j - 1, i - 1] = 0.1 + 0.1 * (i - 1) + 0.1 * (j - 1)
    space = ContextSpace(
        context_ids=[f"x{j}" for j in range(1, m + 1)],
        action_ids=[f"a{i}" for i in range(1, k + 1)],
        weights=[1.0 / m] * m,
    )
    return TabularEnvironment(space, truth, noise, meta={"name": "toy"})


def matyas_env(weights_seed: int = 0) -> TabularEnvironment:
    """Matyas surface y = 0.26(x^2 + a^2) - 0.48 x a on A = {-10,...,10},
    X = {0, 0.5, ..., 3}; unit noise; random normalized weights."""
    actions = [-10.0, -5.0, 0.0, 5.0, 10.0]
    contexts = [0.5 * j for j in range(7)]
    truth = np.array(
        [[0.26 * (x * x + a * a) - 0.48 * x * a for a in actions] for x in contexts]
    )
    noise = np.ones_like(truth)
    rng = np.random.default_rng(weights_seed)
    weights = normalized_weights(rng.uniform(0.0, 1.0, len(contexts)))
    space = ContextSpace(
        context_ids=[_fmt(x) for x in contexts],
        action_ids=[_fmt(a) for a in actions],
        weights=weights,
    )
    return TabularEnvironment(space, truth, noise, meta={"name": "matyas", "weights_seed": weights_seed})


def dixon_price_env(seed: int = 0) -> TabularEnvironment:
    """Two-dimensional Dixon-Price surface over a 3x3 action grid and 5x5
    context grid.  Draw order from the seed: context weights U(0,1)
    (normalized), then the (m, k) noise sd table U(0.5, 2).

    The second summand uses the first coordinate's unsquared gap, exactly as
    in the classic form l * (2 z_l^2 - z_{l-1})^2 with z = a - x.
    """
    grid_a = [0.0, 0.8, 1.6]
    grid_x = [-0.2, -0.1, 0.0, 0.1, 0.2]
    actions = list(itertools.product(grid_a, grid_a))
    contexts = list(itertools.product(grid_x, grid_x))

    def value(x: tuple, a: tuple) -> float:
        z1 = a[0] - x[0]
        z2 = a[1] - x[1]
        return z1 * z1 + 2.0 * (2.0 * z2 * z2 - z1) ** 2

    truth = np.array([[value(x, a) for a in actions] for x in contexts])
    rng = np.random.default_rng(seed)
    weights = normalized_weights(rng.uniform(0.0, 1.0, len(contexts)))
    noise = rng.uniform(0.5, 2.0, truth.shape)
    space = ContextSpace(
        context_ids=[f"{_fmt(x[0])},{_fmt(x[1])}" for x in contexts],
        action_ids=[f"{_fmt(a[0])},{_fmt(a[1])}" for a in actions],
        weights=weights,
    )
    return TabularEnvironment(space, truth, noise, meta={"name": "dixon_price", "seed": seed})


def standard_linear_env(k: int = 10) -> LinearEnvironment:
    """Linear instance with f(x) = (1, x2, x3) on the {0, 0.2, ..., 1}^2 grid
    (m = 36), beta(a_i) = (0.5(i-1), 1+0.5(i-1), 1+0.5(i-1)), unit noise.
    The last action dominates everywhere with per-step gaps >= 0.5."""
    if k < 2:
        raise ConfigurationError("need at least two actions")
    grid = [i / 5 for i in range(6)]
    coords = list(itertools.product(grid, grid))
    features = [[1.0, c[0], c[1]] for c in coords]
    betas = [[0.5 * i, 1.0 + 0.5 * i, 1.0 + 0.5 * i] for i in range(k)]
    space = ContextSpace(
        context_ids=[f"{_fmt(c[0])},{_fmt(c[1])}" for c in coords],
        action_ids=[f"a{i + 1}" for i in range(k)],
        weights=[1.0 / len(coords)] * len(coords),
        features=features,
    )
    return LinearEnvironment(space, betas, np.ones(k), meta={"name": "standard_linear", "k": k})


def _grid_space(grid: Sequence[float], dims: int, weights: np.ndarray, k: int) -> ContextSpace:
    coords = list(itertools.product(*([list(grid)] * dims)))
    features = [[1.0, *c] for c in coords]
    return ContextSpace(
        context_ids=[",".join(_fmt(v) for v in c) for c in coords],
        action_ids=[f"a{i + 1}" for i in range(k)],
        weights=weights,
        features=features,
    )


def _load_case(case: int) -> LinearEnvironment:
    name = f"linear_case{case}.json"
    try:
        payload = json.loads(resources.files(__package__).joinpath("data").joinpath(name).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"no bundled linear case {case}") from None
    env = environment_from_dict(payload)
    if not isinstance(env, LinearEnvironment):
        raise ConfigurationError(f"bundled case {case} is not a linear environment")
    return env


def random_linear_env(config: Union[int, Mapping]) -> LinearEnvironment:
    """A random-coefficient linear instance.

    config = {"case": 1..5} (or a bare int) loads one of the bundled
    fixed instances.  Otherwise config supplies {k, d, seed} plus optional
    grid_points (default 6) and weights ("uniform" or "random"); the seed
    then draws betas ~ U(0, 5), noise sd ~ U(0.5, 2) and, if requested,
    raw context weights ~ U(0, 1), in that order.
    """
    if isinstance(config, int):
        return _load_case(config)
    cfg = dict(config)
    if "case" in cfg:
        return _load_case(int(cfg["case"]))
    try:
        k = int(cfg["k"])
        d = int(cfg["d"])
        seed = int(cfg["seed"])
    except KeyError as missing:
        raise ConfigurationError(f"random linear config needs {missing.args[0]!r}") from None
    if d < 2:
        raise ConfigurationError("random linear instances need d >= 2")
    points = int(cfg.get("grid_points", 6))
    grid = [i / (points - 1) for i in range(points)]
    m = points ** (d - 1)
    rng = np.random.default_rng(seed)
    betas = rng.uniform(0.0, 5.0, (k, d))
    noise = rng.uniform(0.5, 2.0, k)
    scheme = cfg.get("weights", "uniform")
    if scheme == "uniform":
        weights = np.full(m, 1.0 / m)
    elif scheme == "random":
        weights = normalized_weights(rng.uniform(0.0, 1.0, m))
    else:
        raise ConfigurationError(f"unknown weights scheme {scheme!r}")
    space = _grid_space(grid, d - 1, weights, k)
    return LinearEnvironment(space, betas, noise, meta={"name": "random_linear", **cfg})


# ---------------------------------------------------------------------------
# Serialization.


def environment_from_dict(payload: Mapping) -> Environment:
    kind = payload.get("type")
    space = ContextSpace.from_dict(payload)
    meta = payload.get("meta")
    if kind == "tabular":
        truth = np.asarray(payload["truth"], dtype=np.float64)
        noise = np.asarray(payload["noise"], dtype=np.float64)
        # NaN is only a placeholder at infeasible pairs; zero it so the
        # constructor's finite checks see the mask, not the placeholder.
        hole = ~space.feasible_mask
        truth = np.where(hole, 0.0, truth)
        noise = np.where(hole, 1.0, noise)
        return TabularEnvironment(space, truth, noise, meta=meta)
    if kind == "linear":
        return LinearEnvironment(
            space,
            payload["betas"],
            payload["noise"],
            meta=meta,
            design=payload.get("design"),
        )
    raise ConfigurationError(f"unknown environment type {kind!r}")


def load_environment(path: Union[str, Path]) -> Environment:
    return environment_from_dict(json.loads(Path(path).read_text()))


def dump_environment(env: Environment, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(env.to_dict(), indent=2) + "\n")


_BUILTINS = {
    "toy": toy_env,
    "matyas": matyas_env,
    "dixon_price": dixon_price_env,
    "standard_linear": standard_linear_env,
}


def make_environment(spec_: Union[str, Mapping]) -> Environment:
    """Resolve an environment reference: a builtin name ("toy",
    "matyas", "dixon_price", "standard_linear", "case1".."case5"),
    a {"builtin": name, ...params} dict, a {"path": file} dict, or a full
    inline environment dict (with "type")."""
    if isinstance(spec_, str):
        if spec_.startswith("case") and spec_[4:].isdigit():
            return _load_case(int(spec_[4:]))
        if spec_ in _BUILTINS:
            return _BUILTINS[spec_]()
        return load_environment(spec_)
    cfg = dict(spec_)
    if "type" in cfg:
        return environment_from_dict(cfg)
    if "path" in cfg:
        return load_environment(cfg["path"])
    name = cfg.pop("builtin", None)
    if name is None:
        raise ConfigurationError("environment spec needs 'builtin', 'path' or 'type'")
    if name.startswith("case") and name[4:].isdigit():
        return _load_case(int(name[4:]))
    if name == "random_linear":
        return random_linear_env(cfg)
    if name not in _BUILTINS:
        raise ConfigurationError(f"unknown builtin environment {name!r}")
    return _BUILTINS[name](**cfg)


# ---------------------------------------------------------------------------
# Data-source regimes.


@dataclass(frozen=True)
class OfflineLog:
    """Predetermined (context_id, action_id) sequence, replayed in order."""

    pairs: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", tuple((str(c), str(a)) for c, a in self.pairs)
        )
        if not self.pairs:
            raise ConfigurationError("offline log must be nonempty")


@dataclass(frozen=True)
class Simulation:
    """The strategy picks both the context and the action."""


@dataclass(frozen=True)
class Online:
    """Contexts arrive as draws from p(.); the strategy picks the action."""


@dataclass(frozen=True)
class Hybrid:
    """Consecutive segments (mode, count); the final segment's mode persists
    once the schedule runs out."""

    schedule: tuple

    def __post_init__(self):
        segments = tuple((mode, int(count)) for mode, count in self.schedule)
        if not segments:
            raise ConfigurationError("hybrid schedule must be nonempty")
        for mode, count in segments:
            if isinstance(mode, Hybrid):
                raise ConfigurationError("hybrid schedules cannot nest")
            if not isinstance(mode, (OfflineLog, Simulation, Online)):
                raise ConfigurationError(f"bad hybrid segment mode {mode!r}")
            if count < 1:
                raise ConfigurationError("hybrid segment counts must be positive")
        object.__setattr__(self, "schedule", segments)


DataSourceMode = Union[OfflineLog, Simulation, Online, Hybrid]


def validate_source(source: DataSourceMode, space: ContextSpace) -> None:
    """Check every offline log entry names a feasible pair of this space."""
    logs = []
    if isinstance(source, OfflineLog):
        logs.append(source)
    elif isinstance(source, Hybrid):
        logs.extend(mode for mode, _ in source.schedule if isinstance(mode, OfflineLog))
    for log in logs:
        for cid, aid in log.pairs:
            x = space.context_index(cid)
            a = space.action_index(aid)
            if not space.feasible_mask[x, a]:
                raise ConfigurationError(f"offline log pair ({cid!r}, {aid!r}) is infeasible")


def _offline_entry(log: OfflineLog, position: int):
    if position >= len(log.pairs):
        raise SourceExhausted(
            f"offline log exhausted (has {len(log.pairs)} entries, asked for {position + 1})"
        )
    return log.pairs[position]


def next_context(source: DataSourceMode, space: ContextSpace, rng: np.random.Generator, stage: int):
    """Who supplies stage t's sample.

    Returns the predetermined (context_id, action_id) pair under an offline
    log, a freshly drawn context_id under online arrivals, and None under
    simulation (the strategy's choice).  Stages are 1-based.
    """
    if stage < 1:
        raise ConfigurationError("stages are 1-based")
    if isinstance(source, Hybrid):
        source, offset = _hybrid_segment(source, stage)
        stage = offset + 1
    if isinstance(source, OfflineLog):
        return _offline_entry(source, stage - 1)
    if isinstance(source, Online):
        x = int(rng.choice(space.m, p=space.weights))
        return space.context_ids[x]
    if isinstance(source, Simulation):
        return None
    raise ConfigurationError(f"unknown data source {source!r}")


def _hybrid_segment(hybrid: Hybrid, stage: int):
    start = 1
    for mode, count in hybrid.schedule:
        if stage < start + count:
            return mode, stage - start
        start += count
    # Past the schedule the final mode keeps serving (offsets keep growing,
    # so a final offline segment eventually exhausts its log).
    mode, count = hybrid.schedule[-1]
    final_start = start - count
    return mode, stage - final_start
