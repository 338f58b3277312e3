"""Linear-model GLR evidence, the known-variance closed form, and the
linear stopping rules, including the scalar-feature reduction."""

import math

import numpy as np
import pytest

from conftest import fed_linear, fed_unstructured, pair_space
from glrstop.boundary import make_budget
from glrstop.errors import NotReadyError, PreconditionError
from glrstop.linear import (
    LinearState,
    certified_slack_linear,
    check_stop_p1_linear,
    check_stop_p2_linear,
    glr_closed_form_known_variance,
    glr_statistic_linear,
)
from glrstop.unstructured import check_stop_p1, check_stop_p2, glr_statistic


def ready_d2_state(rng, k=2, n=12, betas=None, sd=0.5):
    space = pair_space(k=k, m=3, features=[[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]])
    if betas is None:
        betas = [rng.uniform(-2.0, 2.0, 2) for _ in range(k)]
    state = LinearState(space)
    for a in range(k):
        for _ in range(n):
            x = int(rng.integers(0, 3))
            f = space.features[x]
            state.update(x, a, float(f @ betas[a]) + sd * float(rng.standard_normal()))
    return space, state


def test_state_counts_and_readiness(rng):
    space = pair_space(k=2, m=2, features=[[1.0, 0.0], [1.0, 1.0]])
    state = LinearState(space)
    assert not state.all_ready
    state.update(0, 0, 1.0)
    state.update(1, 0, 2.0)
    state.update(0, 0, 1.5)
    assert not state.all_ready  # a2 never sampled
    for _ in range(3):
        state.update(0, 1, 0.5)
    assert not state.all_ready  # a2 gram is rank one
    state.update(1, 1, 1.0)
    assert state.all_ready
    assert state.t == 7
    assert list(state.counts()) == [3, 4]


def test_statistic_equal_fits_zero(rng):
    space = pair_space(k=2, m=2, features=[[1.0, 0.0], [1.0, 1.0]])
    state = LinearState(space)
    beta = np.array([1.0, -0.5])
    for a in (0, 1):
        for x in (0, 1, 0, 1):
            state.update(x, a, float(space.features[x] @ beta) + (0.1 if x else -0.1))
    assert glr_statistic_linear(state, 0, 0, 1, 0.0) == pytest.approx(0.0, abs=1e-20)


def test_statistic_monotone_in_eta(rng):
    _, state = ready_d2_state(rng, betas=[np.array([1.0, 1.0]), np.array([0.0, 0.0])])
    vals = [glr_statistic_linear(state, 2, 0, 1, eta) for eta in (0.0, 0.5, 1.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_statistic_unready_raises(rng):
    space = pair_space(k=2, m=2, features=[[1.0, 0.0], [1.0, 1.0]])
    state = LinearState(space)
    state.update(0, 0, 1.0)
    with pytest.raises(NotReadyError):
        glr_statistic_linear(state, 0, 0, 1, 0.0)


def test_scalar_feature_reduction_matches_unstructured(rng):
    # One context with unit feature: OLS collapses to the sample mean and
    # the n-d residual divisor equals the n-1 sample variance divisor.
    space = pair_space(k=3, features=[[1.0]])
    samples = {
        (0, a): rng.normal(a * 1.0, 1.0, int(rng.integers(3, 40))) for a in range(3)
    }
    lin = fed_linear(space, samples)
    uns = fed_unstructured(space, samples)
    for a in range(3):
        for b in range(3):
            if a == b:
                continue
            for eta in (0.0, 0.7):
                assert glr_statistic_linear(lin, 0, a, b, eta) == pytest.approx(
                    glr_statistic(uns, 0, a, b, eta), rel=1e-12
                )


def test_slack_inverts_statistic(rng):
    hits = 0
    for _ in range(60):
        _, state = ready_d2_state(rng, n=int(rng.integers(4, 25)))
        phi = float(rng.uniform(0.5, 30.0))
        x = int(rng.integers(0, 3))
        w = certified_slack_linear(state, x, 0, 1, phi)
        if w > 0.0:
            hits += 1
            assert glr_statistic_linear(state, x, 0, 1, w) == pytest.approx(
                phi, rel=1e-9
            )
    assert hits >= 30


def test_slack_clamp_and_inactive(rng):
    _, state = ready_d2_state(
        rng, betas=[np.array([5.0, 0.0]), np.array([0.0, 0.0])], sd=0.05
    )
    assert certified_slack_linear(state, 1, 0, 1, 0.5) == 0.0
    assert math.isinf(certified_slack_linear(state, 1, 0, 1, math.inf))


def test_closed_form_zero_at_equal_fits(rng):
    space = pair_space(k=2, m=2, features=[[1.0, 0.0], [1.0, 1.0]])
    beta = np.array([0.5, 0.25])
    state = LinearState(space)
    for a in (0, 1):
        for x in (0, 1, 0, 1):
            state.update(x, a, float(space.features[x] @ beta) + (0.2 if x else -0.2))
    value = glr_closed_form_known_variance(
        state.per_action[0], state.per_action[1], space.features[0], 0.0, 1.0, 1.0
    )
    assert value == pytest.approx(0.0, abs=1e-18)


def test_closed_form_antisymmetry(rng):
    # The signed extension mirrors the statistic once the reversed gap
    # leaves the valid region, i.e. when |gap| > delta.
    checked = 0
    for _ in range(20):
        space, state = ready_d2_state(rng)
        x = int(rng.integers(0, 3))
        f = space.features[x]
        fits = [float(np.asarray(f) @ state.beta(a)) for a in (0, 1)]
        hi, lo = (0, 1) if fits[0] >= fits[1] else (1, 0)
        gap = fits[hi] - fits[lo]
        if gap <= 1e-9:
            continue
        delta = 0.5 * gap
        forward = glr_closed_form_known_variance(
            state.per_action[hi], state.per_action[lo], f, delta, 0.8, 1.2
        )
        backward = glr_closed_form_known_variance(
            state.per_action[lo], state.per_action[hi], f, delta, 1.2, 0.8, signed=True
        )
        assert backward == pytest.approx(-forward, rel=1e-12)
        checked += 1
    assert checked >= 10


def test_closed_form_precondition_error(rng):
    space, state = ready_d2_state(
        rng, betas=[np.array([0.0, 0.0]), np.array([5.0, 0.0])], sd=0.05
    )
    with pytest.raises(PreconditionError):
        glr_closed_form_known_variance(
            state.per_action[0], state.per_action[1], space.features[0], 0.0, 1.0, 1.0
        )


def test_plugin_agrees_with_closed_form_at_estimated_variance(rng):
    # Feeding the estimated variances into the known-variance form must
    # reproduce the plug-in statistic whenever the gap direction is valid.
    for _ in range(20):
        space, state = ready_d2_state(rng)
        x = int(rng.integers(0, 3))
        eta = float(rng.uniform(0.0, 1.0))
        f = space.features[x]
        fits = [float(np.asarray(f) @ state.beta(a)) for a in (0, 1)]
        a, b = (0, 1) if fits[0] >= fits[1] else (1, 0)
        plug = glr_statistic_linear(state, x, a, b, eta)
        closed = glr_closed_form_known_variance(
            state.per_action[a], state.per_action[b], f, eta, state.s2(a), state.s2(b)
        )
        assert plug == pytest.approx(closed, rel=1e-12)


def test_p1_linear_waits_for_readiness():
    space = pair_space(k=2, m=2, features=[[1.0, 0.0], [1.0, 1.0]])
    state = LinearState(space)
    budget = make_budget(space, 0.05, "P1")
    state.update(0, 0, 1.0)
    state.update(1, 0, 2.0)
    decision = check_stop_p1_linear(state, budget, 0.0)
    assert not decision.stop and decision.policy == {}


def test_p1_linear_stops_on_manufactured_gap(rng):
    space = pair_space(k=2, features=[[1.0]])
    state = LinearState(space)
    budget = make_budget(space, 0.05, "P1")
    stop_at = None
    for t in range(1, 61):
        a = (t - 1) % 2
        y = 10.0 * a + 0.1 * float(rng.standard_normal())
        state.update(0, a, y)
        if check_stop_p1_linear(state, budget, 0.0).stop:
            stop_at = t
            break
    assert stop_at is not None
    decision = check_stop_p1_linear(state, budget, 0.0)
    assert decision.policy == {"x1": "a2"}


def test_p2_linear_singleton_feasible_sets(rng):
    # Every context has exactly one feasible action, so there is nothing
    # to compare and the rule should stop with zero regret once each
    # feasible pair is ready.
    space = pair_space(
        k=2,
        m=2,
        features=[[1.0], [1.0]],
    )
    space = type(space)(
        space.context_ids,
        space.action_ids,
        space.weights,
        features=space.features,
        feasible={"x1": ["a1"], "x2": ["a2"]},
    )
    state = LinearState(space)
    budget = make_budget(space, 0.05, "P2")
    for y in (1.0, 0.9, 1.1):
        state.update(0, 0, y)
        state.update(1, 1, y + 1.0)
    decision = check_stop_p2_linear(state, budget, 0.0)
    assert decision.stop
    assert decision.weighted_regret == 0.0
    assert decision.policy == {"x1": "a1", "x2": "a2"}


def test_p2_linear_zero_delta_blocks_close_actions(rng):
    _, state = ready_d2_state(
        rng, betas=[np.array([1.0, 0.5]), np.array([1.0, 0.49])], n=20, sd=1.0
    )
    budget = make_budget(state.space, 0.05, "P2")
    decision = check_stop_p2_linear(state, budget, 0.0)
    assert not decision.stop


def test_stage_by_stage_match_with_unstructured_rules():
    # Scalar features, one context, gaps far above the noise floor: both
    # settings activate their boundaries at the same stage and both rules
    # must flip from continue to stop in the same place.
    space = pair_space(k=3, features=[[1.0]])
    means = [0.0, 5.0, 10.0]
    for seed in range(6):
        rng = np.random.default_rng(seed)
        uns = fed_unstructured(space, {})
        lin = LinearState(space)
        b1 = make_budget(space, 0.05, "P1")
        b2 = make_budget(space, 0.05, "P2")
        for t in range(1, 41):
            a = (t - 1) % 3
            y = means[a] + 0.1 * float(rng.standard_normal())
            uns.update(0, a, y)
            lin.update(0, a, y)
            du = (check_stop_p1(uns, b1, 0.0).stop, check_stop_p2(uns, b2, 0.0).stop)
            dl = (
                check_stop_p1_linear(lin, b1, 0.0).stop,
                check_stop_p2_linear(lin, b2, 0.0).stop,
            )
            assert du == dl


def test_weighted_regret_settles_downward(rng):
    from glrstop.environments import standard_linear_env, sample
    from glrstop.sampling import make_strategy

    env = standard_linear_env(k=3)
    budget = make_budget(env.space, 0.05, "P2")
    strategy = make_strategy(
        "equal_allocation", n0=10, delta=0.5, budget=budget, design=env.design_points
    )
    state = LinearState(env.space)
    trace = []
    for t in range(1, 2001):
        x, a = strategy.decide(state, rng).pair
        state.update(x, a, sample(env, x, a, rng))
        if t % 3 == 0:
            decision = check_stop_p2_linear(state, budget, 0.5)
            if decision.weighted_regret is not None and math.isfinite(
                decision.weighted_regret
            ):
                trace.append(decision.weighted_regret)
            if decision.stop:
                break
    assert len(trace) >= 2
    assert trace[-1] <= trace[0]
