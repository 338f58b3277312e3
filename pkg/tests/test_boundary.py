"""Time-uniform boundary functions: activation, asymptotics, budgets.

The two frozen constants below were produced by evaluating the closed
forms at 50 decimal digits with mpmath; the log-space double-precision
implementation must stay within 1e-9 of them.
"""

import math

import numpy as np
import pytest

from glrstop.boundary import (
    asymptotic_reference,
    boundary_linear,
    boundary_unstructured,
    boundary_unstructured_array,
    boundary_linear_array,
    gamma,
    gamma_array,
    gamma_curve,
    gamma_l,
    gamma_l_array,
    make_budget,
    rho,
    stage_grid,
)
from glrstop.errors import ConfigurationError, NotReadyError
from glrstop.stats import ContextSpace

RHO_5_005 = 0.26505381902824988597
GAMMA_5_005 = 89.320467034415593768


def test_activation_length_four_at_005():
    for t in (1, 2, 3, 4):
        assert rho(t, 0.05) <= 0.0
    assert rho(5, 0.05) > 0.0


def test_rho_frozen_value():
    assert rho(5, 0.05) == pytest.approx(RHO_5_005, rel=1e-12)


def test_rho_alpha_near_one_limit():
    # alpha -> 1 collapses the formula to (t+1)^(1-1/t) - 1, which
    # approaches t itself only for large t.
    for t in (1, 7, 50, 10**6):
        limit = (t + 1.0) ** (1.0 - 1.0 / t) - 1.0
        assert rho(t, 1.0 - 1e-13) == pytest.approx(limit, rel=1e-9, abs=1e-9)
    assert rho(10**6, 1.0 - 1e-13) == pytest.approx(10**6, rel=2e-5)


def test_gamma_frozen_value():
    assert gamma(5, 0.05) == pytest.approx(GAMMA_5_005, rel=1e-12)
    assert gamma(5, 0.05) == pytest.approx(25.0 / RHO_5_005 - 5.0, rel=1e-12)


def test_gamma_inactive_is_infinite():
    assert math.isinf(gamma(4, 0.05))
    assert math.isinf(gamma(1, 0.5))


def test_gamma_monotone_in_alpha():
    assert gamma(100, 0.005) > gamma(100, 0.05) > gamma(100, 0.5)


def test_gamma_asymptote_at_one_million():
    for alpha in (0.5, 0.05, 0.005):
        gap = gamma(10**6, alpha) - asymptotic_reference(10**6, alpha)
        assert abs(gap) <= 0.05


def test_gamma_gap_shrinks_on_log_grid():
    for alpha in (0.5, 0.05, 0.005):
        gaps = [
            gamma(10**e, alpha) - asymptotic_reference(10**e, alpha)
            for e in range(2, 9)
        ]
        assert all(math.isfinite(g) and g > 0.0 for g in gaps)
        assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_gamma_extreme_argument_high_precision():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    t, alpha = mp.mpf(10**8), mp.mpf("0.005")
    r = (alpha**2 / (t + 1)) ** (1 / t) * (t + 1) - 1
    expected = t * t / r - t
    assert gamma(10**8, 0.005) == pytest.approx(float(expected), rel=1e-6)
    assert gamma(10**8, 0.005) == pytest.approx(29.017319987245117, rel=1e-9)


def test_gamma_l_scalar_reduction_identity():
    # With t2 = t1 and d = 1 the linear curve is the unstructured curve
    # scaled by (n - 1) / n; the stopping rules rely on this staying exact.
    for alpha in (0.3, 0.05, 0.005):
        for n in (6, 17, 240, 10**5):
            if math.isinf(gamma(n, alpha)):
                assert math.isinf(gamma_l(n, n, alpha, 1))
                continue
            assert gamma_l(n, n, alpha, 1) == pytest.approx(
                (n - 1) / n * gamma(n, alpha), rel=1e-12
            )


def test_gamma_l_asymptote_both_dimensions():
    t = 10**6
    for d in (1, 3):
        for alpha in (0.5, 0.05, 0.005):
            gap = gamma_l(t, t, alpha, d) - asymptotic_reference(t, alpha)
            assert abs(gap) <= 0.05


def test_gamma_l_requires_enough_samples():
    with pytest.raises(NotReadyError):
        gamma_l(3, 3.0, 0.05, 3)


def test_gamma_l_activation_tracks_rho_sign():
    alpha, d = 0.05, 3
    finite_seen = False
    for t1 in range(d + 1, 40):
        value = gamma_l(t1, float(t1), alpha, d)
        if math.isfinite(value):
            finite_seen = True
        else:
            assert not finite_seen  # inactive prefix, then active forever
    assert finite_seen


def test_asymptotic_reference_values():
    assert asymptotic_reference(10**6, 0.05) == pytest.approx(19.8070, abs=1e-3)
    assert asymptotic_reference(1, 0.5) == pytest.approx(2 * math.log(2.0) + math.log(2.0))
    with pytest.raises(ConfigurationError):
        asymptotic_reference(0.5, 0.05)


def test_budget_hand_arithmetic():
    space = ContextSpace(["x1", "x2"], ["a1", "a2", "a3"], [0.5, 0.5])
    b1 = make_budget(space, 0.1, "P1")
    assert b1.per_context[0] == pytest.approx(0.1 / (2 * 2 * 0.5))
    b2 = make_budget(space, 0.1, "P2")
    assert b2.per_context[0] == pytest.approx(0.1 / (2 * 2))


def test_budget_skips_singletons():
    space = ContextSpace(
        ["x1", "x2"], ["a1", "a2"], [0.5, 0.5], feasible={"x1": ["a1"]}
    )
    budget = make_budget(space, 0.1, "P1")
    assert 0 not in budget.per_context and 1 in budget.per_context
    all_single = ContextSpace(["x1"], ["a1"], [1.0])
    assert make_budget(all_single, 0.1, "P1").per_context == {}


def test_budget_rejects_degenerate_allocation():
    space = ContextSpace(["x1", "x2"], ["a1", "a2"], [0.9, 0.1])
    with pytest.raises(ConfigurationError):
        make_budget(space, 0.9, "P1")  # 0.9 / (1 * 2 * 0.1) = 4.5
    with pytest.raises(ConfigurationError):
        make_budget(space, 1.2, "P1")


def test_boundary_unstructured_symmetry():
    b = 0.05
    n = 40
    value = boundary_unstructured(n, n, b)
    assert value == pytest.approx(0.5 * gamma(n, b * math.sqrt(1.0 / (n + 1))))


def test_boundary_unstructured_inactive_stage():
    assert math.isinf(boundary_unstructured(5, 5, 0.05))


def test_boundary_unstructured_finite_stays_finite():
    b = 0.02
    start = 30
    assert math.isfinite(boundary_unstructured(start, start, b))
    for n in range(start, 200, 13):
        assert math.isfinite(boundary_unstructured(n, start, b))


def test_boundary_unstructured_guards():
    with pytest.raises(NotReadyError):
        boundary_unstructured(0, 5, 0.05)
    with pytest.raises(ConfigurationError):
        boundary_unstructured(1, 1, 1.5)  # shrunk budget >= 1


def test_boundary_linear_symmetric_reduction():
    value = boundary_linear(30, 30.0, 30, 30.0, 0.05, 2)
    assert value == pytest.approx(
        0.5 * gamma_l(30, 30.0, 0.05 * math.sqrt(1.0 / 31.0), 2)
    )


def test_boundary_linear_tracks_unstructured_shape():
    # Unit features and identity-like Gram give sig_inv = n; the linear
    # threshold then differs from the unstructured one only through the
    # d-shifted exponent and prefactor.
    n, b = 50, 0.05
    lin = boundary_linear(n, float(n), n, float(n), b, 1)
    uns = boundary_unstructured(n, n, b)
    assert lin == pytest.approx((n - 1) / n * uns, rel=1e-12)


def test_array_helpers_match_scalars(rng):
    n_a = rng.integers(2, 500, 40)
    n_b = rng.integers(2, 500, 40)
    scalar = [boundary_unstructured(int(a), int(b), 0.01) for a, b in zip(n_a, n_b)]
    np.testing.assert_allclose(
        boundary_unstructured_array(n_a.astype(float), n_b.astype(float), 0.01),
        scalar,
        rtol=1e-12,
    )
    lam_a = rng.uniform(1.0, 50.0, 40)
    lam_b = rng.uniform(1.0, 50.0, 40)
    n_a = rng.integers(4, 500, 40)
    n_b = rng.integers(4, 500, 40)
    scalar = [
        boundary_linear(int(na), la, int(nb), lb, 0.01, 2)
        for na, la, nb, lb in zip(n_a, lam_a, n_b, lam_b)
    ]
    np.testing.assert_allclose(
        boundary_linear_array(
            n_a.astype(float), lam_a, n_b.astype(float), lam_b, 0.01, 2
        ),
        scalar,
        rtol=1e-12,
    )
    t = np.arange(1, 200)
    np.testing.assert_allclose(
        gamma_array(t.astype(float), 0.05), [gamma(int(v), 0.05) for v in t], rtol=1e-12
    )
    np.testing.assert_allclose(
        gamma_l_array(t[t > 2].astype(float), t[t > 2].astype(float), 0.05, 2),
        [gamma_l(int(v), float(v), 0.05, 2) for v in t[t > 2]],
        rtol=1e-12,
    )


def test_stage_grid_shape():
    grid = stage_grid(t_max=10**8, points=200)
    assert grid[0] == 1 and grid[-1] == 10**8
    assert len(grid) <= 200
    assert (np.diff(grid) > 0).all()
    with pytest.raises(ConfigurationError):
        stage_grid(t_max=0)


def test_gamma_curve_matches_scalar():
    grid = stage_grid(t_max=10**6, points=60)
    curve = gamma_curve(0.05, grid)
    for t, value in zip(grid, curve):
        expect = gamma(int(t), 0.05)
        if math.isinf(expect):
            assert math.isinf(value)
        else:
            assert value == pytest.approx(expect, rel=1e-12)
