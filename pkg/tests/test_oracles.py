"""Cross-checks for the Monte Carlo oracle suites and their vectorized
internals against the reference implementations."""

import math

import numpy as np
import pytest

from glrstop.errors import ConfigurationError
from glrstop.martingales import gaussian_mixture_value, linear_mixture_value
from glrstop.oracles import (
    _linear_g_matrix,
    _prefix_dev_scalar,
    _prefix_ols2,
    _rate_bound,
    _scalar_g_matrix,
    run_suites,
    suite_lemma1,
    suite_lemma2,
    suite_lemma3,
    suite_martingale,
    suite_ville,
)

from conftest import rng  # noqa: F401


def test_rate_bound_arithmetic():
    assert _rate_bound(0.1, 2000) == pytest.approx(
        0.1 + 3.0 * math.sqrt(0.09 / 2000), rel=1e-12
    )


def test_prefix_deviation_matches_direct_formula(rng):
    y = rng.normal(0.0, 1.0, size=(1, 30))
    u = _prefix_dev_scalar(y)
    assert math.isinf(u[0, 0])
    for t in range(2, 31):
        prefix = y[0, :t]
        mean = prefix.mean()
        s2 = float(np.mean((prefix - mean) ** 2))
        assert u[0, t - 1] == pytest.approx(t * mean * mean / (2.0 * s2), rel=1e-9)


def test_prefix_ols_matches_lstsq(rng):
    t_total = 25
    u = rng.uniform(0.0, 1.0, size=(1, t_total))
    y = 0.3 - 0.7 * u + rng.normal(0.0, 1.0, size=(1, t_total))
    f1, f2 = 1.0, 0.5
    n, est, rss, lam, ready = _prefix_ols2(u, y, f1, f2)
    for t in range(3, t_total + 1):
        rows = np.column_stack([np.ones(t), u[0, :t]])
        beta, _, rank, _ = np.linalg.lstsq(rows, y[0, :t], rcond=None)
        if rank < 2:
            continue
        assert ready[0, t - 1]
        resid = y[0, :t] - rows @ beta
        sigma = float(np.array([f1, f2]) @ np.linalg.solve(rows.T @ rows, [f1, f2]))
        assert est[0, t - 1] == pytest.approx(f1 * beta[0] + f2 * beta[1], rel=1e-9)
        assert rss[0, t - 1] == pytest.approx(float(resid @ resid), rel=1e-7, abs=1e-10)
        assert lam[0, t - 1] == pytest.approx(1.0 / sigma, rel=1e-9)


def test_scalar_path_matrix_matches_reference(rng):
    y = rng.normal(0.0, 1.0, size=(4, 35))
    g = _scalar_g_matrix(y)
    for row in range(4):
        ref = gaussian_mixture_value(y[row], mu=0.0)
        assert g[row] == pytest.approx(ref, rel=1e-12)


def test_linear_path_matrix_matches_reference(rng):
    beta = (0.5, -0.25)
    f = (1.0, 0.5)
    t_total = 40
    u = rng.uniform(0.0, 1.0, size=(1, t_total))
    y = beta[0] + beta[1] * u + rng.normal(0.0, 1.0, size=(1, t_total))
    g, ready = _linear_g_matrix(u, y, beta, f)
    rows = np.column_stack([np.ones(t_total), u[0]])
    ref = linear_mixture_value(rows, y[0], np.array(beta), np.array(f))
    for t in range(t_total):
        if ready[0, t]:
            assert g[0, t] == pytest.approx(ref[t], rel=1e-6)
        else:
            assert g[0, t] == 1.0


# ---------------------------------------------------------------------------
# Suites at reduced sizes.


def test_lemma1_suite_reduced():
    rows = suite_lemma1(reps=300, horizon=600)
    assert len(rows) == 1 and rows[0].suite == "lemma1"
    assert rows[0].passed
    assert rows[0].value <= 0.1


def test_lemma3_suite_reduced():
    rows = suite_lemma3(reps=200, horizon=400)
    assert len(rows) == 1 and rows[0].suite == "lemma3"
    assert rows[0].passed


def test_lemma2_suite_reduced():
    rows = suite_lemma2(reps=20)
    assert len(rows) == 1
    assert rows[0].passed
    assert rows[0].value <= 1e-6


def test_ville_suite_reduced():
    rows = suite_ville(reps=300, horizon=200)
    assert len(rows) == 2
    assert all(r.passed for r in rows)
    assert all(r.suite == "ville" for r in rows)


def test_martingale_suite_structure():
    rows = suite_martingale(reps=5000)
    assert len(rows) == 4
    assert all(r.suite == "martingale" for r in rows)
    heavy = [r for r in rows if "[0.98, 1.02]" in r.requirement]
    controls = [r for r in rows if "CLT" in r.requirement]
    assert len(heavy) == 2 and len(controls) == 2
    # The CLT-banded controls are bounded variables; they must pass even
    # at reduced path counts.
    assert all(r.passed for r in controls)


def test_suite_input_validation():
    with pytest.raises(ConfigurationError):
        suite_lemma1(reps=1)
    with pytest.raises(ConfigurationError):
        suite_lemma3(reps=2, horizon=4)
    with pytest.raises(ConfigurationError):
        suite_lemma2(reps=0)
    with pytest.raises(ConfigurationError):
        suite_martingale(reps=50)
    with pytest.raises(ConfigurationError):
        suite_ville(threshold=1.0)
    with pytest.raises(ConfigurationError):
        suite_ville(reps=1)


def test_run_suites_filters_by_name():
    rows = run_suites(["lemma2"], reps=10)
    assert len(rows) == 1 and rows[0].suite == "lemma2"
    rows = run_suites(["ville", "lemma2"], reps=300, seed=5)
    assert [r.suite for r in rows] == ["ville", "ville", "lemma2"]
    with pytest.raises(ConfigurationError):
        run_suites(["bogus"])
