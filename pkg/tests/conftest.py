"""Shared builders for the test suite."""

import numpy as np
import pytest

from glrstop.stats import ContextSpace
from glrstop.unstructured import UnstructuredState
from glrstop.linear import LinearState


def pair_space(k: int = 2, m: int = 1, weights=None, features=None) -> ContextSpace:
    """Small fully-feasible space with ids x1..xm / a1..ak."""
    if weights is None:
        weights = [1.0 / m] * m
    return ContextSpace(
        context_ids=[f"x{j + 1}" for j in range(m)],
        action_ids=[f"a{i + 1}" for i in range(k)],
        weights=weights,
        features=features,
    )


def fed_unstructured(space: ContextSpace, samples: dict) -> UnstructuredState:
    """State with the given {(x, a): [values]} streams pushed in order."""
    state = UnstructuredState(space)
    for (x, a), values in samples.items():
        for y in values:
            state.update(x, a, float(y))
    return state


def fed_linear(space: ContextSpace, samples: dict) -> LinearState:
    """Linear state fed per-(x, a) value lists in dict order."""
    state = LinearState(space)
    for (x, a), values in samples.items():
        for y in values:
            state.update(x, a, float(y))
    return state


def spread(mean: float, n: int, s2: float = 1.0) -> list:
    """n values with exact sample mean and exact n-1 sample variance s2."""
    if n < 2 or n % 2:
        raise ValueError("need an even n >= 2")
    half = (s2 * (n - 1) / n) ** 0.5
    return [mean - half, mean + half] * (n // 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
