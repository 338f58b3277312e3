"""Stopping-check result types shared by both estimation backends."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping


@dataclass(frozen=True)
class ContextDiagnostics:
    """Margin snapshot for one context at check time.

    ``statistic``/``boundary``/``slack`` describe the binding challenger
    (smallest statistic-minus-boundary margin); ``regret`` is the
    context's certified slack r(x, t).  Unready contexts report
    ready=False with nan/inf placeholders.
    """

    best: str
    ready: bool
    statistic: float = math.nan
    boundary: float = math.nan
    slack: float = math.nan
    regret: float = math.nan
    challenger: str | None = None


@dataclass(frozen=True)
class StopDecision:
    """Outcome of a stopping check: flag, selected policy, diagnostics."""

    stop: bool
    policy: Mapping[str, str]
    diagnostics: Mapping[str, ContextDiagnostics] = field(default_factory=dict)
    weighted_regret: float | None = None


