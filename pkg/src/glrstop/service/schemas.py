"""Request and response shapes for the HTTP service.

Non-finite floats (infinite statistics, nan placeholders on unready
contexts) are mapped to null in responses so every payload is strict JSON.
"""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class SpacePayload(BaseModel):
    contexts: List[str] = Field(min_length=1)
    actions: List[str] = Field(min_length=1)
    weights: Optional[List[float]] = None
    features: Optional[List[List[float]]] = None
    feasible: Optional[Dict[str, List[str]]] = None


class SessionCreate(BaseModel):
    space: SpacePayload
    setting: Literal["unstructured", "linear"] = "unstructured"
    criterion: Literal["P1", "P2"] = "P1"
    alpha: float = Field(gt=0.0, lt=1.0)
    delta: float = Field(ge=0.0)


class SessionInfo(BaseModel):
    session_id: str
    setting: str
    criterion: str
    alpha: float
    delta: float
    contexts: int
    actions: int
    stage: int


class ObservationIn(BaseModel):
    context: str
    action: str
    value: float


class ObservationBatch(BaseModel):
    observations: List[ObservationIn] = Field(min_length=1)


class StageInfo(BaseModel):
    session_id: str
    stage: int


class ContextReport(BaseModel):
    best: str
    ready: bool
    statistic: Optional[float] = None
    boundary: Optional[float] = None
    slack: Optional[float] = None
    regret: Optional[float] = None
    challenger: Optional[str] = None


class DecisionOut(BaseModel):
    session_id: str
    stage: int
    stop: bool
    policy: Dict[str, str]
    weighted_regret: Optional[float] = None
    contexts: Dict[str, ContextReport]


class BoundaryPoint(BaseModel):
    t: int
    alpha: float
    gamma: Optional[float] = None
    reference: float


class BoundaryCurveRequest(BaseModel):
    alphas: List[float] = Field(min_length=1)
    t_max: float = Field(default=1e8, ge=1.0)
    points: int = Field(default=200, ge=2)


class BoundaryCurve(BaseModel):
    points: List[BoundaryPoint]


class ExperimentRequest(BaseModel):
    config: Dict[str, Any]
    workers: int = Field(default=1, ge=1)
    include_replications: bool = False


class ReplicationOut(BaseModel):
    rep: int
    stop_time: int
    censored: bool
    p1_indicator: float
    p2_indicator: int
    policy: Dict[str, str]


class ExperimentOut(BaseModel):
    replications: int
    avg_ssize: float
    std_ssize: Optional[float] = None
    empirical_p1: float
    empirical_p2: float
    censor_count: int
    wall_time_s: float
    config: Dict[str, Any]
    results: Optional[List[ReplicationOut]] = None
