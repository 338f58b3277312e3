"""HTTP facade over the stopping toolkit.

Sessions hold live estimator state for data arriving from outside (a real
system, an external simulator): clients describe the context/action space,
push observations, and poll the stopping decision.  The batch endpoints
mirror the CLI: boundary curves and full Monte Carlo experiments.  State is
in-memory and per-process; a session belongs to whichever worker holds it,
so run a single worker unless sessions are disposable.
"""

from __future__ import annotations

import math
import threading
import uuid

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse

from ..boundary import (
    asymptotic_reference,
    gamma,
    gamma_l,
    make_budget,
    rho,
    stage_grid,
    gamma_curve,
)
from ..errors import ConfigurationError, NotReadyError, PreconditionError
from ..harness import ExperimentConfig, run_experiment
from ..linear import LinearState, check_stop_p1_linear, check_stop_p2_linear
from ..stats import ContextSpace
from ..unstructured import UnstructuredState, check_stop_p1, check_stop_p2
from .schemas import (
    BoundaryCurve,
    BoundaryCurveRequest,
    BoundaryPoint,
    ContextReport,
    DecisionOut,
    ExperimentOut,
    ExperimentRequest,
    ObservationBatch,
    ReplicationOut,
    SessionCreate,
    SessionInfo,
    StageInfo,
)


def _clean(value) -> float | None:
    """Strict-JSON float: non-finite and missing values become null."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


class _Session:
    """One live stopping problem: space, estimator state, budget, lock."""

    def __init__(self, sid: str, payload: SessionCreate) -> None:
        space_kwargs = payload.space.model_dump()
        if space_kwargs.get("weights") is None:
            m = len(space_kwargs["contexts"])
            space_kwargs["weights"] = [1.0 / m] * m
        space = ContextSpace(
            context_ids=space_kwargs["contexts"],
            action_ids=space_kwargs["actions"],
            weights=space_kwargs["weights"],
            features=space_kwargs.get("features"),
            feasible=space_kwargs.get("feasible"),
        )
        if payload.setting == "linear" and space.features is None:
            raise ConfigurationError("linear sessions need context features")
        self.sid = sid
        self.space = space
        self.setting = payload.setting
        self.criterion = payload.criterion
        self.alpha = payload.alpha
        self.delta = payload.delta
        self.budget = make_budget(space, payload.alpha, payload.criterion)
        self.state = (
            LinearState(space) if payload.setting == "linear" else UnstructuredState(space)
        )
        self.lock = threading.Lock()

    def info(self) -> SessionInfo:
        return SessionInfo(
            session_id=self.sid,
            setting=self.setting,
            criterion=self.criterion,
            alpha=self.alpha,
            delta=self.delta,
            contexts=self.space.m,
            actions=self.space.k,
            stage=self.state.t,
        )

    def observe(self, batch: ObservationBatch) -> int:
        with self.lock:
            for obs in batch.observations:
                x = self.space.context_index(obs.context)
                a = self.space.action_index(obs.action)
                self.state.update(x, a, obs.value)
            return self.state.t

    def decision(self) -> DecisionOut:
        with self.lock:
            if self.setting == "linear":
                check = check_stop_p1_linear if self.criterion == "P1" else check_stop_p2_linear
            else:
                check = check_stop_p1 if self.criterion == "P1" else check_stop_p2
            decision = check(self.state, self.budget, self.delta)
            stage = self.state.t
        contexts = {
            cid: ContextReport(
                best=diag.best,
                ready=diag.ready,
                statistic=_clean(diag.statistic),
                boundary=_clean(diag.boundary),
                slack=_clean(diag.slack),
                regret=_clean(diag.regret),
                challenger=diag.challenger,
            )
            for cid, diag in decision.diagnostics.items()
        }
        return DecisionOut(
            session_id=self.sid,
            stage=stage,
            stop=decision.stop,
            policy=dict(decision.policy),
            weighted_regret=_clean(decision.weighted_regret),
            contexts=contexts,
        )


def create_app() -> FastAPI:
    app = FastAPI(
        title="glrstop",
        description="Sequential stopping certification for contextual selection",
    )
    sessions: dict[str, _Session] = {}
    registry = threading.Lock()

    @app.exception_handler(ConfigurationError)
    async def _bad_config(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(PreconditionError)
    async def _bad_precondition(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NotReadyError)
    async def _not_ready(request, exc):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    def _get(sid: str) -> _Session:
        with registry:
            session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        return session

    @app.get("/health")
    def health():
        with registry:
            count = len(sessions)
        return {"status": "ok", "sessions": count}

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(payload: SessionCreate):
        sid = uuid.uuid4().hex[:12]
        session = _Session(sid, payload)
        with registry:
            sessions[sid] = session
        return session.info()

    @app.get("/sessions", response_model=list[SessionInfo])
    def list_sessions():
        with registry:
            items = list(sessions.values())
        return [s.info() for s in items]

    @app.get("/sessions/{sid}", response_model=SessionInfo)
    def session_info(sid: str):
        return _get(sid).info()

    @app.post("/sessions/{sid}/observations", response_model=StageInfo)
    def add_observations(sid: str, batch: ObservationBatch):
        session = _get(sid)
        stage = session.observe(batch)
        return StageInfo(session_id=sid, stage=stage)

    @app.get("/sessions/{sid}/decision", response_model=DecisionOut)
    def get_decision(sid: str):
        return _get(sid).decision()

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str):
        with registry:
            if sessions.pop(sid, None) is None:
                raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")

    @app.get("/boundary")
    def boundary_point(
        t: int = Query(ge=1),
        alpha: float = Query(gt=0.0, lt=1.0),
        lam: float | None = Query(default=None, gt=0.0),
        d: int | None = Query(default=None, ge=1),
    ):
        """One threshold evaluation; pass lam (directional information) and d
        for the regression form."""
        if (lam is None) != (d is None):
            raise ConfigurationError("lam and d must be supplied together")
        if lam is not None:
            return {
                "t": t,
                "alpha": alpha,
                "lam": lam,
                "d": d,
                "gamma": _clean(gamma_l(t, lam, alpha, d)),
                "reference": asymptotic_reference(lam, alpha),
            }
        return {
            "t": t,
            "alpha": alpha,
            "rho": rho(t, alpha),
            "gamma": _clean(gamma(t, alpha)),
            "reference": asymptotic_reference(t, alpha),
        }

    @app.post("/boundary/curve", response_model=BoundaryCurve)
    def boundary_curve(payload: BoundaryCurveRequest):
        grid = stage_grid(t_max=int(payload.t_max), points=payload.points)
        points = []
        for alpha in payload.alphas:
            if not 0.0 < alpha < 1.0:
                raise ConfigurationError("alpha must lie in (0, 1)")
            values = gamma_curve(alpha, grid)
            points.extend(
                BoundaryPoint(
                    t=int(t),
                    alpha=alpha,
                    gamma=_clean(g),
                    reference=asymptotic_reference(float(t), alpha),
                )
                for t, g in zip(grid, values)
            )
        return BoundaryCurve(points=points)

    @app.post("/experiments", response_model=ExperimentOut)
    def run_batch(payload: ExperimentRequest):
        """Synchronous Monte Carlo run; long configs block until finished."""
        config = ExperimentConfig.from_dict(payload.config)
        report = run_experiment(config, workers=payload.workers)
        results = None
        if payload.include_replications:
            results = [
                ReplicationOut(
                    rep=r.rep_index,
                    stop_time=r.stop_time,
                    censored=r.censored,
                    p1_indicator=r.p1_indicator,
                    p2_indicator=r.p2_indicator,
                    policy=dict(r.policy),
                )
                for r in report.results
            ]
        return ExperimentOut(
            replications=report.replications,
            avg_ssize=report.avg_ssize,
            std_ssize=_clean(report.std_ssize),
            empirical_p1=report.empirical_p1,
            empirical_p2=report.empirical_p2,
            censor_count=report.censor_count,
            wall_time_s=report.wall_time_s,
            config=config.to_dict(),
            results=results,
        )

    return app
