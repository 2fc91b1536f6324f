"""JSON-over-HTTP prediction service.

Endpoints: POST /predict (rollout from features + initial creep),
POST /explain (Shapley attribution of the next-step prediction),
GET /model (config, parameter count, normalization stats), GET /healthz,
and GET /trajectory.csv (download of the most recent trajectory).
Requests are validated against the schema and rejected with 400 plus
field-level messages; all responses are pure functions of
(checkpoint, request). A static UI directory can be mounted at /.
"""

from __future__ import annotations

import io
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .checkpoint import Checkpoint, load_checkpoint
from .explain import feature_prediction_fn, shapley
from .inference import RolloutRequest, Trajectory, rollout
from .model import count_params

MAX_DAYS = 161


class PredictRequest(BaseModel):
    density_kg_m3: float = Field(gt=0)
    fc_ksc: float = Field(gt=0)
    e_ksc: float = Field(gt=0)
    initial_creep_microstrain: float = Field(default=0.0, ge=0)
    days: int = Field(ge=1, le=MAX_DAYS)


class ExplainRequest(BaseModel):
    density_kg_m3: float = Field(gt=0)
    fc_ksc: float = Field(gt=0)
    e_ksc: float = Field(gt=0)
    initial_creep_microstrain: float = Field(default=0.0, ge=0)
    creep_prefix_microstrain: list[float] | None = None
    time_prefix_day: list[float] | None = None


def _fallback_background(stats, rows: int = 32, seed: int = 0) -> np.ndarray:
    """Deterministic stand-in background when a checkpoint carries none."""
    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, 1.0, size=(rows, len(stats.feat_mean)))
    return np.abs(stats.feat_mean + draws * stats.feat_std) + 1e-9


def create_app(checkpoint_path=None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="creepformer prediction service")
    state = {"ckpt": None, "last_trajectory": None}
    lock = threading.Lock()

    if checkpoint_path is not None:
        state["ckpt"] = load_checkpoint(checkpoint_path)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    class ServiceUnavailable(Exception):
        pass

    @app.exception_handler(ServiceUnavailable)
    async def on_unavailable(request: Request, exc: ServiceUnavailable):
        return JSONResponse(status_code=503, content={"detail": "checkpoint not loaded"})

    def checkpoint() -> Checkpoint:
        ckpt = state["ckpt"]
        if ckpt is None:
            raise ServiceUnavailable()
        return ckpt

    @app.get("/healthz")
    def healthz():
        checkpoint()
        return {"status": "ok"}

    @app.get("/model")
    def model_info():
        ckpt = checkpoint()
        return {
            "config": ckpt.model.config.to_dict(),
            "ablation": ckpt.model.ablation.to_dict(),
            "param_count": count_params(ckpt.model.config, ckpt.model.ablation),
            "norm_stats": ckpt.stats.to_dict(),
            "meta": ckpt.meta,
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        ckpt = checkpoint()
        trajectory = rollout(ckpt.model, ckpt.stats, RolloutRequest(
            density=req.density_kg_m3, fc=req.fc_ksc, E=req.e_ksc,
            initial_creep=req.initial_creep_microstrain, horizon=req.days,
        ))
        with lock:
            state["last_trajectory"] = trajectory
        return {
            "days": [int(d) for d in trajectory.days],
            "creep_microstrain": [float(v) for v in trajectory.creep],
            "summary": trajectory.summary(),
        }

    @app.post("/explain")
    def explain(req: ExplainRequest):
        ckpt = checkpoint()
        stats = ckpt.stats
        if (req.creep_prefix_microstrain is None) != (req.time_prefix_day is None):
            return JSONResponse(status_code=400, content={"detail": [
                {"field": "creep_prefix_microstrain",
                 "message": "creep and time prefixes must be given together"}]})
        if req.creep_prefix_microstrain is None:
            creep_prefix = stats.normalize_creep([req.initial_creep_microstrain])
            time_prefix = stats.normalize_time([1.0])
        else:
            if len(req.creep_prefix_microstrain) != len(req.time_prefix_day) \
                    or not req.creep_prefix_microstrain:
                return JSONResponse(status_code=400, content={"detail": [
                    {"field": "creep_prefix_microstrain",
                     "message": "prefixes must be equal-length and non-empty"}]})
            if len(req.creep_prefix_microstrain) > ckpt.model.config.max_seq_len:
                return JSONResponse(status_code=400, content={"detail": [
                    {"field": "creep_prefix_microstrain",
                     "message": f"prefix longer than {ckpt.model.config.max_seq_len}"}]})
            creep_prefix = stats.normalize_creep(req.creep_prefix_microstrain)
            time_prefix = stats.normalize_time(req.time_prefix_day)
        background = ckpt.background
        if background is None:
            background = _fallback_background(stats)
        fn = feature_prediction_fn(ckpt.model, stats, creep_prefix, time_prefix)
        result = shapley(fn, [req.density_kg_m3, req.fc_ksc, req.e_ksc], background)
        return {
            "phi0": result.phi0,
            "phi": {
                "density_kg_m3": float(result.phi[0]),
                "fc_ksc": float(result.phi[1]),
                "e_ksc": float(result.phi[2]),
            },
            "prediction_microstrain": result.fx,
            "context_policy": result.context_policy,
        }

    @app.get("/trajectory.csv")
    def trajectory_csv():
        checkpoint()
        with lock:
            trajectory: Trajectory | None = state["last_trajectory"]
        if trajectory is None:
            return JSONResponse(status_code=404,
                                content={"detail": "no trajectory computed yet"})
        buf = io.StringIO()
        buf.write("day,creep_microstrain\r\n")
        for day, value in zip(trajectory.days, trajectory.creep):
            buf.write(f"{int(day)},{float(value)!r}\r\n")
        return Response(content=buf.getvalue(), media_type="text/csv", headers={
            "Content-Disposition": 'attachment; filename="trajectory.csv"'})

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
