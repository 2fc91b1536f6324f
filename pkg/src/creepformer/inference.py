"""Autoregressive rollout and evaluation metrics.

Rollouts run the model in single-sample eval mode: the day-1 history is
seeded with the requested initial creep, and every prediction is appended
to the history to forecast the next day. Teacher-forced evaluation feeds
ground-truth prefixes instead and aggregates MAPE / R^2 in microstrain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import NormStats, TrainingSample
from .model import BatchInput, TataModel

MAPE_FLOOR = 1.0  # microstrain; keeps near-zero actuals from blowing up the ratio


@dataclass
class RolloutRequest:
    """What-if query: material features, starting creep, forecast horizon."""

    density: float
    fc: float
    E: float
    initial_creep: float = 0.0
    horizon: int = 160

    def __post_init__(self):
        for name, value in (("density", self.density), ("fc", self.fc), ("E", self.E)):
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.initial_creep < 0:
            raise ValueError("initial_creep must be >= 0")


@dataclass
class Trajectory:
    days: np.ndarray
    creep: np.ndarray  # microstrain

    def summary(self) -> dict:
        return {
            "final_value": float(self.creep[-1]),
            "max": float(self.creep.max()),
            "mean": float(self.creep.mean()),
        }


def rollout(model: TataModel, stats: NormStats, request: RolloutRequest) -> Trajectory:
    """Iteratively forecast `horizon` days of creep, feeding predictions back."""
    max_horizon = model.config.max_seq_len + 1
    if not 1 <= request.horizon <= max_horizon:
        raise ValueError(f"horizon must lie in [1, {max_horizon}], got {request.horizon}")
    feats = stats.normalize_features([request.density, request.fc, request.E])
    creep_hist = [float(stats.normalize_creep(request.initial_creep))]
    for day in range(2, request.horizon + 1):
        t = day - 1  # prefix covers days 1..day-1
        batch = BatchInput(
            creep_hist=np.array([creep_hist], dtype=np.float64),
            time_hist=stats.normalize_time(np.arange(1, t + 1, dtype=np.float64))[None, :],
            features=feats[None, :],
            pad_mask=np.zeros((1, t)),
            lengths=np.array([t]),
        )
        pred = float(model.predict(batch)[0, 0])
        creep_hist.append(pred)
    creep = stats.denormalize_creep(np.array(creep_hist))
    return Trajectory(np.arange(1, request.horizon + 1), creep)


def mape(pred, actual, floor: float = MAPE_FLOOR) -> float:
    """Mean absolute percentage error with the denominator floored at `floor`."""
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.size == 0:
        raise ValueError(f"pred {p.shape} and actual {a.shape} must match and be non-empty")
    return float(100.0 * np.mean(np.abs(p - a) / np.maximum(np.abs(a), floor)))


def r_squared(pred, actual) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.size == 0:
        raise ValueError(f"pred {p.shape} and actual {a.shape} must match and be non-empty")
    ss_tot = float(((a - a.mean()) ** 2).sum())
    if ss_tot <= 0.0:
        raise ValueError("r_squared undefined: actual values have zero variance")
    ss_res = float(((p - a) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass
class ResidualRow:
    specimen_id: str
    t: int
    actual: float     # microstrain
    predicted: float  # microstrain


@dataclass
class EvalResult:
    mape: float
    r2: float
    residuals: list[ResidualRow] = field(default_factory=list)


def evaluate_teacher_forced(model: TataModel, samples: list[TrainingSample],
                            stats: NormStats, batch_size: int = 256) -> EvalResult:
    """Next-step metrics with ground-truth prefixes, in microstrain.

    Samples are batched in length-sorted order (stable, so deterministic
    for a fixed checkpoint); the batch-attention path sees these fixed
    groups, which is part of the documented evaluation convention.
    """
    if not samples:
        raise ValueError("evaluate_teacher_forced needs a non-empty split")
    order = sorted(range(len(samples)), key=lambda i: len(samples[i].creep_prefix))
    preds = np.empty(len(samples))
    actuals = np.empty(len(samples))
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        batch = BatchInput.from_samples(chunk, dtype=model.dtype)
        out = model.predict(batch)[:, 0]
        for j, i in enumerate(order[start : start + batch_size]):
            preds[i] = out[j]
            actuals[i] = samples[i].target
    preds_mu = stats.denormalize_creep(preds)
    actual_mu = stats.denormalize_creep(actuals)
    residuals = [
        ResidualRow(s.specimen_id, len(s.creep_prefix), float(actual_mu[i]), float(preds_mu[i]))
        for i, s in enumerate(samples)
    ]
    return EvalResult(mape(preds_mu, actual_mu), r_squared(preds_mu, actual_mu), residuals)


def write_trajectory_csv(path, trajectory: Trajectory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "creep_microstrain"])
        for day, value in zip(trajectory.days, trajectory.creep):
            writer.writerow([int(day), repr(float(value))])


def write_residuals_csv(path, residuals: list[ResidualRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["specimen_id", "t", "actual", "predicted"])
        for row in residuals:
            writer.writerow([row.specimen_id, row.t, repr(row.actual), repr(row.predicted)])
