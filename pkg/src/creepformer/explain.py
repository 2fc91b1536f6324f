"""Exact Shapley attribution over the three material features.

With three players the 2^3 coalitions are enumerated outright, so the
attributions are exact: no sampling variance, and the efficiency
identity phi0 + sum(phi) == f(x) holds to numerical precision. Absent
features are imputed marginally from background rows; each explained
sample keeps its own creep/time prefix fixed while features vary
(context policy "own-prefix").
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import NormStats, TrainingSample
from .model import FEATURE_NAMES, BatchInput, TataModel

CONTEXT_POLICY = "own-prefix"


@dataclass
class ShapResult:
    """Base value, per-feature attributions in (density, fc, E) order."""

    phi0: float
    phi: np.ndarray
    fx: float
    context_policy: str = CONTEXT_POLICY

    def efficiency_gap(self) -> float:
        return abs(self.phi0 + float(self.phi.sum()) - self.fx)


def shapley(model_fn, x, background) -> ShapResult:
    """Exact Shapley values of model_fn at x against a background matrix.

    model_fn maps one feature vector to a scalar; val(S) is the mean of
    model_fn over background rows with coordinates in S replaced by x.
    """
    x = np.asarray(x, dtype=np.float64)
    bg = np.atleast_2d(np.asarray(background, dtype=np.float64))
    n = x.shape[0]
    if bg.shape[1] != n:
        raise ValueError(f"background width {bg.shape[1]} != feature count {n}")
    if bg.shape[0] == 0:
        raise ValueError("background must be non-empty")

    values: dict[frozenset, float] = {}
    for size in range(n + 1):
        for coalition in itertools.combinations(range(n), size):
            total = 0.0
            for row in bg:
                z = row.copy()
                z[list(coalition)] = x[list(coalition)]
                out = float(model_fn(z))
                if not np.isfinite(out):
                    raise ValueError(f"model output is not finite for coalition {coalition}")
                total += out
            values[frozenset(coalition)] = total / bg.shape[0]

    phi = np.zeros(n)
    fact = math.factorial
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for size in range(n):
            weight = fact(size) * fact(n - size - 1) / fact(n)
            for coalition in itertools.combinations(others, size):
                s = frozenset(coalition)
                phi[i] += weight * (values[s | {i}] - values[s])
    return ShapResult(values[frozenset()], phi, values[frozenset(range(n))])


def feature_prediction_fn(model: TataModel, stats: NormStats,
                          creep_prefix: np.ndarray, time_prefix: np.ndarray):
    """Closure mapping raw (density, fc, E) to the next-step prediction in
    microstrain, holding the given normalized prefix fixed (B=1 eval mode)."""
    creep = np.asarray(creep_prefix, dtype=np.float64)[None, :]
    time = np.asarray(time_prefix, dtype=np.float64)[None, :]
    t = creep.shape[1]

    def predict(raw_features) -> float:
        batch = BatchInput(
            creep_hist=creep,
            time_hist=time,
            features=stats.normalize_features(raw_features)[None, :],
            pad_mask=np.zeros((1, t)),
            lengths=np.array([t]),
        )
        return float(stats.denormalize_creep(model.predict(batch)[0, 0]))

    return predict


def explain_sample(model: TataModel, stats: NormStats, sample: TrainingSample,
                   background: np.ndarray) -> ShapResult:
    """Shapley attribution for one normalized sample's own prefix."""
    raw_features = stats.denormalize_features(sample.features)
    fn = feature_prediction_fn(model, stats, sample.creep_prefix, sample.time_prefix)
    return shapley(fn, raw_features, background)


def select_background(samples: list[TrainingSample], stats: NormStats,
                      cap: int = 256, seed: int = 0) -> np.ndarray:
    """Raw feature matrix from training samples, subsampled to `cap` rows."""
    feats = np.stack([stats.denormalize_features(s.features) for s in samples])
    feats = np.unique(feats, axis=0)
    if len(feats) > cap:
        rng = np.random.default_rng(seed)
        feats = feats[rng.choice(len(feats), size=cap, replace=False)]
    return feats


@dataclass
class MeanAbsRow:
    feature: str
    mean_abs_shap: float
    std: float


def mean_abs_shap(model: TataModel, stats: NormStats, samples: list[TrainingSample],
                  background: np.ndarray) -> tuple[list[MeanAbsRow], list[ShapResult]]:
    """Fig.-style bar data: mean |phi| per feature with dispersion error bars."""
    if not samples:
        raise ValueError("mean_abs_shap needs a non-empty dataset")
    results = [explain_sample(model, stats, s, background) for s in samples]
    mat = np.abs(np.stack([r.phi for r in results]))
    rows = [MeanAbsRow(name, float(mat[:, i].mean()), float(mat[:, i].std()))
            for i, name in enumerate(FEATURE_NAMES)]
    return rows, results


def shap_summary_rows(model: TataModel, stats: NormStats, samples: list[TrainingSample],
                      background: np.ndarray) -> list[dict]:
    """Per-sample (feature, phi, feature value) triples for beeswarm plots."""
    out = []
    for sample in samples:
        result = explain_sample(model, stats, sample, background)
        raw = stats.denormalize_features(sample.features)
        for i, name in enumerate(FEATURE_NAMES):
            out.append({
                "specimen_id": sample.specimen_id,
                "t": len(sample.creep_prefix),
                "feature": name,
                "phi": float(result.phi[i]),
                "feature_value": float(raw[i]),
                "phi0": result.phi0,
                "prediction": result.fx,
                "context_policy": result.context_policy,
            })
    return out


def write_mean_abs_csv(path, rows: list[MeanAbsRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "mean_abs_shap", "std"])
        for row in rows:
            writer.writerow([row.feature, repr(row.mean_abs_shap), repr(row.std)])


def write_summary_csv(path, rows: list[dict]) -> None:
    fields = ["specimen_id", "t", "feature", "phi", "feature_value", "phi0",
              "prediction", "context_policy"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
