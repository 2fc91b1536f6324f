"""Data pipeline: ingest, standardize, normalize, window, split, synthesize.

Raw creep curves arrive on irregular time grids; each is fitted with the
bounded-growth model and resampled to a daily 160-point grid. Windows are
autoregressive prefixes (days 1..t -> target at day t+1), normalization
scales creep by alpha, log-compresses time, and z-scores the feature
triple (density, fc, E) with statistics from the training split only.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .curvefit import CreepCurveParams, creep_model_eval, fit_creep_curve

log = logging.getLogger(__name__)

GRID_DAYS = 160
CSV_HEADER = ["specimen_id", "density_kg_m3", "fc_ksc", "E_ksc", "time_day", "creep_microstrain"]
FEATURE_STD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed input data (CSV schema, ordering, ranges)."""


@dataclass
class SpecimenRecord:
    """One specimen: material features plus a measured creep series."""

    id: str
    density: float  # kg/m3
    fc: float       # ksc
    E: float        # ksc
    times: np.ndarray   # days, strictly increasing
    creeps: np.ndarray  # microstrain

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.creeps = np.asarray(self.creeps, dtype=np.float64)
        if self.times.shape != self.creeps.shape or self.times.ndim != 1:
            raise DataError(f"{self.id}: times/creeps must be equal-length 1-d series")
        if np.any(np.diff(self.times) <= 0):
            raise DataError(f"{self.id}: times must be strictly increasing")
        if np.any(self.times < 0):
            raise DataError(f"{self.id}: negative time")
        if not (np.all(np.isfinite(self.creeps)) and np.all(np.isfinite(self.times))):
            raise DataError(f"{self.id}: non-finite measurement")
        for name, value in (("density", self.density), ("fc", self.fc), ("E", self.E)):
            if not (np.isfinite(value) and value > 0):
                raise DataError(f"{self.id}: {name} must be positive, got {value}")

    @property
    def features(self) -> np.ndarray:
        return np.array([self.density, self.fc, self.E], dtype=np.float64)


@dataclass
class StandardizedSpecimen:
    """A specimen resampled onto the daily grid, with its fitted curve."""

    id: str
    features: np.ndarray        # (density, fc, E)
    daily_creep: np.ndarray     # microstrain at days 1..GRID_DAYS
    params: CreepCurveParams


@dataclass
class TrainingSample:
    """One autoregressive window: prefix of a series plus the next value.

    Values are raw (microstrain / days) until `normalize` is applied,
    after which creep is scaled by 1/alpha, times become ln(1+day) and
    features are z-scored; `normalized` records which state this is.
    """

    specimen_id: str
    creep_prefix: np.ndarray
    time_prefix: np.ndarray
    features: np.ndarray
    target: float
    normalized: bool = False


@dataclass
class NormStats:
    """Normalization constants; feature moments come from the training split."""

    feat_mean: np.ndarray
    feat_std: np.ndarray
    alpha: float = 1000.0

    @classmethod
    def from_samples(cls, samples: list[TrainingSample], alpha: float = 1000.0) -> "NormStats":
        if not samples:
            raise DataError("cannot compute normalization stats from zero samples")
        feats = np.stack([s.features for s in samples])
        std = feats.std(axis=0)
        return cls(feats.mean(axis=0), np.maximum(std, FEATURE_STD_FLOOR), alpha)

    def normalize_creep(self, x):
        return np.asarray(x, dtype=np.float64) / self.alpha

    def denormalize_creep(self, x):
        return np.asarray(x, dtype=np.float64) * self.alpha

    def normalize_time(self, t):
        return np.log1p(np.asarray(t, dtype=np.float64))

    def normalize_features(self, f):
        return (np.asarray(f, dtype=np.float64) - self.feat_mean) / self.feat_std

    def denormalize_features(self, f):
        return np.asarray(f, dtype=np.float64) * self.feat_std + self.feat_mean

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "feat_mean": self.feat_mean.tolist(),
            "feat_std": self.feat_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["feat_mean"], dtype=np.float64),
                   np.asarray(d["feat_std"], dtype=np.float64), float(d["alpha"]))


def resample_daily(params: CreepCurveParams, days: int = GRID_DAYS) -> np.ndarray:
    """Evaluate the fitted curve at days 1..days."""
    return creep_model_eval(params, np.arange(1, days + 1, dtype=np.float64))


def standardize(records: list[SpecimenRecord], days: int = GRID_DAYS,
                seed: int = 0) -> list[StandardizedSpecimen]:
    """Fit every specimen's curve and resample it onto the daily grid."""
    out = []
    for rec in records:
        params = fit_creep_curve(rec.times, rec.creeps, seed=seed)
        if not params.converged:
            log.warning("fit for specimen %s did not converge (r2=%.4f)", rec.id, params.r2)
        out.append(StandardizedSpecimen(rec.id, rec.features, resample_daily(params, days), params))
    return out


def build_windows(specimens: list[StandardizedSpecimen]) -> list[TrainingSample]:
    """One sample per (specimen, prefix length t), t = 1..grid length.

    The target for prefix t is the day t+1 value; the final window's
    target (day grid+1) comes from the fitted curve's extrapolation.
    """
    samples = []
    for spec in specimens:
        n = len(spec.daily_creep)
        day = np.arange(1, n + 1, dtype=np.float64)
        beyond = creep_model_eval(spec.params, float(n + 1))
        for t in range(1, n + 1):
            target = spec.daily_creep[t] if t < n else beyond
            samples.append(TrainingSample(
                specimen_id=spec.id,
                creep_prefix=spec.daily_creep[:t].copy(),
                time_prefix=day[:t].copy(),
                features=spec.features.copy(),
                target=float(target),
            ))
    return samples


def normalize(samples: list[TrainingSample], stats: NormStats) -> list[TrainingSample]:
    """Return normalized copies of raw samples (creep/alpha, ln(1+day), z-scores)."""
    out = []
    for s in samples:
        if s.normalized:
            raise DataError(f"sample for {s.specimen_id} is already normalized")
        out.append(replace(
            s,
            creep_prefix=stats.normalize_creep(s.creep_prefix),
            time_prefix=stats.normalize_time(s.time_prefix),
            features=stats.normalize_features(s.features),
            target=float(stats.normalize_creep(s.target)),
            normalized=True,
        ))
    return out


@dataclass
class DataSplit:
    train: list
    val: list
    test: list

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def split(samples: list, mode: str = "per_window",
          fractions: tuple[float, float, float] = (0.90, 0.05, 0.05),
          seed: int = 0) -> DataSplit:
    """Deterministic three-way split.

    `per_window` shuffles windows individually (reproduces the published
    counts); `per_specimen` keeps each specimen's windows inside a single
    split, which is the leakage-free choice. Sizes use floor(fraction*n)
    for train and val, remainder to test.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    if mode == "per_window":
        order = rng.permutation(len(samples))
        n_train = int(fractions[0] * len(samples))
        n_val = int(fractions[1] * len(samples))
        picks = [order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]]
        splits = [[samples[i] for i in p] for p in picks]
    elif mode == "per_specimen":
        ids = list(dict.fromkeys(s.specimen_id for s in samples))
        order = rng.permutation(len(ids))
        n_train = int(fractions[0] * len(ids))
        n_val = int(fractions[1] * len(ids))
        groups = [set(), set(), set()]
        for rank, idx in enumerate(order):
            bucket = 0 if rank < n_train else (1 if rank < n_train + n_val else 2)
            groups[bucket].add(ids[idx])
        splits = [[s for s in samples if s.specimen_id in g] for g in groups]
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    if any(len(part) == 0 for part in splits):
        raise ValueError(
            f"too few samples ({len(samples)}) for non-empty {fractions} splits in {mode} mode"
        )
    return DataSplit(*splits)


def synth_generate(n_specimens: int, seed: int = 0) -> list[SpecimenRecord]:
    """Synthesize specimens with plausible correlated properties.

    Strength fc drives modulus (E ~ 15100*sqrt(fc), as for normal-weight
    concrete in ksc units) and density; creep capacity falls with both
    stiffness and strength, so the ultimate value `a` is inversely tied
    to fc and E. Measurement grids mimic lab practice: daily readings
    for a week, then weekly with jitter. Deterministic per seed.
    """
    if n_specimens < 1:
        raise ValueError("n_specimens must be >= 1")
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_specimens):
        fc = rng.uniform(240.0, 700.0)
        e_mod = 15100.0 * np.sqrt(fc) * (1.0 + rng.normal(0.0, 0.05))
        density = 2240.0 + 0.45 * (fc - 240.0) + rng.normal(0.0, 35.0)
        # Ultimate creep shrinks with stiffness/strength; lognormal scatter.
        a = 900.0 * (470.0 / fc) ** 0.9 * (3.3e5 / e_mod) ** 0.7 \
            * np.exp(rng.normal(0.0, 0.35))
        a = float(np.clip(a, 150.0, 2900.0))
        b = float(np.clip(np.exp(rng.normal(np.log(0.125), 0.30)), 0.03, 0.6))
        c = float(np.clip(rng.normal(0.85, 0.10), 0.55, 1.25))

        horizon = int(rng.integers(119, 201))
        weekly = np.arange(14, horizon + 1, 7, dtype=np.float64)
        weekly = weekly + rng.uniform(-1.0, 1.0, size=weekly.shape)
        times = np.concatenate([np.arange(1.0, 8.0), np.sort(weekly)])
        times = times[times >= 1.0]
        clean = creep_model_eval((a, b, c), times)
        creeps = clean * (1.0 + rng.normal(0.0, 0.02, size=times.shape))
        records.append(SpecimenRecord(
            id=f"synth-{seed}-{i:03d}",
            density=float(density), fc=float(fc), E=float(e_mod),
            times=times, creeps=np.maximum(creeps, 0.0),
        ))
    return records


def ingest_csv(path) -> list[SpecimenRecord]:
    """Read specimens from measurement CSV; malformed rows name their line."""
    rows_by_id: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            log.warning("%s: empty file, no specimens ingested", path)
            return []
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(
                f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{line_no}: expected {len(CSV_HEADER)} columns")
            sid = row[0].strip()
            try:
                density, fc, e_mod, t, creep = (float(v) for v in row[1:])
            except ValueError as err:
                raise DataError(f"{path}:{line_no}: non-numeric value") from err
            entry = rows_by_id.setdefault(
                sid, {"density": density, "fc": fc, "E": e_mod, "times": [], "creeps": [],
                      "first_line": line_no})
            if (entry["density"], entry["fc"], entry["E"]) != (density, fc, e_mod):
                raise DataError(
                    f"{path}:{line_no}: features of specimen {sid!r} differ from line "
                    f"{entry['first_line']}"
                )
            if entry["times"] and t <= entry["times"][-1]:
                raise DataError(
                    f"{path}:{line_no}: time {t} not increasing for specimen {sid!r}"
                )
            if density <= 0 or fc <= 0 or e_mod <= 0:
                raise DataError(f"{path}:{line_no}: non-positive feature for {sid!r}")
            entry["times"].append(t)
            entry["creeps"].append(creep)
    records = []
    for sid, entry in rows_by_id.items():
        records.append(SpecimenRecord(
            id=sid, density=entry["density"], fc=entry["fc"], E=entry["E"],
            times=np.array(entry["times"]), creeps=np.array(entry["creeps"]),
        ))
    if not records:
        log.warning("%s: no data rows found", path)
    return records


def export_records_csv(records: list[SpecimenRecord], path) -> None:
    """Write specimens in the measurement CSV schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            for t, x in zip(rec.times, rec.creeps):
                writer.writerow([rec.id, repr(rec.density), repr(rec.fc), repr(rec.E),
                                 repr(float(t)), repr(float(x))])


def export_standardized_csv(specimens: list[StandardizedSpecimen], path) -> None:
    """Write the daily-grid dataset in the same schema (days 1..160)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for spec in specimens:
            density, fc, e_mod = spec.features
            for day, value in enumerate(spec.daily_creep, start=1):
                writer.writerow([spec.id, repr(float(density)), repr(float(fc)),
                                 repr(float(e_mod)), repr(float(day)), repr(float(value))])
