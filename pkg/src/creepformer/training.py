"""Training loop: decoupled-weight-decay Adam, plateau LR decay,
early stopping on validation MAPE, gradient clipping, best-checkpoint
retention, and the ablation harness.

Each epoch evaluates validation metrics once, then updates the scheduler
(on val loss) and the early stopper (on val MAPE), in that order.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import NormStats, TrainingSample
from .inference import evaluate_teacher_forced
from .model import AblationSpec, BatchInput, TataConfig, TataModel, count_params
from .tensor import Tensor

log = logging.getLogger(__name__)

IMPROVEMENT_TOL = 1e-12  # "no improvement" = no drop below best - this


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite."""


@dataclass
class TrainConfig:
    lr: float = 0.00019
    weight_decay: float = 5.55e-6
    batch_size: int = 128
    max_epochs: int = 40
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    early_stop_patience: int = 8
    clip_norm: float = 1.0
    seed: int = 0
    dtype: str = "float32"          # training profile; verification runs use float64
    length_bucketing: bool = True   # seeded length-sorted batch composition

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error, differentiable w.r.t. pred."""
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.data.size == 0:
        raise ValueError("mse_loss over zero elements")
    if pred.data.shape != tgt.shape:
        raise T.ShapeError(f"mse_loss shapes differ: {pred.data.shape} vs {tgt.shape}")
    diff = pred - Tensor(tgt.astype(pred.data.dtype))
    return T.tensor_mean(diff * diff)


class AdamW:
    """Bias-corrected adaptive steps with decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * update.astype(p.data.dtype)
            if self.weight_decay:
                p.data -= (self.lr * self.weight_decay) * p.data


class PlateauScheduler:
    """Scale lr by `factor` after `patience` epochs without val-loss improvement.

    The first observation sets the baseline and counts as non-improving,
    so a flat run of exactly `patience` epochs triggers one reduction.
    The stale counter resets on improvement and on reduction.
    """

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 5):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best: float | None = None
        self.stale = 0

    def update(self, val_loss: float) -> float:
        if self.best is not None and val_loss < self.best - IMPROVEMENT_TOL:
            self.best = val_loss
            self.stale = 0
            return self.lr
        if self.best is None:
            self.best = val_loss
        self.stale += 1
        if self.stale >= self.patience:
            self.lr *= self.factor
            self.stale = 0
        return self.lr


class EarlyStopper:
    """True after `patience` consecutive epochs without val-MAPE improvement.

    Same baseline convention as the scheduler: a flat run of exactly
    `patience` epochs stops.
    """

    def __init__(self, patience: int = 8):
        self.patience = patience
        self.best: float | None = None
        self.stale = 0

    def update(self, val_mape: float) -> bool:
        if self.best is not None and val_mape < self.best - IMPROVEMENT_TOL:
            self.best = val_mape
            self.stale = 0
            return False
        if self.best is None:
            self.best = val_mape
        self.stale += 1
        return self.stale >= self.patience


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Global-norm clipping in place; returns the pre-clip norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_mape: float
    lr: float


@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool = False
    diverged: bool = False


def _epoch_batches(samples, batch_size: int, rng: np.random.Generator,
                   bucketing: bool) -> list[list[TrainingSample]]:
    """Seeded shuffle into mini-batches; optional length-sorted buckets
    cut padding waste on CPU while staying fully seed-deterministic."""
    order = rng.permutation(len(samples))
    if bucketing:
        bucket = batch_size * 8
        chunks = [order[i:i + bucket] for i in range(0, len(order), bucket)]
        order = np.concatenate([
            chunk[np.argsort([len(samples[i].creep_prefix) for i in chunk], kind="stable")]
            for chunk in chunks
        ])
    batches = [
        [samples[i] for i in order[start:start + batch_size]]
        for start in range(0, len(order), batch_size)
    ]
    if bucketing:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _val_loss(model: TataModel, samples, batch_size: int) -> float:
    total, count = 0.0, 0
    order = sorted(range(len(samples)), key=lambda i: len(samples[i].creep_prefix))
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start:start + batch_size]]
        batch = BatchInput.from_samples(chunk, dtype=model.dtype)
        pred = model.predict(batch)[:, 0]
        tgt = np.array([s.target for s in chunk])
        total += float(((pred - tgt) ** 2).sum())
        count += len(chunk)
    return total / count


def train(model: TataModel, train_samples: list[TrainingSample],
          val_samples: list[TrainingSample], stats: NormStats,
          config: TrainConfig) -> TrainResult:
    """Minimize MSE over shuffled mini-batches, retaining the best-val weights.

    The metrics log records, per epoch, the training loss, validation
    loss, validation MAPE (teacher-forced, microstrain) and the learning
    rate in effect during that epoch; (seed, config, data) determine it
    fully. A non-finite loss aborts, keeping the best state seen.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and val splits must be non-empty")
    rng = np.random.default_rng(config.seed)
    optimizer = AdamW(model.params, config.lr, config.weight_decay)
    scheduler = PlateauScheduler(config.lr, config.plateau_factor, config.plateau_patience)
    stopper = EarlyStopper(config.early_stop_patience)
    metrics: list[EpochMetrics] = []
    best_state = model.state_dict()
    best_val, best_epoch = np.inf, 0
    stopped_early = diverged = False

    for epoch in range(1, config.max_epochs + 1):
        lr_in_effect = scheduler.lr
        optimizer.lr = lr_in_effect
        epoch_sq, seen = 0.0, 0
        try:
            for chunk in _epoch_batches(train_samples, config.batch_size, rng,
                                        config.length_bucketing):
                batch = BatchInput.from_samples(chunk, dtype=model.dtype)
                pred = model.forward(batch, training=True)
                targets = np.array([[s.target] for s in chunk])
                loss = mse_loss(pred, targets)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(f"training loss became {value} at epoch {epoch}")
                model.zero_grad()
                loss.backward()
                clip_gradients(model.params, config.clip_norm)
                optimizer.step()
                epoch_sq += value * len(chunk)
                seen += len(chunk)
        except TrainingDiverged as err:
            log.error("aborting: %s", err)
            diverged = True
            break
        train_loss = epoch_sq / seen
        val_loss = _val_loss(model, val_samples, config.batch_size)
        val_eval = evaluate_teacher_forced(model, val_samples, stats, config.batch_size)
        metrics.append(EpochMetrics(epoch, train_loss, val_loss, val_eval.mape, lr_in_effect))
        if val_loss < best_val - IMPROVEMENT_TOL:
            best_val, best_epoch = val_loss, epoch
            best_state = model.state_dict()
        scheduler.update(val_loss)
        if stopper.update(val_eval.mape):
            stopped_early = True
            break

    if not np.isfinite(best_val) and metrics:
        best_val = metrics[-1].val_loss
    return TrainResult(metrics, best_state, best_epoch, float(best_val),
                       stopped_early, diverged)


def write_metrics_csv(path, metrics: list[EpochMetrics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_mape", "lr"])
        for row in metrics:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss),
                             repr(row.val_mape), repr(row.lr)])


ABLATION_VARIANTS: tuple[tuple[str, AblationSpec], ...] = (
    ("w/o Mean pooling", AblationSpec(mean_pool=False)),
    ("w/o Attention pooling", AblationSpec(attn_pool=False)),
    ("w/o Last Token pooling", AblationSpec(last_pool=False)),
    ("w/o Feature attention", AblationSpec(feature_attention=False)),
    ("w/o Batch attention", AblationSpec(batch_attention=False)),
    ("Proposed Model", AblationSpec()),
)


@dataclass
class AblationRow:
    variant: str
    val_mape: float
    n_params: int
    best_epoch: int


def run_ablation_suite(train_samples, val_samples, stats: NormStats,
                       tata_config: TataConfig, train_config: TrainConfig) -> list[AblationRow]:
    """Train every structural variant identically and report val MAPE.

    Removals are structural: a disabled pooling path shrinks the hybrid
    fusion input, a disabled feature/batch path shrinks the integration
    input, so each ablated variant has strictly fewer parameters.
    """
    rows = []
    dtype = np.float32 if train_config.dtype == "float32" else np.float64
    for name, ablation in ABLATION_VARIANTS:
        model = TataModel(tata_config, ablation, seed=train_config.seed, dtype=dtype)
        result = train(model, train_samples, val_samples, stats, train_config)
        model.load_state_dict(result.best_state)
        val_eval = evaluate_teacher_forced(model, val_samples, stats, train_config.batch_size)
        rows.append(AblationRow(name, val_eval.mape, count_params(tata_config, ablation),
                                result.best_epoch))
        log.info("ablation %-24s val MAPE %.3f%% (%d params)",
                 name, val_eval.mape, rows[-1].n_params)
    return rows


def write_ablation_csv(path, rows: list[AblationRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "val_mape", "n_params", "best_epoch"])
        for row in rows:
            writer.writerow([row.variant, repr(row.val_mape), row.n_params, row.best_epoch])
