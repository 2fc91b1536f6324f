#!/usr/bin/env python3
"""End-to-end experiment: synthesize specimens, standardize, train,
evaluate, roll out a trajectory, and export attribution reports.

Defaults are sized for a laptop-scale smoke run (a few minutes on one
core); pass --specimens 66 --epochs 18 for the full desk-scale setup.
Artifacts land under --out-dir (default runs/pipeline).
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from creepformer import data as dp
from creepformer.checkpoint import save_checkpoint
from creepformer.explain import mean_abs_shap, select_background, write_mean_abs_csv
from creepformer.inference import (
    RolloutRequest,
    evaluate_teacher_forced,
    rollout,
    write_residuals_csv,
    write_trajectory_csv,
)
from creepformer.model import TataConfig, TataModel, count_params
from creepformer.training import TrainConfig, train, write_metrics_csv


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--specimens", type=int, default=16)
    parser.add_argument("--grid-days", type=int, default=64)
    parser.add_argument("--d-model", type=int, default=32)
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--split-mode", default="per_window",
                        choices=["per_window", "per_specimen"])
    parser.add_argument("--out-dir", default="runs/pipeline")
    return parser.parse_args()


def main():
    args = parse_args()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    records = dp.synth_generate(args.specimens, seed=args.seed)
    dp.export_records_csv(records, out_dir / "raw_measurements.csv")
    specimens = dp.standardize(records, days=args.grid_days)
    dp.export_standardized_csv(specimens, out_dir / "standardized.csv")
    r2 = np.array([s.params.r2 for s in specimens])
    print(f"standardized {len(specimens)} specimens "
          f"(fit r2 mean {r2.mean():.4f}, min {r2.min():.4f})")

    samples = dp.build_windows(specimens)
    parts = dp.split(samples, mode=args.split_mode, seed=args.seed)
    stats = dp.NormStats.from_samples(parts.train)
    splits = dp.DataSplit(*(dp.normalize(p, stats) for p in parts))
    print(f"{len(samples)} windows -> {len(splits.train)}/{len(splits.val)}/{len(splits.test)}")

    config = TataConfig(d_model=args.d_model, n_layers=args.layers, n_heads=4,
                        dropout=0.05, max_seq_len=args.grid_days)
    train_config = TrainConfig(lr=args.lr, batch_size=128, max_epochs=args.epochs,
                               seed=args.seed, dtype="float32")
    model = TataModel(config, seed=args.seed, dtype=np.float32)
    print(f"training {count_params(config):,} parameters for up to {args.epochs} epochs")
    result = train(model, splits.train, splits.val, stats, train_config)
    model.load_state_dict(result.best_state)
    write_metrics_csv(out_dir / "metrics.csv", result.metrics)

    background = select_background(splits.train, stats, cap=64, seed=args.seed)
    save_checkpoint(out_dir / "model.ckpt", model, stats, background=background,
                    meta={"best_epoch": result.best_epoch})

    evaluation = evaluate_teacher_forced(model, splits.test, stats)
    write_residuals_csv(out_dir / "residuals.csv", evaluation.residuals)
    print(f"test MAPE {evaluation.mape:.2f}%  R2 {evaluation.r2:.4f}")

    median = records[len(records) // 2]
    trajectory = rollout(model, stats, RolloutRequest(
        density=median.density, fc=median.fc, E=median.E,
        initial_creep=0.0, horizon=args.grid_days))
    write_trajectory_csv(out_dir / "trajectory.csv", trajectory)
    print(f"rollout final value {trajectory.creep[-1]:.0f} microstrain")

    rng = np.random.default_rng(args.seed)
    chosen = [splits.test[i] for i in rng.choice(len(splits.test), size=8, replace=False)]
    bars, _ = mean_abs_shap(model, stats, chosen, background)
    write_mean_abs_csv(out_dir / "shap_bars.csv", bars)
    order = sorted(bars, key=lambda r: -r.mean_abs_shap)
    print("attribution ranking: " + " > ".join(f"{r.feature} ({r.mean_abs_shap:.2f})"
                                               for r in order))
    print(f"done in {time.time() - t0:.0f}s; artifacts in {out_dir}/")


if __name__ == "__main__":
    main()
