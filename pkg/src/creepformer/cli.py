"""Command-line entry points for the full pipeline.

Subcommands: synth, fit, train, evaluate, ablate, rollout, explain,
flops, serve. Every run is deterministic given its seed; artifacts are
CSV files, checkpoints and reports under the chosen output paths. Config
files use the flat key-value format (see configfile), found via --config
or the CREEPFORMER_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as dp
from .accounting import count_flops, flops_shares, format_flops_table
from .checkpoint import load_checkpoint, save_checkpoint
from .configfile import load_configs
from .explain import (
    mean_abs_shap,
    select_background,
    shap_summary_rows,
    write_mean_abs_csv,
    write_summary_csv,
)
from .inference import (
    RolloutRequest,
    evaluate_teacher_forced,
    rollout,
    write_residuals_csv,
    write_trajectory_csv,
)
from .model import TataModel, count_params
from .training import (
    run_ablation_suite,
    train,
    write_ablation_csv,
    write_metrics_csv,
)

log = logging.getLogger(__name__)


def _prepare_dataset(args, tata_config, train_config, stats=None):
    """Shared front half of train/evaluate/ablate: specimens -> normalized splits.

    Stats are computed from the training split unless a checkpoint's stats
    are passed in (evaluation must reuse the stats the model trained with).
    """
    if getattr(args, "data", None):
        records = dp.ingest_csv(args.data)
        if not records:
            raise SystemExit(f"no specimens found in {args.data}")
    else:
        records = dp.synth_generate(args.synth, seed=train_config.seed)
    specimens = dp.standardize(records, days=tata_config.max_seq_len)
    samples = dp.build_windows(specimens)
    splits = dp.split(samples, mode=args.split_mode, seed=train_config.seed)
    if stats is None:
        stats = dp.NormStats.from_samples(splits.train)
    return dp.DataSplit(*(dp.normalize(part, stats) for part in splits)), stats, specimens


def cmd_synth(args) -> int:
    records = dp.synth_generate(args.n, seed=args.seed)
    dp.export_records_csv(records, args.out)
    print(f"wrote {len(records)} specimens to {args.out}")
    return 0


def cmd_fit(args) -> int:
    records = dp.ingest_csv(args.data)
    if not records:
        print(f"no specimens found in {args.data}", file=sys.stderr)
        return 1
    specimens = dp.standardize(records)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("specimen_id,a,b,c,r2,n_evals,converged\r\n")
        for spec in specimens:
            p = spec.params
            fh.write(f"{spec.id},{p.a!r},{p.b!r},{p.c!r},{p.r2!r},{p.n_evals},"
                     f"{str(p.converged).lower()}\r\n")
    r2s = np.array([s.params.r2 for s in specimens])
    print(f"fitted {len(specimens)} specimens: mean r2 {r2s.mean():.4f}, "
          f"min r2 {r2s.min():.4f}")
    if args.standardized_out:
        dp.export_standardized_csv(specimens, args.standardized_out)
        print(f"wrote standardized daily grid to {args.standardized_out}")
    return 0


def cmd_train(args) -> int:
    tata_config, train_config = load_configs(args.config)
    if args.seed is not None:
        train_config.seed = args.seed
    splits, stats, _ = _prepare_dataset(args, tata_config, train_config)
    dtype = np.float32 if train_config.dtype == "float32" else np.float64
    model = TataModel(tata_config, seed=train_config.seed, dtype=dtype)
    print(f"training {count_params(tata_config):,}-parameter model on "
          f"{len(splits.train)} windows ({len(splits.val)} val)")
    result = train(model, splits.train, splits.val, stats, train_config)
    model.load_state_dict(result.best_state)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    background = select_background(splits.train, stats, seed=train_config.seed)
    save_checkpoint(out_dir / "model.ckpt", model, stats, background=background,
                    meta={"best_epoch": result.best_epoch,
                          "best_val_loss": result.best_val_loss,
                          "train_config": train_config.to_dict()})
    write_metrics_csv(out_dir / "metrics.csv", result.metrics)
    test_eval = evaluate_teacher_forced(model, splits.test, stats)
    print(f"best epoch {result.best_epoch} (val loss {result.best_val_loss:.3e}); "
          f"test MAPE {test_eval.mape:.2f}%, R2 {test_eval.r2:.4f}")
    print(f"checkpoint and metrics written to {out_dir}")
    return 0 if not result.diverged else 1


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tata_config, train_config = ckpt.model.config, load_configs(args.config)[1]
    if args.seed is not None:
        train_config.seed = args.seed
    splits, _, _ = _prepare_dataset(args, tata_config, train_config, stats=ckpt.stats)
    part = getattr(splits, args.split)
    result = evaluate_teacher_forced(ckpt.model, part, ckpt.stats)
    print(f"{args.split} split: MAPE {result.mape:.3f}%  R2 {result.r2:.5f}  "
          f"({len(part)} samples)")
    if args.residuals_out:
        write_residuals_csv(args.residuals_out, result.residuals)
        print(f"residuals written to {args.residuals_out}")
    return 0


def cmd_ablate(args) -> int:
    tata_config, train_config = load_configs(args.config)
    if args.seed is not None:
        train_config.seed = args.seed
    splits, stats, _ = _prepare_dataset(args, tata_config, train_config)
    rows = run_ablation_suite(splits.train, splits.val, stats, tata_config, train_config)
    print(f"{'variant':<26}{'val MAPE (%)':>14}{'params':>12}")
    for row in rows:
        print(f"{row.variant:<26}{row.val_mape:>14.3f}{row.n_params:>12,}")
    if args.out:
        write_ablation_csv(args.out, rows)
        print(f"report written to {args.out}")
    return 0


def cmd_rollout(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    trajectory = rollout(ckpt.model, ckpt.stats, RolloutRequest(
        density=args.density, fc=args.fc, E=args.e,
        initial_creep=args.initial_creep, horizon=args.days,
    ))
    write_trajectory_csv(args.out, trajectory)
    summary = trajectory.summary()
    print(f"rolled out {args.days} days -> {args.out} "
          f"(final {summary['final_value']:.1f} microstrain)")
    return 0


def cmd_explain(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tata_config, train_config = ckpt.model.config, load_configs(args.config)[1]
    if args.seed is not None:
        train_config.seed = args.seed
    splits, _, _ = _prepare_dataset(args, tata_config, train_config, stats=ckpt.stats)
    background = ckpt.background
    if background is None:
        background = select_background(splits.train, ckpt.stats,
                                       cap=args.background_cap, seed=train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    part = getattr(splits, args.split)
    picks = rng.choice(len(part), size=min(args.n_samples, len(part)), replace=False)
    chosen = [part[i] for i in picks]
    rows, _ = mean_abs_shap(ckpt.model, ckpt.stats, chosen, background)
    print(f"{'feature':<10}{'mean |phi|':>14}{'std':>12}")
    for row in sorted(rows, key=lambda r: -r.mean_abs_shap):
        print(f"{row.feature:<10}{row.mean_abs_shap:>14.4f}{row.std:>12.4f}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_mean_abs_csv(out_dir / "shap_bars.csv", rows)
    write_summary_csv(out_dir / "shap_summary.csv",
                      shap_summary_rows(ckpt.model, ckpt.stats, chosen, background))
    print(f"attribution exports written to {out_dir}")
    return 0


def cmd_flops(args) -> int:
    tata_config, _ = load_configs(args.config)
    table = count_flops(tata_config, args.seq_len)
    print(format_flops_table(table))
    print(f"parameters: {count_params(tata_config):,}")
    shares = flops_shares(table)
    print(f"encoder share: {shares['encoder_layers']:.2f}%")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ui_dir = args.ui_dir if args.ui_dir and Path(args.ui_dir).is_dir() else None
    app = create_app(args.checkpoint, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _add_dataset_args(parser, need_data=False):
    parser.add_argument("--data", help="measurement CSV (schema: specimen_id,"
                        "density_kg_m3,fc_ksc,E_ksc,time_day,creep_microstrain)",
                        required=need_data)
    if not need_data:
        parser.add_argument("--synth", type=int, default=66,
                            help="synthesize N specimens when --data is absent")
    parser.add_argument("--split-mode", choices=["per_window", "per_specimen"],
                        default="per_window")
    parser.add_argument("--config", help="flat key-value config file "
                        "(default: $CREEPFORMER_CONFIG)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="creepformer",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic specimen CSV")
    p.add_argument("--n", type=int, default=66)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("fit", help="fit creep curves and report r2 per specimen")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="fitted parameter CSV")
    p.add_argument("--standardized-out", help="also write the daily-grid CSV")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_dataset_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="teacher-forced metrics for a checkpoint")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--residuals-out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train all structural variants and compare")
    _add_dataset_args(p)
    p.add_argument("--out", help="ablation report CSV")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("rollout", help="autoregressive trajectory from features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--density", type=float, required=True, help="kg/m3")
    p.add_argument("--fc", type=float, required=True, help="ksc")
    p.add_argument("--e", type=float, required=True, help="ksc")
    p.add_argument("--initial-creep", type=float, default=0.0, help="microstrain")
    p.add_argument("--days", type=int, default=160)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("explain", help="Shapley attribution reports")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--n-samples", type=int, default=32)
    p.add_argument("--background-cap", type=int, default=256)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("flops", help="per-component FLOPs and parameter table")
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--seq-len", type=int, default=160)
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("serve", help="run the JSON prediction service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-dir", help="static single-page UI bundle to mount at /")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
