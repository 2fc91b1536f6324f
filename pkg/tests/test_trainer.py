"""Optimizer, schedules, clipping, training-loop and ablation-harness tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creepformer import data as dp
from creepformer.model import AblationSpec, TataConfig, TataModel, count_params
from creepformer.tensor import Tensor
from creepformer.training import (
    ABLATION_VARIANTS,
    AdamW,
    EarlyStopper,
    PlateauScheduler,
    TrainConfig,
    clip_gradients,
    mse_loss,
    run_ablation_suite,
    train,
    write_metrics_csv,
)

TOY = dict(d_model=8, n_layers=1, n_heads=2, hidden_dim=8, d_intermediate=4, dropout=0.0)


def tiny_dataset(n_specimens=4, seed=0):
    records = dp.synth_generate(n_specimens, seed=seed)
    specimens = dp.standardize(records, days=24)
    samples = dp.build_windows(specimens)
    parts = dp.split(samples, mode="per_specimen", fractions=(0.5, 0.25, 0.25), seed=seed)
    stats = dp.NormStats.from_samples(parts.train)
    return dp.DataSplit(*(dp.normalize(p, stats) for p in parts)), stats


class TestMseLoss:
    def test_identical_vectors(self):
        assert mse_loss(Tensor([1.0, 2.0]), np.array([1.0, 2.0])).item() == 0.0

    def test_single_pair(self):
        assert mse_loss(Tensor([2.0]), np.array([0.0])).item() == 4.0

    def test_matches_loop_oracle(self, rng):
        p = rng.normal(size=12)
        t = rng.normal(size=12)
        acc = 0.0
        for i in range(12):
            acc += (p[i] - t[i]) ** 2
        assert abs(mse_loss(Tensor(p), t).item() - acc / 12) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mse_loss(Tensor(np.zeros(0)), np.zeros(0))

    def test_differentiable(self, rng):
        p = Tensor(rng.normal(size=5), requires_grad=True)
        target = rng.normal(size=5)
        mse_loss(p, target).backward()
        np.testing.assert_allclose(p.grad, 2.0 * (p.data - target) / 5, atol=1e-12)


class TestAdamW:
    def test_zero_grad_no_decay_keeps_params(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = AdamW({"p": p}, lr=0.1, weight_decay=0.0)
        before = p.data.copy()
        for _ in range(3):
            p.grad = np.zeros_like(p.data)
            opt.step()
        np.testing.assert_array_equal(p.data, before)

    def test_decoupled_decay_identity(self):
        lr, wd, steps = 0.05, 0.01, 7
        p = Tensor(np.array([1.0, -3.0]), requires_grad=True)
        opt = AdamW({"p": p}, lr=lr, weight_decay=wd)
        start = p.data.copy()
        for _ in range(steps):
            p.grad = np.zeros_like(p.data)
            opt.step()
        np.testing.assert_allclose(p.data, start * (1 - lr * wd) ** steps, rtol=1e-12)

    def test_scalar_descent_on_square(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = AdamW({"p": p}, lr=0.01, weight_decay=0.0)
        history = []
        for _ in range(100):
            p.grad = 2.0 * p.data
            opt.step()
            history.append(abs(float(p.data[0])))
        # monotone decrease once moments warm up
        assert all(b <= a + 1e-12 for a, b in zip(history[4:], history[5:]))
        assert history[-1] < 0.5

    def test_nan_gradient_aborts_with_name(self):
        from creepformer.training import TrainingDiverged

        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = AdamW({"late.W": p}, lr=0.1)
        p.grad = np.array([np.nan])
        with pytest.raises(TrainingDiverged, match="late.W"):
            opt.step()


class TestPlateauScheduler:
    def test_improving_losses_keep_lr(self):
        sched = PlateauScheduler(1e-3, 0.5, 5)
        for loss in np.linspace(1.0, 0.1, 10):
            assert sched.update(loss) == 1e-3

    def test_six_flat_epochs_halve_once(self):
        sched = PlateauScheduler(1e-3, 0.5, 5)
        lrs = [sched.update(1.0) for _ in range(6)]
        assert lrs[:4] == [1e-3] * 4
        assert lrs[4] == pytest.approx(5e-4)  # patience hit at the 5th flat epoch
        assert lrs[5] == pytest.approx(5e-4)  # counter was reset by the reduction

    def test_twelve_flat_epochs_quarter_total(self):
        sched = PlateauScheduler(1e-3, 0.5, 5)
        lr = 1e-3
        for _ in range(12):
            lr = sched.update(1.0)
        assert lr == pytest.approx(2.5e-4)

    def test_counter_resets_on_improvement(self):
        sched = PlateauScheduler(1e-3, 0.5, 5)
        for _ in range(4):
            sched.update(1.0)
        sched.update(0.5)  # improvement resets the stale counter
        for _ in range(4):
            assert sched.update(0.5) == 1e-3


class TestEarlyStopper:
    def test_improving_never_stops(self):
        stop = EarlyStopper(8)
        assert not any(stop.update(m) for m in np.linspace(10, 1, 50))

    def test_eight_flat_epochs_stop(self):
        stop = EarlyStopper(8)
        results = [stop.update(5.0) for _ in range(8)]
        assert results == [False] * 7 + [True]

    def test_reset_on_late_improvement(self):
        stop = EarlyStopper(8)
        for _ in range(6):
            assert not stop.update(5.0)
        assert not stop.update(4.0)  # improvement at epoch 7
        for _ in range(7):
            assert not stop.update(4.0)
        assert stop.update(4.0)


class TestClipGradients:
    def test_below_threshold_unchanged(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([0.3, 0.4])
        norm = clip_gradients({"p": p}, max_norm=1.0)
        assert norm == pytest.approx(0.5)
        np.testing.assert_array_equal(p.grad, [0.3, 0.4])

    def test_three_four_five_triangle(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([3.0, 4.0])
        clip_gradients({"p": p}, max_norm=1.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8], atol=1e-12)

    @given(st.integers(0, 2 ** 31 - 1), st.floats(0.1, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_post_clip_norm_bounded_and_direction_kept(self, seed, max_norm):
        rng = np.random.default_rng(seed)
        params = {}
        for i in range(3):
            p = Tensor(np.zeros(4), requires_grad=True)
            p.grad = rng.normal(size=4) * rng.uniform(0.1, 100)
            params[f"p{i}"] = p
        before = np.concatenate([p.grad.copy() for p in params.values()])
        clip_gradients(params, max_norm)
        after = np.concatenate([p.grad for p in params.values()])
        assert np.linalg.norm(after) <= max_norm + 1e-12
        cos = after @ before / (np.linalg.norm(after) * np.linalg.norm(before))
        assert cos == pytest.approx(1.0, abs=1e-9)


class TestTrainLoop:
    def test_overfits_tiny_dataset(self):
        splits, stats = tiny_dataset()
        cfg = TrainConfig(lr=3e-3, batch_size=16, max_epochs=200, seed=0,
                          dtype="float64", early_stop_patience=200, clip_norm=5.0)
        model = TataModel(TataConfig(**{**TOY, "max_seq_len": 24}), seed=0)
        result = train(model, splits.train, splits.train, stats, cfg)
        assert min(m.train_loss for m in result.metrics) < 1e-3

    def test_same_seed_identical_metrics(self):
        splits, stats = tiny_dataset()
        cfg = TrainConfig(lr=1e-3, batch_size=16, max_epochs=3, seed=4, dtype="float64")

        def run():
            model = TataModel(TataConfig(**{**TOY, "max_seq_len": 24}), seed=4)
            return train(model, splits.train, splits.val, stats, cfg).metrics

        a, b = run(), run()
        assert [(m.train_loss, m.val_loss, m.val_mape, m.lr) for m in a] \
            == [(m.train_loss, m.val_loss, m.val_mape, m.lr) for m in b]

    def test_best_checkpoint_minimizes_val_loss(self):
        splits, stats = tiny_dataset()
        cfg = TrainConfig(lr=2e-3, batch_size=16, max_epochs=8, seed=1, dtype="float64")
        model = TataModel(TataConfig(**{**TOY, "max_seq_len": 24}), seed=1)
        result = train(model, splits.train, splits.val, stats, cfg)
        best = min(result.metrics, key=lambda m: m.val_loss)
        assert result.best_epoch == best.epoch
        assert result.best_val_loss == pytest.approx(best.val_loss)

    def test_metrics_csv_schema(self, tmp_path):
        splits, stats = tiny_dataset()
        cfg = TrainConfig(lr=1e-3, batch_size=16, max_epochs=2, seed=0, dtype="float64")
        model = TataModel(TataConfig(**{**TOY, "max_seq_len": 24}), seed=0)
        result = train(model, splits.train, splits.val, stats, cfg)
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, result.metrics)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_mape,lr"
        assert len(lines) == len(result.metrics) + 1


class TestAblation:
    def test_variant_names_match_report_rows(self):
        names = [name for name, _ in ABLATION_VARIANTS]
        assert names == ["w/o Mean pooling", "w/o Attention pooling",
                         "w/o Last Token pooling", "w/o Feature attention",
                         "w/o Batch attention", "Proposed Model"]

    def test_hybrid_width_shrinks_without_mean_pool(self):
        cfg = TataConfig(**TOY)
        full = TataModel(cfg, AblationSpec(), seed=0)
        ablated = TataModel(cfg, AblationSpec(mean_pool=False), seed=0)
        assert full.params["pool.hyb.W"].data.shape == (8, 24)
        assert ablated.params["pool.hyb.W"].data.shape == (8, 16)

    def test_integration_width_shrinks_without_paths(self):
        cfg = TataConfig(**TOY)
        no_feat = TataModel(cfg, AblationSpec(feature_attention=False), seed=0)
        no_batch = TataModel(cfg, AblationSpec(batch_attention=False), seed=0)
        assert no_feat.params["integrate.W"].data.shape == (8, 8 + 16)
        assert no_batch.params["integrate.W"].data.shape == (8, 8 + 48)

    def test_suite_trains_all_variants(self):
        splits, stats = tiny_dataset()
        cfg = TataConfig(**{**TOY, "max_seq_len": 24})
        tc = TrainConfig(lr=2e-3, batch_size=32, max_epochs=2, seed=0, dtype="float64")
        rows = run_ablation_suite(splits.train, splits.val, stats, cfg, tc)
        assert [r.variant for r in rows] == [name for name, _ in ABLATION_VARIANTS]
        full_params = count_params(cfg)
        for row in rows[:-1]:
            assert row.n_params < full_params
        assert rows[-1].n_params == full_params
        assert all(np.isfinite(r.val_mape) for r in rows)
