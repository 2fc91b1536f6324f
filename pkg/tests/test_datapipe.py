"""Data pipeline tests: curve fitting, standardization, windows, splits, CSV."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creepformer import data as dp
from creepformer.curvefit import (
    CreepCurveParams,
    FitError,
    creep_model_eval,
    fit_creep_curve,
)


def make_specimen(rng, sid="s0", a=800.0, b=0.1, c=0.9, noise=0.0):
    times = np.concatenate([np.arange(1.0, 8.0), np.arange(14.0, 170.0, 7.0)])
    creeps = creep_model_eval((a, b, c), times)
    if noise:
        creeps = creeps * (1 + rng.normal(0, noise, size=creeps.shape))
    return dp.SpecimenRecord(sid, 2400.0, 470.0, 3.2e5, times, creeps)


class TestCreepModel:
    def test_zero_at_origin(self):
        assert creep_model_eval((123.0, 0.3, 0.7), 0.0) == 0.0

    def test_half_saturation(self):
        assert abs(creep_model_eval((100.0, np.log(2.0), 1.0), 1.0) - 50.0) < 1e-12

    def test_direct_formula_oracle(self):
        a, b, c, t = 1000.0, 0.05, 0.8, 28.0
        expected = a * (1.0 - np.exp(-b * t ** c))
        assert abs(creep_model_eval((a, b, c), t) - expected) < 1e-12

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            creep_model_eval((1.0, 1.0, 1.0), -0.1)

    @given(st.floats(10, 3000), st.floats(0.01, 0.5), st.floats(0.3, 1.5))
    @settings(max_examples=50, deadline=None)
    def test_monotone_and_bounded(self, a, b, c):
        t = np.linspace(0, 200, 64)
        y = creep_model_eval((a, b, c), t)
        assert y[0] == 0.0
        assert np.all(np.diff(y) >= 0) and np.all(y <= a)
        # strictly increasing and strictly below the asymptote wherever the
        # exponential has not yet been extinguished by double rounding
        alive = b * t[1:] ** c < 30.0
        assert np.all(np.diff(y)[alive] > 0)
        assert np.all(y[1:][alive] < a)


class TestCurveFit:
    def test_noiseless_recovery(self):
        times = np.concatenate([np.arange(1.0, 11.0), np.arange(20.0, 120.0, 10.0)])
        creeps = creep_model_eval((800.0, 0.1, 0.9), times)
        p = fit_creep_curve(times, creeps)
        assert p.converged and p.n_evals <= 10_000
        assert abs(p.a - 800.0) / 800.0 < 1e-6
        assert abs(p.b - 0.1) / 0.1 < 1e-6
        assert abs(p.c - 0.9) / 0.9 < 1e-6

    def test_noisy_fit_quality_over_seeds(self):
        times = np.concatenate([np.arange(1.0, 8.0), np.arange(14.0, 170.0, 7.0)])
        clean = creep_model_eval((800.0, 0.1, 0.9), times)
        r2s = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            noisy = clean * (1 + rng.normal(0, 0.02, size=clean.shape))
            r2s.append(fit_creep_curve(times, noisy).r2)
        assert np.median(r2s) >= 0.99

    def test_self_generated_fixed_point(self):
        # fitting the resampled output of a fit recovers the same parameters
        rng = np.random.default_rng(5)
        rec = make_specimen(rng, noise=0.02)
        first = fit_creep_curve(rec.times, rec.creeps)
        daily = dp.resample_daily(first)
        second = fit_creep_curve(np.arange(1.0, 161.0), daily)
        assert abs(second.a - first.a) / first.a < 1e-6
        assert abs(second.b - first.b) / first.b < 1e-6
        assert abs(second.c - first.c) / first.c < 1e-6

    def test_all_zero_curve_is_degenerate(self):
        with pytest.raises(FitError):
            fit_creep_curve(np.arange(1.0, 21.0), np.zeros(20))

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_creep_curve([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_non_increasing_times(self):
        with pytest.raises(ValueError):
            fit_creep_curve([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])

    def test_scipy_cross_check(self):
        scipy_optimize = pytest.importorskip("scipy.optimize")
        rng = np.random.default_rng(11)
        times = np.concatenate([np.arange(1.0, 8.0), np.arange(14.0, 170.0, 7.0)])
        clean = creep_model_eval((1200.0, 0.08, 0.75), times)
        noisy = clean * (1 + rng.normal(0, 0.02, size=clean.shape))
        mine = fit_creep_curve(times, noisy)
        popt, _ = scipy_optimize.curve_fit(
            lambda t, a, b, c: a * (1 - np.exp(-b * t ** c)),
            times, noisy, p0=[1.2 * noisy.max(), 0.05, 1.0], maxfev=10_000)
        np.testing.assert_allclose(mine.as_tuple(), popt, rtol=1e-4)


class TestResample:
    def test_length_and_monotonicity(self):
        daily = dp.resample_daily(CreepCurveParams(800.0, 0.1, 0.9, 1.0, 1))
        assert len(daily) == 160
        assert np.all(np.diff(daily) > 0)
        assert daily[-1] < 800.0

    def test_matches_pointwise_evaluation(self):
        params = CreepCurveParams(650.0, 0.07, 0.85, 1.0, 1)
        daily = dp.resample_daily(params)
        for day in (1, 40, 160):
            assert daily[day - 1] == creep_model_eval(params, float(day))


class TestNormalize:
    def test_time_zero_maps_to_zero(self):
        stats = dp.NormStats(np.zeros(3), np.ones(3))
        assert stats.normalize_time(0.0) == 0.0

    def test_alpha_scaling(self):
        stats = dp.NormStats(np.zeros(3), np.ones(3))
        assert stats.normalize_creep(1000.0) == 1.0

    def test_feature_at_training_mean_is_zero(self):
        stats = dp.NormStats(np.array([2400.0, 470.0, 3.2e5]), np.array([10.0, 20.0, 30.0]))
        np.testing.assert_array_equal(
            stats.normalize_features([2400.0, 470.0, 3.2e5]), np.zeros(3))

    def test_round_trip_identity(self, rng):
        stats = dp.NormStats(rng.normal(size=3), np.abs(rng.normal(size=3)) + 0.5)
        x = rng.normal(size=10) * 1000
        np.testing.assert_allclose(stats.denormalize_creep(stats.normalize_creep(x)), x,
                                   atol=1e-12)
        f = rng.normal(size=(4, 3)) * 100
        np.testing.assert_allclose(stats.denormalize_features(stats.normalize_features(f)),
                                   f, atol=1e-9)

    def test_std_floor_survives_constant_features(self):
        samples = [dp.TrainingSample("s", np.ones(2), np.ones(2),
                                     np.array([1.0, 2.0, 3.0]), 1.0) for _ in range(5)]
        stats = dp.NormStats.from_samples(samples)
        assert np.all(stats.feat_std >= dp.FEATURE_STD_FLOOR)
        assert np.all(np.isfinite(stats.normalize_features([1.0, 2.0, 3.0])))

    def test_normalize_samples(self, rng):
        spec = dp.standardize([make_specimen(rng)])
        samples = dp.build_windows(spec)
        stats = dp.NormStats.from_samples(samples)
        normed = dp.normalize(samples, stats)
        s = normed[10]
        assert s.normalized
        np.testing.assert_allclose(s.time_prefix, np.log1p(np.arange(1.0, 12.0)), atol=0)
        np.testing.assert_allclose(
            s.creep_prefix * 1000.0, samples[10].creep_prefix, atol=1e-9)
        with pytest.raises(dp.DataError):
            dp.normalize(normed, stats)


class TestWindows:
    def test_one_specimen_gives_160(self, rng):
        specs = dp.standardize([make_specimen(rng)])
        assert len(dp.build_windows(specs)) == 160

    def test_prefix_is_true_prefix(self, rng):
        specs = dp.standardize([make_specimen(rng)])
        samples = dp.build_windows(specs)
        s3 = samples[2]
        np.testing.assert_array_equal(s3.time_prefix, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(s3.creep_prefix, specs[0].daily_creep[:3])
        assert s3.target == specs[0].daily_creep[3]

    def test_final_window_target_from_curve(self, rng):
        specs = dp.standardize([make_specimen(rng)])
        last = dp.build_windows(specs)[-1]
        assert len(last.creep_prefix) == 160
        assert last.target == creep_model_eval(specs[0].params, 161.0)

    def test_66_specimens_published_arithmetic(self):
        records = dp.synth_generate(66, seed=3)
        samples = dp.build_windows(dp.standardize(records))
        assert len(samples) == 10_560
        parts = dp.split(samples, mode="per_window", seed=0)
        assert (len(parts.train), len(parts.val), len(parts.test)) == (9504, 528, 528)


class TestSplit:
    def test_union_and_disjointness(self, rng):
        samples = dp.build_windows(dp.standardize(
            [make_specimen(rng, sid=f"s{i}") for i in range(4)]))
        parts = dp.split(samples, mode="per_window", seed=1)
        ids = [id(s) for part in parts for s in part]
        assert len(ids) == len(samples)
        assert len(set(ids)) == len(ids)

    def test_per_specimen_counts(self):
        records = dp.synth_generate(20, seed=5)
        samples = dp.build_windows(dp.standardize(records))
        parts = dp.split(samples, mode="per_specimen", seed=2)
        groups = [sorted({s.specimen_id for s in part}) for part in parts]
        assert (len(groups[0]), len(groups[1]), len(groups[2])) == (18, 1, 1)
        assert not (set(groups[0]) & set(groups[1]) | set(groups[0]) & set(groups[2])
                    | set(groups[1]) & set(groups[2]))

    def test_deterministic_under_seed(self):
        records = dp.synth_generate(6, seed=5)
        samples = dp.build_windows(dp.standardize(records))
        a = dp.split(samples, seed=9)
        b = dp.split(samples, seed=9)
        assert [s.specimen_id for s in a.train] == [s.specimen_id for s in b.train]
        assert [len(s.creep_prefix) for s in a.val] == [len(s.creep_prefix) for s in b.val]

    def test_too_few_samples(self):
        samples = [dp.TrainingSample("x", np.ones(1), np.ones(1), np.ones(3), 1.0)] * 5
        with pytest.raises(ValueError):
            dp.split(samples, mode="per_window", fractions=(0.9, 0.05, 0.05))

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            dp.split([], fractions=(0.5, 0.2, 0.2))


class TestSynth:
    def test_value_ranges(self):
        records = dp.synth_generate(66, seed=0)
        allc = np.concatenate([r.creeps for r in records])
        assert allc.min() >= 0.0
        assert allc.max() < 3200.0

    def test_seed_determinism(self):
        a = dp.synth_generate(5, seed=42)
        b = dp.synth_generate(5, seed=42)
        for ra, rb in zip(a, b):
            assert ra.id == rb.id and ra.density == rb.density
            np.testing.assert_array_equal(ra.creeps, rb.creeps)

    def test_growth_scale(self):
        specs = dp.standardize(dp.synth_generate(66, seed=1))
        day1 = np.median([s.daily_creep[0] for s in specs])
        day160 = np.median([s.daily_creep[-1] for s in specs])
        assert 40.0 < day1 < 250.0
        assert 400.0 < day160 < 1600.0
        assert day160 > 3.0 * day1

    def test_ultimate_creep_inversely_tied_to_stiffness(self):
        records = dp.synth_generate(120, seed=2)
        specs = dp.standardize(records)
        a_vals = np.array([s.params.a for s in specs])
        e_vals = np.array([r.E for r in records])
        fc_vals = np.array([r.fc for r in records])
        assert np.corrcoef(a_vals, e_vals)[0, 1] < -0.3
        assert np.corrcoef(a_vals, fc_vals)[0, 1] < -0.3


class TestCsv:
    def test_empty_file_warns_and_returns_empty(self, tmp_path, caplog):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with caplog.at_level("WARNING"):
            assert dp.ingest_csv(path) == []
        assert "empty" in caplog.text

    def test_round_trip(self, tmp_path, rng):
        rec = make_specimen(rng, noise=0.01)
        path = tmp_path / "one.csv"
        dp.export_records_csv([rec], path)
        back = dp.ingest_csv(path)
        assert len(back) == 1
        assert back[0].id == rec.id
        np.testing.assert_array_equal(back[0].times, rec.times)
        np.testing.assert_array_equal(back[0].creeps, rec.creeps)
        assert (back[0].density, back[0].fc, back[0].E) == (rec.density, rec.fc, rec.E)

    def test_decreasing_time_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "specimen_id,density_kg_m3,fc_ksc,E_ksc,time_day,creep_microstrain\n"
            "s1,2400,470,320000,1,10\n"
            "s1,2400,470,320000,3,30\n"
            "s1,2400,470,320000,2,20\n")
        with pytest.raises(dp.DataError, match=":4"):
            dp.ingest_csv(path)

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("specimen_id,density_kg_m3\n")
        with pytest.raises(dp.DataError, match="header"):
            dp.ingest_csv(path)

    def test_non_positive_feature_rejected(self, tmp_path):
        path = tmp_path / "neg.csv"
        path.write_text(
            "specimen_id,density_kg_m3,fc_ksc,E_ksc,time_day,creep_microstrain\n"
            "s1,-2400,470,320000,1,10\n")
        with pytest.raises(dp.DataError, match="non-positive"):
            dp.ingest_csv(path)

    def test_standardized_export_schema(self, tmp_path, rng):
        specs = dp.standardize([make_specimen(rng)])
        path = tmp_path / "std.csv"
        dp.export_standardized_csv(specs, path)
        back = dp.ingest_csv(path)
        assert len(back) == 1
        np.testing.assert_array_equal(back[0].times, np.arange(1.0, 161.0))
        np.testing.assert_array_equal(back[0].creeps, specs[0].daily_creep)
