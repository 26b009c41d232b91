import numpy as np
import pytest

from faultcast.dataset import WindowSample
from faultcast.faults import Scenario, TRANSFER_FAMILIES
from faultcast.forecast import (
    ConstantForecaster,
    EnsembleForecaster,
    FitError,
    ProtocolViolationError,
    SeasonalNaiveForecaster,
    SmoothedForecaster,
    ensemble_predict,
    fit_fault_augmented,
    fit_linear,
    select_seasonal_period,
    select_winner,
    smoothed_predict,
)
from faultcast.rng import Stream
from faultcast.score import EvalConfig, mse_target

from conftest import make_dataset, make_schema, standardized_source


def windows_from_series(series, n, horizon, targets=(0,)):
    """All windows of a (N, m) matrix as WindowSamples."""
    out = []
    for start in range(series.shape[0] - n - horizon + 1):
        x = series[start : start + n].copy()
        y = series[start + n : start + n + horizon][:, list(targets)].copy()
        out.append(WindowSample(x=x, y=y, start_index=start))
    return out


class TestSeasonalNaive:
    def test_last_value_repeats(self):
        x = np.random.default_rng(0).normal(size=(20, 3))
        model = SeasonalNaiveForecaster(period=1, horizon=6, target_set=(2,))
        pred = model.predict(x)
        assert pred.shape == (6, 1)
        assert np.all(pred == x[-1, 2])

    def test_daily_block_tiled(self):
        x = np.random.default_rng(1).normal(size=(96, 2))
        model = SeasonalNaiveForecaster(period=24, horizon=96, target_set=(0, 1))
        pred = model.predict(x)
        block = x[-24:, :]
        assert np.array_equal(pred, np.tile(block, (4, 1)))

    def test_constant_input(self):
        x = np.full((30, 2), 3.25)
        for period in (1, 7, 24):
            model = SeasonalNaiveForecaster(period=period, horizon=5, target_set=(0,))
            assert np.all(model.predict(x) == 3.25)

    def test_period_exceeds_window(self):
        model = SeasonalNaiveForecaster(period=40, horizon=2, target_set=(0,))
        with pytest.raises(ValueError, match="period"):
            model.predict(np.zeros((20, 1)))

    def test_get_params_roundtrip(self):
        model = SeasonalNaiveForecaster(period=24, horizon=6, target_set=(1,))
        params = model.get_params()
        clone = SeasonalNaiveForecaster(**params)
        assert clone.period == 24 and clone.target_set == (1,)


class TestSelectSeasonalPeriod:
    def test_daily_periodic_series_picks_24(self):
        t = np.arange(600.0)
        series = np.sin(2 * np.pi * t / 24)[:, None] + 0.01 * np.cos(t)[:, None]
        windows = windows_from_series(series, n=96, horizon=6)
        # independent oracle: evaluate both candidate MSEs directly
        mses = {}
        for period in (1, 24):
            model = SeasonalNaiveForecaster(period=period, horizon=6, target_set=(0,))
            mses[period] = np.mean([mse_target(model.predict(w.x), w.y) for w in windows])
        assert mses[24] < mses[1]
        assert select_seasonal_period((1, 24), windows, 6, (0,)) == 24

    def test_random_walk_picks_last_value(self):
        rng = np.random.default_rng(3)
        series = np.cumsum(rng.normal(size=(600, 1)), axis=0)
        windows = windows_from_series(series, n=96, horizon=6)
        assert select_seasonal_period((1, 24), windows, 6, (0,)) == 1

    def test_tie_breaks_to_smaller_period(self):
        series = np.full((300, 1), 2.0)
        windows = windows_from_series(series, n=96, horizon=6)
        assert select_seasonal_period((24, 1), windows, 6, (0,)) == 1


class TestRidge:
    def test_zero_targets_give_zero_weights(self):
        rng = np.random.default_rng(5)
        windows = [
            WindowSample(x=rng.normal(size=(8, 2)), y=np.zeros((3, 1)), start_index=i)
            for i in range(40)
        ]
        model = fit_linear(windows, ridge_lambda=1e-3)
        assert np.max(np.abs(model.weights_)) < 1e-9
        pred = model.predict(rng.normal(size=(8, 2)))
        assert np.max(np.abs(pred)) < 1e-9

    def test_copy_task_exact_recovery(self):
        rng = np.random.default_rng(6)
        windows = []
        for i in range(60):
            x = rng.normal(size=(8, 2))
            y = np.tile(x[-1, 0], (3, 1))  # target copies the last value
            windows.append(WindowSample(x=x, y=y, start_index=i))
        model = fit_linear(windows, ridge_lambda=1e-8)
        train_mse = np.mean([mse_target(model.predict(w.x), w.y) for w in windows])
        assert train_mse < 1e-10

    def test_huge_lambda_collapses_to_mean(self):
        rng = np.random.default_rng(7)
        windows = [
            WindowSample(x=rng.normal(size=(6, 2)), y=rng.normal(size=(2, 1)),
                         start_index=i)
            for i in range(50)
        ]
        model = fit_linear(windows, ridge_lambda=1e6)
        y_mean = np.mean([w.y for w in windows], axis=0)
        pred = model.predict(rng.normal(size=(6, 2)))
        spread = np.std([w.y for w in windows])
        assert np.max(np.abs(pred - y_mean)) < 0.01 * spread

    def test_singular_without_ridge(self):
        # 3 windows with 12 features: rank-deficient normal equations
        rng = np.random.default_rng(8)
        windows = [
            WindowSample(x=rng.normal(size=(6, 2)), y=rng.normal(size=(2, 1)),
                         start_index=i)
            for i in range(3)
        ]
        with pytest.raises(FitError):
            fit_linear(windows, ridge_lambda=0.0)

    def test_fit_deterministic(self):
        rng = np.random.default_rng(9)
        windows = [
            WindowSample(x=rng.normal(size=(6, 2)), y=rng.normal(size=(2, 1)),
                         start_index=i)
            for i in range(30)
        ]
        a = fit_linear(windows, 1e-2, seed=4)
        b = fit_linear(windows, 1e-2, seed=4)
        assert a.weights_.tobytes() == b.weights_.tobytes()
        assert a.bias_.tobytes() == b.bias_.tobytes()


class TestEnsemble:
    def test_identical_members(self):
        member = SeasonalNaiveForecaster(period=1, horizon=4, target_set=(0,))
        x = np.random.default_rng(10).normal(size=(10, 2))
        out = ensemble_predict([member, member, member], x)
        assert np.array_equal(out, member.predict(x))

    def test_mean_of_constants(self):
        a = ConstantForecaster(np.zeros((2, 1)))
        b = ConstantForecaster(np.full((2, 1), 2.0))
        out = ensemble_predict([a, b], np.zeros((4, 1)), "mean")
        assert np.all(out == 1.0)

    def test_median(self):
        members = [ConstantForecaster(np.full((2, 2), v)) for v in (0.0, 0.0, 10.0)]
        out = ensemble_predict(members, np.zeros((4, 1)), "median")
        assert np.all(out == 0.0)

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(11)
        members = [ConstantForecaster(rng.normal(size=(3, 2))) for _ in range(5)]
        x = np.zeros((4, 1))
        base = ensemble_predict(members, x)
        for _ in range(5):
            rng.shuffle(members)
            assert ensemble_predict(members, x).tobytes() == base.tobytes()

    def test_too_few_members(self):
        with pytest.raises(ValueError, match="at least 2"):
            ensemble_predict([ConstantForecaster()], np.zeros((2, 1)))

    def test_shape_mismatch(self):
        a = ConstantForecaster(np.zeros((2, 1)))
        b = ConstantForecaster(np.zeros((3, 1)))
        with pytest.raises(ValueError, match="shapes differ"):
            ensemble_predict([a, b], np.zeros((4, 1)))

    def test_forecaster_facade(self):
        members = [ConstantForecaster(np.full((2, 1), v)) for v in (1.0, 3.0)]
        model = EnsembleForecaster(members=members, aggregator="mean")
        assert np.all(model.predict(np.zeros((4, 1))) == 2.0)


class _SequencePredictor:
    """Base model returning pre-set outputs in order, ignoring input."""

    def __init__(self, outputs):
        self.outputs = list(outputs)
        self.calls = 0

    def predict(self, x):
        out = self.outputs[self.calls % len(self.outputs)]
        self.calls += 1
        return np.asarray(out, dtype=np.float64)


class TestSmoothing:
    def test_sigma_zero_equals_base(self):
        rng = np.random.default_rng(12)
        windows = [
            WindowSample(x=rng.normal(size=(6, 2)), y=rng.normal(size=(2, 1)),
                         start_index=i)
            for i in range(30)
        ]
        base = fit_linear(windows, 1e-2)
        x = rng.normal(size=(6, 2))
        out = smoothed_predict(base, x, sigma=0.0, queries=7, trim=0.2, stream=Stream(1))
        assert np.array_equal(out, base.predict(x))

    def test_trimmed_mean_arithmetic(self):
        base = _SequencePredictor([[[v]] for v in (0.0, 1.0, 2.0, 3.0, 100.0)])
        out = smoothed_predict(base, np.zeros((2, 1)), sigma=1.0, queries=5,
                               trim=0.2, stream=Stream(2))
        assert out[0, 0] == 2.0  # drop one per tail, mean(1, 2, 3)

    def test_linear_base_converges_to_base(self):
        rng = np.random.default_rng(13)
        windows = [
            WindowSample(x=rng.normal(size=(5, 2)), y=rng.normal(size=(2, 1)),
                         start_index=i)
            for i in range(40)
        ]
        base = fit_linear(windows, 1e-2)
        x = rng.normal(size=(5, 2))
        queries = 10_000
        stream = Stream(3)
        # record the member predictions to estimate the Monte Carlo SE
        preds = []
        probe = Stream(3)
        for _ in range(queries):
            noise = probe.normals(x.size).reshape(x.shape)
            preds.append(base.predict(x + 0.1 * noise))
        se = np.std(np.stack(preds), axis=0) / np.sqrt(queries * (1 - 2 * 0.1))
        out = smoothed_predict(base, x, sigma=0.1, queries=queries, trim=0.1,
                               stream=stream)
        assert np.all(np.abs(out - base.predict(x)) <= 3.0 * se + 1e-12)

    def test_wrapper_predict_is_pure(self):
        base = SeasonalNaiveForecaster(period=1, horizon=3, target_set=(0,))
        model = SmoothedForecaster(base=base, sigma=0.05, queries=8, trim=0.1, seed=7)
        x = np.random.default_rng(14).normal(size=(6, 2))
        a = model.predict(x)
        b = model.predict(x)
        assert np.array_equal(a, b)
        c = model.predict(x + 1.0)
        assert not np.array_equal(a, c)

    def test_invalid_params(self):
        base = ConstantForecaster(np.zeros((1, 1)))
        with pytest.raises(ValueError):
            smoothed_predict(base, np.zeros((2, 1)), -1.0, 4, 0.1, Stream(0))
        with pytest.raises(ValueError):
            smoothed_predict(base, np.zeros((2, 1)), 0.1, 0, 0.1, Stream(0))
        with pytest.raises(ValueError):
            smoothed_predict(base, np.zeros((2, 1)), 0.1, 4, 0.5, Stream(0))


class TestFaultAugmentation:
    def _windows(self, count=40, seed=15):
        rng = np.random.default_rng(seed)
        return [
            WindowSample(x=rng.normal(size=(8, 3)), y=rng.normal(size=(2, 1)),
                         start_index=i)
            for i in range(count)
        ]

    def test_p_zero_matches_plain_fit(self):
        windows = self._windows()
        schema = make_schema(3)
        plain = fit_linear(windows, 1e-2, seed=21)
        aug = fit_fault_augmented(windows, schema, 1e-2, p_aug=0.0, seed=21)
        assert plain.weights_.tobytes() == aug.weights_.tobytes()
        assert plain.bias_.tobytes() == aug.bias_.tobytes()

    def test_benchmark_scenario_pool_rejected(self):
        windows = self._windows()
        with pytest.raises(ProtocolViolationError, match="scored benchmark"):
            fit_fault_augmented(windows, make_schema(3), 1e-2, p_aug=0.5,
                                families=(Scenario.DRIFT,), seed=0)

    def test_full_augmentation_changes_fit(self):
        windows = self._windows()
        schema = make_schema(3)
        plain = fit_linear(windows, 1e-2, seed=22)
        aug = fit_fault_augmented(windows, schema, 1e-2, p_aug=1.0,
                                  families=(Scenario.SCALING,), seed=22)
        assert not np.array_equal(plain.weights_, aug.weights_)

    def test_targets_untouched(self):
        windows = self._windows()
        before = [w.y.tobytes() for w in windows]
        fit_fault_augmented(windows, make_schema(3), 1e-2, p_aug=1.0, seed=23)
        assert [w.y.tobytes() for w in windows] == before

    def test_all_transfer_families_accepted(self):
        windows = self._windows(count=20)
        model = fit_fault_augmented(windows, make_schema(3), 1e-2, p_aug=0.8,
                                    families=TRANSFER_FAMILIES, seed=24)
        assert np.all(np.isfinite(model.weights_))


class TestSelectWinner:
    def _val_source(self):
        ds = make_dataset(n_rows=400, m=2, seed=30, kind="walk")
        return standardized_source(ds, split="val", n=24, horizon=4)

    def test_single_candidate(self):
        source = self._val_source()
        cfg = EvalConfig(k=50, eval_seed=1, bootstrap=0)
        model = SeasonalNaiveForecaster(period=1, horizon=4, target_set=(0,))
        assert select_winner([("only", model)], source, "clean", cfg) == "only"

    def test_lower_clean_mse_wins(self):
        source = self._val_source()
        cfg = EvalConfig(k=100, eval_seed=2, bootstrap=0)
        good = SeasonalNaiveForecaster(period=1, horizon=4, target_set=(0,))
        bad = ConstantForecaster(np.full((4, 1), 50.0))
        assert select_winner([("bad", bad), ("good", good)], source, "clean", cfg) == "good"

    def test_exact_tie_breaks_lexicographically(self):
        source = self._val_source()
        cfg = EvalConfig(k=60, eval_seed=3, bootstrap=0)
        a = ConstantForecaster(np.zeros((4, 1)))
        b = ConstantForecaster(np.zeros((4, 1)))
        assert select_winner([("zeta", a), ("alpha", b)], source, "clean", cfg) == "alpha"

    def test_clean_and_perturbed_can_disagree(self):
        # candidate A: last-value passthrough (clean-optimal on a random walk,
        # fragile under input faults); candidate B: shrunk toward the window
        # mean (slightly worse clean, damped under faults)
        class Shrunk:
            deterministic = True
            identifier = "shrunk"

            def predict(self, x):
                center = x[:, 0].mean()
                value = 0.5 * x[-1, 0] + 0.5 * center
                return np.full((4, 1), value)

        ds = make_dataset(n_rows=500, m=2, seed=31, kind="walk")
        source = standardized_source(ds, split="val", n=24, horizon=4)
        cfg = EvalConfig(k=300, eval_seed=4, bootstrap=0)
        last = SeasonalNaiveForecaster(period=1, horizon=4, target_set=(0,))
        candidates = [("last", last), ("shrunk", Shrunk())]
        clean = select_winner(candidates, source, "clean", cfg)
        perturbed = select_winner(candidates, source, "perturbed", cfg)
        assert clean == "last"
        assert perturbed == "shrunk"
        assert clean != perturbed
