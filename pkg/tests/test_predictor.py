import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from dualband.dataset import SplitDataset, WindowedSample, balance, labels_of
from dualband.errors import ConfigurationError, TrainingError
from dualband.predictor import (
    ConfusionPredictor,
    ConstantPredictor,
    LogisticModel,
    LogisticRegressionGD,
    OraclePredictor,
    WindowFeaturizer,
    cross_entropy,
    cross_entropy_grad,
    evaluate,
    extract_features,
    frame_statistics,
    predict,
    sigmoid,
    train_logistic,
)
from dualband.scene import NUM_BEAMS, blob_rows, los_column


def _samples(labels, r=1):
    return [WindowedSample(frames=np.zeros((r, 8, 8, 1)), powers=np.zeros((r, NUM_BEAMS)), label=int(y), origin_index=i)
            for i, y in enumerate(labels)]


def _numeric_grad(w, b, X, y, eps=1e-6):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = eps
        g[i] = (cross_entropy(w + e, b, X, y) - cross_entropy(w - e, b, X, y)) / (2 * eps)
    gb = (cross_entropy(w, b + eps, X, y) - cross_entropy(w, b - eps, X, y)) / (2 * eps)
    return g, gb


class TestFeatures:
    def test_length(self, default_trace):
        from dualband.dataset import window_and_label

        s = window_and_label(default_trace, 5, 5)[0]
        assert extract_features(s).shape == (5 * 68,)
        assert np.isfinite(extract_features(s)).all()

    def test_black_frames(self):
        stats = frame_statistics(np.zeros((16, 32, 3)))
        np.testing.assert_array_equal(stats, np.zeros(4))

    def test_blob_darkens_los_column(self, default_trace):
        w, h, _ = default_trace.frame_dims
        t = int(np.flatnonzero(default_trace.blocked)[0])
        frame = default_trace.frames[t]
        clean = frame.copy()
        # undo the blob on the LOS column with the neighbouring background level
        clean[blob_rows(h), los_column(w), :] = frame[0, los_column(w), :]
        assert frame_statistics(frame)[2] < frame_statistics(clean)[2]

    def test_los_mean_lower_on_blocked_steps(self, default_trace):
        los = np.array([frame_statistics(f)[2] for f in default_trace.frames])
        blocked = default_trace.blocked == 1
        assert los[blocked].max() < los[~blocked].min()

    def test_featurizer_standardizes_powers(self, default_trace):
        from dualband.dataset import window_and_label

        samples = window_and_label(default_trace, 2, 1)
        X = WindowFeaturizer().fit_transform(samples)
        powers = X.reshape(len(samples), 2, 68)[:, :, :NUM_BEAMS]
        assert abs(powers.mean()) < 0.1

    def test_window_mismatch(self, default_trace):
        from dualband.dataset import window_and_label

        feat = WindowFeaturizer().fit(window_and_label(default_trace, 3, 1))
        with pytest.raises(ConfigurationError):
            feat.transform(window_and_label(default_trace, 4, 1))


class TestLogistic:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_gradient_matches_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        X = r.normal(size=(10, 6))
        y = r.integers(0, 2, 10).astype(float)
        w = r.normal(size=6)
        b = float(r.normal())
        gw, gb = cross_entropy_grad(w, b, X, y)
        nw, nb = _numeric_grad(w, b, X, y)
        scale = max(np.abs(np.append(gw, gb)).max(), 1e-3)
        assert np.max(np.abs(gw - nw)) / scale < 1e-6
        assert abs(gb - nb) / scale < 1e-6

    def test_separable_toy(self, rng):
        X = np.vstack([rng.normal(-2, 0.5, (50, 2)), rng.normal(2, 0.5, (50, 2))])
        y = np.r_[np.zeros(50), np.ones(50)]
        est = LogisticRegressionGD(epochs=500, learning_rate=0.5).fit(X, y)
        assert np.mean(est.predict(X) == y) == 1.0

    def test_zero_epochs(self, rng):
        X = rng.normal(size=(20, 3))
        y = np.r_[np.zeros(10), np.ones(10)]
        est = LogisticRegressionGD(epochs=0).fit(X, y)
        assert not est.model_.weights.any() and est.model_.bias == 0
        np.testing.assert_array_equal(est.predict_proba(X)[:, 1], 0.5)
        assert len(est.loss_curve_) == 1

    def test_tie_predicts_blockage(self):
        model = LogisticModel(weights=np.zeros(2), bias=0.0, threshold=0.5)
        assert model.decide(model.proba(np.zeros((1, 2))))[0] == 1

    def test_monotone_map_keeps_decisions(self, rng):
        model = LogisticModel(weights=rng.normal(size=4), bias=0.1, threshold=0.3)
        p = model.proba(rng.normal(size=(200, 4)))
        # p -> p**2 with the threshold moved to threshold**2
        squared = LogisticModel(weights=model.weights, threshold=model.threshold**2)
        np.testing.assert_array_equal(model.decide(p), squared.decide(p**2))

    def test_single_class(self, rng):
        with pytest.raises(TrainingError):
            LogisticRegressionGD().fit(rng.normal(size=(5, 2)), np.ones(5))

    def test_dimension_mismatch(self):
        model = LogisticModel(weights=np.zeros(3))
        with pytest.raises(ConfigurationError):
            model.proba(np.zeros((2, 4)))

    def test_bad_threshold(self):
        with pytest.raises(ConfigurationError):
            LogisticModel(weights=np.zeros(1), threshold=1.0)

    def test_text_round_trip(self, rng):
        model = LogisticModel(weights=rng.normal(size=7), bias=-0.25, threshold=0.4)
        back = LogisticModel.from_text(model.to_text())
        np.testing.assert_array_equal(back.weights, model.weights)
        assert (back.bias, back.threshold) == (model.bias, model.threshold)
        assert model.to_text().splitlines()[0] == "feature_len=7"

    def test_text_missing_field(self):
        with pytest.raises(ConfigurationError):
            LogisticModel.from_text("feature_len=1\nbias=0\n")

    def test_estimator_api(self):
        est = LogisticRegressionGD(epochs=3)
        assert est.get_params() == dict(epochs=3, learning_rate=0.1, threshold=0.5)
        assert clone(est).get_params() == est.get_params()

    def test_sigmoid_is_stable(self):
        assert sigmoid(1000.0) == 1.0 and sigmoid(-1000.0) == 0.0
        assert sigmoid(0.0) == 0.5


class TestTrainedPipeline:
    def test_loss_non_increasing(self, trained):
        curve = np.asarray(trained.pipeline[-1].loss_curve_)
        assert curve[-1] <= curve[0]
        assert np.all(np.diff(curve) <= 1e-9)

    def test_test_accuracy(self, trained):
        assert evaluate(trained.pipeline, trained.dataset.test).accuracy >= 0.90

    def test_train_needs_both_classes(self):
        ds = SplitDataset(train=_samples([0, 0, 0]), val=[], test=[])
        with pytest.raises(TrainingError):
            train_logistic(ds, epochs=2)

    def test_accuracy_trend_over_gamma(self, gamma_rows):
        from dualband.simulator import gamma_means

        means = gamma_means(gamma_rows)
        assert means[0.0] >= means[0.5] >= means[1.0]


class TestReferencePredictors:
    def test_oracle(self):
        samples = _samples([0, 1, 1, 0, 1])
        proba, decision = predict(OraclePredictor(), samples)
        np.testing.assert_array_equal(decision, labels_of(samples))
        assert evaluate(OraclePredictor(), samples).accuracy == 1.0

    def test_perfect_confusion_is_oracle(self, rng):
        samples = _samples(rng.integers(0, 2, 300))
        np.testing.assert_array_equal(
            predict(ConfusionPredictor(1.0, 1.0, seed=4), samples)[1], predict(OraclePredictor(), samples)[1]
        )

    def test_confusion_calibration(self):
        samples = _samples(np.arange(10_000) % 2)
        m = evaluate(ConfusionPredictor(0.9278, 0.9278, seed=0), samples)
        assert m.accuracy == pytest.approx(0.9278, abs=0.01)
        assert m.tpr == pytest.approx(0.9278, abs=0.015) and m.tnr == pytest.approx(0.9278, abs=0.015)

    def test_confusion_repeatable(self):
        samples = _samples(np.arange(100) % 2)
        p = ConfusionPredictor(0.7, 0.6, seed=2)
        np.testing.assert_array_equal(p.predict(samples), p.predict(samples))

    def test_confusion_bad_rate(self):
        with pytest.raises(ConfigurationError):
            ConfusionPredictor(1.5, 0.5).predict(_samples([0, 1]))

    def test_constant_zero_on_balanced(self, rng):
        samples = balance(_samples(rng.integers(0, 2, 400)), seed=1)
        assert evaluate(ConstantPredictor(0), samples).accuracy == pytest.approx(0.5, abs=0.01)

    def test_constant_one(self):
        assert evaluate(ConstantPredictor(1), _samples([1, 1, 0, 0])).tpr == 1.0

    def test_evaluate_needs_samples(self):
        with pytest.raises(ConfigurationError):
            evaluate(OraclePredictor(), [])
