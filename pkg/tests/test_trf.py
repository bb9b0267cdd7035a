"""TRF engine: lag semantics, ridge solutions, correlations, file formats."""

import numpy as np
import pytest

from wordtrf import (
    FeatureLayout,
    NeuralRecording,
    NumericalError,
    ValidationError,
    convolve_features,
    design_matrix,
    fit_ridge,
    fit_ridge_multi,
    predict,
    sensor_correlations,
)
from wordtrf.trf import (
    load_model,
    read_recording,
    read_recording_csv,
    save_coefficients_csv,
    save_model,
    write_recording,
    write_recording_csv,
)


from conftest import direct_double_sum


def small_layout(n_features=2, lag_s=0.02, fs=100.0):
    return FeatureLayout(
        names=tuple(f"f{i}" for i in range(n_features)),
        lag_seconds=(lag_s,) * n_features,
        fs=fs,
    )


class TestDesignMatrix:
    def test_impulse_shifts_down_the_lags(self):
        layout = FeatureLayout(names=("f0",), lag_seconds=(0.02,), fs=100.0)  # lags 0..2
        x = np.zeros((1, 20))
        x[0, 10] = 1.0
        design = design_matrix(x, layout)
        assert design.shape == (3, 20)
        for lag in range(3):
            assert design[lag, 10 + lag] == 1.0
            assert design[lag].sum() == 1.0

    def test_zero_series_gives_zero_design(self):
        layout = small_layout()
        design = design_matrix(np.zeros((2, 30)), layout)
        assert not design.any()

    def test_lag_count_rule(self):
        layout = FeatureLayout(names=("a", "b"), lag_seconds=(0.8, 0.6), fs=128.0)
        assert layout.lags_per_feature == (103, 77)
        assert layout.n_rows == 180

    def test_convolution_identity(self):
        """theta applied to the design equals the literal double sum."""
        rng = np.random.default_rng(0)
        layout = FeatureLayout(names=("a", "b", "c"), lag_seconds=(0.03, 0.05, 0.0), fs=100.0)
        x = rng.normal(size=(3, 60))
        theta = rng.normal(size=(layout.n_rows, 2))
        design = design_matrix(x, layout)
        via_design = theta.T @ design
        oracle = direct_double_sum(theta, layout, x)
        np.testing.assert_allclose(via_design, oracle, atol=1e-12)
        np.testing.assert_allclose(convolve_features(x, layout, theta), oracle, atol=1e-12)

    def test_no_wraparound_at_the_start(self):
        """An impulse at t=0 produces the kernel itself; nothing leaks in
        from the end of the recording."""
        layout = FeatureLayout(names=("f0",), lag_seconds=(0.04, ), fs=100.0)  # 5 lags
        x = np.zeros((1, 30))
        x[0, 0] = 1.0
        x[0, 29] = 5.0  # would corrupt t<5 under circular shifts
        kernel = np.arange(1.0, 6.0)[:, None]
        out = convolve_features(x, layout, kernel)
        np.testing.assert_array_equal(out[0, :5], kernel[:, 0])

    def test_shape_mismatch_rejected(self):
        layout = small_layout(n_features=2)
        with pytest.raises(ValidationError, match="does not match layout"):
            design_matrix(np.zeros((3, 10)), layout)

    def test_negative_lag_rejected(self):
        with pytest.raises(ValidationError, match="non-negative"):
            FeatureLayout(names=("a",), lag_seconds=(-0.1,), fs=100.0)


class TestFitRidge:
    def _simulated(self, seed=0, n_sensors=3, n_samples=4000, sigma=0.0):
        rng = np.random.default_rng(seed)
        layout = FeatureLayout(names=("a", "b"), lag_seconds=(0.05, 0.08), fs=100.0)
        x = (rng.uniform(size=(2, n_samples)) < 0.05) * rng.normal(size=(2, n_samples))
        theta0 = rng.normal(size=(layout.n_rows, n_sensors))
        y = convolve_features(x, layout, theta0)
        if sigma:
            y = y + sigma * rng.normal(size=y.shape)
        return layout, x, theta0, y

    def test_noiseless_recovery(self):
        layout, x, theta0, y = self._simulated()
        model = fit_ridge(design_matrix(x, layout), y, layout, ridge=0.0)
        assert np.abs(model.theta - theta0).max() < 1e-8

    def test_large_ridge_shrinks_to_zero(self):
        layout, x, theta0, y = self._simulated()
        model = fit_ridge(design_matrix(x, layout), y, layout, ridge=1e12)
        assert np.abs(model.theta).max() < 1e-6

    def test_noisy_recovery_correlates(self):
        layout, x, theta0, y = self._simulated(seed=1, n_samples=20000, sigma=1.0)
        model = fit_ridge(design_matrix(x, layout), y, layout, ridge=1.0)
        for name in layout.names:
            rows = layout.feature_rows(name)
            r = np.corrcoef(model.theta[rows].ravel(), theta0[rows].ravel())[0, 1]
            assert r > 0.95

    def test_normal_equations_residual(self):
        layout, x, theta0, y = self._simulated(seed=2, sigma=0.5)
        design = design_matrix(x, layout)
        ridge = 2.5
        model = fit_ridge(design, y, layout, ridge=ridge)
        dc = design - design.mean(axis=1, keepdims=True)
        yc = y - y.mean(axis=1, keepdims=True)
        lhs = (dc @ dc.T + ridge * np.eye(layout.n_rows)) @ model.theta
        rhs = dc @ yc.T
        assert np.linalg.norm(lhs - rhs) <= 1e-6 * np.linalg.norm(rhs)

    def test_scaling_y_scales_theta(self):
        layout, x, theta0, y = self._simulated(seed=3, sigma=0.3)
        design = design_matrix(x, layout)
        m1 = fit_ridge(design, y, layout, ridge=1.0)
        m2 = fit_ridge(design, 3.0 * y, layout, ridge=1.0)
        np.testing.assert_allclose(m2.theta, 3.0 * m1.theta, atol=1e-10)

    def test_singular_with_zero_ridge_is_signaled(self):
        layout = FeatureLayout(names=("a", "b"), lag_seconds=(0.0, 0.0), fs=100.0)
        x = np.zeros((2, 500))
        x[0, ::7] = 1.0
        x[1] = x[0]  # duplicate feature: rank-deficient Gram
        y = np.random.default_rng(0).normal(size=(1, 500))
        with pytest.raises(NumericalError, match="singular"):
            fit_ridge(design_matrix(x, layout), y, layout, ridge=0.0)
        fit_ridge(design_matrix(x, layout), y, layout, ridge=1e-6)  # regularized is fine

    def test_negative_ridge_rejected(self):
        layout, x, _, y = self._simulated()
        with pytest.raises(ValidationError, match="non-negative"):
            fit_ridge(design_matrix(x, layout), y, layout, ridge=-1.0)

    def test_sample_mask_equals_fit_on_subset(self):
        layout, x, theta0, y = self._simulated(seed=4, sigma=0.5)
        design = design_matrix(x, layout)
        mask = np.zeros(design.shape[1], dtype=bool)
        mask[1000:3000] = True
        masked = fit_ridge(design, y, layout, ridge=1.0, sample_mask=mask)
        sliced = fit_ridge(design[:, mask], y[:, mask], layout, ridge=1.0)
        np.testing.assert_allclose(masked.theta, sliced.theta, atol=1e-12)

    def test_multi_matches_single(self):
        layout, x, theta0, y = self._simulated(seed=5, sigma=0.5)
        rng = np.random.default_rng(6)
        y2 = y + rng.normal(size=y.shape)
        design = design_matrix(x, layout)
        multi = fit_ridge_multi(design, [y, y2], layout, ridge=1.0)
        single = [fit_ridge(design, yy, layout, ridge=1.0) for yy in (y, y2)]
        for m, s in zip(multi, single):
            np.testing.assert_allclose(m.theta, s.theta, atol=1e-12)

    def test_predict_two_path_consistency(self):
        layout, x, theta0, y = self._simulated(seed=7, sigma=0.5)
        design = design_matrix(x, layout)
        model = fit_ridge(design, y, layout, ridge=1.0)
        offset = model.y_means - model.theta.T @ model.feature_means
        via_design = model.theta.T @ design + offset[:, None]
        np.testing.assert_allclose(predict(model, x), via_design, atol=1e-12)

    def test_zero_theta_predicts_y_mean(self):
        layout = small_layout()
        x = np.zeros((2, 100))
        from wordtrf.trf import TrfModel

        model = TrfModel(
            layout=layout,
            theta=np.zeros((layout.n_rows, 2)),
            ridge=0.0,
            feature_means=np.zeros(layout.n_rows),
            y_means=np.array([1.5, -2.0]),
        )
        out = predict(model, x)
        np.testing.assert_allclose(out[0], 1.5)
        np.testing.assert_allclose(out[1], -2.0)

    def test_unit_lag_zero_coefficient_reproduces_feature(self):
        layout = FeatureLayout(names=("a",), lag_seconds=(0.0,), fs=100.0)
        x = np.random.default_rng(8).normal(size=(1, 50))
        from wordtrf.trf import TrfModel

        model = TrfModel(
            layout=layout,
            theta=np.ones((1, 1)),
            ridge=0.0,
            feature_means=np.zeros(1),
            y_means=np.zeros(1),
        )
        np.testing.assert_allclose(predict(model, x)[0], x[0])


class TestSensorCorrelations:
    def test_identical_is_one(self):
        y = np.random.default_rng(0).normal(size=(4, 200))
        np.testing.assert_allclose(sensor_correlations(y, y), 1.0, atol=1e-12)

    def test_negated_is_minus_one(self):
        y = np.random.default_rng(1).normal(size=(4, 200))
        np.testing.assert_allclose(sensor_correlations(y, -y), -1.0, atol=1e-12)

    def test_affine_invariance(self):
        y = np.random.default_rng(2).normal(size=(3, 100))
        np.testing.assert_allclose(sensor_correlations(y, 2.5 * y + 7.0), 1.0, atol=1e-12)

    def test_zero_variance_signaled(self):
        y = np.ones((2, 50))
        with pytest.raises(NumericalError, match="zero-variance"):
            sensor_correlations(y, np.random.default_rng(0).normal(size=(2, 50)))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError, match="mismatch"):
            sensor_correlations(np.zeros((2, 10)), np.zeros((2, 11)))


class TestRecordingFiles:
    def test_nrc1_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        rec = NeuralRecording(y=rng.normal(size=(3, 77)), fs=128.0, subject="s07")
        path = tmp_path / "s07.nrc"
        write_recording(path, rec)
        loaded = read_recording(path)
        assert loaded.subject == "s07"
        assert loaded.fs == 128.0
        assert loaded.y.shape == (3, 77)
        np.testing.assert_allclose(loaded.y, rec.y, atol=1e-5)  # f32 storage

    def test_nrc1_header_layout(self, tmp_path):
        rec = NeuralRecording(y=np.zeros((2, 5)), fs=64.0)
        path = tmp_path / "r.nrc"
        write_recording(path, rec)
        blob = path.read_bytes()
        assert blob[:4] == b"NRC1"
        assert len(blob) == 4 + 4 + 8 + 8 + 2 * 5 * 4

    def test_nrc1_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nrc"
        path.write_bytes(b"XXXX" + b"\0" * 40)
        with pytest.raises(ValidationError, match="magic"):
            read_recording(path)

    def test_csv_round_trip(self, tmp_path):
        rec = NeuralRecording(y=np.array([[1.0, 2.5], [-3.0, 4.0]]), fs=10.0)
        path = tmp_path / "r.csv"
        write_recording_csv(path, rec)
        loaded = read_recording_csv(path)
        assert loaded.fs == 10.0
        np.testing.assert_array_equal(loaded.y, rec.y)


class TestModelFiles:
    def test_model_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        layout = FeatureLayout(names=("a", "b"), lag_seconds=(0.02, 0.03), fs=100.0)
        from wordtrf.trf import TrfModel

        model = TrfModel(
            layout=layout,
            theta=rng.normal(size=(layout.n_rows, 2)),
            ridge=0.5,
            feature_means=rng.normal(size=layout.n_rows),
            y_means=rng.normal(size=2),
        )
        save_model(tmp_path / "m.json", model, metadata={"variant": "baseline"})
        loaded, meta = load_model(tmp_path / "m.json")
        assert meta == {"variant": "baseline"}
        np.testing.assert_array_equal(loaded.theta, model.theta)
        assert loaded.layout == layout

    def test_coefficient_csv(self, tmp_path):
        layout = FeatureLayout(names=("a",), lag_seconds=(0.01,), fs=100.0)
        from wordtrf.trf import TrfModel

        model = TrfModel(
            layout=layout,
            theta=np.array([[1.0], [2.0]]),
            ridge=0.0,
            feature_means=np.zeros(2),
            y_means=np.zeros(1),
        )
        save_coefficients_csv(tmp_path / "c.csv", model)
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "feature,sensor,lag_s,value"
        assert lines[1] == "a,0,0.0,1.0"
        assert lines[2] == "a,0,0.01,2.0"
