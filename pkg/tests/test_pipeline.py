"""Splits, guard bands, cross-validated search, leakage and determinism."""

import dataclasses
import json

import numpy as np
import pytest

from wordtrf import (
    CognitiveParams,
    NeuralRecording,
    NumericalError,
    PipelineData,
    SearchSpace,
    ValidationError,
    evaluate_params,
    guard_trimmed,
    search,
    split_data,
)
from wordtrf.features import unigram_log_frequencies
from wordtrf.pipeline import save_report, save_trial_history
from wordtrf.synth import SynthConfig, generate


def pipeline_from_synth(data, sublex=0.2, word=0.3):
    return PipelineData.build(
        data.transcript,
        data.priors,
        data.lexicon,
        data.confusion,
        data.recordings,
        unigram_log_frequencies(data.unigram_counts),
        sublexical_lag_s=sublex,
        word_lag_s=word,
    )


SMALL = SynthConfig(
    seed=13, fs=64, n_subjects=2, n_sensors=3, n_tokens=110, lexicon_size=40,
    structure="variable", tertile_amplitudes=(1.0, 1.5, 2.0), noise_sigma=0.8,
    sublexical_lag_s=0.2, word_lag_s=0.3,
)


@pytest.fixture(scope="module")
def small_data():
    return generate(SMALL)


@pytest.fixture(scope="module")
def small_pipeline(small_data):
    return pipeline_from_synth(small_data)


class TestSplitData:
    def test_thousand_sample_arithmetic(self):
        split = split_data(1000)
        assert split.test_start == 750
        assert split.test_mask().sum() == 250
        assert np.flatnonzero(split.test_mask())[0] == 750
        sizes = [split.fold_mask(f).sum() for f in range(4)]
        assert sorted(sizes) == [187, 187, 188, 188]
        assert sum(sizes) == 750

    def test_folds_tile_the_training_span(self):
        split = split_data(997, fraction=0.25, n_folds=4)
        combined = np.zeros(997, dtype=bool)
        for f in range(4):
            mask = split.fold_mask(f)
            assert not (combined & mask).any()
            combined |= mask
        np.testing.assert_array_equal(combined, split.train_mask())

    def test_shared_timeline_across_subjects(self):
        rng = np.random.default_rng(0)
        recs = [NeuralRecording(y=rng.normal(size=(2, 400)), fs=50.0, subject=f"s{i}") for i in range(2)]
        split = split_data(recs)
        assert split.test_start == 300
        assert split == split_data(400)

    def test_mismatched_timelines_rejected(self):
        rng = np.random.default_rng(0)
        recs = [
            NeuralRecording(y=rng.normal(size=(2, 400)), fs=50.0),
            NeuralRecording(y=rng.normal(size=(2, 401)), fs=50.0),
        ]
        with pytest.raises(ValidationError, match="share a stimulus timeline"):
            split_data(recs)

    def test_too_short_rejected(self):
        with pytest.raises(ValidationError, match="too short"):
            split_data(4)

    def test_token_assignment_by_onset_sample(self, small_data, small_pipeline):
        """A word occupies the partition holding its onset sample even when
        its phonemes straddle the boundary."""
        split = split_data(small_pipeline.recordings)
        mask = small_pipeline.train_token_mask(split)
        boundary_t = split.test_start / small_pipeline.fs
        for word, in_train in zip(small_pipeline.transcript, mask):
            onset_sample = int(np.floor(word.onset_s * small_pipeline.fs + 0.5))
            assert in_train == (onset_sample < split.test_start)
        # the transcript was built continuously, so some word spans the cut
        spans = [
            (w.onset_s, w.onset_s + w.duration_s) for w in small_pipeline.transcript
        ]
        assert any(a < boundary_t <= b for a, b in spans) or any(
            abs(a - boundary_t) < 0.3 for a, _ in spans
        )


class TestGuardTrimmed:
    def test_drops_segment_starts(self):
        mask = np.array([True] * 5 + [False] * 3 + [True] * 6)
        trimmed = guard_trimmed(mask, guard=2)
        expected = np.array([False, False, True, True, True] + [False] * 3 + [False, False] + [True] * 4)
        np.testing.assert_array_equal(trimmed, expected)

    def test_zero_guard_is_identity(self):
        mask = np.array([True, False, True, True])
        np.testing.assert_array_equal(guard_trimmed(mask, 0), mask)


class TestEvaluateParams:
    def test_objective_is_finite_and_reasonable(self, small_pipeline):
        split = split_data(small_pipeline.recordings)
        params = CognitiveParams(0.6, 1.0, 0.5, 0.5)
        objective, fold_scores, _ = evaluate_params(small_pipeline, split, "variable", params, ridge=1.0)
        assert np.isfinite(objective)
        assert len(fold_scores) == 4
        assert objective > 0.2  # real signal in the synthetic data

    def test_cv_variance_shrinks_with_noise(self):
        """Cleaner recordings give more stable fold scores."""
        spreads = []
        for sigma in (2.0, 0.1):
            cfg = dataclasses.replace(SMALL, noise_sigma=sigma, seed=29)
            pdata = pipeline_from_synth(generate(cfg))
            split = split_data(pdata.recordings)
            _, fold_scores, _ = evaluate_params(
                pdata, split, "variable", CognitiveParams(0.6, 1.0, 0.5, 0.5), ridge=1.0
            )
            spreads.append(np.var(fold_scores))
        assert spreads[1] < spreads[0]


class TestSearch:
    def test_budget_one_is_a_single_manual_fit(self, small_pipeline):
        split = split_data(small_pipeline.recordings)
        space = SearchSpace(budget=1, seed=5, ridge=(1.0,))
        report = search(small_pipeline, split, "variable", space)
        assert len(report.trials) == 1
        rng = np.random.default_rng(5)
        params, ridge = space.sample(rng)
        assert report.best_params["gamma"] == params.gamma
        assert report.best_params["ridge"] == ridge
        objective, _, _ = evaluate_params(small_pipeline, split, "variable", params, ridge)
        assert report.best_objective == objective

    def test_zero_budget_rejected(self, small_pipeline):
        split = split_data(small_pipeline.recordings)
        with pytest.raises(ValidationError, match="budget"):
            search(small_pipeline, split, "baseline", SearchSpace(budget=0))

    def test_seeded_reproducibility(self, small_pipeline, tmp_path):
        split = split_data(small_pipeline.recordings)
        space = SearchSpace(budget=3, seed=17, ridge=(1.0, 10.0))
        r1 = search(small_pipeline, split, "variable", space)
        r2 = search(small_pipeline, split, "variable", space)
        assert r1.trials == r2.trials
        assert r1.to_payload() == r2.to_payload()
        save_report(tmp_path / "a.json", r1)
        save_report(tmp_path / "b.json", r2)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        save_trial_history(tmp_path / "a.csv", r1.trials)
        save_trial_history(tmp_path / "b.csv", r2.trials)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_no_test_leakage(self, small_data, small_pipeline):
        """Replacing the held-out span with garbage leaves every training
        artifact byte-identical; only test scores move."""
        split = split_data(small_pipeline.recordings)
        space = SearchSpace(budget=2, seed=23, ridge=(1.0,))
        report_clean = search(small_pipeline, split, "variable", space)

        corrupted = []
        rng = np.random.default_rng(999)
        for rec in small_data.recordings:
            y = rec.y.copy()
            y[:, split.test_start:] = rng.normal(size=y[:, split.test_start:].shape) * 50
            corrupted.append(NeuralRecording(y=y, fs=rec.fs, subject=rec.subject))
        pdata_corrupt = dataclasses.replace(small_pipeline, recordings=corrupted)
        report_corrupt = search(pdata_corrupt, split, "variable", space)

        assert report_clean.trials == report_corrupt.trials
        for m_clean, m_corrupt in zip(report_clean.models, report_corrupt.models):
            assert m_clean.theta.tobytes() == m_corrupt.theta.tobytes()
        assert report_clean.test_scores != report_corrupt.test_scores

    def test_baseline_flags_all_recognition_parameters(self, small_pipeline):
        split = split_data(small_pipeline.recordings)
        report = search(small_pipeline, split, "baseline", SearchSpace(budget=2, seed=3, ridge=(1.0,)))
        assert report.insensitive_params == ["gamma", "lam", "alpha", "alpha_p"]

    def test_variable_keeps_parameters_sensitive(self, small_pipeline):
        split = split_data(small_pipeline.recordings)
        report = search(small_pipeline, split, "variable", SearchSpace(budget=2, seed=3, ridge=(1.0,)))
        assert "gamma" not in report.insensitive_params

    def test_discarded_trials_are_logged(self, small_data, small_pipeline):
        """A recording that is constant over a validation fold poisons the
        correlation; the trial is discarded and the search reports it."""
        split = split_data(small_pipeline.recordings)
        flat = []
        for rec in small_data.recordings:
            y = rec.y.copy()
            y[:, split.fold_bounds[1]: split.fold_bounds[2]] = 0.0
            flat.append(NeuralRecording(y=y, fs=rec.fs, subject=rec.subject))
        pdata = dataclasses.replace(small_pipeline, recordings=flat)
        with pytest.raises(NumericalError, match="discarded"):
            search(pdata, split, "baseline", SearchSpace(budget=1, seed=3, ridge=(1.0,)))

    def test_guided_mode_is_reproducible(self, small_pipeline):
        split = split_data(small_pipeline.recordings)
        space = SearchSpace(budget=8, seed=31, ridge=(1.0,), guided=True)
        r1 = search(small_pipeline, split, "variable", space)
        r2 = search(small_pipeline, split, "variable", space)
        assert r1.trials == r2.trials


class TestSearchSpaceValidation:
    def test_sampled_trials_respect_bounds(self):
        space = SearchSpace(gamma=(0.2, 0.4), lam=(0.5, 2.0), alpha=(0.1, 0.3),
                            alpha_p=(0.6, 0.8), ridge=(1.0, 10.0), budget=1, seed=0)
        rng = np.random.default_rng(123)
        for _ in range(200):
            params, ridge = space.sample(rng)
            assert 0.2 <= params.gamma <= 0.4
            assert 0.5 <= params.lam <= 2.0
            assert 0.1 <= params.alpha <= 0.3
            assert 0.6 <= params.alpha_p <= 0.8
            assert ridge in space.ridge
            near, near_ridge = space.sample_near(rng, params, ridge, scale=0.5)
            assert 0.2 <= near.gamma <= 0.4
            assert 0.5 <= near.lam <= 2.0
            assert 0.1 <= near.alpha <= 0.3
            assert 0.6 <= near.alpha_p <= 0.8

    def test_every_violation_is_enumerated(self):
        with pytest.raises(ValidationError) as err:
            SearchSpace(gamma=(0.0, 1.5), alpha=(0.9, 0.1), ridge=(), budget=-1)
        message = str(err.value)
        for fragment in ("gamma", "alpha", "ridge", "budget"):
            assert fragment in message

    def test_lam_bounds_must_be_finite_positive(self):
        with pytest.raises(ValidationError, match="lam"):
            SearchSpace(lam=(0.0, 10.0))
