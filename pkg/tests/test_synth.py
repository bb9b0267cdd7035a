"""Generator invariants: exact forward model, determinism, recognition spread."""

import dataclasses
import filecmp

import numpy as np
import pytest

from wordtrf import ValidationError, design_matrix, fit_ridge
from wordtrf.synth import SynthConfig, generate, write_dataset

from conftest import direct_double_sum

TINY = SynthConfig(
    seed=2, fs=32, n_subjects=1, n_sensors=2, n_tokens=12, lexicon_size=20,
    word_length=(2, 3), noise_sigma=0.0, subject_amplitude_jitter=0.0,
    sublexical_lag_s=0.1, word_lag_s=0.15,
)


class TestForwardModel:
    def test_noiseless_signal_is_the_literal_double_sum(self):
        data = generate(TINY)
        y = data.recordings[0].y
        oracle = direct_double_sum(data.theta0, data.layout, data.x_full)
        np.testing.assert_allclose(y, oracle, atol=1e-12)

    def test_noiseless_fit_recovers_kernels(self):
        data = generate(dataclasses.replace(TINY, n_tokens=40, seed=4))
        design = design_matrix(data.x_full, data.layout)
        model = fit_ridge(design, data.recordings[0].y, data.layout, ridge=0.0)
        assert np.abs(model.theta - data.theta0).max() < 1e-8

    def test_snr_sets_per_sensor_noise_power(self):
        cfg = dataclasses.replace(TINY, n_tokens=150, noise_sigma=None, snr_db=0.0, seed=8)
        data = generate(cfg)
        clean = direct_double_sum(data.theta0, data.layout, data.x_full) * data.subject_scales[0]
        noise = data.recordings[0].y - clean
        ratio = clean.var(axis=1) / noise.var(axis=1)
        np.testing.assert_allclose(ratio, 1.0, rtol=0.2)  # 0 dB per sensor


class TestGeneratedObjects:
    def test_transcript_invariants_hold(self):
        data = generate(dataclasses.replace(TINY, n_tokens=50, seed=6))
        onsets = [w.onset_s for w in data.transcript]
        assert onsets == sorted(onsets)
        for word in data.transcript:
            ph_onsets = [p.onset_s for p in word.phonemes]
            assert all(b > a for a, b in zip(ph_onsets, ph_onsets[1:]))
            assert all(p.duration_s > 0 for p in word.phonemes)

    def test_priors_are_valid_candidate_sets(self):
        data = generate(TINY)
        for word in data.transcript:
            cands = data.priors[word.token_index]
            assert cands.ground_truth == word.form
            assert cands.priors.sum() <= 1.0 + 1e-9

    def test_variable_structure_records_tertiles(self):
        cfg = dataclasses.replace(
            TINY, structure="variable", tertile_amplitudes=(1.0, 1.5, 2.0), n_tokens=60, seed=9
        )
        data = generate(cfg)
        assert data.tertile_assignment is not None
        counts = np.bincount(data.tertile_assignment, minlength=3)
        assert counts.sum() == 60
        assert counts.max() - counts.min() <= 2
        # the late-group surprisal kernel really is 2x the early one
        early = data.theta0[data.layout.feature_rows("word_surprisal:early")]
        late = data.theta0[data.layout.feature_rows("word_surprisal:late")]
        np.testing.assert_allclose(late, 2.0 * early, atol=1e-12)

    def test_prefix_free_option(self):
        cfg = dataclasses.replace(TINY, prefix_free_lexicon=True, lexicon_size=15)
        data = generate(cfg)
        seqs = list(data.lexicon.entries.values())
        for i, a in enumerate(seqs):
            for b in seqs[i + 1:]:
                assert a[: len(b)] != b and b[: len(a)] != a

    def test_config_validation_enumerates_problems(self):
        with pytest.raises(ValidationError) as err:
            SynthConfig(n_candidates=1, structure="nope", noise_sigma=None)
        for fragment in ("n_candidates", "structure", "noise_sigma"):
            assert fragment in str(err.value)

    def test_n_samples_padding_and_overrun(self):
        data = generate(dataclasses.replace(TINY, n_samples=4000))
        assert data.recordings[0].n_samples == 4000
        with pytest.raises(ValidationError, match="too short"):
            generate(dataclasses.replace(TINY, n_samples=10))


class TestDeterminism:
    def test_same_seed_gives_byte_identical_files(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        write_dataset(a_dir, generate(TINY))
        write_dataset(b_dir, generate(TINY))
        names = [p.name for p in a_dir.iterdir() if p.is_file()]
        match, mismatch, errors = filecmp.cmpfiles(a_dir, b_dir, names, shallow=False)
        assert not mismatch and not errors
        rec_names = [p.name for p in (a_dir / "recordings").iterdir()]
        match, mismatch, errors = filecmp.cmpfiles(
            a_dir / "recordings", b_dir / "recordings", rec_names, shallow=False
        )
        assert not mismatch and not errors

    def test_different_seeds_differ(self):
        a = generate(TINY)
        b = generate(dataclasses.replace(TINY, seed=3))
        ya, yb = a.recordings[0].y, b.recordings[0].y
        assert ya.shape != yb.shape or (ya != yb).any()


class TestRecognitionSpread:
    def test_sharper_priors_recognize_earlier(self):
        """Stochastic dominance over seeds: concentrating prior mass on the
        truth shifts the recognition-time distribution earlier."""
        for seed in (11, 12, 13):
            sharp = generate(dataclasses.replace(
                TINY, n_tokens=80, seed=seed, truth_prior=(0.5, 0.95)))
            flat = generate(dataclasses.replace(
                TINY, n_tokens=80, seed=seed, truth_prior=(0.02, 0.2)))
            tau_sharp = np.array([r.tau_s for r in sharp.results])
            tau_flat = np.array([r.tau_s for r in flat.results])
            for q in (0.25, 0.5, 0.75):
                assert np.quantile(tau_sharp, q) <= np.quantile(tau_flat, q)

    def test_recognition_matches_cognitive_module(self):
        """The sidecar's recognition outcomes are exactly what the
        recognition model produces from the emitted files."""
        from wordtrf import recognize_transcript

        data = generate(TINY)
        redo = recognize_transcript(
            data.transcript, data.priors, data.config.params, data.confusion, data.lexicon
        )
        for a, b in zip(data.results, redo):
            assert a.token_index == b.token_index
            assert a.k_star == b.k_star
            assert a.tau_s == b.tau_s
