"""Synthetic ground truth: stimuli, priors, recognition dynamics, recordings.

Everything downstream of this module can be verified against the latents
recorded here: true recognition parameters and times, true quantile groups,
and true response kernels.  Kernels are Gaussian bumps (latency, width,
signed amplitude, per-sensor pattern) so peak summaries have analytic
targets.  Word-surprisal kernels may be scaled per recognition-time tertile
to emulate an amplified response for late-recognized words.

Generation is fully seeded: the same config yields byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .features import build_xt, build_xv, tertile_split, unigram_log_frequencies, save_unigrams
from .cohort import transcript_phoneme_features
from .lexicon import ConfusionMatrix, Lexicon, PhonemeInventory, build_confusion, save_confusion_counts, save_lexicon
from .linking import LinkingSpec, model_features
from .recognition import CandidateSet, CognitiveParams, RecognitionResult, recognize_transcript, save_priors
from .transcript import AlignedPhoneme, AlignedWord, StimulusTranscript, save_transcript
from .trf import FeatureLayout, NeuralRecording, convolve_features, write_recording

__all__ = ["KernelSpec", "SynthConfig", "SynthDataset", "generate", "write_dataset", "default_kernels"]

_STOCK_SYMBOLS = (
    "AA", "AE", "AH", "AO", "EH", "ER", "IH", "IY", "UH", "UW", "AY", "OW",
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N",
    "P", "R", "S", "SH", "T", "TH", "V", "W", "Y", "Z", "NG", "ZH",
)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian response bump: peak latency, width (sd), signed amplitude."""

    latency_s: float
    width_s: float
    amplitude: float


def default_kernels() -> dict[str, KernelSpec]:
    kernels = {
        "phoneme_onset": KernelSpec(0.08, 0.03, 0.8),
        "envelope_variance": KernelSpec(0.10, 0.04, 0.5),
        "phoneme_surprisal": KernelSpec(0.25, 0.06, -0.9),
        "phoneme_entropy": KernelSpec(0.20, 0.05, 0.7),
        "word_onset": KernelSpec(0.12, 0.05, 1.35),
        "word_surprisal": KernelSpec(0.40, 0.08, -1.0),
        "word_frequency": KernelSpec(0.30, 0.07, 0.7),
    }
    for band in range(8):
        kernels[f"spectral_{band}"] = KernelSpec(0.09, 0.03, 0.33 if band % 2 == 0 else -0.33)
    return kernels


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    fs: float = 128.0
    n_subjects: int = 2
    n_sensors: int = 4
    n_tokens: int = 300
    inventory_size: int = 12
    lexicon_size: int = 80
    word_length: tuple[int, int] = (2, 5)
    phoneme_duration_s: tuple[float, float] = (0.04, 0.12)
    word_gap_s: tuple[float, float] = (0.0, 0.06)
    n_candidates: int = 12
    truth_prior: tuple[float, float] = (0.05, 0.9)
    candidate_mass: float = 0.98
    acoustic_spread: float = 0.6      # lognormal sigma of the per-phoneme acoustic values
    params: CognitiveParams = field(default_factory=lambda: CognitiveParams(0.6, 1.0, 0.5, 0.5))
    structure: str = "baseline"                    # generative word-feature structure
    tertile_amplitudes: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise_sigma: float | None = 1.0                # exclusive with snr_db
    snr_db: float | None = None
    subject_amplitude_jitter: float = 0.05
    subject_feature_jitter: float = 0.0            # per-subject, per-feature response strength spread
    sublexical_lag_s: float = 0.6
    word_lag_s: float = 0.8
    n_samples: int | None = None                   # pad the timeline to exactly this length
    prefix_free_lexicon: bool = False
    kernels: dict[str, KernelSpec] = field(default_factory=default_kernels)

    def __post_init__(self):
        problems = []
        if self.inventory_size < 2 or self.inventory_size > len(_STOCK_SYMBOLS):
            problems.append(f"inventory_size must be in 2..{len(_STOCK_SYMBOLS)}")
        if not (1 <= self.word_length[0] <= self.word_length[1]):
            problems.append(f"bad word_length {self.word_length}")
        if self.phoneme_duration_s[0] <= 0 or self.phoneme_duration_s[0] > self.phoneme_duration_s[1]:
            problems.append(f"bad phoneme_duration_s {self.phoneme_duration_s}")
        if self.n_candidates < 2 or self.n_candidates > self.lexicon_size:
            problems.append("n_candidates must be in 2..lexicon_size")
        if not (0 < self.truth_prior[0] <= self.truth_prior[1] < 1):
            problems.append(f"bad truth_prior range {self.truth_prior}")
        if not (0 < self.candidate_mass <= 1):
            problems.append(f"candidate_mass must be in (0, 1], got {self.candidate_mass}")
        if self.structure not in ("baseline", "variable"):
            problems.append(f"structure must be 'baseline' or 'variable', got {self.structure!r}")
        if (self.noise_sigma is None) == (self.snr_db is None):
            problems.append("exactly one of noise_sigma and snr_db must be set")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            problems.append("noise_sigma must be non-negative")
        if any(a <= 0 for a in self.tertile_amplitudes):
            problems.append("tertile_amplitudes must be positive")
        if problems:
            raise ValidationError("; ".join(problems))


@dataclass
class SynthDataset:
    """Generated inputs plus every latent needed to verify a fit."""

    config: SynthConfig
    inventory: PhonemeInventory
    lexicon: Lexicon
    confusion_counts: np.ndarray
    confusion_labels: list[str]
    confusion: ConfusionMatrix
    transcript: StimulusTranscript
    priors: dict[int, CandidateSet]
    unigram_counts: dict[str, int]
    recordings: list[NeuralRecording]
    results: list[RecognitionResult]
    layout: FeatureLayout
    theta0: np.ndarray                  # (layout rows, sensors), before subject jitter
    subject_scales: list[float]
    quantile_edges: tuple[float, float] | None
    tertile_assignment: np.ndarray | None
    x_full: np.ndarray                  # model input series used for generation

    def sidecar(self) -> dict:
        cfg = asdict(self.config)
        cfg["params"] = asdict(self.config.params)
        cfg["kernels"] = {k: asdict(v) for k, v in self.config.kernels.items()}
        payload = {
            "config": cfg,
            "true_params": asdict(self.config.params),
            "layout": {
                "names": list(self.layout.names),
                "lag_seconds": list(self.layout.lag_seconds),
                "fs": self.layout.fs,
            },
            "theta0": {
                name: self.theta0[self.layout.feature_rows(name)].T.tolist()
                for name in self.layout.names
            },
            "subject_scales": self.subject_scales,
            "quantile_edges": list(self.quantile_edges) if self.quantile_edges else None,
            "tokens": [
                {
                    "token_index": r.token_index,
                    "k_star": r.k_star,
                    "tau_s": r.tau_s,
                    "threshold_reached": r.threshold_reached,
                    "tertile": int(self.tertile_assignment[i]) if self.tertile_assignment is not None else None,
                }
                for i, r in enumerate(self.results)
            ],
        }
        return payload


def _make_lexicon(rng: np.random.Generator, config: SynthConfig) -> tuple[PhonemeInventory, Lexicon]:
    inventory = PhonemeInventory(_STOCK_SYMBOLS[: config.inventory_size])
    sequences: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    while len(sequences) < config.lexicon_size:
        attempts += 1
        if attempts > 200 * config.lexicon_size:
            raise ValidationError(
                "could not generate enough distinct wordforms; enlarge the inventory or relax prefix_free_lexicon"
            )
        length = int(rng.integers(config.word_length[0], config.word_length[1] + 1))
        seq = tuple(int(p) for p in rng.integers(0, config.inventory_size, size=length))
        if seq in seen:
            continue
        if config.prefix_free_lexicon and any(
            s[: len(seq)] == seq or seq[: len(s)] == s for s in seen
        ):
            continue
        seen.add(seq)
        sequences.append(seq)
    entries = {f"w{idx:03d}": seq for idx, seq in enumerate(sequences)}
    return inventory, Lexicon(inventory, entries)


def _make_confusion(rng: np.random.Generator, inventory: PhonemeInventory, lam: float):
    n = len(inventory)
    counts = rng.poisson(1.5, size=(n, n)).astype(float)
    counts[np.diag_indices(n)] = rng.integers(40, 120, size=n)
    labels = list(inventory.symbols)
    return counts, labels, build_confusion(counts, labels, lam, inventory)


def _make_transcript(rng: np.random.Generator, config: SynthConfig, lexicon: Lexicon, word_weights: np.ndarray):
    forms = lexicon.forms()
    words = []
    clock = 0.1
    for token_index in range(config.n_tokens):
        form = forms[int(rng.choice(len(forms), p=word_weights))]
        seq = lexicon.phonemes(form)
        onset = 0.0
        phonemes = []
        for p in seq:
            dur = float(rng.uniform(*config.phoneme_duration_s))
            # centered lognormals: skewed like real acoustic summaries but
            # mean-zero, so same-sample channels stay decorrelated
            spread = config.acoustic_spread
            center = math.exp(spread**2 / 2.0)
            acoustic = rng.lognormal(0.0, spread, size=9) - center
            phonemes.append(
                AlignedPhoneme(
                    symbol=lexicon.inventory.symbols[p],
                    onset_s=onset,
                    duration_s=dur,
                    envelope_var=float(acoustic[0]),
                    spectral=tuple(float(v) for v in acoustic[1:]),
                )
            )
            onset += dur
        words.append(AlignedWord(token_index=token_index, form=form, onset_s=clock, phonemes=tuple(phonemes)))
        clock += onset + float(rng.uniform(*config.word_gap_s))
    return StimulusTranscript(words)


def _make_priors(rng: np.random.Generator, config: SynthConfig, lexicon: Lexicon, transcript: StimulusTranscript):
    forms = lexicon.forms()
    priors: dict[int, CandidateSet] = {}
    for word in transcript:
        truth = word.form
        others = [f for f in forms if f != truth]
        chosen = rng.choice(len(others), size=config.n_candidates - 1, replace=False)
        distractors = [others[int(i)] for i in chosen]
        f_truth = float(rng.uniform(*config.truth_prior))
        weights = rng.dirichlet(np.ones(len(distractors)))
        cand_forms = [truth] + distractors
        cand_priors = np.concatenate(([f_truth], (1.0 - f_truth) * weights)) * config.candidate_mass
        priors[word.token_index] = CandidateSet(word.token_index, cand_forms, cand_priors, truth)
    return priors


def _kernel_tensor(rng: np.random.Generator, config: SynthConfig, layout: FeatureLayout) -> np.ndarray:
    """Gaussian bumps times a per-feature sensor pattern.

    Grouped rows (feature:tertile) share their base feature's bump and
    pattern, so the tertile amplitudes are the only between-group
    difference and only for the word-surprisal response.
    """
    theta0 = np.zeros((layout.n_rows, config.n_sensors))
    tertile_scale = dict(zip(("early", "mid", "late"), config.tertile_amplitudes))
    patterns: dict[str, np.ndarray] = {}
    for f, name in enumerate(layout.names):
        base = name.split(":")[0]
        try:
            spec = config.kernels[base]
        except KeyError:
            raise ValidationError(f"no kernel spec for feature {base!r}") from None
        if base not in patterns:
            patterns[base] = rng.uniform(0.4, 1.0, size=config.n_sensors) * rng.choice(
                (1.0, -1.0), size=config.n_sensors, p=(0.8, 0.2)
            )
        scale = 1.0
        if ":" in name and base == "word_surprisal":
            scale = tertile_scale[name.split(":")[1]]
        lags_s = np.arange(layout.n_lags(f)) / layout.fs
        bump = spec.amplitude * scale * np.exp(-0.5 * ((lags_s - spec.latency_s) / spec.width_s) ** 2)
        rows = slice(layout.offsets[f], layout.offsets[f] + layout.n_lags(f))
        theta0[rows] = bump[:, None] * patterns[base][None, :]
    return theta0


def generate(config: SynthConfig) -> SynthDataset:
    """Generate one fully-specified synthetic dataset from a seeded config."""
    seed_seq = np.random.SeedSequence(config.seed)
    streams = seed_seq.spawn(5 + config.n_subjects)
    rng_lex, rng_conf, rng_stim, rng_prior, rng_kern = (np.random.default_rng(s) for s in streams[:5])

    inventory, lexicon = _make_lexicon(rng_lex, config)
    counts, labels, confusion = _make_confusion(rng_conf, inventory, config.params.lam)

    ranks = np.arange(1, config.lexicon_size + 1, dtype=float)
    word_weights = (1.0 / ranks) / (1.0 / ranks).sum()
    transcript = _make_transcript(rng_stim, config, lexicon, word_weights)
    priors = _make_priors(rng_prior, config, lexicon, transcript)
    # corpus frequencies deliberately independent of usage in this stimulus,
    # spanning several decades, so the frequency feature carries its own
    # variance instead of shadowing the onset feature
    unigram_counts = {
        form: int(round(10 ** rng_stim.uniform(0.0, 6.0))) + 1 for form in lexicon.forms()
    }

    results = recognize_transcript(transcript, priors, config.params, confusion, lexicon)

    needed = int(math.ceil((transcript.end_s + config.word_lag_s + 0.25) * config.fs))
    n_samples = needed if config.n_samples is None else config.n_samples
    if n_samples < needed:
        raise ValidationError(
            f"n_samples={n_samples} too short for the generated stimulus (needs {needed})"
        )

    phoneme_rows = transcript_phoneme_features(transcript, priors, lexicon)
    xt = build_xt(transcript, phoneme_rows, config.fs, n_samples)
    xv = build_xv(transcript, priors, unigram_log_frequencies(unigram_counts))

    qsplit = None
    assignment = None
    if config.structure == "variable":
        taus = np.array([r.tau_s for r in results])
        qsplit = tertile_split(taus, variable="recognition_time")
        assignment = qsplit.assign(taus)
    spec = LinkingSpec(variant=config.structure, split=qsplit)
    x_full, layout = model_features(
        xt, spec, xv, results, transcript, config.sublexical_lag_s, config.word_lag_s
    )
    theta0 = _kernel_tensor(rng_kern, config, layout)

    base_features = sorted({name.split(":")[0] for name in layout.names})
    recordings = []
    subject_scales = []
    for j in range(config.n_subjects):
        rng_subj = np.random.default_rng(streams[5 + j])
        scale = float(1.0 + config.subject_amplitude_jitter * rng_subj.standard_normal())
        subject_scales.append(scale)
        theta_j = theta0 * scale
        if config.subject_feature_jitter > 0:
            # response strengths differ per subject and feature; grouped rows
            # share their base feature's multiplier so a null stays a null
            mult = {
                base: float(max(0.1, 1.0 + config.subject_feature_jitter * rng_subj.standard_normal()))
                for base in base_features
            }
            theta_j = theta_j.copy()
            for f, name in enumerate(layout.names):
                rows = slice(layout.offsets[f], layout.offsets[f] + layout.n_lags(f))
                theta_j[rows] *= mult[name.split(":")[0]]
        clean = convolve_features(x_full, layout, theta_j)
        if config.snr_db is not None:
            power = clean.var(axis=1, keepdims=True)
            sigma = np.sqrt(power * 10 ** (-config.snr_db / 10.0))
            noise = sigma * rng_subj.standard_normal(clean.shape)
        elif config.noise_sigma > 0:
            noise = config.noise_sigma * rng_subj.standard_normal(clean.shape)
        else:
            noise = 0.0
        recordings.append(NeuralRecording(y=clean + noise, fs=config.fs, subject=f"s{j:02d}"))

    return SynthDataset(
        config=config,
        inventory=inventory,
        lexicon=lexicon,
        confusion_counts=counts,
        confusion_labels=labels,
        confusion=confusion,
        transcript=transcript,
        priors=priors,
        unigram_counts=unigram_counts,
        recordings=recordings,
        results=results,
        layout=layout,
        theta0=theta0,
        subject_scales=subject_scales,
        quantile_edges=qsplit.edges if qsplit else None,
        tertile_assignment=assignment,
        x_full=x_full,
    )


def write_dataset(out_dir, data: SynthDataset) -> None:
    """Write every interchange file plus the ground-truth sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_lexicon(out_dir / "lexicon.jsonl", data.lexicon)
    save_confusion_counts(out_dir / "confusion.csv", data.confusion_counts, data.confusion_labels)
    save_transcript(out_dir / "transcript.jsonl", data.transcript)
    save_priors(out_dir / "priors.jsonl", data.priors)
    save_unigrams(out_dir / "unigrams.csv", data.unigram_counts)
    rec_dir = out_dir / "recordings"
    rec_dir.mkdir(exist_ok=True)
    for rec in data.recordings:
        write_recording(rec_dir / f"{rec.subject}.nrc", rec)
    (out_dir / "sidecar.json").write_text(json.dumps(data.sidecar(), sort_keys=True, indent=2) + "\n")
