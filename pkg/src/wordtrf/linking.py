"""Linking models tying word-level features to the neural response.

Four variants differ in where word features are deposited on the timeline
and whether coefficients are shared across words:

* ``baseline``: one response per feature, time-locked to word onset.
* ``shift``: one response per feature, time-locked to recognition time.
* ``variable``: separate responses for early/mid/late-recognized words,
  time-locked to word onset.
* ``prior_variable``: separate responses for low/mid/high-surprisal words,
  time-locked to word onset.

Quantile groups are always assigned with edges fitted on training tokens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .exceptions import ValidationError
from .features import WORD_FEATURES, FeatureSeries, QuantileSplit, WordFeatures, nearest_sample
from .recognition import RecognitionResult
from .transcript import StimulusTranscript
from .trf import FeatureLayout, TrfModel, sensor_correlations

__all__ = [
    "LINKING_VARIANTS",
    "LinkingSpec",
    "group_labels",
    "assemble_word_design",
    "model_features",
    "ModelComparison",
    "paired_ttest",
    "compare_fit",
    "save_comparison",
    "coefficient_peak",
]

LINKING_VARIANTS = ("baseline", "shift", "variable", "prior_variable")

_GROUPS = {"variable": ("early", "mid", "late"), "prior_variable": ("low", "mid", "high")}


def group_labels(variant: str) -> tuple[str, ...]:
    return _GROUPS[variant]


@dataclass(frozen=True)
class LinkingSpec:
    """Choice of linking variant plus the quantile split it may need."""

    variant: str
    split: QuantileSplit | None = None

    def __post_init__(self):
        if self.variant not in LINKING_VARIANTS:
            raise ValidationError(f"unknown linking variant {self.variant!r}; choose from {LINKING_VARIANTS}")
        if self.variant in _GROUPS and self.split is None:
            raise ValidationError(f"variant {self.variant!r} needs a fitted quantile split")

    @property
    def word_feature_names(self) -> tuple[str, ...]:
        if self.variant in _GROUPS:
            labels = _GROUPS[self.variant]
            return tuple(f"{feat}:{g}" for feat in WORD_FEATURES for g in labels)
        return WORD_FEATURES


def assemble_word_design(
    spec: LinkingSpec,
    xv: WordFeatures,
    results: list[RecognitionResult] | None,
    transcript: StimulusTranscript,
    fs: float,
    n_samples: int,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Deposit word features onto the timeline according to a linking variant.

    Returns the word-feature block (rows x samples) and its row names.
    Baseline variants deposit at word onset; the shift variant at onset
    plus recognition time.  Variable variants route each word's features
    into the rows of its quantile group only.
    """
    names = spec.word_feature_names
    needs_results = spec.variant in ("shift", "variable")
    if needs_results:
        if results is None:
            raise ValidationError(f"variant {spec.variant!r} needs recognition results")
        if len(results) != xv.n_words:
            raise ValidationError(f"{len(results)} recognition results for {xv.n_words} words")
        for r, tok in zip(results, xv.token_indices):
            if r.token_index != tok:
                raise ValidationError(f"recognition results misaligned at token {tok}")

    if spec.variant == "variable":
        groups = spec.split.assign([r.tau_s for r in results])
    elif spec.variant == "prior_variable":
        groups = spec.split.assign(xv.surprisal)
    else:
        groups = np.zeros(xv.n_words, dtype=int)

    block = np.zeros((len(names), n_samples))
    n_groups = 3 if spec.variant in _GROUPS else 1
    for i in range(xv.n_words):
        t = xv.onsets_s[i]
        if spec.variant == "shift":
            t = t + results[i].tau_s
        sample = nearest_sample(t, fs)
        if not (0 <= sample < n_samples):
            raise ValidationError(
                f"token {xv.token_indices[i]}: word feature at {t:.4f}s maps to sample {sample}, "
                f"outside 0..{n_samples - 1}"
            )
        g = int(groups[i])
        for feat in range(len(WORD_FEATURES)):
            block[feat * n_groups + g, sample] += xv.matrix[feat, i]
    return block, names


def model_features(
    xt: FeatureSeries,
    spec: LinkingSpec,
    xv: WordFeatures,
    results: list[RecognitionResult] | None,
    transcript: StimulusTranscript,
    sublexical_lag_s: float = 0.6,
    word_lag_s: float = 0.8,
) -> tuple[np.ndarray, FeatureLayout]:
    """Stack sublexical and word-feature series into one model input.

    The returned layout assigns the sublexical lag window to every control
    channel and the word lag window to every word-feature row.
    """
    word_block, word_names = assemble_word_design(spec, xv, results, transcript, xt.fs, xt.n_samples)
    x = np.vstack([xt.matrix, word_block])
    layout = FeatureLayout(
        names=tuple(xt.channels) + tuple(word_names),
        lag_seconds=(sublexical_lag_s,) * len(xt.channels) + (word_lag_s,) * len(word_names),
        fs=xt.fs,
    )
    return x, layout


# ---------------------------------------------------------------------------
# Model comparison


@dataclass(frozen=True)
class ModelComparison:
    """Paired comparison of two models' held-out prediction scores."""

    model_a: str
    model_b: str
    subjects: tuple[str, ...]
    scores_a: np.ndarray
    scores_b: np.ndarray
    t: float
    p: float
    zero_variance: bool

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def differences(self) -> np.ndarray:
        return self.scores_a - self.scores_b


def paired_ttest(differences) -> tuple[float, float, bool]:
    """Two-sided paired t-test on per-subject score differences.

    Returns (t, p, zero_variance).  With all differences identical the
    statistic is undefined; by convention t=0, p=1, and the flag is set.
    p comes from the Student-t CDF via the regularized incomplete beta.
    """
    d = np.asarray(differences, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValidationError(f"paired t-test needs at least 2 paired values, got {d.size}")
    n = d.size
    sd = d.std(ddof=1)
    if sd == 0:
        return 0.0, 1.0, True
    t = d.mean() / (sd / np.sqrt(n))
    dof = n - 1
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return float(t), p, False


def compare_fit(
    predictions_a: dict[str, np.ndarray],
    predictions_b: dict[str, np.ndarray],
    observed: dict[str, np.ndarray],
    sample_mask=None,
    model_a: str = "model_a",
    model_b: str = "model_b",
) -> ModelComparison:
    """Compare two models: per-subject sensor-mean Pearson r, paired t-test.

    ``predictions_a``, ``predictions_b``, and ``observed`` map subject ids
    to (sensors, samples) arrays over the same test partition.
    """
    subjects = sorted(observed)
    if sorted(predictions_a) != subjects or sorted(predictions_b) != subjects:
        raise ValidationError("subject sets differ between models and observations")
    if len(subjects) < 2:
        raise ValidationError("model comparison needs at least 2 subjects")
    scores_a = np.array(
        [sensor_correlations(observed[s], predictions_a[s], sample_mask).mean() for s in subjects]
    )
    scores_b = np.array(
        [sensor_correlations(observed[s], predictions_b[s], sample_mask).mean() for s in subjects]
    )
    t, p, flat = paired_ttest(scores_a - scores_b)
    return ModelComparison(
        model_a=model_a,
        model_b=model_b,
        subjects=tuple(subjects),
        scores_a=scores_a,
        scores_b=scores_b,
        t=t,
        p=p,
        zero_variance=flat,
    )


def save_comparison(path, comparison: ModelComparison) -> None:
    payload = {
        "model_a": comparison.model_a,
        "model_b": comparison.model_b,
        "per_subject_scores": {
            s: [float(a), float(b)]
            for s, a, b in zip(comparison.subjects, comparison.scores_a, comparison.scores_b)
        },
        "t": comparison.t,
        "p": comparison.p,
        "n": comparison.n,
        "zero_variance": comparison.zero_variance,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def coefficient_peak(
    model: TrfModel,
    feature: str,
    window_s: tuple[float, float],
    mode: str = "min",
) -> tuple[np.ndarray, np.ndarray]:
    """Extreme coefficient per sensor for one feature within a lag window.

    Reporting utility for peak amplitude/latency summaries.  Returns
    (values, lags_s), each of length n_sensors; ``mode`` picks the minimum
    (negative peaks) or maximum.
    """
    if mode not in ("min", "max"):
        raise ValidationError(f"mode must be 'min' or 'max', got {mode!r}")
    coefs = model.coef(feature)  # (S, lags)
    lags_s = np.arange(coefs.shape[1]) / model.fs
    keep = (lags_s >= window_s[0]) & (lags_s <= window_s[1])
    if not np.any(keep):
        raise ValidationError(f"lag window {window_s} contains no lags at fs={model.fs}")
    sub = coefs[:, keep]
    idx = sub.argmin(axis=1) if mode == "min" else sub.argmax(axis=1)
    kept_lags = lags_s[keep]
    return sub[np.arange(sub.shape[0]), idx], kept_lags[idx]
