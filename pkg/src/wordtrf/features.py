"""Regression predictor series: sublexical controls and word-level features.

Sublexical features (phoneme onsets, acoustic controls, cohort surprisal
and entropy) form a channels-by-samples series at the neural sampling rate;
word-level features (onset, contextual surprisal, unigram log-frequency)
are per-token vectors deposited by the linking models.  Events are placed
at the nearest sample, rounding half up; simultaneous events add.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import math
import numpy as np

from .cohort import PhonemeFeatureRow
from .exceptions import ValidationError
from .recognition import CandidateSet
from .transcript import N_SPECTRAL_BANDS, StimulusTranscript

__all__ = [
    "XT_CHANNELS",
    "WORD_FEATURES",
    "FeatureSeries",
    "WordFeatures",
    "QuantileSplit",
    "nearest_sample",
    "build_xt",
    "build_xv",
    "tertile_split",
    "load_unigrams",
    "save_unigrams",
]

XT_CHANNELS = (
    "phoneme_onset",
    "envelope_variance",
    "spectral_0",
    "spectral_1",
    "spectral_2",
    "spectral_3",
    "spectral_4",
    "spectral_5",
    "spectral_6",
    "spectral_7",
    "phoneme_surprisal",
    "phoneme_entropy",
)

WORD_FEATURES = ("word_onset", "word_surprisal", "word_frequency")


def nearest_sample(time_s: float, fs: float) -> int:
    """Nearest sample index to a time point, rounding half up."""
    return int(math.floor(time_s * fs + 0.5))


@dataclass(frozen=True)
class FeatureSeries:
    """Named sublexical predictor channels over the recording timeline."""

    matrix: np.ndarray          # (len(XT_CHANNELS), T)
    fs: float
    channels: tuple[str, ...] = XT_CHANNELS

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.channels):
            raise ValidationError(
                f"feature matrix has {self.matrix.shape[0]} rows for {len(self.channels)} channels"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("feature series contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class WordFeatures:
    """Per-token word-level features and their onset timestamps.

    ``matrix`` is 3 x n_words in WORD_FEATURES order: an all-ones onset
    indicator, contextual surprisal in bits, and unigram log10 relative
    frequency.
    """

    matrix: np.ndarray          # (3, n_words)
    onsets_s: np.ndarray        # (n_words,)
    token_indices: np.ndarray   # (n_words,)

    def __post_init__(self):
        if self.matrix.shape != (len(WORD_FEATURES), self.onsets_s.size):
            raise ValidationError("word feature matrix shape does not match timestamps")
        if np.any(self.matrix[1] < 0):
            raise ValidationError("word surprisal must be non-negative")

    @property
    def n_words(self) -> int:
        return self.onsets_s.size

    @property
    def surprisal(self) -> np.ndarray:
        return self.matrix[1]


def build_xt(
    transcript: StimulusTranscript,
    phoneme_rows: list[PhonemeFeatureRow],
    fs: float,
    n_samples: int,
    deposit: str = "impulse",
    include_flagged: bool = False,
) -> FeatureSeries:
    """Assemble the sublexical predictor series.

    Parameters
    ----------
    transcript : StimulusTranscript
        Supplies phoneme timing and the per-phoneme acoustic scalars.
    phoneme_rows : list of PhonemeFeatureRow
        Cohort surprisal/entropy per (token, phoneme position).
    fs : float
        Neural sampling rate, Hz.
    n_samples : int
        Length of the recording timeline.
    deposit : {"impulse", "boxcar"}
        Impulses place each value at the phoneme onset sample; boxcars
        spread it uniformly over the phoneme span.
    include_flagged : bool
        Whether cohort features of backed-off tokens enter the series
        (objective acoustic channels always do).
    """
    if deposit not in ("impulse", "boxcar"):
        raise ValidationError(f"unknown deposit mode {deposit!r}")
    cohort_vals: dict[tuple[int, int], PhonemeFeatureRow] = {
        (r.token_index, r.phoneme_position): r for r in phoneme_rows
    }
    x = np.zeros((len(XT_CHANNELS), n_samples))
    surp_row = XT_CHANNELS.index("phoneme_surprisal")
    ent_row = XT_CHANNELS.index("phoneme_entropy")

    for word in transcript:
        for pos, ph in enumerate(word.phonemes):
            onset = word.onset_s + ph.onset_s
            sample = nearest_sample(onset, fs)
            if not (0 <= sample < n_samples):
                raise ValidationError(
                    f"token {word.token_index} phoneme {pos} at {onset:.4f}s maps to sample "
                    f"{sample}, outside 0..{n_samples - 1}"
                )
            values = np.zeros(len(XT_CHANNELS))
            values[0] = 1.0
            values[1] = ph.envelope_var
            values[2:2 + N_SPECTRAL_BANDS] = ph.spectral
            row = cohort_vals.get((word.token_index, pos))
            if row is not None and (include_flagged or not row.backed_off):
                values[surp_row] = row.surprisal_bits
                values[ent_row] = row.entropy_bits
            if deposit == "impulse":
                x[:, sample] += values
            else:
                end = max(sample + 1, nearest_sample(onset + ph.duration_s, fs))
                end = min(end, n_samples)
                x[:, sample:end] += values[:, None] / (end - sample)
    return FeatureSeries(matrix=x, fs=fs)


def build_xv(
    transcript: StimulusTranscript,
    priors: dict[int, CandidateSet],
    unigrams: dict[str, float],
) -> WordFeatures:
    """Assemble word-level features: onset, surprisal, log-frequency.

    Surprisal is -log2 of the ground truth's contextual prior; frequency is
    the smoothed log10 relative frequency from :func:`load_unigrams`, with
    out-of-vocabulary forms mapped to the table minimum.
    """
    n = len(transcript)
    matrix = np.zeros((len(WORD_FEATURES), n))
    onsets = np.zeros(n)
    tokens = np.zeros(n, dtype=int)
    oov_value = min(unigrams.values()) if unigrams else 0.0
    for i, word in enumerate(transcript):
        if word.token_index not in priors:
            raise ValidationError(f"token {word.token_index}: no prior record")
        cands = priors[word.token_index]
        matrix[0, i] = 1.0
        matrix[1, i] = -math.log2(cands.prior_of_truth())
        matrix[2, i] = unigrams.get(word.form, oov_value)
        onsets[i] = word.onset_s
        tokens[i] = word.token_index
    return WordFeatures(matrix=matrix, onsets_s=onsets, token_indices=tokens)


@dataclass(frozen=True)
class QuantileSplit:
    """Tertile partition of per-token values fitted on training tokens.

    Edges sit at the 1/3 and 2/3 empirical quantiles (linear
    interpolation).  Bins are left-closed and right-open with the last bin
    closed above, so assignment is total for any value.  ``degenerate``
    marks an all-equal training sample, which collapses to a single bin.
    """

    edges: tuple[float, float]
    variable: str = "value"
    degenerate: bool = False

    def assign(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return np.where(values < self.edges[0], 0, np.where(values < self.edges[1], 1, 2))


def tertile_split(values, train_mask=None, variable: str = "value") -> QuantileSplit:
    """Fit a tertile split on the training subset of per-token values.

    Parameters
    ----------
    values : array_like
        One value per token.
    train_mask : array_like of bool, optional
        Tokens the edges may be computed from; test tokens never move the
        edges.  Defaults to all tokens.
    variable : str
        Label recorded on the split (e.g. "recognition_time").
    """
    values = np.asarray(values, dtype=float)
    if train_mask is None:
        train_mask = np.ones(values.shape, dtype=bool)
    train_values = values[np.asarray(train_mask, dtype=bool)]
    if train_values.size < 3:
        raise ValidationError(f"tertile split needs at least 3 training tokens, got {train_values.size}")
    lo, hi = np.quantile(train_values, [1.0 / 3.0, 2.0 / 3.0])
    degenerate = bool(lo == hi)
    return QuantileSplit(edges=(float(lo), float(hi)), variable=variable, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Unigram frequency table


def load_unigrams(path) -> dict[str, float]:
    """Read a (form, count) CSV into smoothed log10 relative frequencies.

    Each form's value is ``log10((count + 1) / (total + V))`` with V the
    vocabulary size (add-one smoothing).
    """
    path = Path(path)
    counts: dict[str, float] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["form", "count"]:
            raise ValidationError(f"{path}: expected header 'form,count'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ValidationError(f"{path}:{lineno}: expected 'form,count'")
            form = row[0]
            if form in counts:
                raise ValidationError(f"{path}:{lineno}: duplicate form {form!r}")
            try:
                count = float(row[1])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad count {row[1]!r}") from None
            if count < 0:
                raise ValidationError(f"{path}:{lineno}: negative count")
            counts[form] = count
    return unigram_log_frequencies(counts)


def unigram_log_frequencies(counts: dict[str, float]) -> dict[str, float]:
    if not counts:
        return {}
    denom = sum(counts.values()) + len(counts)
    return {form: math.log10((c + 1) / denom) for form, c in counts.items()}


def save_unigrams(path, counts: dict[str, float]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["form", "count"])
        for form in counts:
            c = counts[form]
            writer.writerow([form, int(c) if float(c).is_integer() else repr(float(c))])
