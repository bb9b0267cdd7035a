"""Phoneme-level predictive model over lexical cohorts.

The next-phoneme distribution renormalizes a word-level contextual prior
over the cohort of words sharing the observed phoneme prefix: membership is
an exact indicator (1 inside the cohort, 0 outside), with no confusion
smoothing.  Surprisal of the true next phoneme and entropy of the
distribution serve as sublexical control features.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .lexicon import Lexicon
from .recognition import CandidateSet
from .transcript import StimulusTranscript

__all__ = [
    "CohortState",
    "onset_cohort",
    "advance_cohort",
    "next_phoneme_dist",
    "phoneme_surprisal_entropy",
    "PhonemeFeatureRow",
    "transcript_phoneme_features",
    "save_phoneme_features_csv",
]


@dataclass(frozen=True)
class CohortState:
    """Cohort of wordforms consistent with a phoneme prefix, with priors.

    ``log_prior`` is renormalized over the cohort members.
    """

    token_index: int
    prefix: tuple[int, ...]
    forms: tuple[str, ...]
    log_prior: np.ndarray

    def __post_init__(self):
        if len(self.forms) != len(self.log_prior):
            raise ValidationError("cohort forms and priors differ in length")
        if self.forms:
            total = np.exp(self.log_prior).sum()
            if abs(total - 1.0) > 1e-10:
                raise ValidationError(f"cohort prior mass {total} is not normalized")

    @property
    def empty(self) -> bool:
        return len(self.forms) == 0


def onset_cohort(cands: CandidateSet, lex: Lexicon) -> CohortState:
    """Full-vocabulary cohort (empty prefix) with renormalized priors."""
    for form in cands.forms:
        lex.phonemes(form)  # raises if any candidate is missing
    logp = np.log(cands.priors)
    logp = logp - _logsumexp(logp)
    return CohortState(cands.token_index, (), tuple(cands.forms), logp)


def advance_cohort(state: CohortState, phoneme: int, lex: Lexicon) -> CohortState:
    """Restrict the cohort to words whose next phoneme is ``phoneme``."""
    pos = len(state.prefix)
    keep = [
        i
        for i, form in enumerate(state.forms)
        if len(lex.phonemes(form)) > pos and lex.phonemes(form)[pos] == phoneme
    ]
    forms = tuple(state.forms[i] for i in keep)
    if not keep:
        return CohortState(state.token_index, state.prefix + (phoneme,), forms, np.empty(0))
    logp = state.log_prior[keep]
    logp = logp - _logsumexp(logp)
    return CohortState(state.token_index, state.prefix + (phoneme,), forms, logp)


def next_phoneme_dist(state: CohortState, lex: Lexicon) -> np.ndarray:
    """Distribution over the inventory for the next phoneme given the cohort.

    P(p | prefix) is proportional to the total prior mass of cohort members
    that continue with p; members that end exactly at the prefix contribute
    to no continuation.
    """
    if state.empty:
        raise ValidationError(f"token {state.token_index}: empty cohort at prefix {state.prefix}")
    n = len(lex.inventory)
    pos = len(state.prefix)
    mass = np.zeros(n)
    for form, logp in zip(state.forms, state.log_prior):
        seq = lex.phonemes(form)
        if len(seq) > pos:
            mass[seq[pos]] += np.exp(logp)
    total = mass.sum()
    if total <= 0:
        raise ValidationError(
            f"token {state.token_index}: no cohort member continues past prefix of length {pos}"
        )
    return mass / total


def phoneme_surprisal_entropy(state: CohortState, truth_next: int, lex: Lexicon) -> tuple[float, float]:
    """Surprisal of the true next phoneme and entropy of its distribution.

    Both in bits.  A zero-probability true phoneme signals a
    lexicon/transcript mismatch and raises.
    """
    dist = next_phoneme_dist(state, lex)
    p_true = dist[truth_next]
    if p_true <= 0:
        raise ValidationError(
            f"token {state.token_index}: ground-truth phoneme index {truth_next} has zero "
            f"probability after prefix {state.prefix} (lexicon/transcript mismatch)"
        )
    surprisal = -float(np.log2(p_true))
    nz = dist[dist > 0]
    entropy = -float((nz * np.log2(nz)).sum())
    return surprisal, entropy


def _logsumexp(log_values: np.ndarray) -> float:
    m = float(np.max(log_values))
    return m + float(np.log(np.exp(log_values - m).sum()))


@dataclass(frozen=True)
class PhonemeFeatureRow:
    """Cohort features for one aligned phoneme of one token."""

    token_index: int
    phoneme_position: int   # 0-based within the word
    surprisal_bits: float
    entropy_bits: float
    backed_off: bool


def transcript_phoneme_features(
    transcript: StimulusTranscript,
    priors: dict[int, CandidateSet],
    lex: Lexicon,
) -> list[PhonemeFeatureRow]:
    """Cohort surprisal and entropy for every phoneme of every token.

    Out-of-lexicon pronunciations (the true continuation eliminates every
    cohort member) back off to the full-vocabulary onset cohort for the
    remainder of the word; all of that token's rows are flagged so feature
    regressions can exclude them.
    """
    rows: list[PhonemeFeatureRow] = []
    for word in transcript:
        if word.token_index not in priors:
            raise ValidationError(f"token {word.token_index}: no prior record")
        cands = priors[word.token_index]
        seq = lex.phonemes(word.form) if word.form in lex else None
        observed = tuple(lex.inventory.index(p.symbol) for p in word.phonemes)
        if seq is not None and len(seq) != len(observed):
            raise ValidationError(
                f"token {word.token_index} ({word.form!r}): lexicon has {len(seq)} phonemes "
                f"but alignment has {len(observed)}"
            )

        start = onset_cohort(cands, lex)
        state = start
        backed_off = False
        word_rows = []
        for pos, truth_next in enumerate(observed):
            # once backed off, the state stays pinned to the onset cohort
            dist = next_phoneme_dist(start if backed_off else state, lex)
            if dist[truth_next] <= 0 and not backed_off:
                # pronunciation left the candidate vocabulary: fall back to
                # the onset cohort for the rest of the word and flag
                backed_off = True
                dist = next_phoneme_dist(start, lex)
            p_true = dist[truth_next]
            if p_true <= 0:
                raise ValidationError(
                    f"token {word.token_index}: phoneme {word.phonemes[pos].symbol!r} has zero "
                    "probability even from the onset cohort (lexicon/transcript mismatch)"
                )
            nz = dist[dist > 0]
            word_rows.append((pos, -float(np.log2(p_true)), -float((nz * np.log2(nz)).sum())))
            if not backed_off and pos + 1 < len(observed):
                state = advance_cohort(state, truth_next, lex)
                if state.empty or not any(len(lex.phonemes(f)) > pos + 1 for f in state.forms):
                    backed_off = True
        rows.extend(
            PhonemeFeatureRow(word.token_index, pos, s, h, backed_off) for pos, s, h in word_rows
        )
    return rows


def save_phoneme_features_csv(path, rows: list[PhonemeFeatureRow]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token_index", "phoneme_position", "surprisal_bits", "entropy_bits", "backed_off"])
        for r in rows:
            writer.writerow(
                [r.token_index, r.phoneme_position, repr(r.surprisal_bits), repr(r.entropy_bits), str(r.backed_off).lower()]
            )
