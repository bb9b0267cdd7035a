"""Incremental Bayesian word recognition.

A listener's belief about the word being spoken combines a contextual prior
over candidate wordforms with tempered phoneme-confusion likelihoods of the
phonemes heard so far.  The first prefix length at which the belief in the
true word exceeds a confidence threshold defines the recognition point, and
a fractional position inside that phoneme's span defines the recognition
time in seconds.

All probability arithmetic runs in log space with log-sum-exp
normalization; products over phonemes underflow in linear space.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .lexicon import ConfusionMatrix, Lexicon
from .transcript import StimulusTranscript

__all__ = [
    "CandidateSet",
    "CognitiveParams",
    "RecognitionResult",
    "posterior",
    "posterior_trajectory",
    "recognition_point",
    "recognition_time",
    "recognize_transcript",
    "load_priors",
    "save_priors",
    "save_recognition_csv",
    "save_trajectories",
]

PRIOR_SUM_SLACK = 1e-6


@dataclass(frozen=True)
class CognitiveParams:
    """Free parameters of the recognition model.

    gamma : recognition threshold, in (0, 1)
    lam : evidence temperature, in (0, inf)
    alpha : scatter point within the recognizing phoneme, in (0, 1)
    alpha_p : scatter point for words recognized before input, in (0, 1)
    """

    gamma: float
    lam: float
    alpha: float
    alpha_p: float

    def __post_init__(self):
        problems = bound_violations(self.gamma, self.lam, self.alpha, self.alpha_p)
        if problems:
            raise ValidationError("; ".join(problems))


def bound_violations(gamma, lam, alpha, alpha_p) -> list[str]:
    """Every violated parameter bound, as human-readable strings."""
    problems = []
    if not (0.0 < gamma < 1.0):
        problems.append(f"gamma must be in (0, 1), got {gamma}")
    if not (lam > 0.0) or math.isinf(lam):
        problems.append(f"lam must be in (0, inf), got {lam}")
    if not (0.0 < alpha < 1.0):
        problems.append(f"alpha must be in (0, 1), got {alpha}")
    if not (0.0 < alpha_p < 1.0):
        problems.append(f"alpha_p must be in (0, 1), got {alpha_p}")
    return problems


class CandidateSet:
    """Candidate wordforms for one token with their contextual priors.

    Priors are positive and may sum to less than 1 (candidate lists are
    typically truncated to the top of a larger vocabulary); the posterior
    renormalizes.  The ground-truth form must appear exactly once.
    """

    def __init__(self, token_index: int, forms, priors, ground_truth: str):
        forms = list(forms)
        priors = np.asarray(priors, dtype=float)
        if len(forms) == 0:
            raise ValidationError(f"token {token_index}: empty candidate set")
        if priors.shape != (len(forms),):
            raise ValidationError(f"token {token_index}: {len(forms)} forms but {priors.shape} priors")
        if not np.all(priors > 0):
            raise ValidationError(f"token {token_index}: candidate priors must be positive")
        if priors.sum() > 1.0 + PRIOR_SUM_SLACK:
            raise ValidationError(f"token {token_index}: candidate priors sum to {priors.sum():.6f} > 1")
        n_truth = forms.count(ground_truth)
        if n_truth != 1:
            raise ValidationError(
                f"token {token_index}: ground truth {ground_truth!r} appears {n_truth} times in candidates"
            )
        self.token_index = token_index
        self.forms = forms
        self.priors = priors
        self.ground_truth = ground_truth
        self.truth_pos = forms.index(ground_truth)

    def prior_of_truth(self) -> float:
        return float(self.priors[self.truth_pos])


@dataclass(frozen=True)
class RecognitionResult:
    """Per-token recognition outcome.

    ``k_star`` is the recognition point in phonemes (0 = before any input);
    when the threshold is never exceeded it is clamped to the word length
    and ``threshold_reached`` is False.  ``tau_s`` is the recognition time
    in seconds relative to word onset.  ``trajectory[k]`` is the posterior
    mass on the true word after k phonemes.
    """

    token_index: int
    k_star: int
    tau_s: float
    threshold_reached: bool
    trajectory: np.ndarray


def _candidate_arrays(cands: CandidateSet, lex: Lexicon, k_max: int):
    """Pad candidate phoneme sequences into a (n, k_max) index matrix."""
    n = len(cands.forms)
    lengths = np.empty(n, dtype=int)
    padded = np.zeros((n, k_max), dtype=int)
    for i, form in enumerate(cands.forms):
        seq = lex.phonemes(form)
        lengths[i] = len(seq)
        usable = min(len(seq), k_max)
        padded[i, :usable] = seq[:usable]
    return lengths, padded


def posterior_trajectory(cands: CandidateSet, observed: tuple[int, ...], cm: ConfusionMatrix, lex: Lexicon) -> np.ndarray:
    """Posterior mass on the ground-truth word after each evidence prefix.

    Parameters
    ----------
    cands : CandidateSet
    observed : sequence of int
        Phoneme indices of the full evidence sequence (the ground truth's
        pronunciation); prefix k uses the first k of them.
    cm : ConfusionMatrix
    lex : Lexicon

    Returns
    -------
    np.ndarray
        Length ``len(observed) + 1``; entry k is the normalized posterior
        probability of the true word given the first k phonemes.
    """
    truth_len = len(lex.phonemes(cands.ground_truth))
    if len(observed) > truth_len:
        raise ValidationError(
            f"token {cands.token_index}: evidence length {len(observed)} exceeds "
            f"ground-truth word length {truth_len}"
        )
    k_max = len(observed)
    lengths, padded = _candidate_arrays(cands, lex, k_max)
    log_probs = cm.log_probs
    inv_lam = 0.0 if np.isinf(cm.lam) else 1.0 / cm.lam

    log_post = np.log(cands.priors)
    traj = np.empty(k_max + 1)
    truth = cands.truth_pos
    for k in range(k_max + 1):
        if k > 0:
            # candidates shorter than the prefix are inconsistent with more
            # phonemes arriving within the word: drop them
            log_post[lengths < k] = -np.inf
            alive = lengths >= k
            log_post[alive] += inv_lam * log_probs[observed[k - 1], padded[alive, k - 1]]
        norm = _logsumexp(log_post)
        traj[k] = math.exp(log_post[truth] - norm)
    return traj


def posterior(cands: CandidateSet, observed: tuple[int, ...], cm: ConfusionMatrix, lex: Lexicon) -> np.ndarray:
    """Normalized posterior over candidates given an evidence prefix.

    Candidates shorter than the prefix get probability 0.  With an empty
    prefix this is the renormalized prior.
    """
    truth_len = len(lex.phonemes(cands.ground_truth))
    if len(observed) > truth_len:
        raise ValidationError(
            f"token {cands.token_index}: evidence length {len(observed)} exceeds "
            f"ground-truth word length {truth_len}"
        )
    k = len(observed)
    lengths, padded = _candidate_arrays(cands, lex, k)
    inv_lam = 0.0 if np.isinf(cm.lam) else 1.0 / cm.lam

    log_post = np.log(cands.priors).copy()
    log_post[lengths < k] = -np.inf
    alive = lengths >= k
    if k > 0:
        obs = np.asarray(observed, dtype=int)
        log_post[alive] += inv_lam * cm.log_probs[obs[None, :], padded[alive, :]].sum(axis=1)
    out = np.exp(log_post - _logsumexp(log_post))
    return out


def _logsumexp(log_values: np.ndarray) -> float:
    m = np.max(log_values)
    if m == -np.inf:
        raise ValidationError("all candidates eliminated; no posterior mass left")
    return float(m + math.log(np.exp(log_values - m).sum()))


def recognition_point(cands: CandidateSet, cm: ConfusionMatrix, lex: Lexicon, gamma: float) -> int | None:
    """First prefix length at which the true word's posterior exceeds gamma.

    Returns None when the threshold is never exceeded over k = 0..|w|.
    """
    if not (0.0 < gamma < 1.0):
        raise ValidationError(f"gamma must be in (0, 1), got {gamma}")
    observed = lex.phonemes(cands.ground_truth)
    traj = posterior_trajectory(cands, observed, cm, lex)
    above = np.nonzero(traj > gamma)[0]
    return int(above[0]) if above.size else None


def recognition_time(k_star: int | None, onsets, durations, alpha: float, alpha_p: float) -> float:
    """Recognition time in seconds relative to word onset.

    ``tau = onsets[k*-1] + alpha * durations[k*-1]`` for k* > 0, and
    ``alpha_p * durations[0]`` for words recognized before any input
    (k* = 0).  A never-reached threshold (k_star None) clamps to the final
    phoneme.

    Parameters
    ----------
    k_star : int or None
        Recognition point in {0..|w|}, or None if never recognized.
    onsets, durations : array_like
        Per-phoneme onset (relative to word onset) and duration, seconds.
    alpha, alpha_p : float
        Scatter points in (0, 1) (the limits 0 and 1 are meaningful and
        accepted here; bound enforcement lives in CognitiveParams).
    """
    onsets = np.asarray(onsets, dtype=float)
    durations = np.asarray(durations, dtype=float)
    if onsets.shape != durations.shape or onsets.ndim != 1 or onsets.size == 0:
        raise ValidationError("onsets and durations must be equal-length non-empty 1-D arrays")
    if np.any(durations < 0):
        raise ValidationError("negative phoneme duration")
    n = onsets.size
    if k_star is None:
        k_star = n
    if not (0 <= k_star <= n):
        raise ValidationError(f"recognition point {k_star} outside 0..{n}")
    if k_star == 0:
        return float(alpha_p * durations[0])
    return float(onsets[k_star - 1] + alpha * durations[k_star - 1])


def recognize_transcript(
    transcript: StimulusTranscript,
    priors: dict[int, CandidateSet],
    params: CognitiveParams,
    cm: ConfusionMatrix,
    lex: Lexicon,
) -> list[RecognitionResult]:
    """Run the recognition model over every token of a transcript.

    ``priors`` maps token index to its CandidateSet; every token must have
    one, the candidate set's ground truth must match the transcript form,
    and the lexicon pronunciation must match the aligned phoneme count.
    The evidence temperature comes from ``params``, overriding whatever
    temperature the confusion matrix was built with.
    """
    if cm.lam != params.lam:
        cm = ConfusionMatrix(inventory=cm.inventory, probs=cm.probs, lam=params.lam)
    results = []
    for word in transcript:
        try:
            cands = priors[word.token_index]
        except KeyError:
            raise ValidationError(f"token {word.token_index}: no prior record") from None
        if cands.ground_truth != word.form:
            raise ValidationError(
                f"token {word.token_index}: transcript form {word.form!r} but prior ground truth {cands.ground_truth!r}"
            )
        seq = lex.phonemes(word.form)
        if len(seq) != len(word.phonemes):
            raise ValidationError(
                f"token {word.token_index} ({word.form!r}): lexicon has {len(seq)} phonemes "
                f"but alignment has {len(word.phonemes)}"
            )
        traj = posterior_trajectory(cands, seq, cm, lex)
        above = np.nonzero(traj > params.gamma)[0]
        if above.size:
            k_star, reached = int(above[0]), True
        else:
            k_star, reached = len(seq), False
        tau = recognition_time(
            k_star if reached else None,
            word.phoneme_onsets(),
            word.phoneme_durations(),
            params.alpha,
            params.alpha_p,
        )
        results.append(
            RecognitionResult(
                token_index=word.token_index,
                k_star=k_star,
                tau_s=tau,
                threshold_reached=reached,
                trajectory=traj,
            )
        )
    return results


# ---------------------------------------------------------------------------
# File formats


def load_priors(path, transcript: StimulusTranscript | None = None) -> dict[int, CandidateSet]:
    """Read a JSON-lines prior table into CandidateSets keyed by token index.

    When a transcript is supplied, each record's candidates must contain
    the transcript's form for that token (used as ground truth); otherwise
    a record may carry an explicit ``"ground_truth"`` field.
    """
    path = Path(path)
    table: dict[int, CandidateSet] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                token_index = int(record["token_index"])
                forms = [c["form"] for c in record["candidates"]]
                priors = [float(c["prior"]) for c in record["candidates"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad prior record: {exc}") from None
            if token_index in table:
                raise ValidationError(f"{path}:{lineno}: duplicate token index {token_index}")
            if transcript is not None:
                truth = transcript.word(token_index).form
                if truth not in forms:
                    raise ValidationError(
                        f"{path}:{lineno}: ground truth {truth!r} missing from candidates of token {token_index}"
                    )
            else:
                truth = record.get("ground_truth")
                if truth is None:
                    raise ValidationError(
                        f"{path}:{lineno}: no transcript given and no 'ground_truth' field for token {token_index}"
                    )
            try:
                table[token_index] = CandidateSet(token_index, forms, priors, truth)
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if transcript is not None:
        missing = [w.token_index for w in transcript if w.token_index not in table]
        if missing:
            raise ValidationError(f"{path}: no prior records for token indices {missing[:10]}")
    return table


def save_priors(path, priors: dict[int, CandidateSet], with_ground_truth: bool = False) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for token_index in sorted(priors):
            cands = priors[token_index]
            record = {
                "token_index": token_index,
                "candidates": [
                    {"form": form, "prior": float(p)} for form, p in zip(cands.forms, cands.priors)
                ],
            }
            if with_ground_truth:
                record["ground_truth"] = cands.ground_truth
            fh.write(json.dumps(record) + "\n")


def save_recognition_csv(path, results: list[RecognitionResult]) -> None:
    """Write per-token outcomes: token_index, k_star, tau_s, threshold_reached."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token_index", "k_star", "tau_s", "threshold_reached"])
        for r in results:
            writer.writerow([r.token_index, r.k_star, repr(r.tau_s), str(r.threshold_reached).lower()])


def save_trajectories(path, results: list[RecognitionResult]) -> None:
    """Write per-token posterior trajectories as JSON-lines."""
    path = Path(path)
    with path.open("w") as fh:
        for r in results:
            fh.write(json.dumps({"token_index": r.token_index, "posterior": [float(x) for x in r.trajectory]}) + "\n")
