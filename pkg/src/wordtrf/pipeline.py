"""End-to-end fitting: data splits, cross-validated search, held-out scores.

The final 25% of the shared stimulus timeline is held out per subject; the
training span is divided into 4 contiguous folds.  Each search trial
samples recognition-model parameters (shared across subjects) plus a ridge
strength, rebuilds recognition times and quantile groups, fits per-subject
TRFs on three folds and scores the fourth.  The best trial is refit on all
training data and scored exactly once on the held-out span.

Because the TRF is convolutional, a guard band of max-lag samples at the
start of every contiguous segment is excluded from all loss computations;
splits are contiguous blocks for the same reason.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import NumericalError, ValidationError
from .features import FeatureSeries, WordFeatures, build_xt, build_xv, nearest_sample, tertile_split
from .cohort import transcript_phoneme_features
from .lexicon import ConfusionMatrix, Lexicon
from .linking import LinkingSpec, model_features
from .recognition import CandidateSet, CognitiveParams, recognize_transcript
from .transcript import StimulusTranscript
from .trf import NeuralRecording, TrfModel, design_matrix, fit_ridge_multi, sensor_correlations

__all__ = [
    "DataSplit",
    "split_data",
    "guard_trimmed",
    "SearchSpace",
    "TrialRecord",
    "FitReport",
    "PipelineData",
    "evaluate_params",
    "search",
    "save_report",
    "save_trial_history",
]


@dataclass(frozen=True)
class DataSplit:
    """Contiguous train/test partition with contiguous training folds."""

    n_samples: int
    test_start: int
    fold_bounds: tuple[int, ...]   # len n_folds + 1, first 0, last test_start

    @property
    def n_folds(self) -> int:
        return len(self.fold_bounds) - 1

    def test_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_samples, dtype=bool)
        mask[self.test_start:] = True
        return mask

    def train_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_samples, dtype=bool)
        mask[: self.test_start] = True
        return mask

    def fold_mask(self, fold: int) -> np.ndarray:
        mask = np.zeros(self.n_samples, dtype=bool)
        mask[self.fold_bounds[fold]:self.fold_bounds[fold + 1]] = True
        return mask

    def held_in_mask(self, fold: int) -> np.ndarray:
        """Training samples outside one validation fold."""
        mask = self.train_mask()
        mask[self.fold_bounds[fold]:self.fold_bounds[fold + 1]] = False
        return mask


def split_data(recordings, fraction: float = 0.25, n_folds: int = 4) -> DataSplit:
    """Hold out the final fraction of the timeline; fold the rest contiguously.

    ``recordings`` may be an integer sample count or a list of recordings,
    which must share one stimulus timeline (equal length and rate).
    """
    if isinstance(recordings, (int, np.integer)):
        n_samples = int(recordings)
    else:
        recordings = list(recordings)
        if not recordings:
            raise ValidationError("no recordings to split")
        lengths = {r.n_samples for r in recordings}
        rates = {r.fs for r in recordings}
        if len(lengths) != 1 or len(rates) != 1:
            raise ValidationError("recordings do not share a stimulus timeline")
        n_samples = lengths.pop()
    if not (0 < fraction < 1):
        raise ValidationError(f"test fraction must be in (0, 1), got {fraction}")
    test_start = int(math.floor(n_samples * (1 - fraction)))
    if test_start < n_folds or test_start >= n_samples:
        raise ValidationError(
            f"recording too short to split: {n_samples} samples leave {test_start} for {n_folds} folds"
        )
    bounds = tuple(int(round(i * test_start / n_folds)) for i in range(n_folds + 1))
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ValidationError("recording shorter than minimum fold length")
    return DataSplit(n_samples=n_samples, test_start=test_start, fold_bounds=bounds)


def guard_trimmed(mask: np.ndarray, guard: int) -> np.ndarray:
    """Drop the first ``guard`` samples of every contiguous run of the mask.

    Samples just after a partition boundary are driven by features from the
    previous partition through the lag window; excluding them from loss
    computation prevents cross-fold convolution leakage.
    """
    mask = np.asarray(mask, dtype=bool)
    if guard <= 0:
        return mask.copy()
    out = mask.copy()
    prev = np.concatenate(([False], mask[:-1]))
    for start in np.flatnonzero(mask & ~prev):
        out[start:start + guard] = False
    return out


@dataclass(frozen=True)
class SearchSpace:
    """Bounds and budget for the sequential random search.

    Recognition parameters stay inside their model bounds: gamma, alpha,
    alpha_p in (0, 1); lam positive and sampled on a log scale.  Ridge
    strengths come from a fixed grid.  ``guided`` turns on density-style
    guidance that resamples near elite trials after a warmup.
    """

    gamma: tuple[float, float] = (0.05, 0.95)
    lam: tuple[float, float] = (0.1, 10.0)
    alpha: tuple[float, float] = (0.05, 0.95)
    alpha_p: tuple[float, float] = (0.05, 0.95)
    ridge: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3)
    budget: int = 50
    seed: int = 0
    guided: bool = False

    def __post_init__(self):
        problems = []
        for name, bounds, limits in (
            ("gamma", self.gamma, (0.0, 1.0)),
            ("alpha", self.alpha, (0.0, 1.0)),
            ("alpha_p", self.alpha_p, (0.0, 1.0)),
        ):
            lo, hi = bounds
            if not (limits[0] < lo < hi < limits[1]):
                problems.append(f"{name} bounds {bounds} must satisfy {limits[0]} < lo < hi < {limits[1]}")
        lo, hi = self.lam
        if not (0.0 < lo < hi) or math.isinf(hi):
            problems.append(f"lam bounds {self.lam} must satisfy 0 < lo < hi < inf")
        if not self.ridge or any(r < 0 for r in self.ridge):
            problems.append(f"ridge grid {self.ridge} must be non-empty and non-negative")
        if self.budget < 0:
            problems.append(f"budget must be non-negative, got {self.budget}")
        if problems:
            raise ValidationError("; ".join(problems))

    def sample(self, rng: np.random.Generator) -> tuple[CognitiveParams, float]:
        params = CognitiveParams(
            gamma=float(rng.uniform(*self.gamma)),
            lam=float(10 ** rng.uniform(math.log10(self.lam[0]), math.log10(self.lam[1]))),
            alpha=float(rng.uniform(*self.alpha)),
            alpha_p=float(rng.uniform(*self.alpha_p)),
        )
        ridge = float(self.ridge[rng.integers(len(self.ridge))])
        return params, ridge

    def sample_near(self, rng: np.random.Generator, center: CognitiveParams, center_ridge: float, scale: float = 0.15):
        def jitter(value, lo, hi, log=False):
            if log:
                lv = math.log10(value)
                out = lv + rng.normal(0, scale * (math.log10(hi) - math.log10(lo)))
                return float(10 ** min(max(out, math.log10(lo)), math.log10(hi)))
            out = value + rng.normal(0, scale * (hi - lo))
            return float(min(max(out, lo), hi))

        params = CognitiveParams(
            gamma=jitter(center.gamma, *self.gamma),
            lam=jitter(center.lam, *self.lam, log=True),
            alpha=jitter(center.alpha, *self.alpha),
            alpha_p=jitter(center.alpha_p, *self.alpha_p),
        )
        ridge = center_ridge if rng.uniform() < 0.7 else float(self.ridge[rng.integers(len(self.ridge))])
        return params, ridge


@dataclass
class PipelineData:
    """Everything a search needs, with stimulus features prebuilt.

    Sublexical and word-level features do not depend on the recognition
    parameters, so they are assembled once; only the word-feature
    deposition (timing and grouping) is trial-dependent.
    """

    transcript: StimulusTranscript
    priors: dict[int, CandidateSet]
    lexicon: Lexicon
    confusion: ConfusionMatrix
    recordings: list[NeuralRecording]
    xt: FeatureSeries
    xv: WordFeatures
    sublexical_lag_s: float = 0.6
    word_lag_s: float = 0.8

    @classmethod
    def build(
        cls,
        transcript,
        priors,
        lexicon,
        confusion,
        recordings,
        unigrams,
        sublexical_lag_s: float = 0.6,
        word_lag_s: float = 0.8,
        deposit: str = "impulse",
        include_flagged: bool = False,
    ) -> "PipelineData":
        recordings = list(recordings)
        if not recordings:
            raise ValidationError("no recordings")
        if len({r.n_samples for r in recordings}) != 1 or len({r.fs for r in recordings}) != 1:
            raise ValidationError("recordings do not share a stimulus timeline")
        fs, n_samples = recordings[0].fs, recordings[0].n_samples
        phoneme_rows = transcript_phoneme_features(transcript, priors, lexicon)
        xt = build_xt(transcript, phoneme_rows, fs, n_samples, deposit=deposit, include_flagged=include_flagged)
        xv = build_xv(transcript, priors, unigrams)
        return cls(
            transcript=transcript,
            priors=priors,
            lexicon=lexicon,
            confusion=confusion,
            recordings=recordings,
            xt=xt,
            xv=xv,
            sublexical_lag_s=sublexical_lag_s,
            word_lag_s=word_lag_s,
        )

    @property
    def fs(self) -> float:
        return self.recordings[0].fs

    @property
    def n_samples(self) -> int:
        return self.recordings[0].n_samples

    def train_token_mask(self, split: DataSplit) -> np.ndarray:
        """Tokens whose onset sample falls before the test span."""
        samples = np.array([nearest_sample(t, self.fs) for t in self.xv.onsets_s])
        return samples < split.test_start


def _predict_from_design(model: TrfModel, design: np.ndarray, cols: np.ndarray) -> np.ndarray:
    offset = model.y_means - model.theta.T @ model.feature_means
    return model.theta.T @ design[:, cols] + offset[:, None]


def _trial_design(data: PipelineData, split: DataSplit, variant: str, params: CognitiveParams):
    """Recognition pass plus design assembly for one parameter setting."""
    results = None
    qsplit = None
    if variant in ("shift", "variable"):
        results = recognize_transcript(data.transcript, data.priors, params, data.confusion, data.lexicon)
    train_tokens = data.train_token_mask(split)
    if variant == "variable":
        qsplit = tertile_split([r.tau_s for r in results], train_tokens, variable="recognition_time")
    elif variant == "prior_variable":
        qsplit = tertile_split(data.xv.surprisal, train_tokens, variable="word_surprisal")
    spec = LinkingSpec(variant=variant, split=qsplit)
    x, layout = model_features(
        data.xt, spec, data.xv, results, data.transcript, data.sublexical_lag_s, data.word_lag_s
    )
    return design_matrix(x, layout), layout, results, qsplit


def evaluate_params(
    data: PipelineData,
    split: DataSplit,
    variant: str,
    params: CognitiveParams,
    ridge: float,
):
    """Cross-validated objective for one parameter setting.

    Fits per-subject TRFs on three folds, scores sensor-mean correlation on
    the held-out fold, and averages over folds and subjects.
    """
    design, layout, results, qsplit = _trial_design(data, split, variant, params)
    guard = layout.max_lag
    ys = [rec.y for rec in data.recordings]
    fold_scores = []
    for fold in range(split.n_folds):
        fit_mask = guard_trimmed(split.held_in_mask(fold), guard)
        val_mask = guard_trimmed(split.fold_mask(fold), guard)
        val_cols = np.flatnonzero(val_mask)
        models = fit_ridge_multi(design, ys, layout, ridge, fit_mask)
        subject_scores = [
            sensor_correlations(y[:, val_cols], _predict_from_design(m, design, val_cols)).mean()
            for m, y in zip(models, ys)
        ]
        fold_scores.append(float(np.mean(subject_scores)))
    return float(np.mean(fold_scores)), fold_scores, (design, layout, results, qsplit)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    gamma: float
    lam: float
    alpha: float
    alpha_p: float
    ridge: float
    objective: float    # nan when discarded
    status: str         # "ok" or the reason the trial was discarded


@dataclass
class FitReport:
    """Outcome of a search: winning trial, its held-out scores, and history."""

    variant: str
    seed: int
    best_params: dict
    best_objective: float
    best_fold_scores: list
    test_scores: dict            # subject -> per-sensor r list
    test_mean: float
    quantile_edges: tuple | None
    insensitive_params: list
    trials: list = field(default_factory=list)
    models: list = field(default_factory=list)   # per-subject TrfModel, not serialized

    def to_payload(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "best_params": self.best_params,
            "best_objective": self.best_objective,
            "best_fold_scores": self.best_fold_scores,
            "test_scores": self.test_scores,
            "test_mean": self.test_mean,
            "quantile_edges": list(self.quantile_edges) if self.quantile_edges else None,
            "insensitive_params": self.insensitive_params,
            "n_trials": len(self.trials),
        }


_PROBE_QUANTILES = (0.25, 0.75)


def _probe_values(space: SearchSpace, name: str, best: float):
    lo, hi = getattr(space, name)
    if name == "lam":
        values = [10 ** (math.log10(lo) + q * (math.log10(hi) - math.log10(lo))) for q in _PROBE_QUANTILES]
    else:
        values = [lo + q * (hi - lo) for q in _PROBE_QUANTILES]
    return [v for v in values if not np.isclose(v, best)]


def search(data: PipelineData, split: DataSplit, variant: str, space: SearchSpace) -> FitReport:
    """Sequential seeded search over recognition parameters and ridge strength.

    Each trial shares its recognition parameters across subjects and its
    ridge across subjects and folds.  Trials with non-finite objectives are
    discarded but logged.  The best trial is refit on the full training
    span and scored once on the held-out span; afterwards each recognition
    parameter is probed at fixed quantiles of its range to flag parameters
    the objective does not react to (for the baseline variant that is all
    of them, since its design ignores recognition dynamics).
    """
    if space.budget == 0:
        raise ValidationError("search budget is 0; nothing to do")
    rng = np.random.default_rng(space.seed)
    warmup = max(5, space.budget // 5)
    trials: list[TrialRecord] = []
    evaluated: list[tuple[float, list, CognitiveParams, float]] = []

    for index in range(space.budget):
        # density guidance: resample near elite trials, contracting from
        # broad moves to fine ones as the budget is spent
        progress = index / max(1, space.budget - 1)
        exploit_p = 0.5 + 0.4 * progress
        scale = 0.2 * (0.05 / 0.2) ** progress
        if space.guided and len(evaluated) >= warmup and rng.uniform() < exploit_p:
            ranked = sorted(evaluated, key=lambda e: -e[0])
            elite = ranked[: max(1, len(ranked) // 5)]
            center = elite[int(rng.integers(len(elite)))]
            params, ridge = space.sample_near(rng, center[2], center[3], scale=scale)
        else:
            params, ridge = space.sample(rng)
        try:
            objective, fold_scores, _ = evaluate_params(data, split, variant, params, ridge)
            status = "ok" if np.isfinite(objective) else "non_finite"
        except NumericalError as exc:
            objective, fold_scores, status = float("nan"), [], f"numerical_error: {exc}"
        if status != "ok":
            objective = float("nan")
        else:
            evaluated.append((objective, fold_scores, params, ridge))
        trials.append(
            TrialRecord(
                index=index,
                gamma=params.gamma,
                lam=params.lam,
                alpha=params.alpha,
                alpha_p=params.alpha_p,
                ridge=ridge,
                objective=objective,
                status=status,
            )
        )

    if not evaluated:
        raise NumericalError("every search trial was discarded; no usable objective")
    best_objective, best_fold_scores, best_params, best_ridge = max(evaluated, key=lambda e: e[0])

    # refit the winner on all training data, score once on the held-out span
    design, layout, _, qsplit = _trial_design(data, split, variant, best_params)
    guard = layout.max_lag
    fit_mask = guard_trimmed(split.train_mask(), guard)
    test_cols = np.flatnonzero(guard_trimmed(split.test_mask(), guard))
    ys = [rec.y for rec in data.recordings]
    models = fit_ridge_multi(design, ys, layout, best_ridge, fit_mask)
    test_scores = {
        rec.subject: [float(r) for r in sensor_correlations(
            y[:, test_cols], _predict_from_design(m, design, test_cols)
        )]
        for rec, m, y in zip(data.recordings, models, ys)
    }
    test_mean = float(np.mean([np.mean(v) for v in test_scores.values()]))

    insensitive = []
    for name in ("gamma", "lam", "alpha", "alpha_p"):
        probe_objs = []
        for value in _probe_values(space, name, getattr(best_params, name)):
            probed = replace(best_params, **{name: value})
            obj, _, _ = evaluate_params(data, split, variant, probed, best_ridge)
            probe_objs.append(obj)
        if probe_objs and all(abs(o - best_objective) < 1e-12 for o in probe_objs):
            insensitive.append(name)

    return FitReport(
        variant=variant,
        seed=space.seed,
        best_params={
            "gamma": best_params.gamma,
            "lam": best_params.lam,
            "alpha": best_params.alpha,
            "alpha_p": best_params.alpha_p,
            "ridge": best_ridge,
        },
        best_objective=best_objective,
        best_fold_scores=best_fold_scores,
        test_scores=test_scores,
        test_mean=test_mean,
        quantile_edges=qsplit.edges if qsplit is not None else None,
        insensitive_params=insensitive,
        trials=trials,
        models=models,
    )


def save_report(path, report: FitReport) -> None:
    Path(path).write_text(json.dumps(report.to_payload(), sort_keys=True, indent=2) + "\n")


def save_trial_history(path, trials: list[TrialRecord]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "gamma", "lam", "alpha", "alpha_p", "ridge", "objective", "status"])
        for t in trials:
            writer.writerow(
                [t.index, repr(t.gamma), repr(t.lam), repr(t.alpha), repr(t.alpha_p), repr(t.ridge),
                 repr(t.objective), t.status]
            )
