"""Temporal receptive field estimation for multi-sensor recordings.

A TRF predicts each sensor's signal as a sum of lagged linear responses to
named stimulus features, one causal lag window per feature.  Fitting is
ridge-regularized least squares solved in closed form from the (centered)
Gram matrix, which is accumulated in sample chunks so that masked fits
never copy the full design.  The Gram matrix is shared when fitting several
recordings of the same stimulus.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .exceptions import NumericalError, ValidationError

__all__ = [
    "FeatureLayout",
    "NeuralRecording",
    "TrfModel",
    "design_matrix",
    "fit_ridge",
    "fit_ridge_multi",
    "predict",
    "convolve_features",
    "sensor_correlations",
    "read_recording",
    "write_recording",
    "read_recording_csv",
    "write_recording_csv",
    "save_coefficients_csv",
    "save_model",
    "load_model",
]

_CHUNK = 16384

NRC1_MAGIC = b"NRC1"


@dataclass(frozen=True)
class FeatureLayout:
    """Feature names with per-feature causal lag windows at a sampling rate.

    Feature ``f`` occupies ``floor(lag_seconds[f] * fs) + 1`` design rows,
    one per integer lag from 0 up to the window length.
    """

    names: tuple[str, ...]
    lag_seconds: tuple[float, ...]
    fs: float

    def __post_init__(self):
        if len(self.names) != len(self.lag_seconds):
            raise ValidationError("layout names and lag windows differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("layout has duplicate feature names")
        if any(w < 0 for w in self.lag_seconds):
            raise ValidationError("lag windows must be non-negative")
        if not (self.fs > 0):
            raise ValidationError("sampling rate must be positive")

    @property
    def n_features(self) -> int:
        return len(self.names)

    def n_lags(self, f: int) -> int:
        return int(math.floor(self.lag_seconds[f] * self.fs)) + 1

    @property
    def lags_per_feature(self) -> tuple[int, ...]:
        return tuple(self.n_lags(f) for f in range(self.n_features))

    @property
    def offsets(self) -> tuple[int, ...]:
        out, total = [], 0
        for f in range(self.n_features):
            out.append(total)
            total += self.n_lags(f)
        return tuple(out)

    @property
    def n_rows(self) -> int:
        return sum(self.lags_per_feature)

    @property
    def max_lag(self) -> int:
        return max(self.lags_per_feature) - 1

    def row_labels(self) -> list[tuple[str, int]]:
        labels = []
        for f, name in enumerate(self.names):
            labels.extend((name, lag) for lag in range(self.n_lags(f)))
        return labels

    def feature_rows(self, name: str) -> slice:
        f = self.names.index(name)
        start = self.offsets[f]
        return slice(start, start + self.n_lags(f))


@dataclass(frozen=True)
class NeuralRecording:
    """Sensors-by-samples recording at a fixed sampling rate."""

    y: np.ndarray
    fs: float
    subject: str = "s0"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise ValidationError(f"recording must be (sensors, samples), got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValidationError("recording contains non-finite values")
        if not (self.fs > 0):
            raise ValidationError("sampling rate must be positive")
        object.__setattr__(self, "y", y)

    @property
    def n_sensors(self) -> int:
        return self.y.shape[0]

    @property
    def n_samples(self) -> int:
        return self.y.shape[1]


def design_matrix(x: np.ndarray, layout: FeatureLayout) -> np.ndarray:
    """Materialize the lagged design: row (f, lag) at column t is x[f, t - lag].

    Columns before a row's lag are zero padded; there is no wraparound.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != layout.n_features:
        raise ValidationError(f"feature series shape {x.shape} does not match layout ({layout.n_features} features)")
    n_samples = x.shape[1]
    design = np.zeros((layout.n_rows, n_samples))
    for f in range(layout.n_features):
        base = layout.offsets[f]
        for lag in range(layout.n_lags(f)):
            if lag < n_samples:
                design[base + lag, lag:] = x[f, : n_samples - lag]
    return design


@dataclass(frozen=True)
class TrfModel:
    """Fitted TRF: one coefficient per (feature, sensor, lag).

    ``theta`` is stored as (design rows, sensors); :meth:`coef` exposes the
    (sensors, lags) block of one feature.  ``feature_means`` and
    ``y_means`` hold the centering offsets learned at fit time.
    """

    layout: FeatureLayout
    theta: np.ndarray           # (n_rows, S)
    ridge: float
    feature_means: np.ndarray   # (n_rows,)
    y_means: np.ndarray         # (S,)

    def __post_init__(self):
        if self.theta.shape[0] != self.layout.n_rows:
            raise ValidationError("coefficient rows do not match layout")
        if not np.all(np.isfinite(self.theta)):
            raise ValidationError("model coefficients are non-finite")

    @property
    def n_sensors(self) -> int:
        return self.theta.shape[1]

    def coef(self, name: str) -> np.ndarray:
        """Coefficients of one feature as (sensors, lags)."""
        return self.theta[self.layout.feature_rows(name)].T

    def coef_tensor(self) -> dict[str, np.ndarray]:
        return {name: self.coef(name) for name in self.layout.names}

    @property
    def fs(self) -> float:
        return self.layout.fs


def _gram_and_moments(design: np.ndarray, ys: list[np.ndarray], sample_mask):
    """Accumulate Gram, cross products, and first moments over masked samples."""
    n_rows, n_samples = design.shape
    if sample_mask is None:
        idx = None
        n_used = n_samples
    else:
        sample_mask = np.asarray(sample_mask, dtype=bool)
        if sample_mask.shape != (n_samples,):
            raise ValidationError("sample mask length does not match design")
        idx = np.flatnonzero(sample_mask)
        n_used = idx.size
    if n_used < n_rows:
        raise ValidationError(f"{n_used} fit samples for {n_rows} design rows")

    gram = np.zeros((n_rows, n_rows))
    cross = [np.zeros((n_rows, y.shape[0])) for y in ys]
    d_sum = np.zeros(n_rows)
    y_sums = [np.zeros(y.shape[0]) for y in ys]
    for start in range(0, n_used, _CHUNK):
        cols = slice(start, min(start + _CHUNK, n_used)) if idx is None else idx[start:start + _CHUNK]
        block = design[:, cols]
        gram += block @ block.T
        d_sum += block.sum(axis=1)
        for i, y in enumerate(ys):
            yb = y[:, cols]
            cross[i] += block @ yb.T
            y_sums[i] += yb.sum(axis=1)
    return gram, cross, d_sum, y_sums, n_used


def _solve_ridge(gram, cross, d_sum, y_sums, n_used, ridge):
    """Centered ridge solve from accumulated moments."""
    d_mean = d_sum / n_used
    gram_c = gram - np.outer(d_sum, d_mean)
    lhs = gram_c + ridge * np.eye(gram.shape[0])
    try:
        factor = scipy.linalg.cho_factor(lhs, lower=True)
    except scipy.linalg.LinAlgError as exc:
        if ridge == 0:
            raise NumericalError(
                "design Gram matrix is singular with ridge=0; add regularization or remove redundant features"
            ) from exc
        raise NumericalError(f"ridge system could not be factorized: {exc}") from exc
    if ridge == 0:
        # a pivot at rounding-noise scale means the unregularized system is
        # rank deficient even when the factorization nominally succeeds;
        # the ratio threshold flags condition numbers beyond ~1e12
        pivots = np.abs(np.diag(factor[0]))
        if pivots.min() <= 1e-6 * pivots.max():
            raise NumericalError(
                "design Gram matrix is singular with ridge=0; add regularization or remove redundant features"
            )
    thetas, means = [], []
    for b, y_sum in zip(cross, y_sums):
        y_mean = y_sum / n_used
        b_c = b - np.outer(d_sum, y_mean)
        thetas.append(scipy.linalg.cho_solve(factor, b_c))
        means.append(y_mean)
    return thetas, means, d_mean


def fit_ridge(design, y, layout: FeatureLayout, ridge: float, sample_mask=None) -> TrfModel:
    """Fit one recording by L2-regularized least squares.

    Solves ``argmin ||Y - theta D||^2 + ridge * ||theta||^2`` per sensor on
    centered inputs via the normal equations with a Cholesky factorization.
    A singular system with ridge=0 raises NumericalError instead of being
    silently regularized.

    Parameters
    ----------
    design : np.ndarray
        Lagged design matrix, (layout.n_rows, T).
    y : np.ndarray
        Recording, (sensors, T).
    layout : FeatureLayout
        Row labeling for the fitted coefficients.
    ridge : float
        Non-negative ridge strength.
    sample_mask : array_like of bool, optional
        Samples that enter the loss; defaults to all.
    """
    return fit_ridge_multi(design, [y], layout, ridge, sample_mask)[0]


def fit_ridge_multi(design, ys, layout: FeatureLayout, ridge: float, sample_mask=None) -> list[TrfModel]:
    """Fit several recordings of the same stimulus, sharing one Gram matrix."""
    design = np.asarray(design, dtype=float)
    if design.shape[0] != layout.n_rows:
        raise ValidationError(f"design has {design.shape[0]} rows, layout expects {layout.n_rows}")
    if ridge < 0:
        raise ValidationError(f"ridge strength must be non-negative, got {ridge}")
    ys = [np.asarray(y, dtype=float) for y in ys]
    for y in ys:
        if y.ndim != 2 or y.shape[1] != design.shape[1]:
            raise ValidationError(f"recording shape {y.shape} does not match design columns {design.shape[1]}")
    gram, cross, d_sum, y_sums, n_used = _gram_and_moments(design, ys, sample_mask)
    thetas, y_means, d_mean = _solve_ridge(gram, cross, d_sum, y_sums, n_used, ridge)
    return [
        TrfModel(layout=layout, theta=theta, ridge=float(ridge), feature_means=d_mean, y_means=y_mean)
        for theta, y_mean in zip(thetas, y_means)
    ]


def convolve_features(x: np.ndarray, layout: FeatureLayout, theta: np.ndarray) -> np.ndarray:
    """Raw lagged response: sum over features and lags of theta * x[f, t - lag].

    No centering offsets; this is the forward pass used both by prediction
    and by synthetic signal generation.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != layout.n_features:
        raise ValidationError(f"feature series shape {x.shape} does not match layout ({layout.n_features} features)")
    n_samples = x.shape[1]
    n_sensors = theta.shape[1]
    out = np.zeros((n_sensors, n_samples))
    for f in range(layout.n_features):
        rows = slice(layout.offsets[f], layout.offsets[f] + layout.n_lags(f))
        kernels = theta[rows]  # (lags, S)
        for s in range(n_sensors):
            out[s] += np.convolve(x[f], kernels[:, s])[:n_samples]
    return out


def predict(model: TrfModel, x: np.ndarray) -> np.ndarray:
    """Model prediction for a feature series, including centering offsets."""
    raw = convolve_features(x, model.layout, model.theta)
    offset = model.y_means - model.theta.T @ model.feature_means
    return raw + offset[:, None]


def sensor_correlations(y: np.ndarray, y_hat: np.ndarray, sample_mask=None) -> np.ndarray:
    """Pearson r between observed and predicted signal, per sensor.

    The mean over sensors is the model's comparison score.  A zero-variance
    sensor leaves r undefined and raises.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValidationError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    if sample_mask is not None:
        sample_mask = np.asarray(sample_mask, dtype=bool)
        y = y[:, sample_mask]
        y_hat = y_hat[:, sample_mask]
    yc = y - y.mean(axis=1, keepdims=True)
    hc = y_hat - y_hat.mean(axis=1, keepdims=True)
    y_ss = (yc * yc).sum(axis=1)
    h_ss = (hc * hc).sum(axis=1)
    bad = np.flatnonzero((y_ss == 0) | (h_ss == 0))
    if bad.size:
        raise NumericalError(f"zero-variance signal on sensors {bad.tolist()}; correlation undefined")
    return (yc * hc).sum(axis=1) / np.sqrt(y_ss * h_ss)


# ---------------------------------------------------------------------------
# Recording files


def write_recording(path, recording: NeuralRecording) -> None:
    """Write the NRC1 binary format: magic, u32 S, u64 T, f64 fs, f32 data."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(NRC1_MAGIC)
        fh.write(struct.pack("<IQd", recording.n_sensors, recording.n_samples, recording.fs))
        fh.write(recording.y.astype("<f4").tobytes(order="C"))


def read_recording(path, subject: str | None = None) -> NeuralRecording:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
        if magic != NRC1_MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}, expected {NRC1_MAGIC!r}")
        header = fh.read(struct.calcsize("<IQd"))
        n_sensors, n_samples, fs = struct.unpack("<IQd", header)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != n_sensors * n_samples:
        raise ValidationError(f"{path}: expected {n_sensors * n_samples} samples, found {data.size}")
    y = data.reshape(n_sensors, n_samples).astype(float)
    return NeuralRecording(y=y, fs=fs, subject=subject or path.stem)


def write_recording_csv(path, recording: NeuralRecording) -> None:
    """Tiny-test CSV alternative: an 'fs,<rate>' line, then one row per sensor."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"fs,{recording.fs!r}\n")
        for row in recording.y:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_recording_csv(path, subject: str | None = None) -> NeuralRecording:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("fs,"):
        raise ValidationError(f"{path}: first line must be 'fs,<rate>'")
    fs = float(lines[0].split(",", 1)[1])
    y = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return NeuralRecording(y=y, fs=fs, subject=subject or path.stem)


# ---------------------------------------------------------------------------
# Model files


def save_coefficients_csv(path, model: TrfModel) -> None:
    """Write one row per coefficient: feature, sensor, lag_s, value."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("feature,sensor,lag_s,value\n")
        for f, name in enumerate(model.layout.names):
            base = model.layout.offsets[f]
            for lag in range(model.layout.n_lags(f)):
                lag_s = lag / float(model.fs)
                for s in range(model.n_sensors):
                    fh.write(f"{name},{s},{lag_s!r},{float(model.theta[base + lag, s])!r}\n")


def save_model(path, model: TrfModel, metadata: dict | None = None) -> None:
    payload = {
        "layout": {
            "names": list(model.layout.names),
            "lag_seconds": list(model.layout.lag_seconds),
            "fs": model.layout.fs,
        },
        "ridge": model.ridge,
        "theta": model.theta.tolist(),
        "feature_means": model.feature_means.tolist(),
        "y_means": model.y_means.tolist(),
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_model(path) -> tuple[TrfModel, dict]:
    payload = json.loads(Path(path).read_text())
    layout = FeatureLayout(
        names=tuple(payload["layout"]["names"]),
        lag_seconds=tuple(payload["layout"]["lag_seconds"]),
        fs=payload["layout"]["fs"],
    )
    model = TrfModel(
        layout=layout,
        theta=np.asarray(payload["theta"], dtype=float),
        ridge=float(payload["ridge"]),
        feature_means=np.asarray(payload["feature_means"], dtype=float),
        y_means=np.asarray(payload["y_means"], dtype=float),
    )
    return model, payload.get("metadata", {})
