"""Command-line surface: recognize, fit, eval, compare, simulate.

Every command reads a single JSON or TOML config naming its inputs and
writes its outputs plus a run manifest (resolved config, input hashes,
seed, version, timestamps) into --out-dir.  A manifest can itself be
passed as --config to re-run the command it records.

Exit codes: 0 success, 1 validation/configuration error, 2 runtime or
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:  # stdlib from 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .exceptions import ValidationError
from .features import QuantileSplit
from .lexicon import build_confusion, load_confusion_counts, load_lexicon, PhonemeInventory
from .features import load_unigrams
from .linking import LinkingSpec, compare_fit, model_features, save_comparison
from .pipeline import DataSplit, PipelineData, SearchSpace, guard_trimmed, search, split_data, save_report, save_trial_history
from .recognition import (
    CognitiveParams,
    bound_violations,
    load_priors,
    recognize_transcript,
    save_recognition_csv,
    save_trajectories,
)
from .synth import KernelSpec, SynthConfig, generate, write_dataset
from .transcript import load_transcript
from .trf import load_model, predict, read_recording, read_recording_csv, save_coefficients_csv, save_model, sensor_correlations
from .trf import NeuralRecording

COMMANDS = ("recognize", "fit", "eval", "compare", "simulate")

_THREAD_LIMIT = None  # keeps a threadpoolctl limiter alive for the process


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _limit_threads(args.threads)
    try:
        config, source_path = _load_config(args.config, args.command)
        if args.seed is not None:
            # bake the override into the config so the manifest re-runs
            # exactly what this invocation ran
            section = {"simulate": "synth", "fit": "search"}.get(args.command)
            if section is not None:
                config.setdefault(section, {})["seed"] = args.seed
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = _HANDLERS[args.command]
        handler(config, out_dir, args, source_path.parent)
        _write_manifest(out_dir, args.command, config, source_path, args.seed)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps everything else to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wordtrf", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "recognize": "per-token recognition points and times",
        "fit": "cross-validated search and held-out evaluation of a linking model",
        "eval": "per-sensor correlation table for a fitted model",
        "compare": "paired t-test between two fitted models",
        "simulate": "generate a synthetic dataset with a ground-truth sidecar",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=descriptions[name])
        p.add_argument("--config", required=True, help="JSON or TOML run configuration (or a previous manifest)")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config's seed")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS thread count")
    return parser


def _limit_threads(n: int) -> None:
    try:
        import threadpoolctl

        global _THREAD_LIMIT
        _THREAD_LIMIT = threadpoolctl.threadpool_limits(n)
    except ImportError:
        import os

        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _load_config(path, command: str) -> tuple[dict, Path]:
    """Parse a config (or a previous manifest); return it with the path that
    relative input paths resolve against."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with path.open("rb") as fh:
            config = tomllib.load(fh)
    else:
        try:
            config = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    source_path = path.resolve()
    if isinstance(config, dict) and "command" in config and "config" in config:
        # a manifest from a previous run: re-run its recorded config, with
        # relative paths anchored where the original config lived
        if config["command"] != command:
            raise ValidationError(
                f"manifest records command {config['command']!r}, but {command!r} was requested"
            )
        source_path = Path(config.get("config_path", source_path))
        config = config["config"]
    if not isinstance(config, dict):
        raise ValidationError(f"{path}: config must be a table/object")
    return config, source_path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, source_path: Path, seed_override) -> None:
    hashes = {}
    inputs = config.get("inputs", {})
    base = source_path.parent
    for key, value in inputs.items():
        paths = value if isinstance(value, list) else [value]
        for p in paths:
            p = (base / p).resolve() if not Path(p).is_absolute() else Path(p)
            if p.is_file():
                hashes[str(p)] = _sha256(p)
    manifest = {
        "command": command,
        "config": config,
        "config_path": str(source_path),
        "input_hashes": hashes,
        "seed_override": seed_override,
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _require(config: dict, key: str, context: str) -> object:
    if key not in config:
        raise ValidationError(f"{context}: missing required key {key!r}")
    return config[key]


def _load_inputs(config: dict, base: Path):
    inputs = _require(config, "inputs", "config")
    for key in ("lexicon", "confusion", "transcript", "priors"):
        _require(inputs, key, "config.inputs")
    counts, labels = load_confusion_counts(_resolve(base, inputs["confusion"]))
    inventory = PhonemeInventory(tuple(labels))
    lam = float(config.get("params", {}).get("lam", 1.0))
    confusion = build_confusion(counts, labels, lam, inventory)
    lexicon = load_lexicon(_resolve(base, inputs["lexicon"]), inventory)
    transcript = load_transcript(_resolve(base, inputs["transcript"]))
    priors = load_priors(_resolve(base, inputs["priors"]), transcript)
    return lexicon, confusion, transcript, priors


def _load_recordings(config: dict, base: Path) -> list[NeuralRecording]:
    inputs = config["inputs"]
    entry = _require(inputs, "recordings", "config.inputs")
    if isinstance(entry, str):
        rec_dir = _resolve(base, entry)
        if not rec_dir.is_dir():
            raise ValidationError(f"recordings directory not found: {rec_dir}")
        paths = sorted(rec_dir.glob("*.nrc")) + sorted(rec_dir.glob("*.csv"))
        if not paths:
            raise ValidationError(f"no .nrc or .csv recordings in {rec_dir}")
    else:
        paths = [_resolve(base, p) for p in entry]
    recordings = []
    for p in paths:
        if not p.exists():
            raise ValidationError(f"recording not found: {p}")
        recordings.append(read_recording_csv(p) if p.suffix == ".csv" else read_recording(p))
    return recordings


def _cognitive_params(config: dict) -> CognitiveParams:
    params = _require(config, "params", "config")
    missing = [k for k in ("gamma", "lam", "alpha", "alpha_p") if k not in params]
    if missing:
        raise ValidationError(f"config.params: missing {missing}")
    problems = bound_violations(params["gamma"], params["lam"], params["alpha"], params["alpha_p"])
    if problems:
        raise ValidationError("config.params: " + "; ".join(problems))
    return CognitiveParams(
        gamma=float(params["gamma"]),
        lam=float(params["lam"]),
        alpha=float(params["alpha"]),
        alpha_p=float(params["alpha_p"]),
    )


# ---------------------------------------------------------------------------
# Commands


def _cmd_recognize(config: dict, out_dir: Path, args, base: Path) -> None:
    lexicon, confusion, transcript, priors = _load_inputs(config, base)
    params = _cognitive_params(config)
    results = recognize_transcript(transcript, priors, params, confusion, lexicon)
    save_recognition_csv(out_dir / "recognition.csv", results)
    if config.get("trajectories", False):
        save_trajectories(out_dir / "trajectories.jsonl", results)


def _pipeline_data(config: dict, base: Path) -> PipelineData:
    lexicon, confusion, transcript, priors = _load_inputs(config, base)
    recordings = _load_recordings(config, base)
    unigram_path = config["inputs"].get("unigrams")
    unigrams = load_unigrams(_resolve(base, unigram_path)) if unigram_path else {}
    lags = config.get("lags", {})
    return PipelineData.build(
        transcript,
        priors,
        lexicon,
        confusion,
        recordings,
        unigrams,
        sublexical_lag_s=float(lags.get("sublexical_s", 0.6)),
        word_lag_s=float(lags.get("word_s", 0.8)),
        deposit=config.get("deposit", "impulse"),
        include_flagged=bool(config.get("include_flagged", False)),
    )


def _data_split(config: dict, data: PipelineData) -> DataSplit:
    split_cfg = config.get("split", {})
    return split_data(
        data.recordings,
        fraction=float(split_cfg.get("test_fraction", 0.25)),
        n_folds=int(split_cfg.get("n_folds", 4)),
    )


def _search_space(config: dict) -> SearchSpace:
    cfg = dict(config.get("search", {}))
    kwargs = {}
    for key in ("gamma", "lam", "alpha", "alpha_p"):
        if key in cfg:
            kwargs[key] = tuple(float(v) for v in cfg[key])
    if "ridge" in cfg:
        kwargs["ridge"] = tuple(float(v) for v in cfg["ridge"])
    kwargs["budget"] = int(cfg.get("budget", 50))
    kwargs["seed"] = int(cfg.get("seed", 0))
    kwargs["guided"] = bool(cfg.get("guided", False))
    return SearchSpace(**kwargs)


def _cmd_fit(config: dict, out_dir: Path, args, base: Path) -> None:
    data = _pipeline_data(config, base)
    split = _data_split(config, data)
    variant = _require(config, "variant", "config")
    space = _search_space(config)
    report = search(data, split, variant, space)

    save_report(out_dir / "fit_report.json", report)
    save_trial_history(out_dir / "trials.csv", report.trials)
    models_dir = out_dir / "models"
    coefs_dir = out_dir / "coefficients"
    models_dir.mkdir(exist_ok=True)
    coefs_dir.mkdir(exist_ok=True)
    metadata = {
        "variant": variant,
        "params": report.best_params,
        "quantile_edges": list(report.quantile_edges) if report.quantile_edges else None,
        "lags": {"sublexical_s": data.sublexical_lag_s, "word_s": data.word_lag_s},
        "split": {"test_fraction": float(config.get("split", {}).get("test_fraction", 0.25)),
                  "n_folds": int(config.get("split", {}).get("n_folds", 4))},
    }
    for rec, model in zip(data.recordings, report.models):
        save_model(models_dir / f"{rec.subject}.model.json", model, metadata={**metadata, "subject": rec.subject})
        save_coefficients_csv(coefs_dir / f"{rec.subject}.csv", model)


def _fit_predictions(fit_dir: Path, data: PipelineData, partition: str):
    """Rebuild a fitted model's predictions for a partition of the timeline."""
    models_dir = fit_dir / "models"
    model_paths = sorted(models_dir.glob("*.model.json"))
    if not model_paths:
        raise ValidationError(f"no fitted models under {models_dir}")
    models, metadatas = zip(*(load_model(p) for p in model_paths))
    meta = metadatas[0]
    params = CognitiveParams(
        gamma=meta["params"]["gamma"],
        lam=meta["params"]["lam"],
        alpha=meta["params"]["alpha"],
        alpha_p=meta["params"]["alpha_p"],
    )
    variant = meta["variant"]
    results = None
    qsplit = None
    if variant in ("shift", "variable"):
        results = recognize_transcript(data.transcript, data.priors, params, data.confusion, data.lexicon)
    if variant in ("variable", "prior_variable"):
        edges = meta.get("quantile_edges")
        if edges is None:
            raise ValidationError(f"{fit_dir}: fitted {variant!r} model lacks quantile edges")
        qsplit = QuantileSplit(edges=(float(edges[0]), float(edges[1])), variable=variant)
    x, layout = model_features(
        data.xt, LinkingSpec(variant, qsplit), data.xv, results, data.transcript,
        float(meta["lags"]["sublexical_s"]), float(meta["lags"]["word_s"]),
    )
    split = split_data(
        data.recordings,
        fraction=float(meta["split"]["test_fraction"]),
        n_folds=int(meta["split"]["n_folds"]),
    )
    if partition == "test":
        mask = guard_trimmed(split.test_mask(), layout.max_lag)
    elif partition == "train":
        mask = guard_trimmed(split.train_mask(), layout.max_lag)
    elif partition == "all":
        mask = guard_trimmed(np.ones(data.n_samples, dtype=bool), layout.max_lag)
    else:
        raise ValidationError(f"unknown partition {partition!r}; use test, train, or all")

    subjects = [rec.subject for rec in data.recordings]
    model_by_subject = {m["subject"]: model for model, m in zip(models, metadatas)}
    missing = [s for s in subjects if s not in model_by_subject]
    if missing:
        raise ValidationError(f"{fit_dir}: no fitted model for subjects {missing}")
    predictions = {s: predict(model_by_subject[s], x) for s in subjects}
    return predictions, mask


def _cmd_eval(config: dict, out_dir: Path, args, base: Path) -> None:
    data = _pipeline_data(config, base)
    fit_dir = _resolve(base, _require(config, "fit_dir", "config"))
    partition = config.get("partition", "test")
    predictions, mask = _fit_predictions(fit_dir, data, partition)
    with (out_dir / "eval.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "sensor", "r"])
        for rec in data.recordings:
            r = sensor_correlations(rec.y[:, mask], predictions[rec.subject][:, mask])
            for s, value in enumerate(r):
                writer.writerow([rec.subject, s, repr(float(value))])


def _cmd_compare(config: dict, out_dir: Path, args, base: Path) -> None:
    data = _pipeline_data(config, base)
    fit_a = _resolve(base, _require(config, "fit_a", "config"))
    fit_b = _resolve(base, _require(config, "fit_b", "config"))
    partition = config.get("partition", "test")
    preds_a, mask_a = _fit_predictions(fit_a, data, partition)
    preds_b, mask_b = _fit_predictions(fit_b, data, partition)
    mask = mask_a & mask_b
    observed = {rec.subject: rec.y for rec in data.recordings}
    comparison = compare_fit(
        preds_a,
        preds_b,
        observed,
        sample_mask=mask,
        model_a=config.get("label_a", fit_a.name),
        model_b=config.get("label_b", fit_b.name),
    )
    save_comparison(out_dir / "comparison.json", comparison)


def _cmd_simulate(config: dict, out_dir: Path, args, base: Path) -> None:
    synth_cfg = dict(_require(config, "synth", "config"))
    if "params" in synth_cfg:
        p = synth_cfg["params"]
        missing = [k for k in ("gamma", "lam", "alpha", "alpha_p") if k not in p]
        if missing:
            raise ValidationError(f"config.synth.params: missing {missing}")
        problems = bound_violations(p["gamma"], p["lam"], p["alpha"], p["alpha_p"])
        if problems:
            raise ValidationError("config.synth.params: " + "; ".join(problems))
        synth_cfg["params"] = CognitiveParams(
            gamma=float(p["gamma"]), lam=float(p["lam"]), alpha=float(p["alpha"]), alpha_p=float(p["alpha_p"])
        )
    if "kernels" in synth_cfg:
        synth_cfg["kernels"] = {
            name: KernelSpec(float(k["latency_s"]), float(k["width_s"]), float(k["amplitude"]))
            for name, k in synth_cfg["kernels"].items()
        }
    for key in ("word_length", "phoneme_duration_s", "word_gap_s", "truth_prior", "tertile_amplitudes"):
        if key in synth_cfg:
            synth_cfg[key] = tuple(synth_cfg[key])
    try:
        cfg = SynthConfig(**synth_cfg)
    except TypeError as exc:
        raise ValidationError(f"config.synth: {exc}") from None
    data = generate(cfg)
    write_dataset(out_dir, data)


_HANDLERS = {
    "recognize": _cmd_recognize,
    "fit": _cmd_fit,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "simulate": _cmd_simulate,
}


if __name__ == "__main__":
    raise SystemExit(main())
