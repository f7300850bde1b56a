"""memtrace command line: synth, preprocess, features, loso, report.

The ``loso`` subcommand is driven by a single JSON config with explicit
defaults; the fully resolved config is written back to the output directory
as ``resolved_config.json`` so every run is self-describing.  Unknown config
keys are hard errors.  The environment variable ``MEMTRACE_SEED`` overrides
the config seed.

Exit codes: 0 success, 1 validation/config error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from memtrace import evaluation as ev
from memtrace.data_model import (
    BandSet,
    ChannelLayout,
    EpochFormatError,
    EpochSet,
    default_bands,
    default_layout,
    load_epochs,
    save_epochs,
)
from memtrace.nn.training import TrainConfig
from memtrace.preprocess import preprocess_pipeline
from memtrace.spectral import features as spectral_features, mesh, write_features_csv
from memtrace.synthgen import SynthSpec, generate_cohort


class ConfigError(Exception):
    pass


_SYNTH_DEFAULTS = {
    "n_subjects": 6,
    "trials_per_subject": 60,
    "remembered_ratio": 0.5,
    "fs": 1000.0,
    "epoch_seconds": 2.0,
    "n_channels": 60,
    "noise_sigma": 1.0,
    "class_band_gains": {},
    "seed": None,  # null = inherit the top-level seed
}

_CONFIG_DEFAULTS = {
    "seed": 0,
    "task": "default",
    "output_dir": "memtrace_out",
    "input": {},  # exactly one of: {"synth": {...}} or {"epochs_dir": "..."}
    "preprocess": True,
    "bands": None,  # null = the six default bands; else [[name, lo, hi], ...]
    "layout": None,  # null = packaged 60-channel layout; else a JSON path
    "models": ["svm", "mlp", "cnn"],
    "train": {
        "batch_size": 20,
        "epochs": 50,
        "learning_rate": 1e-5,
        "optimizer": "adam",
        "shuffle": True,
    },
    "svm": {"c": 1.0, "gamma": None},
    "eval": {"jobs": 1, "best_epoch": False, "rebalance": False},
}


def _merge_strict(defaults: dict, user: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f'unknown config key "{path}"')
        if isinstance(defaults[key], dict) and key not in ("input", "class_band_gains"):
            if not isinstance(value, dict):
                raise ConfigError(f'config key "{path}" must be an object')
            out[key] = _merge_strict(defaults[key], value, prefix=f"{path}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _resolve_config(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge_strict(_CONFIG_DEFAULTS, doc)

    env_seed = os.environ.get("MEMTRACE_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"MEMTRACE_SEED must be an integer, got {env_seed!r}")

    inp = cfg["input"]
    if not isinstance(inp, dict) or set(inp) not in ({"synth"}, {"epochs_dir"}):
        raise ConfigError('config "input" must contain exactly one of "synth" or "epochs_dir"')
    if "synth" in inp:
        inp["synth"] = _merge_strict(_SYNTH_DEFAULTS, inp["synth"], prefix="input.synth.")
        if inp["synth"]["seed"] is None:
            inp["synth"]["seed"] = cfg["seed"]

    if cfg["bands"] is None:
        cfg["bands"] = [[name, lo, hi] for name, lo, hi in default_bands().bands]
    models = cfg["models"]
    if not models or not isinstance(models, list):
        raise ConfigError('config "models" must be a non-empty list')
    for m in models:
        if m not in ("svm", "mlp", "cnn"):
            raise ConfigError(f'unknown model "{m}" in config "models" (use svm, mlp, cnn)')
    return cfg


def _band_set(cfg: dict) -> BandSet:
    try:
        return BandSet(tuple((n, lo, hi) for n, lo, hi in cfg["bands"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'config "bands": {exc}')


def _gains_array(gains: dict, bands: BandSet) -> np.ndarray:
    out = np.ones((2, bands.n_bands))
    names = list(bands.names)
    for band, pair in gains.items():
        if band not in names:
            raise ConfigError(f'class_band_gains names unknown band "{band}"')
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f'class_band_gains["{band}"] must be [class0_gain, class1_gain]')
        out[:, names.index(band)] = pair
    return out


def _synth_spec(cfg: dict, bands: BandSet) -> SynthSpec:
    s = cfg["input"]["synth"]
    return SynthSpec(
        n_subjects=s["n_subjects"],
        trials_per_subject=s["trials_per_subject"],
        remembered_ratio=s["remembered_ratio"],
        fs=s["fs"],
        epoch_seconds=s["epoch_seconds"],
        n_channels=s["n_channels"],
        class_band_gains=_gains_array(s["class_band_gains"], bands),
        noise_sigma=s["noise_sigma"],
        seed=s["seed"],
        bands=bands,
    )


def _load_cohort_dir(path) -> list[EpochSet]:
    files = sorted(Path(path).glob("*.epo1"))
    if not files:
        raise ConfigError(f"no .epo1 files in {path}")
    return [load_epochs(f) for f in files]


def _epoch_inputs(paths: list[str]) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            found = sorted(p.glob("*.epo1"))
            if not found:
                raise ConfigError(f"no .epo1 files in {p}")
            out.extend(found)
        else:
            out.append(p)
    return out


# subcommands


def cmd_synth(args) -> int:
    base = {}
    if args.spec:
        base = json.loads(Path(args.spec).read_text())
        if not isinstance(base, dict):
            raise ConfigError(f"{args.spec}: synth spec must be a JSON object")
    spec_doc = _merge_strict(_SYNTH_DEFAULTS, base, prefix="")
    for key, flag in [
        ("n_subjects", args.subjects),
        ("trials_per_subject", args.trials),
        ("remembered_ratio", args.ratio),
        ("fs", args.fs),
        ("epoch_seconds", args.epoch_seconds),
        ("n_channels", args.channels),
        ("noise_sigma", args.noise),
        ("seed", args.seed),
    ]:
        if flag is not None:
            spec_doc[key] = flag
    if spec_doc["seed"] is None:
        spec_doc["seed"] = 0
    for entry in args.gain or []:
        try:
            band, g0, g1 = entry.split(":")
            spec_doc["class_band_gains"][band] = [float(g0), float(g1)]
        except ValueError:
            raise ConfigError(f"--gain must look like band:gain0:gain1, got {entry!r}")

    bands = default_bands()
    spec = SynthSpec(
        n_subjects=spec_doc["n_subjects"],
        trials_per_subject=spec_doc["trials_per_subject"],
        remembered_ratio=spec_doc["remembered_ratio"],
        fs=spec_doc["fs"],
        epoch_seconds=spec_doc["epoch_seconds"],
        n_channels=spec_doc["n_channels"],
        class_band_gains=_gains_array(spec_doc["class_band_gains"], bands),
        noise_sigma=spec_doc["noise_sigma"],
        seed=spec_doc["seed"],
        bands=bands,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for e in generate_cohort(spec):
        save_epochs(e, out_dir / f"{e.subject_id}.epo1")
    print(f"wrote {spec.n_subjects} subjects to {out_dir}")
    return 0


def cmd_preprocess(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _epoch_inputs(args.inputs)
    for f in files:
        e = preprocess_pipeline(load_epochs(f), target_fs=args.target_fs)
        save_epochs(e, out_dir / f.name)
    print(f"preprocessed {len(files)} files into {out_dir}")
    return 0


def cmd_features(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = ChannelLayout.from_json_file(args.layout) if args.layout else default_layout()
    bands = default_bands()
    files = _epoch_inputs(args.inputs)
    for f in files:
        e = load_epochs(f)
        if not args.no_preprocess:
            e = preprocess_pipeline(e)
        t = spectral_features(e, bands)
        stem = f.name.removesuffix(".epo1")
        write_features_csv(t, out_dir / f"{stem}.features.csv")
        np.save(out_dir / f"{stem}.mesh.npy", mesh(t, layout))
        (out_dir / f"{stem}.labels.csv").write_text(
            "label\n" + "".join(f"{int(v)}\n" for v in e.labels)
        )
    print(f"wrote features for {len(files)} files to {out_dir}")
    return 0


def run_loso_config(cfg: dict, jobs: int | None = None, best_epoch: bool | None = None) -> Path:
    """Execute a resolved loso config; returns the output directory."""
    bands = _band_set(cfg)
    layout = ChannelLayout.from_json_file(cfg["layout"]) if cfg["layout"] else default_layout()
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(json.dumps(cfg, indent=2) + "\n")

    if "synth" in cfg["input"]:
        cohort = generate_cohort(_synth_spec(cfg, bands))
    else:
        cohort = _load_cohort_dir(cfg["input"]["epochs_dir"])

    feature_cfg = ev.FeatureConfig(bands=bands, layout=layout, preprocess=cfg["preprocess"])
    feats = ev.cohort_features(cohort, feature_cfg)

    t = cfg["train"]
    train_cfg = TrainConfig(
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        learning_rate=t["learning_rate"],
        optimizer=t["optimizer"],
        seed=cfg["seed"],
        shuffle=t["shuffle"],
    )
    jobs = cfg["eval"]["jobs"] if jobs is None else jobs
    best_epoch = cfg["eval"]["best_epoch"] if best_epoch is None else best_epoch

    reports = []
    for kind in cfg["models"]:
        spec = ev.ModelSpec(kind=kind, svm_c=cfg["svm"]["c"], svm_gamma=cfg["svm"]["gamma"])
        reports.append(
            ev.loso(
                None,
                spec,
                train_cfg,
                feature_cfg,
                features=feats,
                jobs=jobs,
                best_epoch=best_epoch,
                rebalance_train=cfg["eval"]["rebalance"],
                task=cfg["task"],
            )
        )

    (out_dir / "report.csv").write_text(ev.render_csv(reports))
    (out_dir / "report.json").write_text(json.dumps(ev.render_json(reports), indent=2) + "\n")
    (out_dir / "report.txt").write_text(ev.render_text(reports))
    return out_dir


def cmd_loso(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    cfg = _resolve_config(doc)
    out_dir = run_loso_config(
        cfg,
        jobs=args.jobs,
        best_epoch=True if args.best_epoch else None,
    )
    print((out_dir / "report.txt").read_text(), end="")
    print(f"reports written to {out_dir}")
    return 0


def _reports_from_json(doc: dict) -> list[ev.EvalReport]:
    reports = []
    for r in doc["reports"]:
        folds = []
        for f in r["folds"]:
            (tp, fn), (fp, tn) = f["cm"]
            folds.append(
                ev.FoldResult(
                    held_out_subject=f["subject"],
                    cm=np.array([[tp, fn], [fp, tn]], dtype=np.int64),
                    accuracy=f["accuracy"],
                    kappa=f["kappa"],
                    degenerate=f.get("degenerate", False),
                    note=f.get("note", ""),
                )
            )
        reports.append(
            ev.EvalReport(
                model=r["model"],
                task=r["task"],
                folds=tuple(folds),
                accuracy_mean=r["accuracy_mean"],
                accuracy_std=r["accuracy_std"],
                kappa_mean=r["kappa_mean"],
                kappa_std=r["kappa_std"],
                pooled_cm=np.array(r["pooled_cm"], dtype=np.int64),
            )
        )
    return reports


def cmd_report(args) -> int:
    report_path = Path(args.results_dir) / "report.json"
    doc = json.loads(report_path.read_text())
    print(ev.report(_reports_from_json(doc), fmt=args.format), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memtrace",
        description="Band-power features and classifiers with leave-one-subject-out evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic cohort as EPO1 files")
    p.add_argument("--spec", help="synth spec JSON (flags override its fields)")
    p.add_argument("--subjects", type=int, help="number of subjects")
    p.add_argument("--trials", type=int, help="trials per subject")
    p.add_argument("--ratio", type=float, help="remembered-class fraction in (0,1)")
    p.add_argument("--fs", type=float, help="sampling rate in Hz")
    p.add_argument("--epoch-seconds", type=float, help="epoch length in seconds")
    p.add_argument("--channels", type=int, help="channel count")
    p.add_argument("--noise", type=float, help="noise sigma in microvolts")
    p.add_argument("--seed", type=int, help="cohort seed")
    p.add_argument(
        "--gain",
        action="append",
        metavar="BAND:G0:G1",
        help="per-band class gains, e.g. alpha:1.0:2.0 (repeatable)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="decimate, band-pass, and re-reference EPO1 files")
    p.add_argument("inputs", nargs="+", help=".epo1 files or directories")
    p.add_argument("--target-fs", type=float, default=250.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("features", help="write band-power feature CSVs and mesh blobs")
    p.add_argument("inputs", nargs="+", help=".epo1 files or directories")
    p.add_argument("--layout", help="channel layout JSON (default: packaged 60-channel layout)")
    p.add_argument(
        "--no-preprocess",
        action="store_true",
        help="compute features from the files as-is (already conditioned)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("loso", help="run leave-one-subject-out evaluation from a JSON config")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--jobs", type=int, default=None, help="parallel fold workers (default 1)")
    p.add_argument(
        "--best-epoch",
        action="store_true",
        help="per fold, report the training epoch with the highest held-out kappa",
    )
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("report", help="re-render reports from a results directory")
    p.add_argument("results_dir")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, ev.LeakageError, EpochFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
