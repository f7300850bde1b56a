"""Leave-one-subject-out evaluation, agreement metrics, and reports.

Fold metrics are a 2x2 confusion matrix (rows: true remembered, true
forgotten; columns: predicted likewise), accuracy, and Cohen's kappa

    kappa = (p_o - p_e) / (1 - p_e)

computed in exact integer arithmetic from the counts, so scaling every count
by a positive integer leaves kappa bit-identical.  Cohort summaries are the
mean and (population) standard deviation over folds plus a pooled confusion
matrix, summed over folds and then row-normalized.

The paired t-test ships its own Student-t tail probability via the
regularized incomplete beta function (continued fraction), so the package
has no statistics dependency.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from memtrace import svm as svm_mod
from memtrace.data_model import BandSet, ChannelLayout, EpochSet, default_bands, default_layout
from memtrace.nn.models import CnnConfig, MlpConfig
from memtrace.nn.training import TrainConfig, predict as nn_predict, train as nn_train
from memtrace.preprocess import preprocess_pipeline
from memtrace.rngutil import derive_seed
from memtrace.spectral import FeatureTensor, features as spectral_features, flatten, mesh, unflatten


class LeakageError(Exception):
    """A fold plan lets held-out data into the training pool."""


# confusion-matrix metrics


def confusion(true_labels, pred_labels) -> np.ndarray:
    """2x2 counts; rows = true (remembered, forgotten), cols = predicted.

    Element [0, 0] counts true-remembered predicted-remembered, [1, 1]
    true-forgotten predicted-forgotten.
    """
    t = np.asarray(true_labels, dtype=np.intp)
    p = np.asarray(pred_labels, dtype=np.intp)
    if t.shape != p.shape or t.ndim != 1 or t.size == 0:
        raise ValueError(f"need equal-length 1-D label arrays, got {t.shape} and {p.shape}")
    for name, arr in (("true", t), ("pred", p)):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} labels must all be 0 or 1")
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (1 - t, 1 - p), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm)) / total


def normalize_rows(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic matrix plus a mask flagging all-zero rows (emitted as
    zeros rather than NaN)."""
    cm = np.asarray(cm, dtype=np.float64)
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")
    sums = cm.sum(axis=1, keepdims=True)
    zero_rows = sums[:, 0] == 0
    out = np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)
    return out, zero_rows


def _kappa_terms(cm: np.ndarray) -> tuple[int, int]:
    cm = np.asarray(cm)
    n = int(cm.sum())
    if n == 0:
        raise ValueError("empty confusion matrix")
    trace = int(np.trace(cm))
    coincidence = sum(int(cm[i, :].sum()) * int(cm[:, i].sum()) for i in range(cm.shape[0]))
    # kappa = (n*trace - sum(row*col)) / (n^2 - sum(row*col)), all integers
    return n * trace - coincidence, n * n - coincidence


def kappa(cm: np.ndarray) -> float:
    """Chance-corrected agreement.  Returns 0.0 (with a warning) when the
    expected agreement is 1, i.e. both raters are constant."""
    num, den = _kappa_terms(cm)
    if den == 0:
        warnings.warn("kappa is degenerate (expected agreement is 1); returning 0", stacklevel=2)
        return 0.0
    return num / den


def kappa_is_degenerate(cm: np.ndarray) -> bool:
    return _kappa_terms(cm)[1] == 0


# paired t-test with an in-repo Student-t tail


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter = 300
    eps = 1e-15
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-10."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


def paired_ttest(a, b) -> TTestResult:
    """Two-sided paired t-test: t = mean(d) / (sd(d)/sqrt(n)) with d = a - b.

    Raises ``ValueError`` when the differences have zero variance (the
    statistic is undefined there).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length 1-D arrays with n >= 2")
    d = a - b
    n = d.size
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise ValueError("differences have zero variance; t is undefined")
    t = float(d.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = betainc_reg(df / 2.0, 0.5, df / (df + t * t))
    return TTestResult(t=t, p=float(p), df=df)


# class rebalancing


def rebalance(x, y, strategy: str = "random_oversample", seed: int = 0):
    """Duplicate minority-class rows (seeded, with replacement) until the
    class counts match.  Original rows keep their order; duplicates append."""
    if strategy != "random_oversample":
        raise ValueError(f"unknown rebalancing strategy {strategy!r}")
    x = np.asarray(x)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ValueError("rebalance needs both classes present")
    if counts.min() == counts.max():
        return x, y
    minority = classes[counts.argmin()]
    need = int(counts.max() - counts.min())
    pool = np.nonzero(y == minority)[0]
    extra = np.random.default_rng(seed).choice(pool, size=need, replace=True)
    return np.concatenate([x, x[extra]]), np.concatenate([y, y[extra]])


# LOSO machinery


@dataclass(frozen=True)
class FoldPlan:
    test_subject: str
    train_subjects: tuple[str, ...]


def make_fold_plan(subject_ids) -> tuple[FoldPlan, ...]:
    ids = sorted(str(s) for s in subject_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be distinct")
    if len(ids) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    return tuple(
        FoldPlan(test_subject=s, train_subjects=tuple(o for o in ids if o != s)) for s in ids
    )


def verify_fold_plan(plan, subject_ids) -> None:
    """Raise :class:`LeakageError` unless every subject is held out exactly
    once and never appears in its own fold's training pool."""
    ids = sorted(str(s) for s in subject_ids)
    tested = [f.test_subject for f in plan]
    if sorted(tested) != ids:
        raise LeakageError(f"test subjects {sorted(tested)} != cohort subjects {ids}")
    for f in plan:
        if f.test_subject in f.train_subjects:
            raise LeakageError(f"subject {f.test_subject} appears in its own training pool")
        expected = [s for s in ids if s != f.test_subject]
        if sorted(f.train_subjects) != expected:
            raise LeakageError(
                f"fold {f.test_subject}: training pool {sorted(f.train_subjects)} "
                f"!= remaining subjects {expected}"
            )


@dataclass(frozen=True)
class FeatureConfig:
    bands: BandSet = field(default_factory=default_bands)
    layout: ChannelLayout | None = None  # None = packaged default
    preprocess: bool = True

    def resolved_layout(self) -> ChannelLayout:
        return self.layout if self.layout is not None else default_layout()


@dataclass(frozen=True)
class SubjectFeatures:
    subject_id: str
    tensor: FeatureTensor
    labels: np.ndarray


def cohort_features(cohort: list[EpochSet], fcfg: FeatureConfig) -> list[SubjectFeatures]:
    """Per-subject feature tensors, optionally running the conditioning
    chain first.  Computed once and shared across models/folds."""
    out = []
    for e in cohort:
        conditioned = preprocess_pipeline(e) if fcfg.preprocess else e
        out.append(
            SubjectFeatures(
                subject_id=e.subject_id,
                tensor=spectral_features(conditioned, fcfg.bands),
                labels=np.asarray(e.labels, dtype=np.intp),
            )
        )
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Which classifier a LOSO run trains, with its hyperparameters.

    ``kind`` is one of "svm", "mlp", "cnn", or "nearest" (a 1-NN memorizer,
    useful as a leakage canary in tests and diagnostics).
    """

    kind: str
    svm_c: float = 1.0
    svm_gamma: float | None = None
    mlp: MlpConfig = field(default_factory=MlpConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)

    def __post_init__(self):
        if self.kind not in ("svm", "mlp", "cnn", "nearest"):
            raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class FoldResult:
    held_out_subject: str
    cm: np.ndarray
    accuracy: float
    kappa: float
    degenerate: bool = False
    note: str = ""


@dataclass(frozen=True)
class EvalReport:
    model: str
    task: str
    folds: tuple[FoldResult, ...]
    accuracy_mean: float
    accuracy_std: float
    kappa_mean: float
    kappa_std: float
    pooled_cm: np.ndarray

    def pooled_normalized(self) -> np.ndarray:
        return normalize_rows(self.pooled_cm)[0]


def _standardizer(x_train: np.ndarray):
    mean = x_train.mean(axis=0)
    scale = x_train.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return lambda x: (x - mean) / scale


def _to_mesh(x_flat, bands: BandSet, channel_names, layout: ChannelLayout) -> np.ndarray:
    return mesh(unflatten(x_flat, bands, channel_names), layout)


def _fold_worker(args) -> FoldResult:
    (
        fold_index,
        test_subject,
        x_train,
        y_train,
        x_test,
        y_test,
        meta,
        model_spec,
        train_cfg,
        best_epoch,
        rebalance_train,
    ) = args
    fold_seed = derive_seed(train_cfg.seed, fold_index)
    note = ""

    if np.unique(y_train).size < 2:
        # Degenerate training pool: record the fold (predicting the only
        # class seen) instead of silently skipping it.
        lone = int(y_train[0])
        preds = np.full(y_test.shape, lone, dtype=np.intp)
        note = "degenerate training pool (single class)"
        cm = confusion(y_test, preds)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            k = kappa(cm)
        return FoldResult(test_subject, cm, accuracy(cm), k, degenerate=True, note=note)

    if rebalance_train:
        x_train, y_train = rebalance(x_train, y_train, seed=fold_seed)

    if model_spec.kind == "svm":
        model = svm_mod.train_smo(
            x_train,
            y_train,
            c=model_spec.svm_c,
            gamma=model_spec.svm_gamma,
            seed=fold_seed,
        )
        preds = svm_mod.predict(model, x_test)
    elif model_spec.kind == "nearest":
        d = ((x_test[:, None, :] - x_train[None, :, :]) ** 2).sum(axis=2)
        preds = y_train[d.argmin(axis=1)]
    else:
        standardize = _standardizer(x_train)
        x_tr, x_te = standardize(x_train), standardize(x_test)
        if model_spec.kind == "cnn":
            bands, channel_names, layout = meta
            cfg = replace(
                model_spec.cnn, in_shape=(bands.n_bands, layout.mesh_rows, layout.mesh_cols)
            )
            x_tr = _to_mesh(x_tr, bands, channel_names, layout)
            x_te = _to_mesh(x_te, bands, channel_names, layout)
        else:
            cfg = replace(model_spec.mlp, input_dim=x_tr.shape[1])
        cfg_train = replace(train_cfg, seed=fold_seed)

        if best_epoch:
            best = {"kappa": -np.inf, "epoch": -1, "preds": None}

            def snapshot(epoch, model):
                p, _ = nn_predict(model, x_te)
                cm_e = confusion(y_test, p)
                k_e = kappa(cm_e) if not kappa_is_degenerate(cm_e) else 0.0
                if k_e > best["kappa"]:
                    best.update(kappa=k_e, epoch=epoch, preds=p)

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                nn_train(cfg, x_tr, y_train, cfg_train, on_epoch_end=snapshot)
            preds = best["preds"]
            note = f"best epoch {best['epoch']}"
        else:
            result = nn_train(cfg, x_tr, y_train, cfg_train)
            preds, _ = nn_predict(result.model, x_te)

    cm = confusion(y_test, preds)
    degenerate = kappa_is_degenerate(cm)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        k = kappa(cm)
    return FoldResult(test_subject, cm, accuracy(cm), k, degenerate=degenerate, note=note)


def loso(
    cohort: list[EpochSet] | None,
    model_spec: ModelSpec,
    train_cfg: TrainConfig = TrainConfig(),
    feature_cfg: FeatureConfig | None = None,
    *,
    features: list[SubjectFeatures] | None = None,
    jobs: int = 1,
    best_epoch: bool = False,
    rebalance_train: bool = False,
    task: str = "default",
) -> EvalReport:
    """Leave-one-subject-out evaluation of one model over a cohort.

    Exactly one fold per subject, in sorted-subject order; fold k's test
    trials come solely from the held-out subject (verified, not assumed).
    Fold k trains with the sub-seed ``splitmix64(train_cfg.seed XOR k)``.
    Pass ``features`` to reuse tensors computed by :func:`cohort_features`;
    otherwise they are computed here from ``cohort``.

    A fold whose training pool contains a single class is recorded as
    degenerate (it predicts that class) rather than skipped.  ``jobs`` > 1
    runs folds in worker processes; results are identical to serial runs.
    """
    feature_cfg = feature_cfg or FeatureConfig()
    if features is None:
        if cohort is None:
            raise ValueError("need either a cohort or precomputed features")
        features = cohort_features(cohort, feature_cfg)

    by_subject = {sf.subject_id: sf for sf in features}
    if len(by_subject) != len(features):
        raise ValueError("subject ids must be distinct")
    plan = make_fold_plan(by_subject)
    verify_fold_plan(plan, by_subject)

    first = features[0]
    meta = (first.tensor.band_set, first.tensor.channel_names, feature_cfg.resolved_layout())
    flat = {sid: flatten(sf.tensor) for sid, sf in by_subject.items()}

    fold_args = []
    for k, fold in enumerate(plan):
        x_train = np.concatenate([flat[s] for s in fold.train_subjects])
        y_train = np.concatenate([by_subject[s].labels for s in fold.train_subjects])
        x_test = flat[fold.test_subject]
        y_test = by_subject[fold.test_subject].labels
        fold_args.append(
            (
                k,
                fold.test_subject,
                x_train,
                y_train,
                x_test,
                y_test,
                meta,
                model_spec,
                train_cfg,
                best_epoch,
                rebalance_train,
            )
        )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = tuple(pool.map(_fold_worker, fold_args))
    else:
        folds = tuple(_fold_worker(a) for a in fold_args)

    total_test = sum(int(f.cm.sum()) for f in folds)
    total_trials = sum(len(sf.labels) for sf in features)
    if total_test != total_trials:
        raise LeakageError(
            f"folds evaluated {total_test} trials but the cohort has {total_trials}"
        )

    acc = np.array([f.accuracy for f in folds])
    kap = np.array([f.kappa for f in folds])
    pooled = np.sum([f.cm for f in folds], axis=0)
    return EvalReport(
        model=model_spec.kind,
        task=task,
        folds=folds,
        accuracy_mean=float(acc.mean()),
        accuracy_std=float(acc.std()),
        kappa_mean=float(kap.mean()),
        kappa_std=float(kap.std()),
        pooled_cm=pooled,
    )


# report rendering


def _fold_rows(report: EvalReport):
    for i, f in enumerate(report.folds):
        tp, fn = int(f.cm[0, 0]), int(f.cm[0, 1])
        fp, tn = int(f.cm[1, 0]), int(f.cm[1, 1])
        yield {
            "model": report.model,
            "task": report.task,
            "fold": i,
            "subject": f.held_out_subject,
            "accuracy": f.accuracy,
            "kappa": f.kappa,
            "tn": tn,
            "fp": fp,
            "fn": fn,
            "tp": tp,
        }


def render_csv(reports: list[EvalReport]) -> str:
    lines = ["model,task,fold,subject,accuracy,kappa,tn,fp,fn,tp"]
    for r in reports:
        for row in _fold_rows(r):
            lines.append(
                f"{row['model']},{row['task']},{row['fold']},{row['subject']},"
                f"{row['accuracy']:.6f},{row['kappa']:.6f},"
                f"{row['tn']},{row['fp']},{row['fn']},{row['tp']}"
            )
    return "\n".join(lines) + "\n"


def render_json(reports: list[EvalReport]) -> dict:
    out = {"reports": []}
    for r in reports:
        pooled_norm, _ = normalize_rows(r.pooled_cm)
        out["reports"].append(
            {
                "model": r.model,
                "task": r.task,
                "accuracy_mean": round(r.accuracy_mean, 6),
                "accuracy_std": round(r.accuracy_std, 6),
                "kappa_mean": round(r.kappa_mean, 6),
                "kappa_std": round(r.kappa_std, 6),
                "folds": [
                    {
                        "fold": row["fold"],
                        "subject": row["subject"],
                        "accuracy": round(row["accuracy"], 6),
                        "kappa": round(row["kappa"], 6),
                        "cm": [[row["tp"], row["fn"]], [row["fp"], row["tn"]]],
                        "degenerate": r.folds[row["fold"]].degenerate,
                        "note": r.folds[row["fold"]].note,
                    }
                    for row in _fold_rows(r)
                ],
                "pooled_cm": [[int(v) for v in line] for line in r.pooled_cm],
                "pooled_normalized": [[round(v, 6) for v in line] for line in pooled_norm],
            }
        )
    return out


def render_text(reports: list[EvalReport]) -> str:
    lines = []
    lines.append(f"{'model':<8}{'task':<12}{'accuracy':<20}kappa")
    for r in reports:
        lines.append(
            f"{r.model:<8}{r.task:<12}"
            f"{r.accuracy_mean:.3f} (+/-{r.accuracy_std:.3f})    "
            f"{r.kappa_mean:.3f} (+/-{r.kappa_std:.3f})"
        )
    lines.append("")
    for r in reports:
        pooled_norm, _ = normalize_rows(r.pooled_cm)
        lines.append(f"{r.model} pooled normalized confusion (rows: true remembered, forgotten):")
        for row in pooled_norm:
            lines.append("    " + "  ".join(f"{v:.3f}" for v in row))
    return "\n".join(lines) + "\n"


def report(reports: list[EvalReport] | EvalReport, fmt: str = "text") -> str:
    """Render one or more reports as 'text', 'csv', or 'json' (serialized)."""
    import json as _json

    if isinstance(reports, EvalReport):
        reports = [reports]
    if fmt == "text":
        return render_text(reports)
    if fmt == "csv":
        return render_csv(reports)
    if fmt == "json":
        return _json.dumps(render_json(reports), indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
