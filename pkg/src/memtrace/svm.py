"""Soft-margin RBF-kernel SVM trained with simplified SMO.

The dual problem is solved two multipliers at a time, Platt-style, with the
second index drawn from a seeded stream (determinism over working-set
heuristics; the data here is hundreds of trials, not millions).  Features
are standardized per dimension with training-set statistics before the
kernel, and the fitted mean/scale ride along in the model so prediction
applies the same transform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from memtrace._serialize import read_container, write_container


def rbf_kernel(x: np.ndarray, z: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - z||^2) for two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    d = x - z
    return float(np.exp(-gamma * np.dot(d, d)))


def _rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix K[i, j] = rbf(a[i], b[j])."""
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained classifier state.

    ``alphas`` are the dual multipliers of the retained support vectors,
    ``sv_targets`` their labels mapped to {-1, +1}.  ``feature_mean`` and
    ``feature_scale`` reproduce the training-time standardization.
    """

    support_vectors: np.ndarray
    alphas: np.ndarray
    sv_targets: np.ndarray
    bias: float
    gamma: float
    c: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[0]

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_scale


def decision_function(m: SvmModel, x: np.ndarray) -> np.ndarray:
    """sum_i alpha_i t_i K(sv_i, x) + b for each row of x."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != m.support_vectors.shape[1]:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match the model's "
            f"{m.support_vectors.shape[1]}"
        )
    k = _rbf_matrix(m.support_vectors, m._standardize(x), m.gamma)
    return (m.alphas * m.sv_targets) @ k + m.bias


def predict(m: SvmModel, x: np.ndarray) -> np.ndarray:
    """Labels in {0, 1}: 1 where the decision value is positive."""
    return (decision_function(m, x) > 0).astype(np.uint8)


def train_smo(
    x: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_passes: int = 10,
    seed: int = 0,
    standardize: bool = True,
    max_sweeps: int = 500,
) -> SvmModel:
    """Fit the soft-margin dual by simplified SMO.

    ``y`` holds {0, 1} labels and must contain both classes.  ``gamma``
    defaults to 1/n_features.  Sweeps over the training set continue until
    ``max_passes`` consecutive sweeps change nothing (KKT satisfied within
    ``tol`` everywhere) or ``max_sweeps`` is hit, whichever comes first.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"x {x.shape} incompatible with y {y.shape}")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        raise ValueError(f"need both classes 0 and 1 in y, got classes {classes.tolist()}")
    n, d = x.shape
    if gamma is None:
        gamma = 1.0 / d

    if standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-12] = 1.0  # constant dims carry no information
    else:
        mean = np.zeros(d)
        scale = np.ones(d)
    xs = (x - mean) / scale

    t = np.where(y == 1, 1.0, -1.0)
    k = _rbf_matrix(xs, xs, gamma)
    alphas = np.zeros(n)
    b = 0.0
    rng = np.random.default_rng(seed)

    def error(i: int) -> float:
        return float((alphas * t) @ k[:, i] + b - t[i])

    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            e_i = error(i)
            r_i = e_i * t[i]
            if not ((r_i < -tol and alphas[i] < c) or (r_i > tol and alphas[i] > 0)):
                continue
            j = int((i + 1 + rng.integers(n - 1)) % n)
            e_j = error(j)
            a_i_old, a_j_old = alphas[i], alphas[j]

            # box bounds keeping alpha_i*t_i + alpha_j*t_j constant
            if t[i] == t[j]:
                lo = max(0.0, a_i_old + a_j_old - c)
                hi = min(c, a_i_old + a_j_old)
            else:
                lo = max(0.0, a_j_old - a_i_old)
                hi = min(c, c + a_j_old - a_i_old)
            if hi - lo < 1e-12:
                continue
            eta = 2.0 * k[i, j] - k[i, i] - k[j, j]
            if eta >= 0:
                continue

            a_j = np.clip(a_j_old - t[j] * (e_i - e_j) / eta, lo, hi)
            if abs(a_j - a_j_old) < 1e-8:
                continue
            a_i = a_i_old + t[i] * t[j] * (a_j_old - a_j)
            alphas[i], alphas[j] = a_i, a_j

            b1 = b - e_i - t[i] * (a_i - a_i_old) * k[i, i] - t[j] * (a_j - a_j_old) * k[i, j]
            b2 = b - e_j - t[i] * (a_i - a_i_old) * k[i, j] - t[j] * (a_j - a_j_old) * k[j, j]
            if 0.0 < a_i < c:
                b = b1
            elif 0.0 < a_j < c:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            changed += 1
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0

    if sweeps >= max_sweeps and passes < max_passes:
        warnings.warn(
            f"SMO stopped after {max_sweeps} sweeps before reaching {max_passes} "
            "clean passes; KKT conditions may be loose",
            stacklevel=2,
        )

    keep = alphas > 1e-8
    return SvmModel(
        support_vectors=xs[keep],
        alphas=alphas[keep],
        sv_targets=t[keep],
        bias=float(b),
        gamma=float(gamma),
        c=float(c),
        feature_mean=mean,
        feature_scale=scale,
    )


def save_svm(m: SvmModel, path) -> None:
    header = {"kind": "svm", "bias": m.bias, "gamma": m.gamma, "c": m.c}
    write_container(
        path,
        header,
        [
            ("support_vectors", m.support_vectors),
            ("alphas", m.alphas),
            ("sv_targets", m.sv_targets),
            ("feature_mean", m.feature_mean),
            ("feature_scale", m.feature_scale),
        ],
    )


def load_svm(path) -> SvmModel:
    header, arrays = read_container(path)
    if header.get("kind") != "svm":
        raise ValueError(f"{path}: not an SVM checkpoint")
    return SvmModel(
        support_vectors=arrays["support_vectors"].astype(np.float64),
        alphas=arrays["alphas"].astype(np.float64),
        sv_targets=arrays["sv_targets"].astype(np.float64),
        bias=float(header["bias"]),
        gamma=float(header["gamma"]),
        c=float(header["c"]),
        feature_mean=arrays["feature_mean"].astype(np.float64),
        feature_scale=arrays["feature_scale"].astype(np.float64),
    )
