"""Model checkpoints and loss-curve files.

A checkpoint is the shared container format: a JSON header (model kind,
config, seed, epoch count) followed by the parameters and batch-norm running
statistics as a little-endian float32 blob.  Loading rebuilds the model and
installs the (f32-quantized) state.
"""

from __future__ import annotations

import csv
from dataclasses import asdict

import numpy as np

from memtrace._serialize import read_container, write_container
from memtrace.nn.models import Cnn, CnnConfig, Mlp, MlpConfig, _Network


def save_checkpoint(model: _Network, path, epoch: int | None = None) -> None:
    header = {
        "kind": model.kind,
        "config": asdict(model.config),
        "seed": model.seed,
        "epoch": epoch,
    }
    write_container(path, header, model.state_arrays())


def load_checkpoint(path) -> _Network:
    header, arrays = read_container(path)
    kind = header.get("kind")
    cfg = dict(header["config"])
    if kind == "mlp":
        cfg["hidden_dims"] = tuple(cfg["hidden_dims"])
        model = Mlp(MlpConfig(**cfg), seed=header["seed"])
    elif kind == "cnn":
        cfg["in_shape"] = tuple(cfg["in_shape"])
        model = Cnn(CnnConfig(**cfg), seed=header["seed"])
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    model.load_state_arrays(arrays)
    return model


def save_loss_curve(curve: np.ndarray, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        for i, loss in enumerate(curve):
            writer.writerow([i, f"{loss:.9g}"])


def load_loss_curve(path) -> np.ndarray:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        return np.array([float(row[1]) for row in reader])
