"""Mini-batch trainer with Adam/SGD and deterministic seeding.

(seed, data, config) fully determine the final parameters: layer init,
dropout masks, and epoch shuffles each draw from their own sub-stream of the
config seed, and the last incomplete mini-batch is kept rather than dropped.
The returned model is used in eval mode by :func:`predict` (dropout off,
batch-norm running statistics).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from memtrace.nn.layers import softmax_cross_entropy, softmax_cross_entropy_backward
from memtrace.nn.models import Cnn, CnnConfig, Mlp, MlpConfig, _Network
from memtrace.rngutil import derive_seed


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 20
    epochs: int = 50
    learning_rate: float = 1e-5
    optimizer: str = "adam"
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, param_items):
        for _, layer, key in param_items:
            layer.params[key] -= self.lr * layer.grads[key]


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, param_items):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, layer, key in param_items:
            g = layer.grads[key]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            layer.params[key] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


@dataclass
class TrainResult:
    model: _Network
    loss_curve: np.ndarray  # one mean cross-entropy per epoch


def build_model(model_config, seed: int) -> _Network:
    if isinstance(model_config, MlpConfig):
        return Mlp(model_config, seed=seed)
    if isinstance(model_config, CnnConfig):
        return Cnn(model_config, seed=seed)
    raise TypeError(f"unsupported model config {type(model_config).__name__}")


def train(
    model_config,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig = TrainConfig(),
    on_epoch_end=None,
) -> TrainResult:
    """Train a model described by ``model_config`` on (x, y).

    ``on_epoch_end(epoch, model)`` is called after each epoch's updates with
    the model in its current state (useful for per-epoch validation).  The
    loss curve has exactly ``config.epochs`` entries, each the sample-mean
    cross-entropy over that epoch's batches.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if x.shape[0] == 0:
        raise ValueError("cannot train on empty data")
    if y.shape != (x.shape[0],):
        raise ValueError(f"x has {x.shape[0]} rows but y has shape {y.shape}")
    if np.unique(y).size < 2:
        warnings.warn("training data contains a single class", stacklevel=2)

    model = build_model(model_config, seed=config.seed)
    opt = Adam(config.learning_rate) if config.optimizer == "adam" else Sgd(config.learning_rate)
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, 3))

    n = x.shape[0]
    curve = np.empty(config.epochs)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            logits = model.forward(x[batch], train=True)
            loss, probs = softmax_cross_entropy(logits, y[batch])
            model.backward(softmax_cross_entropy_backward(probs, y[batch]))
            opt.step(model.param_items())
            total += loss * batch.size
        curve[epoch] = total / n
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
    return TrainResult(model=model, loss_curve=curve)


def predict(model: _Network, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode predictions: (argmax labels, softmax probabilities)."""
    logits = model.forward(np.asarray(x, dtype=np.float64), train=False)
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.argmax(axis=1), probs
