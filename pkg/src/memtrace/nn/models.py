"""The two classifier networks assembled from the layer kernels.

Both end in a 2-way fully connected layer whose softmax separates remembered
from forgotten trials:

* :class:`Mlp` — three fully connected layers (two hidden, ReLU, inverted
  dropout after each hidden activation) on the flat feature vector.
* :class:`Cnn` — two valid 3x3 convolutions with batch norm and ReLU, 2x2/2
  max pooling, dropout, then the classifier layer, on the band x 10 x 9 mesh.
  The constructor verifies the full shape trace and rejects any config whose
  flatten size disagrees with the declared classifier input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from memtrace.nn import layers as L
from memtrace.rngutil import derive_seed


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int = 360
    hidden_dims: tuple[int, int] = (128, 64)
    dropout_p: float = 0.3
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if len(self.hidden_dims) != 2:
            raise ValueError("the MLP has exactly 3 weight layers: give 2 hidden widths")
        if min(self.hidden_dims) < 1 or self.input_dim < 1 or self.n_classes < 2:
            raise ValueError("layer widths must be positive and n_classes >= 2")


@dataclass(frozen=True)
class CnnConfig:
    in_shape: tuple[int, int, int] = (6, 10, 9)
    conv1_filters: int = 8
    conv2_filters: int = 64
    kernel: int = 3
    pool: int = 2
    flatten_dim: int = 384
    dropout_p: float = 0.3
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(int(d) for d in self.in_shape))
        if len(self.in_shape) != 3:
            raise ValueError(f"in_shape must be (channels, rows, cols), got {self.in_shape}")

    def shape_trace(self) -> list[tuple[int, ...]]:
        """Feature-map shapes from input to logits; raises if any stage
        collapses or the flatten size disagrees with ``flatten_dim``."""
        c, h, w = self.in_shape
        k, p = self.kernel, self.pool
        trace = [(c, h, w)]
        for filters in (self.conv1_filters, self.conv2_filters):
            h, w = h - k + 1, w - k + 1
            c = filters
            if h < 1 or w < 1:
                raise ValueError(f"conv kernel {k} collapses feature map to {h}x{w}")
            trace.append((c, h, w))
        if h < p or w < p:
            raise ValueError(f"pool {p} does not fit the {h}x{w} feature map")
        h, w = (h - p) // p + 1, (w - p) // p + 1
        trace.append((c, h, w))
        flat = c * h * w
        if flat != self.flatten_dim:
            raise ValueError(
                f"shape trace gives flatten size {flat}, config declares {self.flatten_dim}"
            )
        trace.append((flat,))
        trace.append((self.n_classes,))
        return trace


class _Network:
    """Shared plumbing: sequential forward/backward and parameter access."""

    kind: str

    def __init__(self):
        self.layers: list = []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def param_items(self) -> list[tuple[str, object, str]]:
        """(qualified_name, layer, key) for every trainable array, in a
        stable order used by optimizers and checkpoints."""
        items = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                items.append((f"{i}.{type(layer).__name__}.{key}", layer, key))
        return items

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Parameters plus batch-norm running statistics, checkpoint order."""
        out = [(name, layer.params[key]) for name, layer, key in self.param_items()]
        for i, layer in enumerate(self.layers):
            if isinstance(layer, L.BatchNorm2d):
                out.append((f"{i}.BatchNorm2d.running_mean", layer.running_mean))
                out.append((f"{i}.BatchNorm2d.running_var", layer.running_var))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, layer, key in self.param_items():
            layer.params[key] = np.asarray(arrays[name], dtype=np.float64)
        for i, layer in enumerate(self.layers):
            if isinstance(layer, L.BatchNorm2d):
                layer.running_mean = np.asarray(
                    arrays[f"{i}.BatchNorm2d.running_mean"], dtype=np.float64
                )
                layer.running_var = np.asarray(
                    arrays[f"{i}.BatchNorm2d.running_var"], dtype=np.float64
                )


class Mlp(_Network):
    kind = "mlp"

    def __init__(self, config: MlpConfig = MlpConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        init = np.random.default_rng(derive_seed(seed, 1))
        drop = np.random.default_rng(derive_seed(seed, 2))
        h1, h2 = config.hidden_dims
        self.layers = [
            L.Dense(config.input_dim, h1, init),
            L.ReLU(),
            L.Dropout(config.dropout_p, drop),
            L.Dense(h1, h2, init),
            L.ReLU(),
            L.Dropout(config.dropout_p, drop),
            L.Dense(h2, config.n_classes, init),
        ]


class Cnn(_Network):
    kind = "cnn"

    def __init__(self, config: CnnConfig = CnnConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        self.trace = config.shape_trace()  # constructor-time shape contract
        init = np.random.default_rng(derive_seed(seed, 1))
        drop = np.random.default_rng(derive_seed(seed, 2))
        c_in = config.in_shape[0]
        self.layers = [
            L.Conv2d(c_in, config.conv1_filters, config.kernel, init),
            L.BatchNorm2d(config.conv1_filters),
            L.ReLU(),
            L.Conv2d(config.conv1_filters, config.conv2_filters, config.kernel, init),
            L.BatchNorm2d(config.conv2_filters),
            L.ReLU(),
            L.MaxPool2d(config.pool, config.pool),
            L.Dropout(config.dropout_p, drop),
            L.Flatten(),
            L.Dense(config.flatten_dim, config.n_classes, init),
        ]

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != self.config.in_shape:
            raise ValueError(
                f"CNN expects (N, {', '.join(map(str, self.config.in_shape))}), got {x.shape}"
            )
        return super().forward(x, train)
