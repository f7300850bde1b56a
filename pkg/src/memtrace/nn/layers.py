"""Layer kernels with hand-written reverse-mode gradients.

Everything is plain float64 numpy.  Each layer caches what its backward pass
needs during forward; parameters live in ``layer.params`` with matching
``layer.grads`` entries the optimizer consumes.  Gradients are checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


# functional kernels


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w + b for x of shape (N, in), w (in, out), b (out,)."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dense: x {x.shape} incompatible with w {w.shape}")
    return x @ w + b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, np.asarray(x))


def dropout(
    x: np.ndarray, p: float, train_mode: bool, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    In eval mode (or with p=0) this is the identity, so no rescaling is
    needed at inference time.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = np.asarray(x)
    if not train_mode or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = rng.random(x.shape) >= p
    return x * mask / (1.0 - p)


def conv2d_valid(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation.

    x: (C_in, H, W) or (N, C_in, H, W); filters: (C_out, C_in, kh, kw);
    bias: (C_out,).  Output spatial dims are (H-kh+1, W-kw+1).
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != filters.shape[1]:
        raise ValueError(f"conv: x {x.shape} incompatible with filters {filters.shape}")
    kh, kw = filters.shape[2:]
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ValueError(f"conv: input {x.shape[2:]} smaller than kernel ({kh}, {kw})")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # N,C,oh,ow,kh,kw
    out = np.einsum("nchwij,ocij->nohw", win, filters, optimize=True)
    out += bias[None, :, None, None]
    return out[0] if squeeze else out


def maxpool(x: np.ndarray, kh: int = 2, kw: int = 2, stride: int = 2) -> np.ndarray:
    """Max pooling over kh x kw windows with the given stride on both axes.

    x: (C, H, W) or (N, C, H, W); output spatial dims follow the usual
    floor((dim - k) / stride) + 1 rule (floor(dim/2) for the 2x2/2 default).
    """
    out, _ = _maxpool_forward(x, kh, kw, stride)
    return out


def _maxpool_forward(x, kh, kw, stride):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ValueError(f"maxpool: input {x.shape[2:]} smaller than kernel ({kh}, {kw})")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    flat = win.reshape(n, c, oh, ow, kh * kw)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    cache = (x.shape, idx, kh, kw, stride, squeeze)
    return (out[0] if squeeze else out), cache


def _maxpool_backward(dout, cache):
    x_shape, idx, kh, kw, stride, squeeze = cache
    if squeeze:
        dout = dout[None]
    n, c, oh, ow = idx.shape
    dx = np.zeros(x_shape)
    ni, ci, oi, oj = np.indices(idx.shape)
    rows = oi * stride + idx // kw
    cols = oj * stride + idx % kw
    np.add.at(dx, (ni, ci, rows, cols), dout)
    return dx[0] if squeeze else dx


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, probabilities); probability rows sum to 1.  Computed via
    the log-sum-exp shift so saturated logits stay finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"logits {logits.shape} incompatible with labels {labels.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(logp[np.arange(len(labels)), labels.astype(np.intp)].mean())
    return loss, np.exp(logp)


def softmax_cross_entropy_backward(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(mean CE loss)/d(logits) = (probs - onehot) / N."""
    n = probs.shape[0]
    d = probs.copy()
    d[np.arange(n), np.asarray(labels, dtype=np.intp)] -= 1.0
    return d / n


# layer objects


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.params = {
            "w": he_uniform(rng, (in_dim, out_dim), fan_in=in_dim),
            "b": np.zeros(out_dim),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x = None

    def forward(self, x, train):
        self._x = x
        return dense_forward(x, self.params["w"], self.params["b"])

    def backward(self, dout):
        self.grads["w"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["w"].T


class ReLU:
    params: dict = {}
    grads: dict = {}

    def forward(self, x, train):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Dropout:
    params: dict = {}
    grads: dict = {}

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self._scaled_mask = None

    def forward(self, x, train):
        if not train or self.p == 0.0:
            self._scaled_mask = None
            return x
        self._scaled_mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._scaled_mask

    def backward(self, dout):
        if self._scaled_mask is None:
            return dout
        return dout * self._scaled_mask


class Conv2d:
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator):
        fan_in = in_ch * kernel * kernel
        self.params = {
            "w": he_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in=fan_in),
            "b": np.zeros(out_ch),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.kernel = kernel
        self._x = None

    def forward(self, x, train):
        self._x = x
        return conv2d_valid(x, self.params["w"], self.params["b"])

    def backward(self, dout):
        k = self.kernel
        win = sliding_window_view(self._x, (k, k), axis=(2, 3))
        self.grads["w"] = np.einsum("nchwij,nohw->ocij", win, dout, optimize=True)
        self.grads["b"] = dout.sum(axis=(0, 2, 3))
        # dx = full convolution of dout with the spatially flipped filters
        pad = k - 1
        dpad = np.pad(dout, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        dwin = sliding_window_view(dpad, (k, k), axis=(2, 3))
        flipped = self.params["w"][:, :, ::-1, ::-1]
        return np.einsum("nohwij,ocij->nchw", dwin, flipped, optimize=True)


class BatchNorm2d:
    """Per-channel batch normalization over (N, H, W).

    Train mode standardizes with the batch statistics (biased variance) and
    updates running statistics as 0.9*running + 0.1*batch; eval mode uses the
    running statistics.  A train-mode batch needs N >= 2.
    """

    def __init__(self, n_ch: int, momentum: float = 0.9, eps: float = 1e-5):
        self.params = {"gamma": np.ones(n_ch), "beta": np.zeros(n_ch)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.running_mean = np.zeros(n_ch)
        self.running_var = np.ones(n_ch)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def forward(self, x, train):
        g = self.params["gamma"][None, :, None, None]
        b = self.params["beta"][None, :, None, None]
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch norm needs a batch of >= 2 in train mode")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            self._cache = (xhat, inv_std)
            return g * xhat + b
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x - self.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
        return g * xhat + b

    def backward(self, dout):
        xhat, inv_std = self._cache
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        self.grads["gamma"] = (dout * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] = dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.params["gamma"][None, :, None, None]
        # standard batch-norm backward, vectorized per channel
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (
            inv_std[None, :, None, None] / m * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        )


class MaxPool2d:
    params: dict = {}
    grads: dict = {}

    def __init__(self, kernel: int = 2, stride: int = 2):
        self.kernel = kernel
        self.stride = stride

    def forward(self, x, train):
        out, self._cache = _maxpool_forward(x, self.kernel, self.kernel, self.stride)
        return out

    def backward(self, dout):
        return _maxpool_backward(dout, self._cache)


class Flatten:
    params: dict = {}
    grads: dict = {}

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)
