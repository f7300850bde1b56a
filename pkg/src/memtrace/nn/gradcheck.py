"""Central finite differences for gradient verification.

Uses only forward evaluations, so it is independent of every backward pass
it is used to check.
"""

from __future__ import annotations

import numpy as np


def numeric_gradient(
    loss_fn,
    array: np.ndarray,
    indices: np.ndarray | None = None,
    step: float = 1e-3,
) -> np.ndarray:
    """d loss_fn / d array[i] by central differences, at selected flat indices.

    ``loss_fn`` takes no arguments and must read ``array`` by reference (the
    entries are perturbed in place and restored).  Returns a flat vector of
    derivatives, one per entry of ``indices`` (all entries when omitted).
    """
    flat = array.reshape(-1)
    if indices is None:
        indices = np.arange(flat.size)
    grads = np.empty(len(indices))
    for out_i, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = loss_fn()
        flat[i] = orig - step
        f_minus = loss_fn()
        flat[i] = orig
        grads[out_i] = (f_plus - f_minus) / (2.0 * step)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise |a - n| / max(floor, |a| + |n|)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    return float(np.max(np.abs(a - n) / np.maximum(floor, np.abs(a) + np.abs(n))))
