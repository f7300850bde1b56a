"""Band-power features and the two model input shapes.

Per trial and channel, the one-sided periodogram is integrated over each
band and converted to decibels::

    power_db = 10 * log10(2 * integral of pxx over [f_lo, f_hi))

with a 1e-12 floor inside the log so silent channels give -120 dB instead of
-inf.  A :class:`FeatureTensor` holds the resulting trials x bands x channels
block and converts to the flat (trials x bands*channels) matrix the SVM/MLP
consume, and to the zero-padded trials x bands x 10 x 9 mesh the CNN
consumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from memtrace.data_model import BandSet, ChannelLayout, EpochSet

POWER_FLOOR = 1e-12

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def periodogram(signal: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided power spectral density of a 1-D signal.

    Rectangular window over the whole epoch, 1/(fs*N) scaling, non-DC (and
    non-Nyquist) bins doubled, so the rectangle-rule integral of ``pxx`` over
    the frequency grid equals the signal's mean square (Parseval).

    Returns (freqs, pxx) with freqs in Hz and pxx in signal-units^2 per Hz.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("signal must be 1-D with at least 2 samples")
    pxx = _periodogram_rows(x[None, :], fs)[0]
    return np.fft.rfftfreq(x.size, 1.0 / fs), pxx


def _periodogram_rows(rows: np.ndarray, fs: float) -> np.ndarray:
    n = rows.shape[-1]
    spec = np.abs(np.fft.rfft(rows, axis=-1)) ** 2 / (fs * n)
    if n % 2 == 0:
        spec[..., 1:-1] *= 2.0  # Nyquist bin is unique, keep single
    else:
        spec[..., 1:] *= 2.0
    return spec


def band_power_db(
    freqs: np.ndarray, pxx: np.ndarray, band: tuple[float, float]
) -> float:
    """Band-integrated power in dB: 10*log10(2 * trapz of pxx over the band).

    Band membership on the grid is half-open, [f_lo, f_hi).  A band with no
    grid support raises ``ValueError``; integrated power below the 1e-12
    floor clamps to -120 dB.
    """
    f_lo, f_hi = band
    freqs = np.asarray(freqs, dtype=np.float64)
    if not 0.0 <= f_lo < f_hi:
        raise ValueError(f"band must satisfy 0 <= f_lo < f_hi, got {band}")
    mask = (freqs >= f_lo) & (freqs < f_hi)
    if not mask.any():
        raise ValueError(f"band {band} has no support on the frequency grid")
    integral = _trapezoid(np.asarray(pxx, dtype=np.float64)[..., mask], freqs[mask], axis=-1)
    return float(10.0 * np.log10(np.maximum(POWER_FLOOR, 2.0 * integral)))


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Per-trial band-power features in dB.

    ``values`` has shape (n_trials, n_bands, n_channels); all entries are
    finite (silent channels floor at -120 dB rather than -inf).
    """

    values: np.ndarray
    band_set: BandSet
    channel_names: tuple[str, ...]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"values must be 3-D (trials, bands, channels), got {values.shape}")
        if values.shape[1] != self.band_set.n_bands:
            raise ValueError(
                f"values has {values.shape[1]} bands but band_set has {self.band_set.n_bands}"
            )
        if values.shape[2] != len(self.channel_names):
            raise ValueError(
                f"values has {values.shape[2]} channels but {len(self.channel_names)} names given"
            )
        if not np.isfinite(values).all():
            raise ValueError("feature values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def n_trials(self) -> int:
        return self.values.shape[0]

    @property
    def n_bands(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    def feature_names(self) -> tuple[str, ...]:
        """Column names of the flat view, band-major: '<band>_<channel>'."""
        return tuple(
            f"{band}_{ch}" for band in self.band_set.names for ch in self.channel_names
        )

    def with_values(self, values: np.ndarray) -> "FeatureTensor":
        return FeatureTensor(values, self.band_set, self.channel_names)


def features(e: EpochSet, bands: BandSet) -> FeatureTensor:
    """Band-power features for every trial and channel of ``e``.

    Expects conditioned input (the standard chain ends at 250 Hz); the only
    hard requirement is that every band has support below the Nyquist rate.
    """
    rows = e.data.reshape(-1, e.n_samples).astype(np.float64)
    pxx = _periodogram_rows(rows, e.fs)
    freqs = np.fft.rfftfreq(e.n_samples, 1.0 / e.fs)

    out = np.empty((rows.shape[0], bands.n_bands))
    for b, (name, f_lo, f_hi) in enumerate(bands.bands):
        mask = (freqs >= f_lo) & (freqs < f_hi)
        if not mask.any():
            raise ValueError(f"band {name} [{f_lo}, {f_hi}) has no support on the grid")
        integral = _trapezoid(pxx[:, mask], freqs[mask], axis=-1)
        out[:, b] = 10.0 * np.log10(np.maximum(POWER_FLOOR, 2.0 * integral))

    values = out.reshape(e.n_trials, e.n_channels, bands.n_bands).transpose(0, 2, 1)
    return FeatureTensor(values, bands, e.channel_names)


def flatten(t: FeatureTensor) -> np.ndarray:
    """Flat feature matrix (n_trials, n_bands * n_channels).

    Band-major order: element (band b, channel c) lands at column
    b * n_channels + c.  With the default 6 bands x 60 channels this is the
    trials x 360 input of the SVM and MLP.
    """
    return t.values.reshape(t.n_trials, t.n_bands * t.n_channels).copy()


def unflatten(x: np.ndarray, band_set: BandSet, channel_names: tuple[str, ...]) -> FeatureTensor:
    """Inverse of :func:`flatten` for a matrix laid out band-major."""
    x = np.asarray(x, dtype=np.float64)
    n_bands = band_set.n_bands
    n_ch = len(channel_names)
    if x.ndim != 2 or x.shape[1] != n_bands * n_ch:
        raise ValueError(f"expected shape (trials, {n_bands * n_ch}), got {x.shape}")
    return FeatureTensor(x.reshape(x.shape[0], n_bands, n_ch), band_set, channel_names)


def mesh(t: FeatureTensor, layout: ChannelLayout) -> np.ndarray:
    """Mesh view (n_trials, n_bands, 10, 9) for the CNN.

    Each channel's value is placed at its layout cell; cells with no channel
    are exactly zero.  A tensor channel missing from the layout raises
    ``KeyError`` naming it.
    """
    out = np.zeros((t.n_trials, t.n_bands, layout.mesh_rows, layout.mesh_cols))
    for c, name in enumerate(t.channel_names):
        r, col = layout.position(name)
        out[:, :, r, col] = t.values[:, :, c]
    return out


def unmesh(
    meshed: np.ndarray,
    layout: ChannelLayout,
    channel_names: tuple[str, ...],
    band_set: BandSet,
) -> FeatureTensor:
    """Recover a :class:`FeatureTensor` from its mesh view."""
    meshed = np.asarray(meshed, dtype=np.float64)
    if meshed.ndim != 4 or meshed.shape[2:] != (layout.mesh_rows, layout.mesh_cols):
        raise ValueError(f"expected (trials, bands, 10, 9) mesh, got {meshed.shape}")
    values = np.empty((meshed.shape[0], meshed.shape[1], len(channel_names)))
    for c, name in enumerate(channel_names):
        r, col = layout.position(name)
        values[:, :, c] = meshed[:, :, r, col]
    return FeatureTensor(values, band_set, channel_names)


def write_features_csv(t: FeatureTensor, path) -> None:
    """Flat features as CSV, one trial per row, header = band_channel names."""
    flat = flatten(t)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(t.feature_names())
        for row in flat:
            writer.writerow(f"{v:.9g}" for v in row)


def read_features_csv(path, band_set: BandSet, channel_names: tuple[str, ...]) -> FeatureTensor:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    expected = list(
        f"{band}_{ch}" for band in band_set.names for ch in channel_names
    )
    if header != expected:
        raise ValueError(f"feature CSV header does not match bands/channels ({Path(path)})")
    return unflatten(np.array(rows), band_set, channel_names)
