"""The signal-conditioning chain: decimation, band-pass, average reference.

Epoched data is brought to a 250 Hz rate with an anti-aliased decimation,
band-pass filtered to 0.5-50 Hz, and re-referenced to the per-sample channel
mean, in that order.  Filters are linear-phase windowed-sinc FIRs applied
forward-backward (zero net phase); edge transients are handled by reflection
padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from memtrace.data_model import EpochSet

TARGET_FS = 250.0
BAND_EDGES = (0.5, 50.0)

# FFT convolution is applied to this many (trial, channel) rows at a time to
# bound peak memory on large cohorts.
_ROW_CHUNK = 256


@dataclass(frozen=True)
class FilterSpec:
    """A windowed-sinc FIR design request.

    ``kind`` is "lowpass" (cutoff ``f_hi``; ``f_lo`` ignored) or "bandpass"
    (pass ``f_lo``..``f_hi``).  ``n_taps`` must be odd so the filter has an
    exact center tap and integer group delay.
    """

    kind: str
    f_lo: float
    f_hi: float
    n_taps: int
    window: str = "hamming"

    def __post_init__(self):
        if self.kind not in ("lowpass", "bandpass"):
            raise ValueError(f"kind must be 'lowpass' or 'bandpass', got {self.kind!r}")
        if self.window != "hamming":
            raise ValueError(f"only the hamming window is supported, got {self.window!r}")
        if self.n_taps < 3 or self.n_taps % 2 == 0:
            raise ValueError(f"n_taps must be odd and >= 3, got {self.n_taps}")


def _windowed_sinc_lowpass(cutoff: float, fs: float, n_taps: int) -> np.ndarray:
    m = np.arange(n_taps) - (n_taps - 1) / 2.0
    h = (2.0 * cutoff / fs) * np.sinc(2.0 * cutoff / fs * m)
    h *= np.hamming(n_taps)
    return h / h.sum()  # exact unit gain at DC


def fir_design(spec: FilterSpec, fs: float) -> np.ndarray:
    """Linear-phase FIR taps for ``spec`` at sampling rate ``fs``.

    Lowpass taps sum to exactly 1; bandpass taps are the difference of two
    unit-DC lowpasses, so their sum (the DC gain) is exactly 0.  Cutoffs at
    or above the Nyquist rate are rejected.
    """
    nyquist = fs / 2.0
    if spec.kind == "lowpass":
        if not 0.0 < spec.f_hi < nyquist:
            raise ValueError(f"lowpass cutoff {spec.f_hi} Hz must be in (0, {nyquist}) Hz")
        return _windowed_sinc_lowpass(spec.f_hi, fs, spec.n_taps)
    if not 0.0 < spec.f_lo < spec.f_hi < nyquist:
        raise ValueError(
            f"bandpass edges must satisfy 0 < {spec.f_lo} < {spec.f_hi} < {nyquist} Hz"
        )
    return _windowed_sinc_lowpass(spec.f_hi, fs, spec.n_taps) - _windowed_sinc_lowpass(
        spec.f_lo, fs, spec.n_taps
    )


def _convolve_same_rows(rows: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """'same'-length convolution of each row with ``taps`` (odd length)."""
    n = rows.shape[-1]
    k = taps.shape[0]
    nfft = 1 << int(np.ceil(np.log2(n + k - 1)))
    out = np.empty_like(rows, dtype=np.float64)
    h = np.fft.rfft(taps, nfft)
    start = (k - 1) // 2
    for lo in range(0, rows.shape[0], _ROW_CHUNK):
        chunk = rows[lo : lo + _ROW_CHUNK]
        y = np.fft.irfft(np.fft.rfft(chunk, nfft) * h, nfft)
        out[lo : lo + _ROW_CHUNK] = y[..., start : start + n]
    return out


def filtfilt(signal: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-phase filtering: forward pass, then backward, along the last axis.

    The signal is reflection-padded by min(3 * n_taps, n - 1) samples on each
    side before filtering and cropped back afterwards, so output length
    equals input length.  Requires more samples than taps; shorter signals
    raise ``ValueError``.  The effective magnitude response is |H|^2.
    """
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.size == 0:
        raise ValueError("taps must be a non-empty 1-D array")
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[-1]
    if taps.size == 1:
        return x * float(taps[0]) ** 2
    if n <= taps.size:
        raise ValueError(
            f"signal length {n} is too short for {taps.size} taps; need length > n_taps"
        )

    pad = min(3 * taps.size, n - 1)
    shape = x.shape
    rows = x.reshape(-1, n)
    rows = np.pad(rows, ((0, 0), (pad, pad)), mode="reflect")
    rows = _convolve_same_rows(rows, taps)
    rows = _convolve_same_rows(rows[:, ::-1], taps)[:, ::-1]
    return rows[:, pad : pad + n].reshape(shape)


def _default_decim_taps(factor: int) -> int:
    # Hamming transition width ~3.3/n_taps of fs; 32*factor taps puts the
    # stopband comfortably below the post-decimation Nyquist.
    n = 32 * factor + 1
    return n if n % 2 == 1 else n + 1


def decimate(e: EpochSet, factor: int, n_taps: int | None = None) -> EpochSet:
    """Anti-aliased downsampling by an integer ``factor``.

    Lowpass at 0.8 x the post-decimation Nyquist (zero-phase), then keep
    every ``factor``-th sample starting at index 0, truncated to
    floor(n_samples / factor) samples.  ``fs`` must be divisible by
    ``factor``; factor 1 returns the set unchanged.
    """
    if factor < 1:
        raise ValueError(f"decimation factor must be >= 1, got {factor}")
    if factor == 1:
        return e
    if e.fs % factor != 0:
        raise ValueError(f"fs {e.fs} Hz is not divisible by factor {factor}")

    cutoff = 0.8 * (e.fs / 2.0 / factor)
    taps = fir_design(
        FilterSpec("lowpass", 0.0, cutoff, n_taps or _default_decim_taps(factor)), e.fs
    )
    smoothed = filtfilt(e.data, taps)
    n_keep = e.n_samples // factor
    idx = np.arange(n_keep) * factor
    return e.with_data(smoothed[:, :, idx], fs=e.fs / factor)


def rereference_average(e: EpochSet) -> EpochSet:
    """Subtract the instantaneous channel mean from every sample.

    Needs at least 2 channels.  Idempotent: the output's per-sample channel
    mean is zero to float precision.
    """
    if e.n_channels < 2:
        raise ValueError("average reference needs at least 2 channels")
    data = e.data.astype(np.float64)
    return e.with_data(data - data.mean(axis=1, keepdims=True))


def _bandpass_taps_for(fs: float, n_samples: int) -> int:
    # Design default: 2*fs+1 taps (501 at 250 Hz), shortened when epochs are
    # too short to filter with that length.
    n = int(round(2 * fs)) + 1
    if n % 2 == 0:
        n += 1
    limit = n_samples - 1 if (n_samples - 1) % 2 == 1 else n_samples - 2
    return min(n, limit)


def preprocess_pipeline(
    e: EpochSet,
    target_fs: float = TARGET_FS,
    band: tuple[float, float] = BAND_EDGES,
    bandpass_taps: int | None = None,
) -> EpochSet:
    """The full conditioning chain: decimate -> band-pass -> average reference.

    Input must be at ``target_fs`` already (decimation is skipped) or at an
    integer multiple of it.  Output sampling rate is ``target_fs``.
    """
    if e.fs != target_fs:
        ratio = e.fs / target_fs
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError(
                f"fs {e.fs} Hz is not an integer multiple of the {target_fs} Hz target"
            )
        e = decimate(e, int(round(ratio)))
    n_taps = bandpass_taps or _bandpass_taps_for(e.fs, e.n_samples)
    taps = fir_design(FilterSpec("bandpass", band[0], band[1], n_taps), e.fs)
    e = e.with_data(filtfilt(e.data, taps))
    return rereference_average(e)
