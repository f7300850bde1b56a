"""Seeded synthetic cohorts with controllable per-band class signatures.

Stands in for a private multi-subject recording: each subject is an
:class:`~memtrace.data_model.EpochSet` whose two classes differ only by
configurable band-amplitude gains, so downstream classifiers have a known,
tunable amount of signal to find.

Signal model per trial and channel::

    x(t) = sum_b gain[class, b] * sin(2*pi*f_b*t + phi) + N(0, noise_sigma)

where ``f_b`` is the band's center frequency snapped to the epoch's DFT grid
(so a pure tone's band power is independent of its random phase ``phi``) and
``phi`` is drawn per trial/channel/band from the subject's seeded stream.
Subject ``k`` uses the sub-seed ``splitmix64(seed XOR k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from memtrace.data_model import BandSet, EpochSet, default_bands, default_layout
from memtrace.rngutil import derive_seed

# Class ratios observed for the two tasks this generator stands in for:
# picture-style memory is heavily remembered-skewed, location-style the
# opposite.  Pass one of these as ``remembered_ratio`` to replicate the
# imbalance regime.
PICTURE_REMEMBERED_RATIO = 0.87
LOCATION_REMEMBERED_RATIO = 0.21


def _round_half_up(x: float) -> int:
    """round() with ties away from zero, to keep label counts language-neutral."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Parameters of a synthetic cohort.

    ``class_band_gains`` is a (2, n_bands) array of amplitude multipliers,
    row 0 for class 0 (forgotten), row 1 for class 1 (remembered), columns in
    ``bands`` order.  ``noise_sigma`` is the white-noise standard deviation
    in microvolts.
    """

    n_subjects: int = 6
    trials_per_subject: int = 60
    remembered_ratio: float = 0.5
    fs: float = 1000.0
    epoch_seconds: float = 2.0
    n_channels: int = 60
    class_band_gains: np.ndarray = field(default_factory=lambda: np.ones((2, 6)))
    noise_sigma: float = 1.0
    seed: int = 0
    bands: BandSet = field(default_factory=default_bands)

    def __post_init__(self):
        gains = np.ascontiguousarray(self.class_band_gains, dtype=np.float64)
        if gains.shape != (2, self.bands.n_bands):
            raise ValueError(
                f"class_band_gains must have shape (2, {self.bands.n_bands}), got {gains.shape}"
            )
        gains.flags.writeable = False
        object.__setattr__(self, "class_band_gains", gains)
        if not 0.0 < self.remembered_ratio < 1.0:
            raise ValueError(f"remembered_ratio must be in (0, 1), got {self.remembered_ratio}")
        if self.trials_per_subject < 2:
            raise ValueError("trials_per_subject must be >= 2")
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.fs <= 0 or self.epoch_seconds <= 0:
            raise ValueError("fs and epoch_seconds must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        n1 = self.n_remembered
        if not 1 <= n1 <= self.trials_per_subject - 1:
            raise ValueError(
                f"ratio {self.remembered_ratio} with {self.trials_per_subject} trials "
                f"leaves a class empty ({n1} remembered)"
            )

    @property
    def n_samples(self) -> int:
        return _round_half_up(self.fs * self.epoch_seconds)

    @property
    def n_remembered(self) -> int:
        """Label-1 trial count: round(trials * ratio), ties away from zero."""
        return _round_half_up(self.trials_per_subject * self.remembered_ratio)


def _channel_names(n_channels: int) -> tuple[str, ...]:
    layout_names = default_layout().names
    if n_channels <= len(layout_names):
        return layout_names[:n_channels]
    return tuple(f"ch{i:03d}" for i in range(n_channels))


def _snapped_centers(bands: BandSet, n_samples: int, fs: float) -> np.ndarray:
    """Band centers moved to the nearest DFT bin of an n_samples epoch."""
    duration = n_samples / fs
    return np.array([_round_half_up(c * duration) / duration for c in bands.centers()])


def generate_subject(spec: SynthSpec, subject_index: int) -> EpochSet:
    """Generate subject ``subject_index`` of the cohort described by ``spec``.

    Deterministic: the subject's entire RNG stream derives from
    ``splitmix64(spec.seed XOR subject_index)``, with labels shuffled first,
    then phases, then noise.  Exactly ``spec.n_remembered`` trials get
    label 1.
    """
    if subject_index < 0:
        raise ValueError("subject_index must be >= 0")
    rng = np.random.default_rng(derive_seed(spec.seed, subject_index))

    n_trials = spec.trials_per_subject
    n_ch = spec.n_channels
    n_samp = spec.n_samples
    n1 = spec.n_remembered

    labels = np.concatenate([np.ones(n1, dtype=np.uint8), np.zeros(n_trials - n1, dtype=np.uint8)])
    labels = rng.permutation(labels)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_trials, n_ch, spec.bands.n_bands))
    noise = rng.normal(0.0, spec.noise_sigma, size=(n_trials, n_ch, n_samp))

    t = np.arange(n_samp) / spec.fs
    freqs = _snapped_centers(spec.bands, n_samp, spec.fs)
    signal = noise  # accumulate the tones on top of the noise buffer
    for b, f_b in enumerate(freqs):
        amp = spec.class_band_gains[labels.astype(np.intp), b][:, None]
        arg = 2.0 * np.pi * f_b * t
        # sin(arg + phi) expanded so the big arrays see only multiply-adds
        signal += (amp * np.cos(phases[:, :, b]))[:, :, None] * np.sin(arg)
        signal += (amp * np.sin(phases[:, :, b]))[:, :, None] * np.cos(arg)

    return EpochSet(
        subject_id=f"S{subject_index + 1:02d}",
        fs=spec.fs,
        data=signal,
        labels=labels,
        channel_names=_channel_names(n_ch),
    )


def generate_cohort(spec: SynthSpec) -> list[EpochSet]:
    """All subjects of the cohort.  Needs n_subjects >= 2 (one held-out
    subject must leave a non-empty training pool)."""
    if spec.n_subjects < 2:
        raise ValueError("a cohort needs at least 2 subjects for leave-one-subject-out")
    return [generate_subject(spec, k) for k in range(spec.n_subjects)]
