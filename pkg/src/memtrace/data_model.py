"""Core data types and the EPO1 epoch file format.

Everything downstream (preprocessing, features, models, evaluation) works on
the types defined here:

* :class:`EpochSet` — one subject's trials x channels x samples signal block
  with per-trial binary labels.
* :class:`ChannelLayout` — channel names and their slots in the 10 x 9 mesh
  the CNN consumes.
* :class:`BandSet` — ordered, non-overlapping frequency bands.

The on-disk format is ``EPO1``: a little-endian binary file (magic, version,
dimensions, sampling rate, labels, float32 samples) plus a JSON sidecar
``<name>.meta.json`` carrying the subject id and channel names.  Round trips
are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

MESH_ROWS = 10
MESH_COLS = 9

_MAGIC = b"EPO1"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")  # magic, version, trials, channels, samples, fs
_U32_MAX = 2**32 - 1


class EpochFormatError(Exception):
    """Malformed EPO1 file.  ``offset`` is the byte offset of the defect
    (``None`` when the problem is in the JSON sidecar)."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True, eq=False)
class EpochSet:
    """One subject's epoched multi-channel recording.

    Attributes:
        subject_id: Identifier of the recorded subject.
        fs: Sampling rate in Hz.  Stored at float32 precision so that file
            round trips preserve the value bit-for-bit.
        data: Signal block of shape (n_trials, n_channels, n_samples),
            float32 microvolts.
        labels: Per-trial class, uint8, 1 = remembered and 0 = forgotten.
        channel_names: One name per channel, in ``data`` order.

    Construction only coerces shapes and dtypes; semantic invariants (label
    values, finiteness, matching lengths) are checked by :func:`validate` so
    that broken sets can be represented and reported on.
    """

    subject_id: str
    fs: float
    data: np.ndarray
    labels: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self):
        # own copies, so freezing them cannot alias caller-held arrays
        data = np.array(self.data, dtype=np.float32, order="C", copy=True)
        if data.ndim != 3:
            raise ValueError(
                f"data must be 3-D (n_trials, n_channels, n_samples), got shape {data.shape}"
            )
        labels = np.array(self.labels, dtype=np.uint8, order="C", copy=True)
        if labels.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
        data.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "fs", float(np.float32(self.fs)))
        object.__setattr__(self, "channel_names", tuple(str(n) for n in self.channel_names))

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def duration(self) -> float:
        """Epoch length in seconds."""
        return self.n_samples / self.fs

    def with_data(self, data: np.ndarray, fs: float | None = None) -> "EpochSet":
        """New set with replaced signals (and optionally a new rate),
        preserving subject id, labels, and channel names."""
        return EpochSet(
            subject_id=self.subject_id,
            fs=self.fs if fs is None else fs,
            data=data,
            labels=self.labels,
            channel_names=self.channel_names,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EpochSet):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.fs == other.fs
            and self.channel_names == other.channel_names
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and self.labels.tobytes() == other.labels.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class ValidationCheck:
    """Outcome of one invariant check.  ``index`` locates the first
    offending element where that makes sense (e.g. a NaN sample)."""

    name: str
    passed: bool
    detail: str = ""
    index: tuple | None = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ValidationCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple[ValidationCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            suffix = f": {c.detail}" if c.detail else ""
            lines.append(f"{status}  {c.name}{suffix}")
        return "\n".join(lines)


def validate(e: EpochSet) -> ValidationReport:
    """Check every EpochSet invariant and report pass/fail per check.

    Pure: the same input always yields the same report.  Never raises; the
    report object carries the failures.
    """
    checks = []

    dims_ok = e.n_trials >= 1 and e.n_channels >= 1 and e.n_samples >= 2
    checks.append(
        ValidationCheck(
            "dims",
            dims_ok,
            ""
            if dims_ok
            else f"need n_trials >= 1, n_channels >= 1, n_samples >= 2, got {e.data.shape}",
        )
    )

    len_ok = len(e.labels) == e.n_trials
    checks.append(
        ValidationCheck(
            "labels_length",
            len_ok,
            "" if len_ok else f"labels has length {len(e.labels)}, expected {e.n_trials}",
        )
    )

    bad = np.nonzero(e.labels > 1)[0]
    if bad.size:
        i = int(bad[0])
        checks.append(
            ValidationCheck(
                "label_values",
                False,
                f"label at trial {i} is {int(e.labels[i])}, must be 0 or 1",
                index=(i,),
            )
        )
    else:
        checks.append(ValidationCheck("label_values", True))

    names_ok = len(e.channel_names) == e.n_channels
    checks.append(
        ValidationCheck(
            "channel_names",
            names_ok,
            ""
            if names_ok
            else f"{len(e.channel_names)} channel names for {e.n_channels} channels",
        )
    )

    fs_ok = np.isfinite(e.fs) and e.fs > 0
    checks.append(
        ValidationCheck("fs", bool(fs_ok), "" if fs_ok else f"fs must be positive, got {e.fs}")
    )

    finite = np.isfinite(e.data)
    if finite.all():
        checks.append(ValidationCheck("finite_data", True))
    else:
        t, c, s = (int(v) for v in np.argwhere(~finite)[0])
        checks.append(
            ValidationCheck(
                "finite_data",
                False,
                f"non-finite sample at (trial={t}, channel={c}, sample={s})",
                index=(t, c, s),
            )
        )

    return ValidationReport(tuple(checks))


def sidecar_path(path) -> Path:
    """Path of the JSON sidecar belonging to an EPO1 file."""
    return Path(path).with_suffix(".meta.json")


def save_epochs(e: EpochSet, path) -> None:
    """Write ``e`` as an EPO1 file plus its JSON sidecar.

    The set must pass :func:`validate`; writing an invalid set raises
    ``ValueError`` naming the first failed check.
    """
    report = validate(e)
    if not report.ok:
        first = report.failures[0]
        raise ValueError(f"refusing to save invalid EpochSet: {first.name} — {first.detail}")
    if max(e.n_trials, e.n_channels, e.n_samples) > _U32_MAX:
        raise ValueError("dimension exceeds u32 range of the EPO1 format")

    path = Path(path)
    header = _HEADER.pack(_MAGIC, _VERSION, e.n_trials, e.n_channels, e.n_samples, e.fs)
    body = e.labels.astype("u1").tobytes() + e.data.astype("<f4", copy=False).tobytes()
    path.write_bytes(header + body)

    meta = {"subject_id": e.subject_id, "channel_names": list(e.channel_names)}
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")


def load_epochs(path) -> EpochSet:
    """Read an EPO1 file written by :func:`save_epochs`.

    Raises :class:`EpochFormatError` (with the byte offset) for a bad magic,
    unsupported version, truncation, or a header/payload size mismatch, and
    for a missing or malformed sidecar.
    """
    path = Path(path)
    raw = path.read_bytes()

    if len(raw) < _HEADER.size:
        raise EpochFormatError("truncated header", offset=len(raw))
    magic, version, n_trials, n_channels, n_samples, fs = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise EpochFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", offset=0)
    if version != _VERSION:
        raise EpochFormatError(f"unsupported version {version}", offset=4)

    n_values = n_trials * n_channels * n_samples
    expected = _HEADER.size + n_trials + 4 * n_values
    if len(raw) < expected:
        raise EpochFormatError(
            f"file has {len(raw)} bytes but dimensions "
            f"{n_trials}x{n_channels}x{n_samples} require {expected}",
            offset=len(raw),
        )
    if len(raw) > expected:
        raise EpochFormatError(f"{len(raw) - expected} trailing bytes", offset=expected)

    labels = np.frombuffer(raw, dtype="u1", count=n_trials, offset=_HEADER.size)
    data = np.frombuffer(raw, dtype="<f4", count=n_values, offset=_HEADER.size + n_trials)
    data = data.reshape(n_trials, n_channels, n_samples)

    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise EpochFormatError(f"missing sidecar {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
        subject_id = meta["subject_id"]
        channel_names = meta["channel_names"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise EpochFormatError(f"malformed sidecar {meta_path}: {exc}") from exc
    if len(channel_names) != n_channels:
        raise EpochFormatError(
            f"sidecar lists {len(channel_names)} channel names for {n_channels} channels"
        )

    return EpochSet(
        subject_id=str(subject_id),
        fs=fs,
        data=data,
        labels=labels,
        channel_names=tuple(channel_names),
    )


@dataclass(frozen=True)
class BandSet:
    """Ordered list of (name, f_lo, f_hi) frequency bands in Hz.

    Bands must be ascending and non-overlapping with f_lo < f_hi.  Band
    membership on a frequency grid is half-open, [f_lo, f_hi), so adjacent
    bands never share a bin.
    """

    bands: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        bands = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.bands)
        if not bands:
            raise ValueError("BandSet needs at least one band")
        names = [b[0] for b in bands]
        if len(set(names)) != len(names):
            raise ValueError("band names must be distinct")
        for name, lo, hi in bands:
            if not lo < hi:
                raise ValueError(f"band {name}: f_lo {lo} must be < f_hi {hi}")
        for (_, _, hi_a), (name_b, lo_b, _) in zip(bands, bands[1:]):
            if lo_b < hi_a:
                raise ValueError(f"band {name_b} overlaps its predecessor")
        object.__setattr__(self, "bands", bands)

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b[0] for b in self.bands)

    def centers(self) -> tuple[float, ...]:
        return tuple((lo + hi) / 2.0 for _, lo, hi in self.bands)


def default_bands() -> BandSet:
    """The six canonical bands: delta, theta, alpha, spindle, beta, gamma."""
    return BandSet(
        (
            ("delta", 0.5, 4.0),
            ("theta", 4.0, 7.0),
            ("alpha", 7.0, 12.0),
            ("spindle", 12.0, 15.0),
            ("beta", 15.0, 30.0),
            ("gamma", 30.0, 50.0),
        )
    )


@dataclass(frozen=True)
class ChannelLayout:
    """Channel names with their (row, col) slots in the 10 x 9 mesh.

    Rows run front to back over the scalp, columns left to right.  At most
    90 entries fit; the shipped default places 60 channels, leaving 30 mesh
    cells structurally zero.
    """

    entries: tuple[tuple[str, int, int], ...]
    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((str(n), int(r), int(c)) for n, r, c in self.entries)
        if len(entries) > MESH_ROWS * MESH_COLS:
            raise ValueError(f"layout has {len(entries)} entries, at most 90 fit in the mesh")
        names = [e[0] for e in entries]
        if len(set(names)) != len(names):
            raise ValueError("channel names in layout must be distinct")
        cells = [(r, c) for _, r, c in entries]
        if len(set(cells)) != len(cells):
            raise ValueError("mesh cells in layout must be distinct")
        for name, r, c in entries:
            if not (0 <= r < MESH_ROWS and 0 <= c < MESH_COLS):
                raise ValueError(f"channel {name} at ({r},{c}) is outside the 10x9 mesh")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_positions", {n: (r, c) for n, r, c in entries})

    @property
    def mesh_rows(self) -> int:
        return MESH_ROWS

    @property
    def mesh_cols(self) -> int:
        return MESH_COLS

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e[0] for e in self.entries)

    def position(self, name: str) -> tuple[int, int]:
        try:
            return self._positions[name]
        except KeyError:
            raise KeyError(f"channel {name!r} is not in the layout") from None

    def __contains__(self, name: str) -> bool:
        return name in self._positions

    def __len__(self) -> int:
        return len(self.entries)

    @staticmethod
    def from_json_file(path) -> "ChannelLayout":
        """Load a layout from a JSON list of {name, row, col} objects."""
        spec = json.loads(Path(path).read_text())
        try:
            entries = tuple((d["name"], d["row"], d["col"]) for d in spec)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"layout file {path}: expected a list of {{name,row,col}}: {exc}")
        return ChannelLayout(entries)

    def to_json_file(self, path) -> None:
        doc = [{"name": n, "row": r, "col": c} for n, r, c in self.entries]
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


_DEFAULT_LAYOUT: ChannelLayout | None = None


def default_layout() -> ChannelLayout:
    """The shipped 60-channel layout (10-10 electrode names, front-to-back
    rows).  Loaded once from the packaged JSON config."""
    global _DEFAULT_LAYOUT
    if _DEFAULT_LAYOUT is None:
        ref = resources.files("memtrace").joinpath("data/default_layout_60.json")
        spec = json.loads(ref.read_text())
        _DEFAULT_LAYOUT = ChannelLayout(tuple((d["name"], d["row"], d["col"]) for d in spec))
    return _DEFAULT_LAYOUT
