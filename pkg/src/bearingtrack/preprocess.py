"""Time segment -> smoothed magnitude spectrum vector.

Pipeline per segment: Hann window, zero-pad to ``transform_len``, DFT,
keep bins ``0 .. transform_len/2 - 1`` (DC kept, Nyquist dropped), then
average every ``smoothing_block`` consecutive bins.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import FormatError, SizeError, ValidationError
from .ingest import RawRecording, RecordingSet


@dataclass(frozen=True)
class PreprocessConfig:
    segment_len: int = 20480
    transform_len: int = 32768
    smoothing_block: int = 128
    window: str = "hann"

    def __post_init__(self):
        bad = []
        n = self.transform_len
        if self.segment_len < 1:
            bad.append("segment_len")
        if n < 2 or n & (n - 1) or n < self.segment_len:
            bad.append("transform_len")
        if self.smoothing_block < 1 or (n // 2) % self.smoothing_block:
            bad.append("smoothing_block")
        if self.window not in ("hann", "none"):
            bad.append("window")
        if bad:
            raise ValidationError("invalid PreprocessConfig: " + ", ".join(bad), bad)

    @property
    def n_bins(self) -> int:
        return self.transform_len // 2

    @property
    def n_dims(self) -> int:
        return self.transform_len // (2 * self.smoothing_block)

    def bin_width(self, sample_rate: float) -> float:
        """Width in Hz of one smoothed bin."""
        return sample_rate / self.transform_len * self.smoothing_block


@dataclass(frozen=True, eq=False)
class SpectrumVector:
    values: np.ndarray
    bin_width: float = 1.0
    timestamp: datetime | None = None
    source_id: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("spectrum values must be finite and non-negative", ["values"])
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_dims(self) -> int:
        return self.values.size

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.n_dims) + 0.5) * self.bin_width


def hann_window(segment) -> np.ndarray:
    x = np.asarray(segment, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise SizeError(f"Hann window needs at least 2 samples, got {n}")
    k = np.arange(n)
    return x * (0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1))))


def dft_magnitude(segment, config: PreprocessConfig) -> np.ndarray:
    """Magnitudes of the first ``transform_len/2`` DFT bins of the zero-padded segment.

    Works on the last axis, so a (k, L) batch gives (k, transform_len/2).
    No windowing happens here.
    """
    x = np.asarray(segment, dtype=np.float64)
    if x.shape[-1] > config.transform_len:
        raise SizeError(f"segment of {x.shape[-1]} samples exceeds transform_len {config.transform_len}")
    spec = np.fft.rfft(x, n=config.transform_len, axis=-1)
    return np.abs(spec[..., : config.n_bins])


def smooth(spectrum, block: int) -> np.ndarray:
    s = np.asarray(spectrum, dtype=np.float64)
    if block < 1 or s.shape[-1] % block:
        raise SizeError(f"block {block} does not divide {s.shape[-1]} bins")
    return s.reshape(s.shape[:-1] + (s.shape[-1] // block, block)).mean(axis=-1)


def _spectra(segments, config: PreprocessConfig) -> np.ndarray:
    x = np.asarray(segments, dtype=np.float64)
    if config.window == "hann":
        x = hann_window(x)
    return smooth(dft_magnitude(x, config), config.smoothing_block)


def preprocess_recording(rec: RawRecording, channel: int, config: PreprocessConfig) -> SpectrumVector:
    if not 0 <= channel < rec.n_channels:
        raise SizeError(f"channel {channel} out of range for {rec.n_channels}-channel recording")
    if rec.n_samples != config.segment_len:
        raise SizeError(f"recording has {rec.n_samples} samples, config expects {config.segment_len}")
    values = _spectra(rec.channels[channel], config)
    return SpectrumVector(values, config.bin_width(rec.sample_rate), rec.timestamp, rec.source_id)


def preprocess_segments(rec: RawRecording, channel: int, config: PreprocessConfig) -> list:
    """Split one recording into consecutive non-overlapping segments.

    Trailing samples that do not fill a whole segment are dropped. All
    segments share the recording timestamp.
    """
    if not 0 <= channel < rec.n_channels:
        raise SizeError(f"channel {channel} out of range for {rec.n_channels}-channel recording")
    k = rec.n_samples // config.segment_len
    if k == 0:
        raise SizeError("recording shorter than one segment")
    segs = rec.channels[channel, : k * config.segment_len].reshape(k, config.segment_len)
    bw = config.bin_width(rec.sample_rate)
    return [SpectrumVector(v, bw, rec.timestamp, rec.source_id) for v in _spectra(segs, config)]


def preprocess_set(recordings, channel: int, config: PreprocessConfig, batch: int = 64) -> list:
    """Preprocess a RecordingSet (or any sequence of recordings) in batches."""
    recs = list(recordings.recordings if isinstance(recordings, RecordingSet) else recordings)
    out = []
    for start in range(0, len(recs), batch):
        chunk = recs[start:start + batch]
        for r in chunk:
            if not 0 <= channel < r.n_channels:
                raise SizeError(f"channel {channel} out of range for {r.n_channels}-channel recording")
            if r.n_samples != config.segment_len:
                raise SizeError(f"recording {r.timestamp} has {r.n_samples} samples, "
                                f"config expects {config.segment_len}")
        values = _spectra(np.stack([r.channels[channel] for r in chunk]), config)
        out.extend(SpectrumVector(v, config.bin_width(r.sample_rate), r.timestamp, r.source_id)
                   for v, r in zip(values, chunk))
    return out


def as_matrix(vectors) -> np.ndarray:
    """Stack spectrum vectors into an (N, n) array."""
    vectors = list(vectors)
    if not vectors:
        raise SizeError("no vectors")
    n = vectors[0].n_dims
    if any(v.n_dims != n for v in vectors):
        raise SizeError("vectors differ in dimension")
    return np.stack([v.values for v in vectors])


# -- CSV batch export ---------------------------------------------------------


def write_spectra_csv(vectors, path):
    vectors = list(vectors)
    mat = as_matrix(vectors)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "source_id"] + [repr(float(c)) for c in vectors[0].bin_centers()])
        for v, row in zip(vectors, mat):
            ts = v.timestamp.isoformat() if v.timestamp else ""
            w.writerow([ts, v.source_id] + [repr(float(x)) for x in row])
    return Path(path)


def read_spectra_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["timestamp", "source_id"]:
        raise FormatError(f"{path}: missing spectrum CSV header")
    centers = np.array(rows[0][2:], dtype=np.float64)
    bw = 2.0 * centers[0] if centers.size else 1.0
    out = []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(rows[0]):
            raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {len(rows[0])}")
        ts = datetime.fromisoformat(row[0]) if row[0] else None
        out.append(SpectrumVector(np.array(row[2:], dtype=np.float64), bw, ts, row[1]))
    return out
