"""IMS-format recordings: parsing, ordering by filename timestamp, and a
seeded synthetic run-to-failure generator producing the same layout."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, ParseError, ValidationError

IMS_TIMESTAMP_FORMAT = "%Y.%m.%d.%H.%M.%S"
IMS_SAMPLE_RATE = 20000.0
IMS_SEGMENT_LEN = 20480
SYNTH_DECIMALS = 6


@dataclass(frozen=True, eq=False)
class RawRecording:
    """One timestamped measurement; ``channels`` has shape (n_channels, n_samples)."""

    timestamp: datetime | None
    sample_rate: float
    channels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        data = np.array(self.channels, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError("channels must be a non-empty 2D array", ["channels"])
        if not np.all(np.isfinite(data)):
            raise ValidationError("channels contain NaN or Inf", ["channels"])
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be positive", ["sample_rate"])
        data.setflags(write=False)
        object.__setattr__(self, "channels", data)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class RecordingSet:
    recordings: tuple
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        recs = tuple(self.recordings)
        object.__setattr__(self, "recordings", recs)
        for prev, cur in zip(recs, recs[1:]):
            if not cur.timestamp > prev.timestamp:
                raise ValidationError("recording timestamps must be strictly increasing", ["recordings"])
        if recs:
            rate, nch = recs[0].sample_rate, recs[0].n_channels
            if any(r.sample_rate != rate or r.n_channels != nch for r in recs):
                raise ValidationError("recordings differ in sample_rate or channel count", ["recordings"])

    def __len__(self):
        return len(self.recordings)

    def __iter__(self):
        return iter(self.recordings)

    def __getitem__(self, i):
        return self.recordings[i]


def parse_ims_file(text, expected_channels=None, *, timestamp=None,
                   sample_rate=IMS_SAMPLE_RATE, source_id="") -> RawRecording:
    """Parse one IMS ASCII file (rows = samples, columns = channels).

    Tabs and spaces are both accepted as delimiters and blank lines are
    ignored. The timestamp is not stored in the file; pass it in from
    :func:`parse_ims_name`.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not ASCII: {exc}") from None
    rows = [line.split() for line in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise FormatError("empty IMS file")
    ncol = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != ncol:
            raise FormatError(f"row {i} has {len(r)} columns, expected {ncol}")
    if expected_channels is not None and ncol != expected_channels:
        raise FormatError(f"file has {ncol} channels, expected {expected_channels}")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError:
        for i, r in enumerate(rows):
            for tok in r:
                try:
                    float(tok)
                except ValueError:
                    raise ParseError(f"malformed number {tok!r} on line {i}", line=i) from None
        raise
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise ParseError(f"non-finite sample on line {bad}", line=bad)
    return RawRecording(timestamp, sample_rate, data.T, source_id)


def format_ims(rec: RawRecording, decimals=SYNTH_DECIMALS) -> str:
    """Serialize to IMS text with fixed decimals, tab separated."""
    fmt = "\t".join([f"%.{decimals}f"] * rec.n_channels)
    return "\n".join(fmt % tuple(row) for row in rec.channels.T) + "\n"


def parse_ims_name(name) -> datetime:
    return datetime.strptime(os.path.basename(str(name)), IMS_TIMESTAMP_FORMAT)


def ims_name(ts: datetime) -> str:
    return ts.strftime(IMS_TIMESTAMP_FORMAT)


def enumerate_recordings(file_names: Sequence[str]):
    """Sort IMS file names by their embedded timestamp.

    Returns ``(entries, rejects)``: ``entries`` is a list of
    ``(timestamp, name)`` strictly ascending, ``rejects`` the names that do
    not match ``yyyy.MM.dd.HH.mm.ss``. Duplicate timestamps raise.
    """
    entries, rejects = [], []
    for name in file_names:
        try:
            entries.append((parse_ims_name(name), name))
        except ValueError:
            rejects.append(name)
    entries.sort(key=lambda e: e[0])
    for (t0, n0), (t1, n1) in zip(entries, entries[1:]):
        if t0 == t1:
            raise ValidationError(f"duplicate timestamp {t0.isoformat()} for {n0!r} and {n1!r}",
                                  ["file_names"])
    return entries, rejects


def load_ims_directory(path, *, expected_channels=None, sample_rate=IMS_SAMPLE_RATE,
                       source_id="", workers=1) -> RecordingSet:
    """Read every timestamp-named file in ``path`` into a RecordingSet.

    Files whose names do not parse are listed under ``manifest["rejects"]``.
    """
    path = Path(path)
    if not path.is_dir():
        raise FormatError(f"{path} is not a directory")
    names = sorted(p.name for p in path.iterdir() if p.is_file())
    entries, rejects = enumerate_recordings(names)
    rejects = [r for r in rejects if r != "manifest.json"]

    def load(entry):
        ts, name = entry
        return parse_ims_file((path / name).read_bytes(), expected_channels,
                              timestamp=ts, sample_rate=sample_rate,
                              source_id=source_id or path.name)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            recs = list(pool.map(load, entries))
    else:
        recs = [load(e) for e in entries]
    manifest = {"source": str(path), "files": [n for _, n in entries], "rejects": rejects}
    side = path / "manifest.json"
    if side.is_file():
        manifest["dataset"] = json.loads(side.read_text())
    return RecordingSet(tuple(recs), manifest)


# -- synthetic run-to-failure data -------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic run-to-failure campaign.

    ``stage_boundaries`` holds the first recording index of each stage after
    the healthy one: [degradation-1, degradation-2, failure].
    """

    seed: int = 0
    sample_rate: float = IMS_SAMPLE_RATE
    segment_len: int = IMS_SEGMENT_LEN
    n_recordings: int = 480
    stage_boundaries: tuple = (300, 380, 440)
    shaft_freq: float = 2000.0 / 60.0
    fault_freq: float = 236.4
    fault_gain_per_stage: tuple = (0.0, 0.3, 0.8, 2.0)
    noise_floor: float = 0.05
    shaft_amplitude: float = 0.5
    amplitude_jitter: float = 0.1
    band_noise: float = 0.5
    start: str = "2004-02-12T10:32:39"
    interval_s: float = 600.0

    def __post_init__(self):
        object.__setattr__(self, "stage_boundaries", tuple(int(b) for b in self.stage_boundaries))
        object.__setattr__(self, "fault_gain_per_stage", tuple(float(g) for g in self.fault_gain_per_stage))

    def validate(self):
        bad = []
        if not self.sample_rate > 0:
            bad.append("sample_rate")
        if self.segment_len < 2:
            bad.append("segment_len")
        if self.n_recordings < 1:
            bad.append("n_recordings")
        b = self.stage_boundaries
        if (any(x <= 0 for x in b[:1]) or any(y <= x for x, y in zip(b, b[1:]))
                or (b and b[-1] >= self.n_recordings)):
            bad.append("stage_boundaries")
        g = self.fault_gain_per_stage
        if (len(g) != len(b) + 1 or any(x < 0 for x in g)
                or any(y < x for x, y in zip(g, g[1:]))):
            bad.append("fault_gain_per_stage")
        if self.noise_floor < 0:
            bad.append("noise_floor")
        if self.shaft_amplitude < 0 or self.amplitude_jitter < 0 or self.band_noise < 0:
            bad.append("amplitudes")
        nyq = self.sample_rate / 2
        if not 0 < self.shaft_freq < nyq:
            bad.append("shaft_freq")
        if not 0 < 2 * self.fault_freq < nyq:
            bad.append("fault_freq")
        if not self.interval_s > 0:
            bad.append("interval_s")
        try:
            datetime.fromisoformat(self.start)
        except (TypeError, ValueError):
            bad.append("start")
        if bad:
            raise ValidationError("invalid SynthConfig: " + ", ".join(bad), bad)

    def stage_of(self, index: int) -> int:
        return int(np.searchsorted(self.stage_boundaries, index, side="right"))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown SynthConfig fields: {sorted(unknown)}", sorted(unknown))
        return cls(**d)


def _band_noise(rng, n, sample_rate, lo, hi):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(out * out))
    return out / rms if rms > 0 else out


def synth_recording(config: SynthConfig, index: int) -> np.ndarray:
    """Samples of recording ``index``; seeded per index so recordings are independent."""
    rng = np.random.default_rng([config.seed, index])
    n, fs = config.segment_len, config.sample_rate
    t = np.arange(n) / fs
    scale = max(0.0, 1.0 + config.amplitude_jitter * rng.standard_normal())
    phases = rng.uniform(0.0, 2 * np.pi, size=3)
    x = config.shaft_amplitude * scale * np.sin(2 * np.pi * config.shaft_freq * t + phases[0])
    x += config.noise_floor * rng.standard_normal(n)
    gain = config.fault_gain_per_stage[config.stage_of(index)]
    if gain > 0:
        f = config.fault_freq
        x += gain * scale * np.sin(2 * np.pi * f * t + phases[1])
        x += 0.5 * gain * scale * np.sin(2 * np.pi * 2 * f * t + phases[2])
        x += gain * config.band_noise * _band_noise(rng, n, fs, 0.5 * f, min(3 * f, fs / 2))
    q = 10.0 ** SYNTH_DECIMALS
    # k / 10**d is correctly rounded, so "%.6f" text parses back to the same double
    return np.rint(x * q) / q


def synth_run_to_failure(config: SynthConfig) -> RecordingSet:
    config.validate()
    start = datetime.fromisoformat(config.start)
    recs = []
    for i in range(config.n_recordings):
        ts = start + timedelta(seconds=i * config.interval_s)
        recs.append(RawRecording(ts, config.sample_rate, synth_recording(config, i), "synth"))
    manifest = {
        "kind": "synthetic",
        "seed": config.seed,
        "config": config.to_dict(),
        "stage_boundaries": list(config.stage_boundaries),
        "channels": {"0": "bearing1"},
    }
    return RecordingSet(tuple(recs), manifest)


def write_recording_set(rs: RecordingSet, directory, decimals=SYNTH_DECIMALS):
    """Write IMS-layout files named by timestamp plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rec in rs:
        (directory / ims_name(rec.timestamp)).write_text(format_ims(rec, decimals))
    manifest = dict(rs.manifest)
    manifest["files"] = [ims_name(r.timestamp) for r in rs]
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory
