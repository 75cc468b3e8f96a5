import json
import random
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bearingtrack.errors import FormatError, ParseError, ValidationError
from bearingtrack.ingest import (RawRecording, RecordingSet, SynthConfig, enumerate_recordings,
                                 format_ims, ims_name, load_ims_directory, parse_ims_file,
                                 synth_run_to_failure, write_recording_set)
from bearingtrack.preprocess import PreprocessConfig, preprocess_set


def small_synth(**kw):
    base = dict(seed=3, sample_rate=4096.0, segment_len=1024, n_recordings=24,
                stage_boundaries=(8, 14, 20), shaft_freq=32.0, fault_freq=400.0,
                fault_gain_per_stage=(0.0, 0.3, 0.8, 2.0))
    base.update(kw)
    return SynthConfig(**base)


def test_parse_ims_shape():
    rng = np.random.default_rng(0)
    data = np.round(rng.normal(size=(20480, 8)), 3)
    text = "\n".join("\t".join(f"{v:.3f}" for v in row) for row in data) + "\n"
    rec = parse_ims_file(text.encode("ascii"))
    assert rec.n_channels == 8
    assert rec.n_samples == 20480
    np.testing.assert_array_equal(rec.channels[5], data[:, 5])


def test_parse_single_line():
    rec = parse_ims_file(b"0.0\t0.0")
    assert rec.channels.shape == (2, 1)


def test_parse_mixed_whitespace_and_blank_lines():
    rec = parse_ims_file("1.5  -2\n\n3\t4.25\n")
    np.testing.assert_array_equal(rec.channels, [[1.5, 3.0], [-2.0, 4.25]])


def test_parse_errors():
    with pytest.raises(FormatError):
        parse_ims_file(b"")
    with pytest.raises(FormatError):
        parse_ims_file(b"   \n\n")
    with pytest.raises(FormatError):
        parse_ims_file(b"1 2\n3\n")
    with pytest.raises(ParseError) as exc:
        parse_ims_file(b"1 2\n3 4\n5 x7\n")
    assert exc.value.line == 2
    with pytest.raises(FormatError):
        parse_ims_file(b"1 2 3\n", expected_channels=4)
    with pytest.raises(FormatError):
        parse_ims_file("0.1 é".encode("utf-8"))
    with pytest.raises(ParseError):
        parse_ims_file(b"1 nan\n")


def test_round_trip_synthetic_recording():
    rs = synth_run_to_failure(small_synth())
    for rec in rs.recordings[::5]:
        back = parse_ims_file(format_ims(rec))
        np.testing.assert_array_equal(back.channels, rec.channels)


def test_recording_invariants():
    with pytest.raises(ValidationError):
        RawRecording(None, 0.0, [[1.0]])
    with pytest.raises(ValidationError):
        RawRecording(None, 1.0, [[1.0, np.inf]])
    with pytest.raises(ValidationError):
        RawRecording(None, 1.0, np.zeros((2, 0)))
    t = datetime(2004, 1, 1)
    a = RawRecording(t, 1.0, [1.0])
    with pytest.raises(ValidationError):
        RecordingSet((a, RawRecording(t, 1.0, [2.0])))
    with pytest.raises(ValidationError):
        RecordingSet((a, RawRecording(t + timedelta(1), 2.0, [2.0])))


def test_enumerate_single_ims_name():
    entries, rejects = enumerate_recordings(["2004.02.13.15.52.39"])
    assert entries == [(datetime(2004, 2, 13, 15, 52, 39), "2004.02.13.15.52.39")]
    assert rejects == []


def test_enumerate_empty():
    assert enumerate_recordings([]) == ([], [])


def test_enumerate_sorts_shuffled_names():
    t0 = datetime(2003, 10, 22, 12, 6, 24)
    names = [ims_name(t0 + timedelta(minutes=10 * i + (i % 3))) for i in range(10)]
    shuffled = names[:]
    random.Random(4).shuffle(shuffled)
    entries, rejects = enumerate_recordings(shuffled + ["notes.txt"])
    assert [n for _, n in entries] == sorted(names)
    assert rejects == ["notes.txt"]


def test_enumerate_duplicate_timestamp():
    with pytest.raises(ValidationError):
        enumerate_recordings(["2004.02.13.15.52.39", "dir/2004.02.13.15.52.39"])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.datetimes(min_value=datetime(2000, 1, 1), max_value=datetime(2030, 1, 1)),
                max_size=20, unique_by=lambda d: d.replace(microsecond=0)),
       st.lists(st.text(alphabet="abc.xyz", max_size=8), max_size=5))
def test_enumerate_is_sorted_permutation(times, junk):
    names = [ims_name(t) for t in times]
    entries, rejects = enumerate_recordings(names + junk)
    assert sorted(n for _, n in entries) == sorted(names)
    ts = [t for t, _ in entries]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    assert sorted(rejects) == sorted(junk)


def test_synth_deterministic():
    a = synth_run_to_failure(small_synth())
    b = synth_run_to_failure(small_synth())
    for x, y in zip(a, b):
        assert x.timestamp == y.timestamp
        assert x.channels.tobytes() == y.channels.tobytes()
    c = synth_run_to_failure(small_synth(seed=4))
    assert a[0].channels.tobytes() != c[0].channels.tobytes()


def test_synth_zero_gain_peak_only_at_shaft():
    cfg = small_synth(fault_gain_per_stage=(0.0, 0.0, 0.0, 0.0))
    rs = synth_run_to_failure(cfg)
    pc = PreprocessConfig(segment_len=1024, transform_len=1024, smoothing_block=1)
    spec = np.array([v.values for v in preprocess_set(rs, 0, pc)])
    shaft_bin = round(cfg.shaft_freq / (cfg.sample_rate / 1024))
    assert np.all(np.argmax(spec, axis=1) == shaft_bin)
    stage = np.array([cfg.stage_of(i) for i in range(cfg.n_recordings)])
    means = [spec[stage == s].mean(axis=0) for s in range(4)]
    fault_bin = round(cfg.fault_freq / (cfg.sample_rate / 1024))
    ref = means[0][fault_bin]
    # no injection: the fault bin stays at the noise level in every stage
    assert all(abs(m[fault_bin] - ref) < 0.5 * ref for m in means)


def test_synth_fault_bin_energy_non_decreasing():
    cfg = small_synth()
    rs = synth_run_to_failure(cfg)
    pc = PreprocessConfig(segment_len=1024, transform_len=1024, smoothing_block=1)
    spec = np.array([v.values for v in preprocess_set(rs, 0, pc)])
    fault_bin = round(cfg.fault_freq / (cfg.sample_rate / 1024))
    stage = np.array([cfg.stage_of(i) for i in range(cfg.n_recordings)])
    per_stage = [spec[stage == s, fault_bin].mean() for s in range(4)]
    assert all(b >= a for a, b in zip(per_stage, per_stage[1:]))
    assert per_stage[-1] > 10 * per_stage[0]


@pytest.mark.parametrize("kw, field", [
    ({"stage_boundaries": (8, 8, 20)}, "stage_boundaries"),
    ({"stage_boundaries": (8, 14, 24)}, "stage_boundaries"),
    ({"fault_gain_per_stage": (0.0, 1.0, 0.5, 2.0)}, "fault_gain_per_stage"),
    ({"fault_gain_per_stage": (0.0, 1.0)}, "fault_gain_per_stage"),
    ({"noise_floor": -1.0}, "noise_floor"),
    ({"sample_rate": 0.0}, "sample_rate"),
])
def test_synth_validation_names_field(kw, field):
    with pytest.raises(ValidationError) as exc:
        synth_run_to_failure(small_synth(**kw))
    assert field in exc.value.fields
    assert field in str(exc.value)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(4, 16), st.data())
def test_synth_output_satisfies_set_invariants(seed, n, data):
    k = data.draw(st.integers(0, min(3, n - 1)))
    bounds = sorted(data.draw(st.lists(st.integers(1, n - 1), min_size=k, max_size=k, unique=True)))
    gains = sorted(data.draw(st.lists(st.floats(0, 3), min_size=k + 1, max_size=k + 1)))
    cfg = SynthConfig(seed=seed, sample_rate=2048.0, segment_len=64, n_recordings=n,
                      stage_boundaries=tuple(bounds), shaft_freq=50.0, fault_freq=200.0,
                      fault_gain_per_stage=tuple(gains))
    rs = synth_run_to_failure(cfg)
    assert len(rs) == n
    ts = [r.timestamp for r in rs]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    assert {r.channels.shape for r in rs} == {(1, 64)}


def test_write_and_load_directory(tmp_path):
    cfg = small_synth()
    rs = synth_run_to_failure(cfg)
    write_recording_set(rs, tmp_path / "ds")
    files = sorted(p.name for p in (tmp_path / "ds").iterdir())
    assert len(files) == cfg.n_recordings + 1
    manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert manifest["seed"] == cfg.seed
    assert manifest["stage_boundaries"] == list(cfg.stage_boundaries)
    back = load_ims_directory(tmp_path / "ds", sample_rate=cfg.sample_rate, workers=4)
    assert len(back) == len(rs)
    for a, b in zip(rs, back):
        assert a.timestamp == b.timestamp
        np.testing.assert_array_equal(a.channels, b.channels)
    assert back.manifest["rejects"] == []
