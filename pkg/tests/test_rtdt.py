import math
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bearingtrack.errors import GeometryError, SequenceError, SizeError
from bearingtrack.ingest import SynthConfig, synth_run_to_failure
from bearingtrack.preprocess import PreprocessConfig, SpectrumVector, preprocess_set
from bearingtrack.rtdt import (AlertState, ReferenceMap, build_reference_map, plot_point,
                               read_tracked_csv, track_stream, update_alert, warning_factor,
                               write_rho_csv, write_tracked_csv)
from conftest import T0, planar_spectra, spectra
from oracles import brute_rho, euclid, pairwise


@pytest.fixture(scope="module")
def planar_map():
    vals, _ = planar_spectra(20, seed=1)
    return build_reference_map(spectra(vals)), vals


def hand_map(ref2d):
    """A ReferenceMap with hand-placed 2D coordinates (O at the origin)."""
    ref2d = np.asarray(ref2d, dtype=float)
    coords = np.vstack([ref2d, [0.0, 0.0]])
    vecs = spectra(np.abs(np.random.default_rng(0).random((len(ref2d), 4))))
    return ReferenceMap(tuple(vecs), coords, coords[-1], ref2d.mean(axis=0), np.zeros(4), 0.0)


def test_reference_map_layout(planar_map):
    rmap, vals = planar_map
    assert rmap.coords2d.shape == (21, 2)
    np.testing.assert_array_equal(rmap.g2d, rmap.coords2d[:-1].mean(axis=0))
    assert tuple(rmap.o2d) == (0.0, 0.0)
    assert rmap.g2d[0] > 0
    assert abs(rmap.g2d[1]) <= 1e-9 * rmap.g2d[0]
    np.testing.assert_allclose(rmap.g_hi, vals.mean(axis=0))


def test_reference_map_planar_distances(planar_map):
    rmap, vals = planar_map
    hi = pairwise(list(vals) + [np.zeros(vals.shape[1])])
    lo = pairwise(rmap.coords2d)
    np.testing.assert_allclose(lo, hi, rtol=1e-6, atol=1e-6)


def test_reference_map_identical_vectors():
    v = np.linspace(1.0, 2.0, 16)
    rmap = build_reference_map(spectra([v, v, v]))
    pts = rmap.coords2d
    assert np.max(np.abs(pts[:3] - pts[0])) <= 1e-6
    assert np.linalg.norm(pts[0] - rmap.o2d) == pytest.approx(np.linalg.norm(v), abs=1e-6)


def test_reference_map_needs_three():
    with pytest.raises(SizeError):
        build_reference_map(spectra(np.ones((2, 4))))


def test_plot_reference_vector_returns_own_coordinate(planar_map):
    rmap, vals = planar_map
    for i in (0, 7, 19):
        tp = plot_point(rmap, vals[i])
        assert tp.x2d == tuple(rmap.coords2d[i])
        assert tp.feasible_geometry


def test_plot_zero_vector_returns_origin(planar_map):
    rmap, vals = planar_map
    tp = plot_point(rmap, np.zeros(vals.shape[1]))
    assert tp.x2d == tuple(rmap.o2d)


def test_plot_planar_residuals(planar_map):
    rmap, vals = planar_map
    newvals, _ = planar_spectra(30, seed=9, offset=4.0)
    for x in newvals:
        tp = plot_point(rmap, x)
        assert tp.feasible_geometry
        z = rmap.matrix[tp.nearest]
        p = np.array(tp.x2d)
        r_o, r_z = np.linalg.norm(x), euclid(x, z)
        assert abs(np.linalg.norm(p - rmap.o2d) - r_o) <= 1e-6 * max(1, r_o)
        assert abs(np.linalg.norm(p - rmap.coords2d[tp.nearest]) - r_z) <= 1e-6 * max(1, r_z)


def test_plot_planar_recovers_true_position(planar_map):
    # on an exactly planar map the angle rule picks the true intersection
    rmap, vals = planar_map
    x = planar_spectra(1, seed=11, offset=5.5)[0][0]
    tp = plot_point(rmap, x)
    full = build_reference_map(spectra(list(vals) + [x]))
    # compare distances to every reference, which are rigid-motion invariant
    got = [np.linalg.norm(np.array(tp.x2d) - c) for c in rmap.coords2d]
    want = [np.linalg.norm(full.coords2d[20] - c) for c in full.coords2d[[*range(20), 21]]]
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_plot_deterministic(planar_map, rng):
    rmap, vals = planar_map
    x = vals[3] * 1.3 + rng.random(vals.shape[1])
    assert plot_point(rmap, x) == plot_point(rmap, x)


def test_plot_infeasible_falls_back_to_line(rng):
    vals = np.abs(rng.normal(5.0, 1.0, size=(12, 32)))
    rmap = build_reference_map(spectra(vals))
    x = vals[0].copy()
    x[::2] += 6.0
    tp = plot_point(rmap, x)
    if not tp.feasible_geometry:
        o, z = rmap.o2d, rmap.coords2d[tp.nearest]
        cross = (z[0] - o[0]) * (tp.x2d[1] - o[1]) - (z[1] - o[1]) * (tp.x2d[0] - o[0])
        assert abs(cross) <= 1e-9 * max(1.0, np.linalg.norm(z - o) ** 2)


def test_plot_dimension_mismatch(planar_map):
    rmap, _ = planar_map
    with pytest.raises(SizeError):
        plot_point(rmap, np.ones(5))


def test_rho_zero_at_centroid(planar_map):
    rmap, _ = planar_map
    assert warning_factor(rmap, rmap.g2d) == 0.0


def test_rho_one_at_maximising_point():
    m = hand_map([[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0], [3.0, 3.0]])
    g = m.g2d
    for k in range(5):
        v = m.ref_coords[k] - g
        ips = (m.ref_coords - g) @ v
        if np.argmax(ips) == k:
            assert warning_factor(m, m.ref_coords[k]) == 1.0


def test_rho_hand_placed_brute_force():
    m = hand_map([[1.0, 1.0], [2.0, -1.0], [-1.5, 0.5], [0.0, 3.0], [-2.0, -2.0]])
    for x in ([0.3, 0.2], [5.0, 5.0], [-4.0, 1.0], [0.0, -7.0], [2.2, 0.0]):
        assert warning_factor(m, x) == brute_rho(m.ref_coords, m.g2d, x)


def test_rho_tie_break_prefers_longer_then_earlier():
    # points 0 and 1 tie on the inner product with +x; 1 is longer
    m = hand_map([[2.0, 0.0], [2.0, 1.0], [-2.0, -1.0], [-2.0, 0.0]])
    x = m.g2d + np.array([1.0, 0.0])
    expect = 1.0 / math.hypot(*(m.ref_coords[1] - m.g2d))
    assert warning_factor(m, x) == expect


def test_rho_degenerate_map():
    m = hand_map([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(GeometryError):
        warning_factor(m, [2.0, 2.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 2 * math.pi))
def test_rho_rotation_invariant(seed, angle):
    r = np.random.default_rng(seed)
    ref = r.normal(size=(8, 2))
    x = r.normal(size=2) * 3
    m = hand_map(ref)
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    g = m.g2d
    m2 = hand_map((ref - g) @ rot.T + g)
    assert warning_factor(m2, (x - g) @ rot.T + g) == pytest.approx(warning_factor(m, x), rel=1e-9)


def test_update_alert_healthy_block():
    st_ = AlertState(12, 2.0)
    events = [update_alert(st_, 1.0, T0 + timedelta(minutes=10 * i))[1] for i in range(12)]
    assert events == [None] * 12
    assert st_.rho_avg_history == [(T0 + timedelta(minutes=110), 1.0)]
    assert st_.alerts == []


def test_update_alert_fires():
    st_ = AlertState(12, 2.0)
    events = [st_.update(2.5, i) for i in range(12)]
    assert events[:11] == [None] * 11
    assert events[11].rho_avg == 2.5
    assert len(st_.alerts) == 1


def test_update_alert_incomplete_window():
    st_ = AlertState(12, 2.0)
    for i in range(11):
        st_.update(5.0, i)
    assert st_.rho_avg_history == []
    assert len(st_.rho_window) == 11


def test_alert_latches_until_reset():
    st_ = AlertState(2, 2.0)
    for r in [3.0, 3.0, 0.5, 0.5, 4.0, 4.0]:
        st_.update(r)
    assert len(st_.alerts) == 1
    st_.reset()
    st_.update(4.0)
    assert st_.update(4.0) is not None
    assert len(st_.alerts) == 2


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 10), max_size=60), st.integers(1, 13))
def test_alert_history_is_chunked_mean(rhos, m):
    st_ = AlertState(m, 2.0)
    for r in rhos:
        st_.update(r)
    full = len(rhos) // m
    assert [a for _, a in st_.rho_avg_history] == [float(np.mean(rhos[k * m:(k + 1) * m])) for k in range(full)]
    assert len(st_.alerts) <= 1
    assert len(st_.rho_window) == len(rhos) % m


def test_track_empty_stream(planar_map):
    rmap, _ = planar_map
    st_ = AlertState()
    pts, out = track_stream(rmap, [], st_)
    assert pts == [] and out is st_
    assert out.rho_avg_history == [] and out.rho_window == []


def test_track_replay_reference(planar_map):
    rmap, vals = planar_map
    later = [SpectrumVector(v.values, v.bin_width, v.timestamp + timedelta(days=30), v.source_id)
             for v in rmap.ref_vectors]
    pts, _ = track_stream(rmap, later)
    assert all(p.rho <= 1 + 1e-9 for p in pts)


def test_track_rejects_out_of_order(planar_map):
    rmap, vals = planar_map
    late = spectra(vals[:3], start=T0 + timedelta(days=10))
    with pytest.raises(SequenceError) as exc:
        track_stream(rmap, [late[1], late[0]])
    assert exc.value.index == 1
    with pytest.raises(SequenceError) as exc:
        track_stream(rmap, spectra(vals[:2], start=T0))
    assert exc.value.index == 0


def test_track_rho_avg_matches_points(planar_map, rng):
    rmap, vals = planar_map
    xs = spectra(np.abs(vals[rng.integers(0, 20, 40)] * rng.uniform(0.8, 2.5, (40, 1))),
                 start=T0 + timedelta(days=5))
    pts, st_ = track_stream(rmap, xs, AlertState(6, 2.0))
    rhos = [p.rho for p in pts]
    assert [a for _, a in st_.rho_avg_history] == [float(np.mean(rhos[k:k + 6])) for k in range(0, 36, 6)]


def test_synthetic_run_alert_window():
    cfg = SynthConfig(seed=11, n_recordings=260, stage_boundaries=(150, 200, 240), segment_len=4096,
                      sample_rate=20000.0)
    rs = synth_run_to_failure(cfg)
    vecs = preprocess_set(rs, 0, PreprocessConfig(segment_len=4096, transform_len=4096, smoothing_block=16))
    rmap = build_reference_map(vecs[:80])
    _, st_ = track_stream(rmap, vecs[80:])
    assert st_.alerts
    idx = [v.timestamp for v in vecs].index(st_.alerts[0].timestamp)
    assert cfg.stage_boundaries[0] <= idx < cfg.stage_boundaries[2]


def test_csv_exports(tmp_path, planar_map):
    rmap, vals = planar_map
    xs = spectra(vals[:12] * 1.1, start=T0 + timedelta(days=3))
    pts, st_ = track_stream(rmap, xs, AlertState(4, 2.0))
    back = read_tracked_csv(write_tracked_csv(pts, tmp_path / "t.csv"))
    assert [(p.timestamp, p.x2d, p.rho, p.feasible_geometry) for p in back] == \
           [(p.timestamp, p.x2d, p.rho, p.feasible_geometry) for p in pts]
    lines = write_rho_csv(st_.rho_avg_history, tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "timestamp,rho_avg"
    assert len(lines) == 4
