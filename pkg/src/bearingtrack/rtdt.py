"""Real-time data tracker.

A reference map is the MDS embedding of early "normal" spectra plus the
all-zero vector O. New spectra are placed on it geometrically, scored by
the warning factor rho, and rho is averaged over disjoint blocks of M
measurements to drive a latching alert.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .embed import mds_embed
from .errors import GeometryError, SequenceError, SizeError
from .preprocess import as_matrix
from .similarity import distance_matrix

DEFAULT_WINDOW = 12
DEFAULT_THRESHOLD = 2.0


def _time_rank(vectors) -> np.ndarray:
    # rank by timestamp, falling back to position when timestamps are missing
    keys = [(v.timestamp is None, v.timestamp or datetime.min, i) for i, v in enumerate(vectors)]
    order = sorted(range(len(keys)), key=keys.__getitem__)
    rank = np.empty(len(keys), dtype=np.int64)
    rank[order] = np.arange(len(keys))
    return rank


def _first_best(values: np.ndarray, best: float, rank: np.ndarray) -> int:
    cand = np.flatnonzero(values == best)
    return int(cand[np.argmin(rank[cand])])


@dataclass(frozen=True, eq=False)
class ReferenceMap:
    """Reference spectra, their 2D coordinates and the image of O.

    ``coords2d`` has one row per reference vector followed by O's row.
    Coordinates are translated so that O sits at the origin and rotated so
    that the O -> G ray points along +x.
    """

    ref_vectors: tuple
    coords2d: np.ndarray
    o2d: np.ndarray
    g2d: np.ndarray
    g_hi: np.ndarray
    rotation_applied: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        mat = as_matrix(self.ref_vectors)
        mat.setflags(write=False)
        object.__setattr__(self, "_matrix", mat)
        object.__setattr__(self, "_sqnorm", np.einsum("ij,ij->i", mat, mat))
        object.__setattr__(self, "_rank", _time_rank(self.ref_vectors))

    @property
    def n_refs(self) -> int:
        return len(self.ref_vectors)

    @property
    def ref_coords(self) -> np.ndarray:
        return self.coords2d[:-1]

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def latest_timestamp(self):
        ts = [v.timestamp for v in self.ref_vectors if v.timestamp is not None]
        return max(ts) if ts else None


def build_reference_map(reference) -> ReferenceMap:
    reference = tuple(reference)
    if len(reference) < 3:
        raise SizeError(f"reference map needs at least 3 vectors, got {len(reference)}")
    mat = as_matrix(reference)
    zero = np.zeros(mat.shape[1])
    emb = mds_embed(distance_matrix(list(mat) + [zero]))
    pts = emb.points - emb.points[-1]
    g = pts[:-1].mean(axis=0)
    angle = math.atan2(g[1], g[0]) if np.any(g != 0.0) else 0.0
    c, s = math.cos(-angle), math.sin(-angle)
    coords = pts @ np.array([[c, s], [-s, c]])
    coords[-1] = 0.0
    coords.setflags(write=False)
    g2d = coords[:-1].mean(axis=0)
    return ReferenceMap(reference, coords, coords[-1].copy(), g2d, mat.mean(axis=0),
                        angle, dict(emb.diagnostics))


@dataclass(frozen=True)
class TrackedPoint:
    timestamp: datetime | None
    x2d: tuple
    rho: float
    feasible_geometry: bool
    nearest: int = -1
    aligned: int = -1


def _angle(u, v) -> float:
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u[0] * v[0] + u[1] * v[1])


def _line_fallback(o, z, r1, r2):
    # minimise (|x-o| - r1)^2 + (|x-z| - r2)^2 on the line through o and z,
    # one quadratic per region t<0, 0<=t<=D, t>D of x = o + t*u
    dvec = z - o
    dist = math.hypot(dvec[0], dvec[1])
    u = dvec / dist
    cands = [min((dist - r1 - r2) / 2.0, 0.0),
             min(max((r1 + dist - r2) / 2.0, 0.0), dist),
             max((r1 + dist + r2) / 2.0, dist)]

    def cost(t):
        return (abs(t) - r1) ** 2 + (abs(t - dist) - r2) ** 2

    t = min(cands, key=cost)
    return o + t * u


def plot_point(rmap: ReferenceMap, X) -> TrackedPoint:
    """Place spectrum ``X`` on the reference map.

    Z is the nearest reference vector, Y the one at the smallest angle to X.
    x lies on the circle of radius |X| about O and the circle of radius
    |X - Z| about Z; of the two intersections the one whose angle to Y at O
    best matches the high-dimensional angle is kept. Disjoint circles fall
    back to the least-squares point on the O-Z line.
    """
    ts = getattr(X, "timestamp", None)
    x = np.asarray(getattr(X, "values", X), dtype=np.float64).reshape(-1)
    mat = rmap.matrix
    if x.size != mat.shape[1]:
        raise SizeError(f"dimension mismatch: {x.size} vs {mat.shape[1]}")
    o = rmap.o2d
    xx = float(np.dot(x, x))
    if xx == 0.0:
        return TrackedPoint(ts, (float(o[0]), float(o[1])), warning_factor(rmap, o), True)

    dots = mat @ x
    d2 = np.maximum(xx + rmap._sqnorm - 2.0 * dots, 0.0)
    d2[np.all(mat == x, axis=1)] = 0.0
    iz = _first_best(d2, d2.min(), rmap._rank)
    z = rmap.coords2d[iz]
    r1, r2 = math.sqrt(xx), math.sqrt(d2[iz])
    if r2 == 0.0:
        return TrackedPoint(ts, (float(z[0]), float(z[1])), warning_factor(rmap, z), True, iz, iz)

    norms = np.sqrt(rmap._sqnorm)
    valid = norms > 0
    cos = np.full(len(norms), -np.inf)
    cos[valid] = dots[valid] / (norms[valid] * r1)
    iy = _first_best(cos, cos.max(), rmap._rank)
    theta = math.acos(min(1.0, max(-1.0, cos[iy])))
    ydir = rmap.coords2d[iy] - o

    dvec = z - o
    dist = math.hypot(dvec[0], dvec[1])
    feasible = True
    if dist == 0.0:
        if abs(r1 - r2) > 1e-12 * max(1.0, r1):
            raise GeometryError("nearest reference maps onto O but radii disagree")
        base = ydir if np.any(ydir != 0.0) else np.array([1.0, 0.0])
        pt = o + r1 * base / math.hypot(base[0], base[1])
    elif dist > r1 + r2 or dist < abs(r1 - r2):
        feasible = False
        pt = _line_fallback(o, z, r1, r2)
    else:
        u = dvec / dist
        a = (r1 * r1 - r2 * r2 + dist * dist) / (2.0 * dist)
        h = math.sqrt(max(r1 * r1 - a * a, 0.0))
        perp = np.array([-u[1], u[0]])
        cands = [o + a * u + h * perp, o + a * u - h * perp]
        if np.any(ydir != 0.0):
            errs = [abs(_angle(c - o, ydir) - theta) for c in cands]
            pt = cands[1] if errs[1] < errs[0] else cands[0]
        else:
            pt = cands[0]
    return TrackedPoint(ts, (float(pt[0]), float(pt[1])), warning_factor(rmap, pt), feasible, iz, iy)


def warning_factor(rmap: ReferenceMap, x2d) -> float:
    """rho = |g->x| / |g->p| with p the reference point maximising <g->p, g->x>.

    Ties on the inner product go to the larger |g->p|, then the earlier
    timestamp. O is not a candidate for p.
    """
    gx, gy = float(rmap.g2d[0]), float(rmap.g2d[1])
    refs = rmap.ref_coords
    dx = refs[:, 0] - gx
    dy = refs[:, 1] - gy
    if not np.any((dx != 0.0) | (dy != 0.0)):
        raise GeometryError("all reference points coincide with their centroid")
    vx, vy = float(x2d[0]) - gx, float(x2d[1]) - gy
    if vx == 0.0 and vy == 0.0:
        return 0.0
    ip = dx * vx + dy * vy
    cand = np.flatnonzero(ip == ip.max())
    if cand.size > 1:
        lens = np.hypot(dx[cand], dy[cand])
        cand = cand[lens == lens.max()]
    k = int(cand[np.argmin(rmap._rank[cand])])
    return math.hypot(vx, vy) / math.hypot(float(dx[k]), float(dy[k]))


@dataclass(frozen=True)
class AlertEvent:
    timestamp: datetime | None
    rho_avg: float


@dataclass
class AlertState:
    """Disjoint-block averaging of rho with a latching threshold alarm."""

    window_size: int = DEFAULT_WINDOW
    threshold: float = DEFAULT_THRESHOLD
    rho_window: list = field(default_factory=list)
    rho_avg_history: list = field(default_factory=list)
    alerts: list = field(default_factory=list)
    latched: bool = False

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")

    def update(self, rho: float, timestamp=None):
        if rho < 0:
            raise ValueError("rho must be non-negative")
        self.rho_window.append(float(rho))
        if len(self.rho_window) < self.window_size:
            return None
        avg = float(np.mean(self.rho_window))
        self.rho_window.clear()
        self.rho_avg_history.append((timestamp, avg))
        if avg >= self.threshold and not self.latched:
            self.latched = True
            event = AlertEvent(timestamp, avg)
            self.alerts.append(event)
            return event
        return None

    def reset(self):
        """Re-arm the alarm; history and emitted alerts are kept."""
        self.latched = False


def update_alert(state: AlertState, rho: float, timestamp=None):
    return state, state.update(rho, timestamp)


def track_stream(rmap: ReferenceMap, stream, state: AlertState | None = None):
    """Fold plot -> rho -> alert over ``stream`` in order.

    Returns ``(points, state)``. Timestamps must be strictly increasing and
    later than every reference timestamp.
    """
    state = AlertState() if state is None else state
    last = rmap.latest_timestamp
    points = []
    for i, X in enumerate(stream):
        ts = getattr(X, "timestamp", None)
        if ts is not None and last is not None and ts <= last:
            raise SequenceError(f"stream item {i} at {ts.isoformat()} is not after {last.isoformat()}",
                                index=i)
        if ts is not None:
            last = ts
        tp = plot_point(rmap, X)
        state.update(tp.rho, ts)
        points.append(tp)
    return points, state


# -- export -------------------------------------------------------------------


def _iso(ts):
    return ts.isoformat() if ts is not None else ""


def write_tracked_csv(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "x", "y", "rho", "feasible_geometry"])
        for p in points:
            w.writerow([_iso(p.timestamp), repr(p.x2d[0]), repr(p.x2d[1]), repr(p.rho),
                        int(p.feasible_geometry)])
    return Path(path)


def write_rho_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "rho_avg"])
        for ts, avg in history:
            w.writerow([_iso(ts), repr(avg)])
    return Path(path)


def read_tracked_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TrackedPoint(datetime.fromisoformat(r["timestamp"]) if r["timestamp"] else None,
                         (float(r["x"]), float(r["y"])), float(r["rho"]),
                         bool(int(r["feasible_geometry"]))) for r in rows]
