"""2D embeddings of a distance matrix: classical MDS and exact t-SNE."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError, SizeError, ValidationError
from .linalg import jacobi_eigh
from .similarity import DistanceMatrix

PROB_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Embedding2D:
    points: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 2:
            raise SizeError("points must have shape (n, 2)")
        if not np.all(np.isfinite(p)):
            raise ValidationError("embedding has non-finite coordinates", ["points"])
        if self.method not in ("mds", "tsne"):
            raise ValidationError(f"unknown method {self.method!r}", ["method"])
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.shape[0]


def _sign_fix(v: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive (first one on ties)
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[idx, np.arange(v.shape[1])] < 0, -1.0, 1.0)
    return v * signs


def double_center(d2: np.ndarray) -> np.ndarray:
    """``-1/2 J d2 J`` with ``J = I - 11^T/n``."""
    row = d2.mean(axis=1, keepdims=True)
    col = d2.mean(axis=0, keepdims=True)
    return -0.5 * (d2 - row - col + d2.mean())


def mds_embed(d: DistanceMatrix, tol=1e-12, max_sweeps=100) -> Embedding2D:
    """Classical (Torgerson) MDS into the plane.

    Coordinates are the top two eigenvectors of the double-centred squared
    distances, scaled by the root of their (clamped) eigenvalues.
    """
    if d.n_points < 3:
        raise SizeError(f"MDS needs at least 3 points, got {d.n_points}")
    sq = d.square()
    b = double_center(sq * sq)
    w, v = jacobi_eigh(b, tol=tol, max_sweeps=max_sweeps)
    top = _sign_fix(v[:, :2])
    coords = top * np.sqrt(np.maximum(w[:2], 0.0))
    diag = {"eigenvalues": [float(x) for x in w[:2]],
            "negative_mass": float(-w[w < 0].sum()),
            "positive_mass": float(w[w > 0].sum())}
    return Embedding2D(coords, "mds", diag)


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: int = 250
    momentum_schedule: tuple = (0.5, 0.8, 250)
    seed: int = 0
    square_distances: bool = True
    init_scale: float = 1e-4
    min_gain: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "momentum_schedule", tuple(self.momentum_schedule))
        bad = []
        if not self.perplexity > 0:
            bad.append("perplexity")
        if not self.learning_rate > 0:
            bad.append("learning_rate")
        if not self.early_exaggeration_factor > 0:
            bad.append("early_exaggeration_factor")
        if self.early_exaggeration_iters < 0 or self.iterations < self.early_exaggeration_iters:
            bad.append("iterations")
        if len(self.momentum_schedule) != 3:
            bad.append("momentum_schedule")
        if bad:
            raise ValidationError("invalid TsneConfig: " + ", ".join(bad), bad)

    def check_size(self, n_points: int):
        if not self.perplexity < (n_points - 1) / 3:
            raise ValidationError(f"perplexity {self.perplexity} too large for {n_points} points "
                                  f"(must be < (n-1)/3)", ["perplexity"])


def _row_entropy_bits(d_row, beta):
    # d_row excludes self; shift by the minimum so exp never underflows to all-zero
    e = np.exp(-beta * (d_row - d_row.min()))
    s = e.sum()
    p = e / s
    h = np.log(s) + beta * np.dot(p, d_row - d_row.min())
    return h / np.log(2.0), p


def conditional_probabilities(dist: np.ndarray, perplexity: float, tol=1e-5, max_iter=200):
    """Row-wise Gaussian conditionals with entropy ``log2(perplexity)``.

    ``dist`` is the (n, n) matrix fed to the Gaussian kernel (already
    squared if that is wanted). Precision per row is found by bisection.
    """
    n = dist.shape[0]
    target = np.log2(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        row = np.delete(dist[i], i)
        spread = row.max() - row.min()
        if spread == 0.0:
            if abs(np.log2(n - 1) - target) <= tol:
                p[i, np.arange(n) != i] = 1.0 / (n - 1)
                continue
            raise NumericError(f"bandwidth search failed for point {i}: all distances equal", index=i)
        beta, lo, hi = 1.0 / spread, 0.0, np.inf
        for _ in range(max_iter):
            h, pi = _row_entropy_bits(row, beta)
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        else:
            raise NumericError(f"bandwidth search failed for point {i} (entropy off by {diff:.2e} bits)",
                               residual=abs(diff), index=i)
        p[i, np.arange(n) != i] = pi
    return p


def joint_probabilities(d: DistanceMatrix, perplexity: float, square_distances=True) -> np.ndarray:
    dist = d.square()
    if square_distances:
        dist = dist * dist
    cond = conditional_probabilities(dist, perplexity)
    p = (cond + cond.T) / (2.0 * d.n_points)
    return np.maximum(p, PROB_FLOOR)


def _student_t(y):
    sq = np.sum(y * y, axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * (y @ y.T), 0.0))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(P, points) -> float:
    """KL(P || Q) with Q the Student-t affinities of ``points``."""
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or y.shape != (P.shape[0], 2):
        raise SizeError("P must be (n, n) and points (n, 2)")
    num = _student_t(y)
    q = num / num.sum()
    off = ~np.eye(P.shape[0], dtype=bool)
    p_ = P[off]
    return float(np.sum(p_ * np.log(np.maximum(p_, PROB_FLOOR) / np.maximum(q[off], PROB_FLOOR))))


def tsne_embed(d: DistanceMatrix, config: TsneConfig = TsneConfig()) -> Embedding2D:
    """Exact t-SNE from a precomputed distance matrix.

    Gradient descent with early exaggeration, a two-level momentum schedule
    and per-coordinate adaptive gains. Deterministic for a fixed seed.
    """
    n = d.n_points
    config.check_size(n)
    P = joint_probabilities(d, config.perplexity, config.square_distances)
    rng = np.random.default_rng(config.seed)
    y = config.init_scale * rng.standard_normal((n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    m0, m1, switch = config.momentum_schedule
    kl_ee = None
    for it in range(config.iterations):
        if it == config.early_exaggeration_iters:
            kl_ee = kl_divergence(P, y)
        exag = config.early_exaggeration_factor if it < config.early_exaggeration_iters else 1.0
        num = _student_t(y)
        q = np.maximum(num / num.sum(), PROB_FLOOR)
        w = (exag * P - q) * num
        grad = 4.0 * (np.diag(w.sum(axis=1)) - w) @ y
        mom = m0 if it < switch else m1
        inc = np.sign(grad) != np.sign(update)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, config.min_gain)
        update = mom * update - config.learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
    kl_final = kl_divergence(P, y)
    if kl_ee is None:
        kl_ee = kl_final
    diag = {"kl": kl_final, "kl_after_exaggeration": kl_ee, "perplexity": config.perplexity,
            "iterations": config.iterations, "config": asdict(config)}
    return Embedding2D(y, "tsne", diag)


# -- export -------------------------------------------------------------------


def write_embedding_csv(emb: Embedding2D, path, timestamps=None):
    """CSV with ``index,timestamp,x,y,method`` plus a ``.json`` diagnostics sidecar."""
    path = Path(path)
    if timestamps is None:
        timestamps = [None] * len(emb)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "timestamp", "x", "y", "method"])
        for i, ((x, y), ts) in enumerate(zip(emb.points, timestamps)):
            w.writerow([i, ts.isoformat() if ts else "", repr(float(x)), repr(float(y)), emb.method])
    side = path.with_suffix(".json")
    side.write_text(json.dumps({"method": emb.method, **emb.diagnostics}, indent=2, sort_keys=True) + "\n")
    return path


def read_embedding_csv(path) -> Embedding2D:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
    method = rows[0]["method"] if rows else "mds"
    side = path.with_suffix(".json")
    diag = json.loads(side.read_text()) if side.exists() else {}
    diag.pop("method", None)
    return Embedding2D(pts, method, diag)
