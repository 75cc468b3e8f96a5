"""Standalone SVG figures: 2D maps coloured by time, and the rho_avg curve.

Every plot group carries ``data-transform="sx ox sy oy"`` so that pixel
coordinates invert exactly to data via ``x = (px - ox) / sx``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import ValidationError

WIDTH, HEIGHT = 640, 480
MARGIN = {"left": 70, "right": 44, "top": 36, "bottom": 56}
EARLY_COLOR = "#2166ac"
LATE_COLOR = "#d6604d"


_XML_INVALID = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff]")


def _text(s) -> str:
    """Escape for XML character data, dropping code points XML 1.0 forbids."""
    return escape(_XML_INVALID.sub("", str(s)))


def _num(v: float) -> str:
    return repr(float(v))


def _lerp_color(c0: str, c1: str, t: float) -> str:
    a = [int(c0[i:i + 2], 16) for i in (1, 3, 5)]
    b = [int(c1[i:i + 2], 16) for i in (1, 3, 5)]
    return "#" + "".join(f"{round(x + (y - x) * t):02x}" for x, y in zip(a, b))


def _padded_range(values, pad=0.05):
    lo, hi = float(min(values)), float(max(values))
    if hi - lo <= 1e-9 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        half = max(0.5 * abs(mid), 1.0)
        return mid - half, mid + half
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


class _Axes:
    """Affine data -> pixel map for one plot area."""

    def __init__(self, xr, yr):
        self.x0 = MARGIN["left"]
        self.y0 = MARGIN["top"]
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        self.xr, self.yr = xr, yr
        self.sx = self.w / (xr[1] - xr[0])
        self.ox = self.x0 - xr[0] * self.sx
        self.sy = -self.h / (yr[1] - yr[0])
        self.oy = self.y0 + self.h - yr[0] * self.sy

    def px(self, x):
        return self.sx * x + self.ox

    def py(self, y):
        return self.sy * y + self.oy

    @property
    def attr(self):
        return " ".join(_num(v) for v in (self.sx, self.ox, self.sy, self.oy))


class _Doc:
    def __init__(self, title):
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        ]
        if title:
            self.parts.append(f'<text class="title" x="{WIDTH / 2}" y="22" text-anchor="middle" '
                              f'font-family="sans-serif" font-size="15">{_text(title)}</text>')

    def add(self, s):
        self.parts.append(s)

    def frame(self, ax: _Axes, xlabels, ylabels, xname, yname):
        self.add(f'<rect class="frame" x="{ax.x0}" y="{ax.y0}" width="{ax.w}" height="{ax.h}" '
                 'fill="none" stroke="#333333" stroke-width="1"/>')
        ybase = ax.y0 + ax.h
        for xv, label in xlabels:
            p = _num(ax.px(xv))
            self.add(f'<line class="tick" x1="{p}" y1="{ybase}" x2="{p}" y2="{ybase + 5}" stroke="#333333"/>')
            self.add(f'<text class="ticklabel" x="{p}" y="{ybase + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{_text(label)}</text>')
        for yv, label in ylabels:
            p = _num(ax.py(yv))
            self.add(f'<line class="tick" x1="{ax.x0 - 5}" y1="{p}" x2="{ax.x0}" y2="{p}" stroke="#333333"/>')
            self.add(f'<text class="ticklabel" x="{ax.x0 - 8}" y="{p}" text-anchor="end" '
                     f'dominant-baseline="middle" font-family="sans-serif" font-size="10">{_text(label)}</text>')
        self.add(f'<text class="axislabel" x="{ax.x0 + ax.w / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">{_text(xname)}</text>')
        self.add(f'<text class="axislabel" x="16" y="{ax.y0 + ax.h / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {ax.y0 + ax.h / 2})" font-family="sans-serif" '
                 f'font-size="12">{_text(yname)}</text>')

    def text(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


@dataclass
class MapFigureSpec:
    """Points are ``(x, y, timestamp)`` triples; timestamp may be None.

    ``annotations`` is a list of ``(index, label)`` pairs marking points.
    """

    points: list
    highlight: tuple = ()
    trajectory: bool = False
    color_scale: tuple = (EARLY_COLOR, LATE_COLOR)
    annotations: list = field(default_factory=list)
    title: str = ""
    highlight_label: str = "reference"
    origin: tuple | None = None

    def validate(self):
        xy = np.array([(p[0], p[1]) for p in self.points], dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise ValidationError("map figure has non-finite coordinates", ["points"])
        if self.trajectory:
            ts = [p[2] for p in self.points if p[2] is not None]
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValidationError("trajectory timestamps must be ascending", ["points"])
        n = len(self.points)
        for i in list(self.highlight) + [a[0] for a in self.annotations]:
            if not 0 <= i < n:
                raise ValidationError(f"index {i} out of range", ["highlight"])
        return xy


def render_map(spec: MapFigureSpec) -> str:
    """One ``circle.marker`` per point; a ``polyline.trajectory`` iff requested."""
    xy = spec.validate()
    doc = _Doc(spec.title)
    xs = list(xy[:, 0]) + ([spec.origin[0]] if spec.origin else [])
    ys = list(xy[:, 1]) + ([spec.origin[1]] if spec.origin else [])
    ax = _Axes(_padded_range(xs or [0.0]), _padded_range(ys or [0.0]))
    doc.frame(ax, [(v, f"{v:.3g}") for v in _ticks(*ax.xr)],
              [(v, f"{v:.3g}") for v in _ticks(*ax.yr)], "map x", "map y")
    doc.add(f'<g class="plot" data-transform="{ax.attr}">')
    n = len(xy)
    if spec.trajectory and n:
        pts = " ".join(f"{_num(ax.px(x))},{_num(ax.py(y))}" for x, y in xy)
        doc.add(f'<polyline class="trajectory" points="{pts}" fill="none" stroke="#999999" '
                'stroke-width="0.6"/>')
    hl = set(spec.highlight)
    c0, c1 = spec.color_scale
    for i, (x, y) in enumerate(xy):
        color = _lerp_color(c0, c1, i / (n - 1) if n > 1 else 0.0)
        if i in hl:
            doc.add(f'<circle class="marker highlight" cx="{_num(ax.px(x))}" cy="{_num(ax.py(y))}" '
                    f'r="3" fill="#bbbbbb" stroke="#000000" stroke-width="0.5"/>')
        else:
            doc.add(f'<circle class="marker" cx="{_num(ax.px(x))}" cy="{_num(ax.py(y))}" r="2.5" '
                    f'fill="{color}"/>')
    if spec.origin is not None:
        px, py = _num(ax.px(spec.origin[0])), _num(ax.py(spec.origin[1]))
        doc.add(f'<path class="origin" d="M {px} {py} m -5 -5 l 10 10 m 0 -10 l -10 10" '
                'stroke="#000000" stroke-width="1.5"/>')
    for i, label in spec.annotations:
        px, py = ax.px(xy[i, 0]), ax.py(xy[i, 1])
        doc.add(f'<g class="annotation"><path d="M {_num(px)} {_num(py - 7)} l 6 -10 l -12 0 z" '
                f'fill="#e31a1c"/><text x="{_num(px)}" y="{_num(py - 20)}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{_text(label)}</text></g>')
    doc.add("</g>")
    # colour legend: earliest -> latest
    lx = WIDTH - MARGIN["right"] - 150
    doc.add('<g class="legend">'
            f'<rect x="{lx}" y="{MARGIN["top"] + 6}" width="10" height="10" fill="{c0}"/>'
            f'<text x="{lx + 14}" y="{MARGIN["top"] + 15}" font-family="sans-serif" font-size="10">earliest</text>'
            f'<rect x="{lx + 70}" y="{MARGIN["top"] + 6}" width="10" height="10" fill="{c1}"/>'
            f'<text x="{lx + 84}" y="{MARGIN["top"] + 15}" font-family="sans-serif" font-size="10">latest</text>')
    if hl:
        doc.add(f'<circle cx="{lx + 5}" cy="{MARGIN["top"] + 27}" r="3" fill="#bbbbbb" stroke="#000000" '
                f'stroke-width="0.5"/><text x="{lx + 14}" y="{MARGIN["top"] + 31}" font-family="sans-serif" '
                f'font-size="10">{_text(spec.highlight_label)}</text>')
    doc.add('</g>')
    return doc.text()


def _time_axis(history):
    ts = [h[0] for h in history]
    if all(isinstance(t, datetime) for t in ts):
        t0 = ts[0]
        return [(t - t0).total_seconds() / 3600.0 for t in ts], t0
    return [float(i) for i in range(len(ts))], None


def render_rho_curve(history, threshold: float, alerts=(), title="") -> str:
    """Polyline of rho_avg over time with a threshold line and alert markers.

    The x axis is hours since the first history timestamp, or the block
    index when timestamps are missing.
    """
    history = list(history)
    if not history:
        raise ValidationError("rho history is empty", ["history"])
    xs, t0 = _time_axis(history)
    if any(b < a for a, b in zip(xs, xs[1:])):
        raise ValidationError("history timestamps must be ascending", ["history"])
    ys = [float(h[1]) for h in history]
    if not all(math.isfinite(v) for v in ys + [threshold]):
        raise ValidationError("non-finite rho_avg value", ["history"])
    ax = _Axes(_padded_range(xs), _padded_range(ys + [threshold, 0.0]))
    doc = _Doc(title)

    def xlabel(v):
        if t0 is None:
            return f"{v:.0f}"
        return (t0 + timedelta(hours=v)).strftime("%m/%d %H:%M")

    doc.frame(ax, [(v, xlabel(v)) for v in _ticks(*ax.xr)],
              [(v, f"{v:.3g}") for v in _ticks(*ax.yr)],
              "time" if t0 is not None else "block", "rho_avg")
    doc.add(f'<g class="plot" data-transform="{ax.attr}">')
    ty = _num(ax.py(threshold))
    doc.add(f'<line class="threshold" x1="{ax.x0}" y1="{ty}" x2="{ax.x0 + ax.w}" y2="{ty}" '
            f'stroke="#e31a1c" stroke-dasharray="6 4" data-value={quoteattr(_num(threshold))}/>')
    doc.add(f'<text class="threshold-label" x="{ax.x0 + ax.w - 4}" y="{_num(ax.py(threshold) - 4)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="10" fill="#e31a1c">'
            f'threshold {threshold:g}</text>')
    pts = " ".join(f"{_num(ax.px(x))},{_num(ax.py(y))}" for x, y in zip(xs, ys))
    doc.add(f'<polyline class="rho" points="{pts}" fill="none" stroke="#2166ac" stroke-width="1.2"/>')
    lookup = {h[0]: i for i, h in enumerate(history)}
    for ev in alerts:
        ts = getattr(ev, "timestamp", None)
        val = float(getattr(ev, "rho_avg", threshold))
        if t0 is not None and ts is not None:
            xv = (ts - t0).total_seconds() / 3600.0
        else:
            xv = xs[lookup.get(ts, len(xs) - 1)]
        doc.add(f'<circle class="alert" cx="{_num(ax.px(xv))}" cy="{_num(ax.py(val))}" r="5" '
                'fill="none" stroke="#e31a1c" stroke-width="2"/>')
    doc.add("</g>")
    return doc.text()
