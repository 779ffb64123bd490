"""Minimal SVG line and bar charts (no plotting dependency)."""

from __future__ import annotations

from html import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x):
        return MARGIN["left"] + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return MARGIN["top"] + (1.0 - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0)) * self.ph


def _axes(frame: _Frame, title: str, xlabel: str, ylabel: str, xticks=True) -> list[str]:
    L, T = MARGIN["left"], MARGIN["top"]
    out = [
        f'<rect x="{L}" y="{T}" width="{frame.pw}" height="{frame.ph}" fill="none" stroke="#444"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{T + frame.ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {T + frame.ph / 2})">{escape(ylabel)}</text>',
    ]
    for v in np.linspace(frame.y0, frame.y1, 5):
        y = frame.py(v)
        out.append(f'<text x="{L - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-size="10">{_tick(v)}</text>')
    if xticks:
        for v in np.linspace(frame.x0, frame.x1, 5):
            x = frame.px(v)
            out.append(f'<text x="{_fmt(x)}" y="{T + frame.ph + 16}" text-anchor="middle" font-size="10">{_tick(v)}</text>')
    return out


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def line_plot(
    x,
    curves,
    title: str = "",
    xlabel: str = "x",
    ylabel: str = "y",
    highlight=None,
    points=None,
    curve_opacity: float = 0.25,
) -> str:
    """Thin ``curves`` (rows) over ``x``, an optional bold ``highlight`` curve and scatter ``points``."""
    x = np.asarray(x, float)
    C = np.atleast_2d(np.asarray(curves, float)) if len(curves) else np.empty((0, x.size))
    ys = [C.ravel()]
    if highlight is not None:
        ys.append(np.asarray(highlight, float))
    if points is not None:
        ys.append(np.asarray(points, float)[:, 1])
    allv = np.concatenate([v for v in ys if v.size]) if any(v.size for v in ys) else np.array([0.0, 1.0])
    allv = allv[np.isfinite(allv)]
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    pad = 0.05 * (hi - lo or 1.0)
    fr = _Frame((float(x.min()), float(x.max())), (lo - pad, hi + pad))
    body = _axes(fr, title, xlabel, ylabel)
    X = fr.px(x)
    for row in C:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X, fr.py(row)))
        body.append(f'<polyline class="member" points="{pts}" fill="none" stroke="{PALETTE[0]}" stroke-width="0.8" stroke-opacity="{curve_opacity}"/>')
    if highlight is not None:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X, fr.py(highlight)))
        body.append(f'<polyline class="mean" points="{pts}" fill="none" stroke="{PALETTE[1]}" stroke-width="2"/>')
    if points is not None:
        for px_, py_ in np.asarray(points, float):
            body.append(f'<circle class="data" cx="{_fmt(fr.px(px_))}" cy="{_fmt(fr.py(py_))}" r="4" fill="black"/>')
    return _document(body)


def bar_chart(groups: list[str], series: dict[str, list[float]], title: str = "", ylabel: str = "") -> str:
    """Grouped bars: one group per label, one bar per series key."""
    names = list(series)
    vals = np.array([series[n] for n in names], float).reshape(len(names), len(groups))
    finite = vals[np.isfinite(vals)]
    lo = min(0.0, float(finite.min())) if finite.size else 0.0
    hi = max(0.0, float(finite.max())) if finite.size else 1.0
    pad = 0.05 * (hi - lo or 1.0)
    fr = _Frame((0.0, float(len(groups))), (lo - (pad if lo < 0 else 0.0), hi + pad))
    body = _axes(fr, title, "", ylabel, xticks=False)
    gw = fr.pw / max(len(groups), 1)
    bw = 0.8 * gw / max(len(names), 1)
    zero = fr.py(0.0)
    for g, label in enumerate(groups):
        cx = MARGIN["left"] + (g + 0.5) * gw
        body.append(f'<text x="{_fmt(cx)}" y="{MARGIN["top"] + fr.ph + 16}" text-anchor="middle" font-size="10">{escape(label)}</text>')
        for s in range(len(names)):
            v = vals[s, g]
            if not np.isfinite(v):
                continue
            top = fr.py(v)
            x = MARGIN["left"] + g * gw + 0.1 * gw + s * bw
            body.append(
                f'<rect class="bar" x="{_fmt(x)}" y="{_fmt(min(top, zero))}" width="{_fmt(bw)}" '
                f'height="{_fmt(abs(zero - top))}" fill="{PALETTE[s % len(PALETTE)]}"/>'
            )
    for s, n in enumerate(names):
        y = MARGIN["top"] + 14 + 16 * s
        x = WIDTH - MARGIN["right"] - 110
        body.append(f'<rect x="{x}" y="{y - 9}" width="10" height="10" fill="{PALETTE[s % len(PALETTE)]}"/>')
        body.append(f'<text x="{x + 14}" y="{y}" font-size="11">{escape(n)}</text>')
    return _document(body)
