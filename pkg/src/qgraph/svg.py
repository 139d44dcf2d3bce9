"""Static SVG rendering of bifurcation diagrams and solution profiles.

Output is a plain string built with fixed number formatting and a fixed
element order, so identical input gives byte-identical documents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#17becf", "#7f7f7f", "#bcbd22")
MARKERS = {"fold": "#000000", "branch_point": "#d62728", "pitchfork": "#d62728",
           "transcritical": "#2ca02c", "saddle-node": "#000000"}


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    # (x, y, tag) event markers
    markers: tuple[tuple[float, float, str], ...] = ()


@dataclass(frozen=True)
class Style:
    width: int = 640
    height: int = 440
    margin: int = 56
    xlabel: str = "Λ"
    ylabel: str = "Q"
    title: str = ""
    stroke: float = 1.5
    ticks: int = 5


def series_from_branch(branch, label: str | None = None) -> Series:
    """Series from a continuation Branch (or anything with lams, Qs, events)."""
    markers = []
    for e in getattr(branch, "events", ()):
        tag = sorted(e.tags)[0] if e.tags else "event"
        markers.append((float(e.lam), float(e.Q), tag))
    return Series(label if label is not None else getattr(branch, "origin", ""),
                  tuple(float(v) for v in branch.lams), tuple(float(v) for v in branch.Qs),
                  tuple(markers))


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, count: int) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(count, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    for i in range(4 * count + 4):
        v = start + i * step
        if v > hi + 1e-9 * step:
            break
        out.append(0.0 if abs(v) < 1e-12 * step else v)
    return out


def _bounds(series):
    xs = np.concatenate([np.asarray(s.x, float) for s in series] +
                        [np.array([m[0] for m in s.markers], float) for s in series])
    ys = np.concatenate([np.asarray(s.y, float) for s in series] +
                        [np.array([m[1] for m in s.markers], float) for s in series])
    xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    # ranges below float resolution are treated as flat
    if x1 - x0 <= 1e-9 * max(1.0, abs(x0), abs(x1)):
        x0, x1 = x0 - 1, x1 + 1
    if y1 - y0 <= 1e-9 * max(1.0, abs(y0), abs(y1)):
        y0, y1 = y0 - 1, y1 + 1
    px, py = 0.03 * (x1 - x0), 0.05 * (y1 - y0)
    return x0 - px, x1 + px, y0 - py, y1 + py


def render_diagram(series, style: Style | None = None) -> str:
    """SVG line plot of one or more Series with event markers."""
    series = [s if isinstance(s, Series) else series_from_branch(s) for s in series]
    if not series:
        raise ValueError("nothing to render")
    st = style or Style()
    W, H, m = st.width, st.height, st.margin
    x0, x1, y0, y1 = _bounds(series)
    sx = lambda x: m + (x - x0) / (x1 - x0) * (W - 2 * m)
    sy = lambda y: H - m - (y - y0) / (y1 - y0) * (H - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
           f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="#000000"/>']
    for t in _nice_ticks(x0, x1, st.ticks):
        X = _fmt(sx(t))
        out.append(f'<line x1="{X}" y1="{H - m}" x2="{X}" y2="{H - m + 4}" stroke="#000000"/>')
        out.append(f'<text x="{X}" y="{H - m + 16}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1, st.ticks):
        Y = _fmt(sy(t))
        out.append(f'<line x1="{m - 4}" y1="{Y}" x2="{m}" y2="{Y}" stroke="#000000"/>')
        out.append(f'<text x="{m - 6}" y="{Y}" text-anchor="end" dominant-baseline="middle">{t:g}</text>')
    out.append(f'<text x="{W / 2:.0f}" y="{H - 14}" text-anchor="middle">{escape(st.xlabel)}</text>')
    out.append(f'<text x="16" y="{H / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {H / 2:.0f})">{escape(st.ylabel)}</text>')
    if st.title:
        out.append(f'<text x="{W / 2:.0f}" y="{m / 2:.0f}" text-anchor="middle">{escape(st.title)}</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(sx(x), sy(y)) for x, y in zip(s.x, s.y) if math.isfinite(x) and math.isfinite(y)]
        if len(pts) == 1:
            out.append(f'<circle cx="{_fmt(pts[0][0])}" cy="{_fmt(pts[0][1])}" r="2" fill="{color}"/>')
        elif pts:
            path = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{st.stroke}" '
                       f'points="{path}"><title>{escape(s.label)}</title></polyline>')
    for s in series:
        for x, y, tag in s.markers:
            c = MARKERS.get(tag, "#000000")
            out.append(f'<circle class="event" cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="4" '
                       f'fill="none" stroke="{c}" stroke-width="1.5"><title>{escape(tag)}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_profile(phi, title: str = "") -> str:
    """One panel per edge of a GraphFunction, values against the edge coordinate.

    Panels are scaled independently.
    """
    n = len(phi.values)
    series = []
    panels = []
    for j, e in enumerate(phi.graph.edges):
        name = e.name or f"e{j + 1}"
        series.append(Series(name, tuple(map(float, phi.grid(j))), tuple(map(float, phi.values[j]))))
    W, H = 240 * n, 260
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{W / 2:.0f}" y="14" text-anchor="middle">{escape(title)}</text>')
    for j, s in enumerate(series):
        inner = render_diagram([s], Style(width=240, height=240, margin=40, xlabel="x", ylabel="φ",
                                          title=s.label))
        body = inner.split("\n")[1:-2]
        panels.append(f'<g transform="translate({240 * j},20)">')
        panels.extend(body)
        panels.append("</g>")
    out.extend(panels)
    out.append("</svg>")
    return "\n".join(out) + "\n"
