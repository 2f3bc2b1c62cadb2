"""Minimal deterministic SVG line plots for run artifacts.

Rendering is done by hand rather than through a plotting library so the
output bytes depend only on the data: same run, same SVG.  Each figure is a
fixed 800x600 canvas with linear or log10 axes, light grid lines, and an
inline legend.
"""

import math
from xml.sax.saxutils import escape

__all__ = ["render_line_plot"]

_W, _H = 800, 600
_ML, _MR, _MT, _MB = 72, 24, 44, 56
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#444444"]


def _nice_ticks(lo, hi, target=6):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(target, 2)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * mag
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt_tick(v):
    return "{:g}".format(v)


class _Axes:
    def __init__(self, xlo, xhi, ylo, yhi, logy):
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0
        pad = 0.04 * (yhi - ylo)
        self.xlo, self.xhi = xlo, xhi
        self.ylo, self.yhi = ylo - pad, yhi + pad
        self.logy = logy

    def px(self, x):
        return _ML + (x - self.xlo) / (self.xhi - self.xlo) * (_W - _ML - _MR)

    def py(self, y):
        return _H - _MB - (y - self.ylo) / (self.yhi - self.ylo) * (_H - _MT - _MB)


def render_line_plot(path, curves, title="", xlabel="", ylabel="", logy=False):
    """Write an SVG line plot.

    curves is a list of dicts with keys x (sequence), y (sequence), label
    (str), and optional dash (bool).  With logy=True the y values must be
    positive and the axis shows log10 ticks.
    """
    xs_all, ys_all = [], []
    prepared = []
    for curve in curves:
        pts = []
        for x, y in zip(curve["x"], curve["y"]):
            if not (math.isfinite(float(x)) and math.isfinite(float(y))):
                continue
            yy = float(y)
            if logy:
                if yy <= 0.0:
                    continue
                yy = math.log10(yy)
            pts.append((float(x), yy))
        if pts:
            xs_all.extend(p[0] for p in pts)
            ys_all.extend(p[1] for p in pts)
        prepared.append((curve, pts))
    if not xs_all:
        xs_all = [0.0, 1.0]
        ys_all = [0.0, 1.0]
    ax = _Axes(min(xs_all), max(xs_all), min(ys_all), max(ys_all), logy)

    parts = []
    parts.append(
        '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        'viewBox="0 0 {w} {h}" font-family="Helvetica, Arial, sans-serif">'.format(w=_W, h=_H)
    )
    parts.append('<rect width="{}" height="{}" fill="#ffffff"/>'.format(_W, _H))
    if title:
        parts.append(
            '<text x="{}" y="26" font-size="17" text-anchor="middle" fill="#222222">{}</text>'.format(
                _W // 2, escape(title)
            )
        )

    for tx in _nice_ticks(ax.xlo, ax.xhi):
        px = ax.px(tx)
        parts.append(
            '<line x1="{0:.2f}" y1="{1}" x2="{0:.2f}" y2="{2}" stroke="#dddddd" stroke-width="1"/>'.format(
                px, _MT, _H - _MB
            )
        )
        parts.append(
            '<text x="{:.2f}" y="{}" font-size="12" text-anchor="middle" fill="#444444">{}</text>'.format(
                px, _H - _MB + 18, escape(_fmt_tick(tx))
            )
        )
    for ty in _nice_ticks(ax.ylo, ax.yhi):
        py = ax.py(ty)
        label = "1e{:g}".format(ty) if logy else _fmt_tick(ty)
        parts.append(
            '<line x1="{0}" y1="{1:.2f}" x2="{2}" y2="{1:.2f}" stroke="#dddddd" stroke-width="1"/>'.format(
                _ML, py, _W - _MR
            )
        )
        parts.append(
            '<text x="{}" y="{:.2f}" font-size="12" text-anchor="end" fill="#444444">{}</text>'.format(
                _ML - 6, py + 4, escape(label)
            )
        )
    parts.append(
        '<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333" stroke-width="1"/>'.format(
            _ML, _MT, _W - _ML - _MR, _H - _MT - _MB
        )
    )
    if xlabel:
        parts.append(
            '<text x="{}" y="{}" font-size="13" text-anchor="middle" fill="#222222">{}</text>'.format(
                (_ML + _W - _MR) // 2, _H - 14, escape(xlabel)
            )
        )
    if ylabel:
        parts.append(
            '<text x="18" y="{}" font-size="13" text-anchor="middle" fill="#222222" '
            'transform="rotate(-90 18 {})">{}</text>'.format(
                (_MT + _H - _MB) // 2, (_MT + _H - _MB) // 2, escape(ylabel)
            )
        )

    legend_y = _MT + 16
    for i, (curve, pts) in enumerate(prepared):
        color = _PALETTE[i % len(_PALETTE)]
        dash = ' stroke-dasharray="6,4"' if curve.get("dash") else ""
        if pts:
            coords = " ".join("{:.2f},{:.2f}".format(ax.px(x), ax.py(y)) for x, y in pts)
            parts.append(
                '<polyline fill="none" stroke="{}" stroke-width="1.6"{} points="{}"/>'.format(
                    color, dash, coords
                )
            )
        label = curve.get("label", "")
        if label:
            parts.append(
                '<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{3}" stroke-width="2"{4}/>'.format(
                    _ML + 10, legend_y, _ML + 34, color, dash
                )
            )
            parts.append(
                '<text x="{}" y="{}" font-size="12" fill="#222222">{}</text>'.format(
                    _ML + 40, legend_y + 4, escape(label)
                )
            )
            legend_y += 18
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
