"""Standalone SVG line plots written as plain text.

Output depends only on the data: no timestamps, fixed number formatting,
so the same report always gives byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _nice_ticks(lo, hi, n=5):
    if not hi > lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int(math.floor((hi - start) / step + 1e-9)) + 1)]


def _fmt(v):
    return f"{v:.2f}"


def _tick_label(v, log):
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.4g}"


def svg_plot(title, series, xlabel="", ylabel="", logx=False, logy=False):
    """SVG text for line plots; ``series`` is a list of (label, xs, ys).

    Points that are non-finite (or non-positive on a log axis) are dropped.
    With no drawable points the axes and title are still emitted.
    """
    clean = []
    for label, xs, ys in series:
        x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        x, y = x[ok], y[ok]
        clean.append((label, np.log10(x) if logx else x, np.log10(y) if logy else y))
    allx = np.concatenate([c[1] for c in clean]) if clean else np.zeros(0)
    ally = np.concatenate([c[2] for c in clean]) if clean else np.zeros(0)
    if len(allx):
        x0, x1, y0, y1 = allx.min(), allx.max(), ally.min(), ally.max()
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def X(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    xt = [round(v) for v in _nice_ticks(x0, x1)] if logx else _nice_ticks(x0, x1)
    yt = [round(v) for v in _nice_ticks(y0, y1)] if logy else _nice_ticks(y0, y1)
    for v in dict.fromkeys(xt):
        if x0 <= v <= x1:
            out.append(f'<line x1="{_fmt(X(v))}" y1="{TOP + ph}" x2="{_fmt(X(v))}" y2="{TOP + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(X(v))}" y="{TOP + ph + 18}" text-anchor="middle">'
                       f'{_tick_label(v, logx)}</text>')
    for v in dict.fromkeys(yt):
        if y0 <= v <= y1:
            out.append(f'<line x1="{LEFT - 5}" y1="{_fmt(Y(v))}" x2="{LEFT}" y2="{_fmt(Y(v))}" stroke="black"/>')
            out.append(f'<text x="{LEFT - 8}" y="{_fmt(Y(v) + 4)}" text-anchor="end">{_tick_label(v, logy)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, x, y) in enumerate(clean):
        color = COLORS[i % len(COLORS)]
        if len(x):
            pts = " ".join(f"{_fmt(X(a))},{_fmt(Y(b))}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            out.extend(f'<circle cx="{_fmt(X(a))}" cy="{_fmt(Y(b))}" r="2.5" fill="{color}"/>' for a, b in zip(x, y))
        ly = TOP + 10 + 18 * i
        out.append(f'<line x1="{WIDTH - RIGHT + 12}" y1="{ly}" x2="{WIDTH - RIGHT + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 38}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _group(rows, key):
    groups = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return groups


def _col(rows, k):
    return [r[k] for r in rows]


def _figures(report):
    """(filename, title, series, xlabel, ylabel, logx, logy) per figure."""
    rows, c = report.rows, report.constants
    e = report.experiment
    if e == "w21-blowup":
        series = [(f"p={p:g} ratio {c.get(f'ratio p={p:g}', float('nan')):.3f}", _col(g, "k"), _col(g, "increment"))
                  for p, g in _group(rows, "p").items()]
        return [("increments.svg", "Dyadic l^p increments of |D^2 u|", series, "k", "increment", False, True)]
    if e == "bmo-failure":
        series = [("d12 u", _col(rows, "k"), _col(rows, "oscillation")),
                  ("d12 (x1 x2)", _col(rows, "k"), _col(rows, "contrast_oscillation"))]
        return [("oscillation.svg", "Mean oscillation on B(0, 2^-k)", series, "k", "oscillation", False, False)]
    if e == "improve-regularity":
        series = [(name, _col(g, "h"), _col(g, "ratio")) for name, g in _group(rows, "family").items()]
        return [("ratios.svg", "W2q(K) / (W21 + lp) per mesh", series, "h", "ratio", True, True)]
    if e == "cz-constant":
        series = [(name, _col(g, "h"), _col(g, "C_max")) for name, g in _group(rows, "field").items()]
        return [("cz.svg", "Empirical CZ constant per mesh", series, "h", "C", True, False)]
    if e == "adjoint-continuity":
        series = [(f"center {i}", _col(g, "r"), _col(g, "oscillation")) for i, g in _group(rows, "center").items()]
        ind = report.tables.get("induction", [])
        return [("continuity.svg", "Mean oscillation around a(center)", series, "r", "oscillation", True, True),
                ("induction.svg", "Induction ratios ||W_k|| / omega",
                 [("ratio_W", _col(ind, "k"), _col(ind, "ratio_W"))], "k", "ratio", False, True)]
    if e == "modulus-check":
        series = [(r["modulus"], [0, 1], [r["total"], r["total"]]) for r in rows if r["dini"] == "convergent"]
        return [("moduli.svg", "Dini integral totals (convergent moduli)", series, "", "total", False, False)]
    return [("report.svg", e, [], "", "", False, False)]


def emit_plots(report, out_dir):
    """Write the report's figures to ``out_dir``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, title, series, xl, yl, lx, ly in _figures(report):
        path = out / name
        path.write_text(svg_plot(title, series, xl, yl, lx, ly))
        paths.append(path)
    return paths
