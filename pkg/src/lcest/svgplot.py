"""Minimal deterministic SVG line plots.

Hand-rolled on purpose: the output must be byte-identical across reruns, so
every coordinate is formatted with a fixed precision and nothing (ids, fonts,
library versions, timestamps) leaks into the file.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

WIDTH = 720
HEIGHT = 480
MARGIN_L = 72
MARGIN_R = 24
MARGIN_T = 28
MARGIN_B = 56
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_line_plot(
    series: Sequence[Tuple[str, Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    hline: Optional[float] = None,
    hline_label: str = "",
) -> str:
    """Render labelled (x, y) polylines into a standalone SVG string."""
    if not series:
        raise ValueError("no series to plot")
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("series contain no points")
    if hline is not None:
        ys_all = ys_all + [hline]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    x_pad = 0.05 * (x_hi - x_lo)
    y_pad = 0.08 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts: List[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    parts.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
    # axes box
    parts.append(
        f'<rect x="{_fmt(MARGIN_L)}" y="{_fmt(MARGIN_T)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )
    # ticks and grid
    for xt in _ticks(x_lo + x_pad, x_hi - x_pad):
        px = sx(xt)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(MARGIN_T + plot_h)}" x2="{_fmt(px)}" '
            f'y2="{_fmt(MARGIN_T + plot_h + 6)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{_fmt(MARGIN_T + plot_h + 22)}" font-family="sans-serif" '
            f'font-size="12" text-anchor="middle" fill="#333333">{xt:.4g}</text>'
        )
    for yt in _ticks(y_lo + y_pad, y_hi - y_pad):
        py = sy(yt)
        parts.append(
            f'<line x1="{_fmt(MARGIN_L - 6)}" y1="{_fmt(py)}" x2="{_fmt(MARGIN_L)}" '
            f'y2="{_fmt(py)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(MARGIN_L - 10)}" y="{_fmt(py + 4)}" font-family="sans-serif" '
            f'font-size="12" text-anchor="end" fill="#333333">{yt:.4g}</text>'
        )
    if hline is not None:
        py = sy(hline)
        parts.append(
            f'<line x1="{_fmt(MARGIN_L)}" y1="{_fmt(py)}" x2="{_fmt(MARGIN_L + plot_w)}" '
            f'y2="{_fmt(py)}" stroke="#888888" stroke-width="1" stroke-dasharray="6,4"/>'
        )
        if hline_label:
            parts.append(
                f'<text x="{_fmt(MARGIN_L + plot_w - 6)}" y="{_fmt(py - 6)}" '
                f'font-family="sans-serif" font-size="12" text-anchor="end" '
                f'fill="#888888">{_escape(hline_label)}</text>'
            )
    for idx, (label, xs, ys) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in zip(xs, ys):
            parts.append(
                f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" fill="{color}"/>'
            )
        # legend entry
        ly = MARGIN_T + 16 + 18 * idx
        lx = MARGIN_L + plot_w - 150
        parts.append(
            f'<line x1="{_fmt(lx)}" y1="{_fmt(ly - 4)}" x2="{_fmt(lx + 24)}" '
            f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 30)}" y="{_fmt(ly)}" font-family="sans-serif" '
            f'font-size="12" fill="#333333">{_escape(label)}</text>'
        )
    if title:
        parts.append(
            f'<text x="{_fmt(WIDTH / 2)}" y="18" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle" fill="#111111">{_escape(title)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{_fmt(MARGIN_L + plot_w / 2)}" y="{_fmt(HEIGHT - 14)}" '
            f'font-family="sans-serif" font-size="13" text-anchor="middle" '
            f'fill="#333333">{_escape(xlabel)}</text>'
        )
    if ylabel:
        cy = MARGIN_T + plot_h / 2
        parts.append(
            f'<text x="18" y="{_fmt(cy)}" font-family="sans-serif" font-size="13" '
            f'text-anchor="middle" fill="#333333" '
            f'transform="rotate(-90 18 {_fmt(cy)})">{_escape(ylabel)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
