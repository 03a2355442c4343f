"""Minimal standalone SVG line plots.

Keeps the toolkit free of plotting dependencies: every figure is also
emitted as raw two-column .dat files, so these SVGs are a convenience
rendering, not the data of record.
"""

from __future__ import annotations

import math

_WIDTH, _HEIGHT = 640, 420
_MARGIN = 60
_COLORS = ("#1f3b73", "#c0392b", "#1e8449", "#7d3c98", "#b7950b", "#2e86c1")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def plot_lines(
    path,
    curves: list[tuple[str, list[float], list[float]]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    log_x: bool = False,
    log_y: bool = False,
) -> None:
    """Write an SVG with one polyline per (label, xs, ys) curve."""
    pts = []
    for _, xs, ys in curves:
        for x, y in zip(xs, ys):
            if log_x and x <= 0 or log_y and y <= 0:
                continue
            if math.isfinite(x) and math.isfinite(y):
                pts.append((math.log10(x) if log_x else x, math.log10(y) if log_y else y))
    if not pts:
        raise ValueError("nothing to plot")
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return _MARGIN + (x - x_lo) / (x_hi - x_lo) * (_WIDTH - 2 * _MARGIN)

    def sy(y):
        return _HEIGHT - _MARGIN - (y - y_lo) / (y_hi - y_lo) * (_HEIGHT - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="{_MARGIN / 2}" text-anchor="middle" '
            f'font-size="15">{title}</text>'
        )
    for tx in _ticks(x_lo, x_hi):
        label = _fmt(10 ** tx) if log_x else _fmt(tx)
        parts.append(
            f'<text x="{sx(tx):.1f}" y="{_HEIGHT - _MARGIN + 18}" text-anchor="middle" '
            f'font-size="11">{label}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        label = _fmt(10 ** ty) if log_y else _fmt(ty)
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{sy(ty):.1f}" text-anchor="end" '
            f'font-size="11">{label}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 12}" text-anchor="middle" '
            f'font-size="13">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="16" y="{_HEIGHT / 2}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 16 {_HEIGHT / 2})">{y_label}</text>'
        )
    for c, (label, xs, ys) in enumerate(curves):
        coords = []
        for x, y in zip(xs, ys):
            if log_x and x <= 0 or log_y and y <= 0:
                continue
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            px = sx(math.log10(x) if log_x else x)
            py = sy(math.log10(y) if log_y else y)
            coords.append(f"{px:.2f},{py:.2f}")
        color = _COLORS[c % len(_COLORS)]
        if coords:
            parts.append(
                f'<polyline points="{" ".join(coords)}" fill="none" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
        parts.append(
            f'<text x="{_WIDTH - _MARGIN + 4}" y="{_MARGIN + 16 * (c + 1)}" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def write_dat(path, xs, ys) -> None:
    """Two-column whitespace-separated plot data."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{float(x)!r} {float(y)!r}\n")
