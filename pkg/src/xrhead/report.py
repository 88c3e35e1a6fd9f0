"""Deterministic CSV and SVG emission, atomic file writes.

Numbers are formatted with repr (shortest round-trip) so equal runs produce
byte-identical files.  Wall-clock timings never go into CSV or SVG outputs;
they live in JSON reports under an explicit "timing" key.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile


def format_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(x) for x in row])
    return buf.getvalue()


def json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temp file and rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_atomic_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- tiny hand-rolled svg ------------------------------------------------------

_W, _H = 640, 400
_MARGIN = 56
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _axes(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_H / 2})">{ylabel}</text>',
        f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_W - _MARGIN}" y2="{_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_H - _MARGIN}" stroke="black"/>',
    ]


def _scale(vals: list[float]) -> tuple[float, float]:
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.06 * (hi - lo)
    return lo - pad, hi + pad


def svg_lines(
    xs: list[float],
    series: dict[str, list[float]],
    title: str,
    xlabel: str,
    ylabel: str,
) -> str:
    """Line chart with one polyline per labeled series."""
    xlo, xhi = _scale(xs)
    all_y = [y for ys in series.values() for y in ys]
    ylo, yhi = _scale(all_y)

    def px(x):
        return _MARGIN + (x - xlo) / (xhi - xlo) * (_W - 2 * _MARGIN)

    def py(y):
        return _H - _MARGIN - (y - ylo) / (yhi - ylo) * (_H - 2 * _MARGIN)

    parts = _axes(title, xlabel, ylabel)
    for x in xs:
        parts.append(
            f'<text x="{_fmt(px(x))}" y="{_H - _MARGIN + 16}" text-anchor="middle">{format_cell(x)}</text>'
        )
    for i, (label, ys) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{_W - _MARGIN + 4}" y="{_fmt(py(ys[-1]))}" fill="{color}">{label}</text>'
        )
    lo_label, hi_label = f"{ylo:.3f}", f"{yhi:.3f}"
    parts.append(f'<text x="{_MARGIN - 4}" y="{_H - _MARGIN}" text-anchor="end">{lo_label}</text>')
    parts.append(f'<text x="{_MARGIN - 4}" y="{_MARGIN + 4}" text-anchor="end">{hi_label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_histogram(counts, edges, title: str, xlabel: str) -> str:
    counts = list(counts)
    edges = list(edges)
    top = max(max(counts), 1)
    parts = _axes(title, xlabel, "count")
    n = len(counts)
    span = _W - 2 * _MARGIN
    for i, c in enumerate(counts):
        x0 = _MARGIN + span * i / n
        width = span / n - 2
        height = (_H - 2 * _MARGIN) * c / top
        y0 = _H - _MARGIN - height
        parts.append(
            f'<rect x="{_fmt(x0 + 1)}" y="{_fmt(y0)}" width="{_fmt(width)}" '
            f'height="{_fmt(height)}" fill="#1f77b4"/>'
        )
    parts.append(
        f'<text x="{_MARGIN}" y="{_H - _MARGIN + 16}" text-anchor="middle">{edges[0]:.3f}</text>'
    )
    parts.append(
        f'<text x="{_W - _MARGIN}" y="{_H - _MARGIN + 16}" text-anchor="middle">{edges[-1]:.3f}</text>'
    )
    parts.append(f'<text x="{_MARGIN - 4}" y="{_MARGIN + 4}" text-anchor="end">{top}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_scatter(points, groups, title: str) -> str:
    """points (n, 2), groups (n,) ints coloring the markers."""
    xs = [float(p[0]) for p in points]
    ys = [float(p[1]) for p in points]
    xlo, xhi = _scale(xs)
    ylo, yhi = _scale(ys)

    def px(x):
        return _MARGIN + (x - xlo) / (xhi - xlo) * (_W - 2 * _MARGIN)

    def py(y):
        return _H - _MARGIN - (y - ylo) / (yhi - ylo) * (_H - 2 * _MARGIN)

    parts = _axes(title, "dim 1", "dim 2")
    for (x, y), g in zip(zip(xs, ys), groups):
        color = _COLORS[int(g) % len(_COLORS)]
        parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="4" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_weight_grid(weights, title: str) -> str:
    """Attention weights (tokens, slots) as a grayscale grid, row per token."""
    rows = len(weights)
    cols = len(weights[0])
    cell_w = (_W - 2 * _MARGIN) / cols
    cell_h = (_H - 2 * _MARGIN) / rows
    parts = _axes(title, "slot (0 = background)", "token")
    for i, row in enumerate(weights):
        for j, v in enumerate(row):
            shade = int(round(255 * (1.0 - min(max(float(v), 0.0), 1.0))))
            parts.append(
                f'<rect x="{_fmt(_MARGIN + j * cell_w)}" y="{_fmt(_MARGIN + i * cell_h)}" '
                f'width="{_fmt(cell_w)}" height="{_fmt(cell_h)}" '
                f'fill="rgb({shade},{shade},{shade})" stroke="#ddd" stroke-width="0.5"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
