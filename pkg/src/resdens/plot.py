"""Minimal SVG line chart of the training curves, no plotting library needed."""
from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=60, right=60, top=30, bottom=50)
SERIES = (
    ("train_loss", "#1f77b4", "loss"),
    ("val_loss", "#ff7f0e", "loss"),
    ("train_acc", "#2ca02c", "acc"),
    ("val_acc", "#d62728", "acc"),
)


def _read(csv_path) -> tuple[list[float], dict[str, list[float | None]]]:
    its, cols = [], {name: [] for name, _, _ in SERIES}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            its.append(float(row["iteration"]))
            for name in cols:
                cols[name].append(float(row[name]) if row[name] not in ("", None) else None)
    return its, cols


def render_svg(iterations, columns) -> str:
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    xmax = max(iterations, default=1.0) or 1.0
    losses = [v for n in ("train_loss", "val_loss") for v in columns.get(n, []) if v is not None]
    lmax = max(losses, default=1.0) or 1.0

    def sx(i):
        return x0 + (x1 - x0) * i / xmax

    def sy(v, axis):
        top = lmax if axis == "loss" else 1.0
        return y0 - (y0 - y1) * v / top

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x1}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="14">iteration</text>',
        f'<text x="{x0 - 8}" y="{y1 + 4}" text-anchor="end" font-size="12">{lmax:.3g}</text>',
        f'<text x="{x0 - 8}" y="{y0}" text-anchor="end" font-size="12">0</text>',
        f'<text x="{x1 + 8}" y="{y1 + 4}" font-size="12">1.0</text>',
        f'<text x="{x1 + 8}" y="{y0}" font-size="12">0</text>',
        f'<text x="{x1}" y="{y0 + 18}" text-anchor="end" font-size="12">{xmax:g}</text>',
        f'<text x="20" y="{(y0 + y1) / 2}" font-size="14" transform="rotate(-90 20 {(y0 + y1) / 2})" text-anchor="middle">loss</text>',
        f'<text x="{WIDTH - 20}" y="{(y0 + y1) / 2}" font-size="14" transform="rotate(90 {WIDTH - 20} {(y0 + y1) / 2})" text-anchor="middle">accuracy</text>',
    ]
    for k, (name, color, axis) in enumerate(SERIES):
        pts = [f"{sx(i):.2f},{sy(v, axis):.2f}" for i, v in zip(iterations, columns.get(name, [])) if v is not None]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = y1 + 5 + 18 * k
        out.append(f'<line x1="{x1 - 150}" y1="{ly}" x2="{x1 - 125}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x1 - 118}" y="{ly + 4}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_metrics(csv_path, svg_path=None) -> Path:
    csv_path = Path(csv_path)
    svg_path = Path(svg_path) if svg_path else csv_path.with_suffix(".svg")
    its, cols = _read(csv_path)
    svg_path.write_text(render_svg(its, cols), encoding="utf-8")
    return svg_path
