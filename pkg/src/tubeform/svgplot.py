"""Self-contained SVG plot emission (polylines, circles, axis ticks).

Plots are generated directly as SVG markup so reports need no external
renderer. Every emitted document is well-formed XML.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2",
]


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


@dataclass
class SvgFigure:
    """One x/y chart with data in plot coordinates."""

    title: str
    xlabel: str
    ylabel: str
    width: int = 720
    height: int = 480
    equal_aspect: bool = False
    margin: int = 60
    _elements: list[str] = field(default_factory=list)
    _legend: list[tuple[str, str]] = field(default_factory=list)
    _xlim: list[float] = field(default_factory=lambda: [math.inf, -math.inf])
    _ylim: list[float] = field(default_factory=lambda: [math.inf, -math.inf])
    _series: list = field(default_factory=list)

    def add_line(self, x, y, label: str | None = None, color: str | None = None,
                 dashed: bool = False):
        color = color or PALETTE[len(self._legend) % len(PALETTE)]
        self._series.append(("line", list(x), list(y), color, dashed))
        self._bump(x, y)
        if label:
            self._legend.append((label, color))

    def add_circle(self, cx: float, cy: float, radius: float, color: str = "#444444",
                   fill: str = "none", dashed: bool = False):
        self._series.append(("circle", cx, cy, radius, color, fill, dashed))
        self._bump([cx - radius, cx + radius], [cy - radius, cy + radius])

    def add_hline(self, y: float, color: str = "#000000", label: str | None = None):
        self._series.append(("hline", y, color))
        self._bump([], [y])
        if label:
            self._legend.append((label, color))

    def _bump(self, x, y):
        for v in x:
            if math.isfinite(v):
                self._xlim[0] = min(self._xlim[0], v)
                self._xlim[1] = max(self._xlim[1], v)
        for v in y:
            if math.isfinite(v):
                self._ylim[0] = min(self._ylim[0], v)
                self._ylim[1] = max(self._ylim[1], v)

    def _scales(self):
        x0, x1 = self._xlim if self._xlim[0] < self._xlim[1] else (0.0, 1.0)
        y0, y1 = self._ylim if self._ylim[0] < self._ylim[1] else (0.0, 1.0)
        padx = 0.05 * (x1 - x0) or 0.5
        pady = 0.05 * (y1 - y0) or 0.5
        x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
        if self.equal_aspect:
            spanx, spany = x1 - x0, y1 - y0
            per_px_x = spanx / (self.width - 2 * self.margin)
            per_px_y = spany / (self.height - 2 * self.margin)
            per = max(per_px_x, per_px_y)
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            x0 = cx - per * (self.width - 2 * self.margin) / 2
            x1 = cx + per * (self.width - 2 * self.margin) / 2
            y0 = cy - per * (self.height - 2 * self.margin) / 2
            y1 = cy + per * (self.height - 2 * self.margin) / 2
        sx = (self.width - 2 * self.margin) / (x1 - x0)
        sy = (self.height - 2 * self.margin) / (y1 - y0)
        return x0, x1, y0, y1, sx, sy

    def render(self) -> str:
        x0, x1, y0, y1, sx, sy = self._scales()

        def px(x):
            return self.margin + (x - x0) * sx

        def py(y):
            return self.height - self.margin - (y - y0) * sy

        parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<text x="{self.width / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{escape(self.title)}</text>',
        ]
        for tx in _ticks(x0, x1):
            parts.append(
                f'<line x1="{px(tx):.2f}" y1="{py(y0):.2f}" x2="{px(tx):.2f}" '
                f'y2="{py(y1):.2f}" stroke="#dddddd" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{px(tx):.2f}" y="{self.height - self.margin + 18:.2f}" '
                f'text-anchor="middle" font-family="sans-serif" font-size="11">{tx:g}</text>'
            )
        for ty in _ticks(y0, y1):
            parts.append(
                f'<line x1="{px(x0):.2f}" y1="{py(ty):.2f}" x2="{px(x1):.2f}" '
                f'y2="{py(ty):.2f}" stroke="#dddddd" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{self.margin - 8:.2f}" y="{py(ty) + 4:.2f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{ty:g}</text>'
            )
        parts.append(
            f'<rect x="{self.margin}" y="{self.margin}" '
            f'width="{self.width - 2 * self.margin}" height="{self.height - 2 * self.margin}" '
            f'fill="none" stroke="#333333"/>'
        )
        for item in self._series:
            if item[0] == "line":
                _, xs, ys, color, dashed = item
                pts = " ".join(
                    f"{px(x):.2f},{py(y):.2f}"
                    for x, y in zip(xs, ys)
                    if math.isfinite(x) and math.isfinite(y)
                )
                dash = ' stroke-dasharray="6,4"' if dashed else ""
                parts.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"{dash}/>'
                )
            elif item[0] == "circle":
                _, cx, cy, radius, color, fill, dashed = item
                dash = ' stroke-dasharray="5,4"' if dashed else ""
                parts.append(
                    f'<circle cx="{px(cx):.2f}" cy="{py(cy):.2f}" r="{radius * sx:.2f}" '
                    f'fill="{fill}" fill-opacity="0.25" stroke="{color}" '
                    f'stroke-width="1.5"{dash}/>'
                )
            elif item[0] == "hline":
                _, yv, color = item
                parts.append(
                    f'<line x1="{px(x0):.2f}" y1="{py(yv):.2f}" x2="{px(x1):.2f}" '
                    f'y2="{py(yv):.2f}" stroke="{color}" stroke-width="1.5" '
                    f'stroke-dasharray="2,3"/>'
                )
        parts.append(
            f'<text x="{self.width / 2:.1f}" y="{self.height - 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{escape(self.xlabel)}</text>'
        )
        parts.append(
            f'<text x="16" y="{self.height / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 16 {self.height / 2:.1f})">{escape(self.ylabel)}</text>'
        )
        ly = self.margin + 14
        for label, color in self._legend:
            parts.append(
                f'<line x1="{self.width - self.margin - 150}" y1="{ly - 4}" '
                f'x2="{self.width - self.margin - 126}" y2="{ly - 4}" '
                f'stroke="{color}" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{self.width - self.margin - 120}" y="{ly}" '
                f'font-family="sans-serif" font-size="11">{escape(label)}</text>'
            )
            ly += 16
        parts.append("</svg>")
        return "\n".join(parts)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.render() + "\n")
