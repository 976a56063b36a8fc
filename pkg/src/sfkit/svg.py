"""Minimal static SVG output built from polylines and circles."""
from __future__ import annotations

from datetime import datetime, timezone

import numpy as np


def _fmt(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


class Canvas:
    def __init__(self, lo, hi, size: int = 400, margin: int = 10):
        self.lo = np.asarray(lo, dtype=float)
        span = np.asarray(hi, dtype=float) - self.lo
        self.scale = (size - 2 * margin) / max(float(span.max()), 1e-12)
        self.size, self.margin = size, margin
        self.items: list[str] = []

    def _xy(self, p) -> tuple[float, float]:
        x = self.margin + (p[0] - self.lo[0]) * self.scale
        y = self.size - self.margin - (p[1] - self.lo[1]) * self.scale
        return x, y

    def circles(self, points, r: float = 0.8, fill: str = "#1f4e79"):
        for p in np.asarray(points):
            x, y = self._xy(p)
            self.items.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{fill}"/>')

    def polyline(self, points, stroke: str = "#c0392b", closed: bool = True, width: float = 1.2):
        pts = np.asarray(points)
        if closed and len(pts):
            pts = np.vstack([pts, pts[:1]])
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in map(self._xy, pts))
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{_fmt(width)}"/>')

    def text(self, deterministic: bool = True) -> str:
        head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.size}" height="{self.size}" '
                f'viewBox="0 0 {self.size} {self.size}">']
        if not deterministic:
            head.append(f"<!-- generated {datetime.now(timezone.utc).isoformat(timespec='seconds')} -->")
        return "\n".join(head + self.items + ["</svg>"]) + "\n"


def point_panel(points, hull=None, lo=(-1.1, -1.1), hi=(1.1, 1.1), deterministic: bool = True) -> str:
    c = Canvas(lo, hi)
    c.circles(points)
    if hull is not None and len(hull) >= 2:
        c.polyline(hull)
    return c.text(deterministic)
