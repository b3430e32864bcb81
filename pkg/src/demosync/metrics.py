"""Report records and plot emission (CSV and SVG).

SVGs are written by hand so that curve coordinates are deterministic text;
tests compare path coordinates rather than rendered pixels.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IoError
from .geometry import Trajectory1D
from .latency import zscore_normalize


@dataclass
class ErrorStats:
    pos_mean_mm: tuple[float, float, float]
    pos_max_mm: tuple[float, float, float]
    rot_mean_deg: float
    rot_max_deg: float
    width_rms_mm: float
    latency_residual_ms: float
    n_frames: int = 0

    def row(self) -> dict[str, float]:
        out = {}
        for i, ax in enumerate("xyz"):
            out[f"pos_mean_{ax}_mm"] = self.pos_mean_mm[i]
        for i, ax in enumerate("xyz"):
            out[f"pos_max_{ax}_mm"] = self.pos_max_mm[i]
        out.update(
            rot_mean_deg=self.rot_mean_deg,
            rot_max_deg=self.rot_max_deg,
            width_rms_mm=self.width_rms_mm,
            latency_residual_ms=self.latency_residual_ms,
            n_frames=self.n_frames,
        )
        return out

    def to_csv(self) -> str:
        return rows_to_csv([self.row()])


@dataclass
class UsabilityStats:
    sessions_total: int
    sessions_usable: int
    outcomes: list = field(default_factory=list)
    frames_dropped: int = 0
    active_tactile_fraction: float = 0.0

    @property
    def usable_fraction(self) -> float:
        return self.sessions_usable / self.sessions_total if self.sessions_total else 0.0

    @classmethod
    def from_outcomes(cls, outcomes) -> "UsabilityStats":
        usable = [o for o in outcomes if o.usable]
        tactile = sum(o.frames_tactile for o in usable)
        active = sum(o.frames_active for o in usable)
        return cls(
            sessions_total=len(outcomes),
            sessions_usable=len(usable),
            outcomes=list(outcomes),
            frames_dropped=sum(o.frames_dropped for o in usable),
            active_tactile_fraction=active / tactile if tactile else 0.0,
        )

    def reasons(self) -> dict[str, str]:
        return {o.name: o.reason for o in self.outcomes}

    def to_csv(self) -> str:
        rows = []
        for o in self.outcomes:
            rows.append(
                {
                    "session": o.name,
                    "usable": int(o.usable),
                    "reason": o.reason,
                    "frames_video": o.frames_video,
                    "frames_episode": o.frames_episode,
                    "frames_dropped": o.frames_dropped,
                    "active_tactile_fraction": (o.frames_active / o.frames_tactile) if o.frames_tactile else 0.0,
                    "warnings": o.warnings,
                }
            )
        rows.append(
            {
                "session": "TOTAL",
                "usable": self.sessions_usable,
                "reason": f"usable_fraction={self.usable_fraction:.6g}",
                "frames_video": sum(o.frames_video for o in self.outcomes),
                "frames_episode": sum(o.frames_episode for o in self.outcomes),
                "frames_dropped": self.frames_dropped,
                "active_tactile_fraction": self.active_tactile_fraction,
                "warnings": "",
            }
        )
        return rows_to_csv(rows)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------- svg

PANEL_W = 480
PANEL_H = 240
MARGIN = 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def _path_d(xs: np.ndarray, ys: np.ndarray) -> str:
    pts = [f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys)]
    return "M" + " L".join(pts)


class _Panel:
    def __init__(self, x0: float, y0: float, xlim, ylim, title: str, xlabel: str, ylabel: str):
        self.x0, self.y0 = x0, y0
        self.xlim, self.ylim = xlim, ylim
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.curves: list[tuple[str, str, str]] = []

    def px(self, t: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        (a, b), (c, d) = self.xlim, self.ylim
        sx = (PANEL_W - 2 * MARGIN) / (b - a if b > a else 1.0)
        sy = (PANEL_H - 2 * MARGIN) / (d - c if d > c else 1.0)
        return MARGIN + (t - a) * sx, PANEL_H - MARGIN - (v - c) * sy

    def add(self, label: str, t, v, color: str) -> None:
        x, y = self.px(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
        self.curves.append((label, color, _path_d(x, y)))

    def svg(self) -> str:
        w, h = PANEL_W, PANEL_H
        out = [f'<g class="panel" transform="translate({self.x0},{self.y0})">']
        out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{w - 2 * MARGIN}" height="{h - 2 * MARGIN}" fill="none" stroke="#888"/>')
        out.append(f'<text x="{w / 2}" y="20" text-anchor="middle" font-size="13">{self.title}</text>')
        out.append(f'<text x="{w / 2}" y="{h - 8}" text-anchor="middle" font-size="11">{self.xlabel}</text>')
        out.append(f'<text x="12" y="{h / 2}" font-size="11" transform="rotate(-90 12 {h / 2})" text-anchor="middle">{self.ylabel}</text>')
        (a, b), (c, d) = self.xlim, self.ylim
        out.append(f'<text x="{MARGIN}" y="{h - MARGIN + 14}" font-size="9">{a:.2f}</text>')
        out.append(f'<text x="{w - MARGIN}" y="{h - MARGIN + 14}" font-size="9" text-anchor="end">{b:.2f}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{h - MARGIN}" font-size="9" text-anchor="end">{c:.2f}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{MARGIN + 8}" font-size="9" text-anchor="end">{d:.2f}</text>')
        for i, (label, color, d_attr) in enumerate(self.curves):
            out.append(f'<path class="curve" data-label="{label}" d="{d_attr}" fill="none" stroke="{color}" stroke-width="1.2"/>')
            out.append(f'<text x="{w - MARGIN - 4}" y="{MARGIN + 14 + 12 * i}" font-size="10" text-anchor="end" fill="{color}">{label}</text>')
        out.append("</g>")
        return "\n".join(out)


def _write_svg(path, panels: list[_Panel], width: int, height: int) -> None:
    body = "\n".join(p.svg() for p in panels)
    text = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n{body}\n</svg>\n'
    )
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None


def emit_alignment_plot(f: Trajectory1D, g: Trajectory1D, delta: float, path: str | os.PathLike) -> None:
    """Two panels: raw overlay, and overlay with g moved back by ``delta``
    (so that f(t) and g(t + delta) line up)."""
    if len(f) < 2 or len(g) < 2:
        raise IoError(f"{path}: refusing to plot a trajectory with fewer than 2 samples")
    fn = zscore_normalize(f)
    gn = zscore_normalize(g)
    g_shift = Trajectory1D(gn.times - delta, gn.values)
    panels = []
    for i, (title, gg) in enumerate((("before alignment", gn), (f"after alignment (delta = {delta * 1e3:.2f} ms)", g_shift))):
        t_lo = min(fn.times[0], gg.times[0])
        t_hi = max(fn.times[-1], gg.times[-1])
        v_lo = min(fn.values.min(), gg.values.min())
        v_hi = max(fn.values.max(), gg.values.max())
        p = _Panel(i * PANEL_W, 0, (t_lo, t_hi), (v_lo, v_hi), title, "time (s)", "normalized")
        p.add("f", fn.times, fn.values, COLORS[0])
        p.add("g", gg.times, gg.values, COLORS[1])
        panels.append(p)
    _write_svg(path, panels, 2 * PANEL_W, PANEL_H)


def emit_error_plot(times, estimate_mm, truth_mm, path: str | os.PathLike) -> None:
    """Per-axis estimated vs true position, one panel per axis."""
    times = np.asarray(times, dtype=float)
    est = np.asarray(estimate_mm, dtype=float)
    tru = np.asarray(truth_mm, dtype=float)
    if times.size < 2:
        raise IoError(f"{path}: refusing to plot fewer than 2 frames")
    panels = []
    for i, ax in enumerate("xyz"):
        lo = min(est[:, i].min(), tru[:, i].min())
        hi = max(est[:, i].max(), tru[:, i].max())
        p = _Panel(i * PANEL_W, 0, (times[0], times[-1]), (lo, hi), f"{ax} axis", "time (s)", "position (mm)")
        p.add("truth", times, tru[:, i], COLORS[0])
        p.add("estimate", times, est[:, i], COLORS[1])
        panels.append(p)
    _write_svg(path, panels, 3 * PANEL_W, PANEL_H)


def svg_paths(path) -> list[list[tuple[float, float]]]:
    """Curve coordinates from an SVG written here, in document order."""
    import re

    text = Path(path).read_text()
    out = []
    for d in re.findall(r'<path class="curve"[^>]* d="([^"]*)"', text):
        pts = [tuple(float(v) for v in tok.split(",")) for tok in d[1:].split(" L")]
        out.append(pts)
    return out
