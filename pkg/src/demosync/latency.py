"""Latency calibration by bisection-refined MSE alignment.

Two 1-D tracks of the same motion (MoCap x-position in meters, marker
u-coordinate in pixels) are z-score normalised, then the offset ``delta``
minimising ``mean_i (f(t_i) - g(t_i + delta))**2`` is found by repeatedly
gridding the search interval and shrinking it around the best grid point.

Sign convention: ``f(t) ~= g(t + delta)``, i.e. ``g`` lags ``f`` by
``delta``.  Shifting ``f``'s source timestamps by ``+delta`` moves them onto
``g``'s clock, which is what :func:`apply_latency` does for the pose stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateSignal, EmptyTrack, NoValidOffset
from .geometry import PoseSample, Trajectory1D

AXES = {"x": 0, "y": 1, "z": 2}
DEFAULT_EPSILON = 1e-4


@dataclass(frozen=True)
class LatencyConfig:
    epsilon: float = DEFAULT_EPSILON
    splits_M: int = 100
    window_N: int = 2
    delta_min: float = -0.5
    delta_max: float = 0.5
    min_overlap_fraction: float = 0.5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.window_N < 1 or self.splits_M < 2 * self.window_N + 2:
            raise ValueError("need window_N >= 1 and splits_M >= 2*window_N + 2")
        if not self.delta_min < self.delta_max:
            raise ValueError("delta_min must be below delta_max")
        if not 0.0 < self.min_overlap_fraction <= 1.0:
            raise ValueError("min_overlap_fraction must be in (0, 1]")

    def max_passes(self) -> int:
        shrink = self.splits_M / (2 * self.window_N)
        span = (self.delta_max - self.delta_min) / self.epsilon
        return math.ceil(math.log(span, shrink)) + 1 if span > 1 else 1


@dataclass(frozen=True)
class LatencyEstimate:
    delta_star: float
    residual_mse: float
    overlap_fraction: float
    passes: int
    final_width: float = 0.0
    flipped: bool = False

    def to_record(self) -> str:
        """Single-line ``key=value`` record (floats at 17 significant digits)."""
        return (
            f"delta_star={self.delta_star:.17g} residual_mse={self.residual_mse:.17g} "
            f"overlap_fraction={self.overlap_fraction:.17g} passes={self.passes} "
            f"final_width={self.final_width:.17g} flipped={int(self.flipped)}"
        )

    @classmethod
    def from_record(cls, line: str) -> "LatencyEstimate":
        fields = dict(tok.split("=", 1) for tok in line.split())
        try:
            return cls(
                delta_star=float(fields["delta_star"]),
                residual_mse=float(fields.get("residual_mse", "0")),
                overlap_fraction=float(fields.get("overlap_fraction", "1")),
                passes=int(fields.get("passes", "0")),
                final_width=float(fields.get("final_width", "0")),
                flipped=fields.get("flipped", "0") in ("1", "true", "True"),
            )
        except KeyError as exc:
            raise ValueError(f"latency record missing {exc}") from None


def extract_axis(track: Sequence[PoseSample], axis: Literal["x", "y", "z"] = "x") -> Trajectory1D:
    if len(track) == 0:
        raise EmptyTrack("pose track is empty")
    k = AXES[axis]
    return Trajectory1D([s.t for s in track], [s.pose.position[k] for s in track])


def zscore_normalize(traj: Trajectory1D) -> Trajectory1D:
    v = traj.values
    if v.size < 2:
        raise DegenerateSignal(f"need >= 2 samples, got {v.size}")
    mean = v.mean()
    var = v.var(ddof=1)
    if not var >= 1e-12:
        raise DegenerateSignal(f"variance {var:.3g} below 1e-12")
    return Trajectory1D(traj.times, (v - mean) / math.sqrt(var))


def mse_curve(
    f: Trajectory1D,
    g: Trajectory1D,
    deltas: np.ndarray,
    min_overlap_fraction: float,
) -> tuple[np.ndarray, np.ndarray]:
    """MSE and overlap fraction of ``f(t_i)`` vs ``g(t_i + delta)`` per delta.

    Samples whose shifted time leaves g's span are dropped; a delta keeping
    fewer than ``min_overlap_fraction`` of f's samples scores +inf.
    """
    ti = f.times
    fv = f.values
    g0, g1 = g.span()
    q = ti[None, :] + np.asarray(deltas, dtype=float)[:, None]
    valid = (q >= g0) & (q <= g1)
    gv = np.interp(q, g.times, g.values)
    sq = np.where(valid, (fv[None, :] - gv) ** 2, 0.0)
    n = valid.sum(axis=1)
    frac = n / ti.size
    with np.errstate(invalid="ignore", divide="ignore"):
        mse = sq.sum(axis=1) / n
    mse[frac < min_overlap_fraction] = np.inf
    return mse, frac


def _search(f: Trajectory1D, g: Trajectory1D, cfg: LatencyConfig) -> LatencyEstimate:
    lo, hi = cfg.delta_min, cfg.delta_max
    M, N = cfg.splits_M, cfg.window_N
    best: tuple[float, float, float] | None = None
    passes = 0
    while True:
        grid = np.linspace(lo, hi, M + 1)
        mse, frac = mse_curve(f, g, grid, cfg.min_overlap_fraction)
        passes += 1
        if not np.isfinite(mse).any():
            if best is None:
                raise NoValidOffset(
                    f"no offset in [{cfg.delta_min}, {cfg.delta_max}] keeps "
                    f"{cfg.min_overlap_fraction:.0%} overlap"
                )
            break
        k = int(np.argmin(mse))  # first minimum on ties, so the result is order-stable
        best = (float(grid[k]), float(mse[k]), float(frac[k]))
        lo, hi = float(grid[max(k - N, 0)]), float(grid[min(k + N, M)])
        if hi - lo < cfg.epsilon:
            break
    delta, res, frac_k = best
    return LatencyEstimate(delta, res, frac_k, passes, hi - lo)


def estimate_latency(
    f: Trajectory1D,
    g: Trajectory1D,
    cfg: LatencyConfig = LatencyConfig(),
    allow_flip: bool = False,
) -> LatencyEstimate:
    """Offset ``delta`` with ``f(t) ~= g(t + delta)``.

    Both inputs are z-score normalised first, so units and gain do not
    matter.  ``f``'s timestamps form the evaluation grid; ``g`` is read by
    linear interpolation.  With ``allow_flip`` the mirrored track ``-g`` is
    searched too and the lower residual wins (``flipped`` reports which).
    """
    fn = zscore_normalize(f)
    gn = zscore_normalize(g)
    est = _search(fn, gn, cfg)
    if allow_flip:
        alt = _search(fn, Trajectory1D(gn.times, -gn.values), cfg)
        if alt.residual_mse < est.residual_mse:
            est = replace(alt, flipped=True)
    return est


def apply_latency(track: Sequence[PoseSample], delta: float) -> list[PoseSample]:
    return [PoseSample(s.t + delta, s.pose) for s in track]

