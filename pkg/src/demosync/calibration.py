"""Gripper-width and controller-mount calibrations.

The gripper jaw is read through a 12-bit magnetic encoder (4096 counts per
revolution).  A one-time sweep at 1 cm jaw steps gives (count, width) knots;
runtime readings are unwrapped across the 4095 -> 0 seam and linearly
interpolated between knots.

The controller calibration is a single recorded pose taken with the device
held at the AR base frame; its inverse, composed on the right of every raw
pose, removes the constant controller mount offset.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationFormatError, NonMonotonic
from .geometry import Pose6D, RigidTransform, compose, invert

COUNTS_PER_REV = 4096
HALF_REV = COUNTS_PER_REV // 2
EXTRAPOLATION_MARGIN = 0.005  # meters beyond the end knots
MAX_WIDTH = 0.2
FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncoderReading:
    raw: int

    def __post_init__(self):
        if not (0 <= int(self.raw) < COUNTS_PER_REV):
            raise ValueError(f"encoder count {self.raw} outside [0, {COUNTS_PER_REV})")


def _wrap_delta(d):
    # minimal signed representative of d modulo 4096, in [-2048, 2048)
    return (d + HALF_REV) % COUNTS_PER_REV - HALF_REV


def unwrap_counts(readings: Sequence[EncoderReading | int], start: float | None = None) -> list[float]:
    """Continuous count path from wrapped readings.

    Consecutive readings are assumed to be less than half a revolution
    apart; a larger physical jump is indistinguishable from a wrap.  The
    first output is ``readings[0]`` unless ``start`` supplies an already
    unwrapped value congruent to it.
    """
    raw = np.array([int(getattr(r, "raw", r)) for r in readings], dtype=np.int64)
    if raw.size == 0:
        return []
    steps = _wrap_delta(np.diff(raw))
    first = float(raw[0]) if start is None else float(start)
    return (first + np.concatenate([[0], np.cumsum(steps)])).astype(float).tolist()


@dataclass(frozen=True)
class GripperCalibration:
    counts: tuple[float, ...]
    widths: tuple[float, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float)
        w = np.asarray(self.widths, dtype=float)
        if c.size < 2 or c.shape != w.shape:
            raise ValueError("gripper calibration needs >= 2 matching knots")
        if np.any(np.diff(c) <= 0):
            raise NonMonotonic("knot counts must be strictly increasing")
        dw = np.diff(w)
        if not (np.all(dw > 0) or np.all(dw < 0)):
            raise NonMonotonic("knot widths must be strictly monotone in count")
        if w.min() < 0.0 or w.max() > MAX_WIDTH:
            raise ValueError(f"knot widths must lie in [0, {MAX_WIDTH}] m")

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.counts, self.widths))

    @property
    def count_range(self) -> tuple[float, float]:
        return (self.counts[0], self.counts[-1])

    @property
    def width_bounds(self) -> tuple[float, float]:
        lo = max(min(self.widths) - EXTRAPOLATION_MARGIN, 0.0)
        return (lo, max(self.widths) + EXTRAPOLATION_MARGIN)

    def in_range(self, unwrapped) -> np.ndarray:
        u = np.asarray(unwrapped, dtype=float)
        return (u >= self.counts[0]) & (u <= self.counts[-1])

    def width_at(self, unwrapped):
        """Width for unwrapped count(s): knot interpolation, clamped linear
        extrapolation past the ends."""
        c = np.asarray(self.counts)
        w = np.asarray(self.widths)
        u = np.asarray(unwrapped, dtype=float)
        out = np.interp(u, c, w)
        lo_slope = (w[1] - w[0]) / (c[1] - c[0])
        hi_slope = (w[-1] - w[-2]) / (c[-1] - c[-2])
        below = u < c[0]
        above = u > c[-1]
        out = np.where(below, w[0] + lo_slope * (u - c[0]), out)
        out = np.where(above, w[-1] + hi_slope * (u - c[-1]), out)
        out = np.clip(out, *self.width_bounds)
        return float(out) if out.ndim == 0 else out

    def seed_unwrapped(self, raw: int) -> float:
        """Pick the revolution for a first reading: the congruent count closest
        to the middle of the calibrated range."""
        mid = 0.5 * (self.counts[0] + self.counts[-1])
        k = round((mid - raw) / COUNTS_PER_REV)
        return float(raw + k * COUNTS_PER_REV)

    def digest(self) -> str:
        return hashlib.sha256(_gripper_body(self).encode()).hexdigest()


def build_gripper_map(samples: Iterable[tuple[EncoderReading | int, float]]) -> GripperCalibration:
    """Calibration from a sweep of (reading, width) pairs taken in sweep order."""
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two calibration samples")
    widths = np.array([w for _, w in samples], dtype=float)
    if len(set(widths.tolist())) != widths.size:
        raise ValueError("calibration widths must be distinct")
    counts = np.array(unwrap_counts([r for r, _ in samples]))
    order = np.argsort(widths, kind="stable")
    c_by_w = counts[order]
    dc = np.diff(c_by_w)
    if not (np.all(dc > 0) or np.all(dc < 0)):
        raise NonMonotonic("unwrapped counts are not monotone in width; re-run the sweep")
    # the revolution the sweep started in is arbitrary; pin the lowest knot to [0, 4096)
    counts = counts - COUNTS_PER_REV * np.floor(counts.min() / COUNTS_PER_REV)
    by_count = np.argsort(counts, kind="stable")
    return GripperCalibration(tuple(counts[by_count].tolist()), tuple(widths[by_count].tolist()))


def encoder_to_width(
    cal: GripperCalibration, reading: EncoderReading | int, prev_unwrapped: float
) -> tuple[float, float]:
    raw = int(getattr(reading, "raw", reading))
    prev = int(round(prev_unwrapped))
    unwrapped = float(prev + _wrap_delta(raw - prev))
    return cal.width_at(unwrapped), unwrapped


@dataclass(frozen=True)
class ControllerCalibration:
    correction: RigidTransform

    def digest(self) -> str:
        return hashlib.sha256(_controller_body(self).encode()).hexdigest()


def make_controller_calibration(recorded: RigidTransform) -> ControllerCalibration:
    return ControllerCalibration(invert(recorded))


def apply_correction(cal: ControllerCalibration, raw: Pose6D) -> Pose6D:
    return Pose6D.from_transform(compose(raw.as_transform(), cal.correction))


# ---------------------------------------------------------------- file format


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _gripper_body(cal: GripperCalibration) -> str:
    rows = [f"{_fmt(c)} {_fmt(w)}" for c, w in cal.knots]
    return "\n".join(rows) + "\n"


def _controller_body(cal: ControllerCalibration) -> str:
    t = cal.correction
    q = t.rotation.canonical()
    vals = [q.w, q.x, q.y, q.z, *t.translation]
    return " ".join(_fmt(v) for v in vals) + "\n"


def _created_at() -> str:
    # SOURCE_DATE_EPOCH makes repeated CLI runs byte-identical
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    ts = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts))


def dump_calibration(cal: GripperCalibration | ControllerCalibration) -> str:
    header = [
        "# demosync calibration",
        f"format_version = {FORMAT_VERSION}",
        f"created_at = {_created_at()}",
    ]
    if isinstance(cal, GripperCalibration):
        lo, hi = cal.count_range
        header += [
            "kind = gripper",
            f"count_range = {_fmt(lo)} {_fmt(hi)}",
            f"width_range = {_fmt(min(cal.widths))} {_fmt(max(cal.widths))}",
            "columns = unwrapped_count width_m",
        ]
        body = _gripper_body(cal)
    else:
        header += ["kind = controller", "columns = qw qx qy qz tx ty tz"]
        body = _controller_body(cal)
    return "\n".join(header) + "\n---\n" + body


def save_calibration(cal: GripperCalibration | ControllerCalibration, path: str | os.PathLike) -> None:
    Path(path).write_text(dump_calibration(cal))


def parse_calibration(text: str) -> GripperCalibration | ControllerCalibration:
    if "\n---\n" not in text:
        raise CalibrationFormatError("missing '---' separator between header and rows")
    head, body = text.split("\n---\n", 1)
    meta = {}
    for line in head.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CalibrationFormatError(f"bad header line {line!r}")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    if meta.get("format_version") != str(FORMAT_VERSION):
        raise CalibrationFormatError(f"unsupported format_version {meta.get('format_version')!r}")
    rows = [ln.split() for ln in body.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        values = [[float(x) for x in r] for r in rows]
    except ValueError as exc:
        raise CalibrationFormatError(str(exc)) from None
    kind = meta.get("kind")
    try:
        if kind == "gripper":
            if any(len(r) != 2 for r in values):
                raise CalibrationFormatError("gripper rows need 2 columns")
            return GripperCalibration(tuple(r[0] for r in values), tuple(r[1] for r in values))
        if kind == "controller":
            if len(values) != 1 or len(values[0]) != 7:
                raise CalibrationFormatError("controller calibration needs one 7-column row")
            return ControllerCalibration(RigidTransform.from_array(values[0]))
    except (ValueError, NonMonotonic) as exc:
        if isinstance(exc, CalibrationFormatError):
            raise
        raise CalibrationFormatError(str(exc)) from None
    raise CalibrationFormatError(f"unknown kind {kind!r}")


def load_calibration(path: str | os.PathLike) -> GripperCalibration | ControllerCalibration:
    return parse_calibration(Path(path).read_text())


def read_gripper_samples(path: str | os.PathLike) -> list[tuple[int, float]]:
    """Sweep samples file: one ``raw_count width_m`` pair per line, ``#`` comments."""
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CalibrationFormatError(f"{path}:{n}: expected 'raw width_m'")
        try:
            out.append((int(parts[0]), float(parts[1])))
        except ValueError:
            raise CalibrationFormatError(f"{path}:{n}: unparsable {line!r}") from None
    return out


def read_recorded_transform(path: str | os.PathLike) -> RigidTransform:
    """Recorded controller pose: a single ``qw qx qy qz tx ty tz`` line."""
    rows = [ln.split("#", 1)[0].split() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r]
    if len(rows) != 1 or len(rows[0]) != 7:
        raise CalibrationFormatError(f"{path}: expected one 'qw qx qy qz tx ty tz' line")
    try:
        return RigidTransform.from_array([float(v) for v in rows[0]])
    except ValueError as exc:
        raise CalibrationFormatError(f"{path}: {exc}") from None
