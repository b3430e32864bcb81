"""Tactile frame preprocessing and chunk curation.

A raw grayscale frame is compared against a no-contact reference.  The
signed deviation, with a noise dead-band ``tau`` removed, splits into a
convex map (brighter than reference) and a concave map (darker).  Together
with the normalised grayscale they form a 3-channel image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import EmptyChunk, ShapeMismatch, TooFewFrames

DEFAULT_SHAPE = (240, 320)
DEFAULT_TAU = 0.06
DEFAULT_REFERENCE_FRAMES = 10
DEFAULT_THRESHOLD = 0.01
CHUNK_FRAMES = 8
FIXED_POINT_SCALE = 65535
SENSOR_IDS = {"left": 0, "right": 1}

Side = Literal["left", "right"]


@dataclass(frozen=True, eq=False)
class TactileFrame:
    t: float
    pixels: np.ndarray  # (H, W) uint8
    sensor_id: Side = "left"


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    pixels: np.ndarray  # (H, W) float64, raw intensity units


@dataclass(frozen=True, eq=False)
class ProcessedTactile:
    t: float
    gray: np.ndarray
    convex: np.ndarray
    concave: np.ndarray

    def stacked(self) -> np.ndarray:
        """(3, H, W) channel-first image: gray, convex, concave."""
        return np.stack([self.gray, self.convex, self.concave])

    @classmethod
    def from_stacked(cls, t: float, img: np.ndarray) -> "ProcessedTactile":
        return cls(t, img[0], img[1], img[2])


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma of an (H, W, 3) uint8 image, rounded to uint8."""
    y = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def build_reference(frames: Sequence[TactileFrame], min_frames: int = DEFAULT_REFERENCE_FRAMES) -> ReferenceFrame:
    if len(frames) < min_frames:
        raise TooFewFrames(f"{len(frames)} frames < required {min_frames}")
    shape = frames[0].pixels.shape
    if any(f.pixels.shape != shape for f in frames):
        raise ShapeMismatch("reference frames differ in shape")
    stack = np.stack([f.pixels for f in frames]).astype(np.float64)
    return ReferenceFrame(stack.mean(axis=0))


def process_frame(frame: TactileFrame, ref: ReferenceFrame, tau: float = DEFAULT_TAU) -> ProcessedTactile:
    if frame.pixels.shape != ref.pixels.shape:
        raise ShapeMismatch(f"frame {frame.pixels.shape} vs reference {ref.pixels.shape}")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    gray = frame.pixels.astype(np.float64) / 255.0
    d = gray - ref.pixels / 255.0
    scale = 1.0 - tau
    convex = np.clip(np.maximum(d - tau, 0.0) / scale, 0.0, 1.0)
    concave = np.clip(np.maximum(-d - tau, 0.0) / scale, 0.0, 1.0)
    return ProcessedTactile(frame.t, gray, convex, concave)


def active_ratio(p: ProcessedTactile) -> float:
    active = (p.convex > 0) | (p.concave > 0)
    return float(np.count_nonzero(active)) / active.size


def curate_chunk(frames: Sequence[ProcessedTactile], threshold: float = DEFAULT_THRESHOLD) -> bool:
    """True to keep the chunk: at least one frame reaches ``threshold``."""
    if len(frames) == 0:
        raise EmptyChunk("cannot curate an empty chunk")
    return any(active_ratio(f) >= threshold for f in frames)


def chunks(frames: Sequence[ProcessedTactile], size: int = CHUNK_FRAMES) -> list[list[ProcessedTactile]]:
    return [list(frames[i : i + size]) for i in range(0, len(frames), size)]


def to_fixed_point(x: np.ndarray) -> np.ndarray:
    # np.rint rounds half to even
    return np.rint(np.clip(x, 0.0, 1.0) * FIXED_POINT_SCALE).astype(np.uint16)


def from_fixed_point(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float64) / FIXED_POINT_SCALE
