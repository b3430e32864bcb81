"""Latency correction, resampling onto video frames, and episode containers.

An episode directory looks like::

    manifest.txt          schema, shapes, dtypes, per-array sha256, provenance
    frame_times.bin       f64 (n,)        video clock
    frame_indices.bin     u32 (n,)
    poses.bin             f64 (n, 7)      qw qx qy qz tx ty tz, w >= 0
    widths.bin            f64 (n,)        NaN where absent
    width_present.bin     u8  (n,)
    flags.bin             u8  (n,)        FLAG_* bits
    tactile_<side>_times.bin       f64 (n,)   matched sample stamp, NaN if absent
    tactile_<side>_present.bin     u8  (n,)
    tactile_<side>_raw.bin         u8  (n, H, W)
    tactile_<side>_processed.bin   u16 (n, 3, H, W)  value * 65535

All binaries are little-endian and row-major.  The last manifest line holds
the sha256 of every byte before it.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import ControllerCalibration, GripperCalibration, unwrap_counts
from .errors import (
    ChecksumMismatch,
    DemoSyncError,
    EmptySpan,
    MissingStream,
    SchemaVersionMismatch,
    TooFewFrames,
)
from .geometry import RigidTransform, Trajectory1D, compose_arrays, interp_poses, PoseArrays
from .latency import AXES, LatencyConfig, LatencyEstimate, estimate_latency
from .protocol import RawSession, StreamKind, decode_tactile, load_session
from .tactile import (
    DEFAULT_REFERENCE_FRAMES,
    DEFAULT_TAU,
    DEFAULT_THRESHOLD,
    ReferenceFrame,
    TactileFrame,
    build_reference,
    process_frame,
    to_fixed_point,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SIDES = ("left", "right")

FLAG_CAL_RANGE = 1
FLAG_NO_WIDTH = 2
FLAG_NO_TACTILE_LEFT = 4
FLAG_NO_TACTILE_RIGHT = 8

_DTYPES = {"f64": "<f8", "u8": "|u1", "u16": "<u2", "u32": "<u4"}


@dataclass
class PipelineConfig:
    gripper_cal: GripperCalibration | None = None
    controller_cal: ControllerCalibration = field(default_factory=lambda: ControllerCalibration(RigidTransform()))
    latency: LatencyEstimate | None = None  # None: estimate from this session's sweep
    latency_config: LatencyConfig = field(default_factory=LatencyConfig)
    latency_axis: str = "x"
    allow_flip: bool = False
    apply_latency_correction: bool = True
    tactile_tau: float = DEFAULT_TAU
    tactile_hold_tolerance: float = 0.1
    tactile_reference_frames: int = DEFAULT_REFERENCE_FRAMES
    curation_threshold: float = DEFAULT_THRESHOLD
    video_fps_hint: float = 30.0

    def __post_init__(self):
        if not (self.tactile_tau > 0 and self.tactile_hold_tolerance > 0 and self.video_fps_hint > 0):
            raise ValueError("tolerances and rates must be positive")


def _array_specs(h: int, w: int) -> list[tuple[str, str, tuple]]:
    specs = [
        ("frame_times", "f64", ()),
        ("frame_indices", "u32", ()),
        ("poses", "f64", (7,)),
        ("widths", "f64", ()),
        ("width_present", "u8", ()),
        ("flags", "u8", ()),
    ]
    for side in SIDES:
        specs += [
            (f"tactile_{side}_times", "f64", ()),
            (f"tactile_{side}_present", "u8", ()),
            (f"tactile_{side}_raw", "u8", (h, w)),
            (f"tactile_{side}_processed", "u16", (3, h, w)),
        ]
    return specs


@dataclass(eq=False)
class Episode:
    arrays: dict[str, np.ndarray]
    tactile_shape: tuple[int, int] = (0, 0)
    provenance: dict[str, str] = field(default_factory=dict)

    @classmethod
    def empty(cls, n: int = 0, tactile_shape: tuple[int, int] = (0, 0)) -> "Episode":
        h, w = tactile_shape
        arrays = {
            name: np.zeros((n, *tail), dtype=_DTYPES[dt]) for name, dt, tail in _array_specs(h, w)
        }
        return cls(arrays, (h, w), {})

    def __len__(self) -> int:
        return int(self.arrays["frame_times"].shape[0])

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays")
        if arrays is not None and name in arrays:
            return arrays[name]
        raise AttributeError(name)

    def bit_equal(self, other: "Episode") -> bool:
        if self.tactile_shape != other.tactile_shape or self.provenance != other.provenance:
            return False
        if self.arrays.keys() != other.arrays.keys():
            return False
        for k, a in self.arrays.items():
            b = other.arrays[k]
            if a.dtype != b.dtype or a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True

    def active_ratios(self, side: str) -> np.ndarray:
        proc = self.arrays[f"tactile_{side}_processed"]
        if proc.size == 0:
            return np.zeros(len(self))
        active = (proc[:, 1] > 0) | (proc[:, 2] > 0)
        return active.reshape(len(self), -1).mean(axis=1)

    def active_frames(self, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
        """Per-frame: any present tactile side at or above ``threshold``."""
        out = np.zeros(len(self), dtype=bool)
        for side in SIDES:
            present = self.arrays[f"tactile_{side}_present"].astype(bool)
            out |= present & (self.active_ratios(side) >= threshold)
        return out

    def tactile_present_any(self) -> np.ndarray:
        return np.logical_or.reduce([self.arrays[f"tactile_{s}_present"].astype(bool) for s in SIDES])


# ------------------------------------------------------------------ building


def _pose_arrays(session: RawSession) -> PoseArrays:
    recs = session.records(StreamKind.POSE)
    raw = np.frombuffer(b"".join(r.payload for r in recs), dtype="<f8").reshape(-1, 7)
    q = raw[:, :4] / np.linalg.norm(raw[:, :4], axis=1, keepdims=True)
    return PoseArrays(session.times(StreamKind.POSE), q, raw[:, 4:].copy())


def _marker_track(session: RawSession, axis: str) -> Trajectory1D:
    recs = session.records(StreamKind.MARKER)
    uv = np.frombuffer(b"".join(r.payload for r in recs), dtype="<f8").reshape(-1, 2)
    # marker u follows the sweep (x); v follows y
    comp = 0 if axis == "x" else 1
    return Trajectory1D(session.times(StreamKind.MARKER), uv[:, comp])


def corrected_poses(session: RawSession, cal: ControllerCalibration) -> PoseArrays:
    track = _pose_arrays(session)
    c = cal.correction
    cq = np.broadcast_to(c.rotation.as_array(), track.quats.shape)
    ct = np.broadcast_to(np.asarray(c.translation, dtype=float), track.positions.shape)
    q, p = compose_arrays(track.quats, track.positions, cq, ct)
    return PoseArrays(track.times, q, p)


def session_latency(session: RawSession, cfg: PipelineConfig, poses: PoseArrays | None = None) -> LatencyEstimate:
    """Latency from the session's sweep: corrected MoCap axis vs marker track."""
    if not session.has(StreamKind.POSE):
        raise MissingStream("POSE")
    if not session.has(StreamKind.MARKER):
        raise MissingStream("MARKER (needed to estimate latency)")
    if poses is None:
        poses = corrected_poses(session, cfg.controller_cal)
    f = Trajectory1D(poses.times, poses.positions[:, AXES[cfg.latency_axis]])
    g = _marker_track(session, cfg.latency_axis)
    return estimate_latency(f, g, cfg.latency_config, allow_flip=cfg.allow_flip)


def _split_tactile(session: RawSession) -> dict[str, list[TactileFrame]]:
    out: dict[str, list[TactileFrame]] = {s: [] for s in SIDES}
    for rec in session.records(StreamKind.TACTILE):
        sid, pix = decode_tactile(rec)
        side = SIDES[sid]
        out[side].append(TactileFrame(rec.t, pix, side))
    return out


def build_episode(session: RawSession, cfg: PipelineConfig) -> Episode:
    for kind in (StreamKind.VIDEO_META, StreamKind.POSE):
        if not session.has(kind):
            raise MissingStream(kind.name)
    warnings = list(session.warnings)

    poses = corrected_poses(session, cfg.controller_cal)
    if cfg.latency is None:
        latency = session_latency(session, cfg, poses)
        source = "auto"
    else:
        latency = cfg.latency
        source = "supplied"
    delta = latency.delta_star if cfg.apply_latency_correction else 0.0
    if not cfg.apply_latency_correction:
        source = "disabled"
    poses = PoseArrays(poses.times + delta, poses.quats, poses.positions)
    if len(poses) < 2:
        raise EmptySpan("fewer than two pose samples")

    vrecs = session.records(StreamKind.VIDEO_META)
    vt_all = session.times(StreamKind.VIDEO_META)
    vidx_all = np.frombuffer(b"".join(r.payload for r in vrecs), dtype="<u4")
    keep = (vt_all >= poses.times[0]) & (vt_all <= poses.times[-1])
    if not keep.any():
        raise EmptySpan(
            f"video [{vt_all[0]:.3f}, {vt_all[-1]:.3f}] s vs shifted pose "
            f"[{poses.times[0]:.3f}, {poses.times[-1]:.3f}] s"
        )
    vt = vt_all[keep]
    n = vt.size

    tactile = _split_tactile(session) if session.has(StreamKind.TACTILE) else {s: [] for s in SIDES}
    shape = next((tactile[s][0].pixels.shape for s in SIDES if tactile[s]), (0, 0))
    ep = Episode.empty(n, shape)
    a = ep.arrays
    a["frame_times"][:] = vt
    a["frame_indices"][:] = vidx_all[keep]

    q, p = interp_poses(poses, vt)
    q = np.where(q[:, :1] < 0.0, -q, q)  # canonical sign for storage
    a["poses"][:, :4] = q
    a["poses"][:, 4:] = p

    flags = a["flags"]
    widths = a["widths"]
    widths[:] = np.nan
    if session.has(StreamKind.ENCODER) and cfg.gripper_cal is not None:
        cal = cfg.gripper_cal
        erecs = session.records(StreamKind.ENCODER)
        et = session.times(StreamKind.ENCODER)
        raw = np.frombuffer(b"".join(r.payload for r in erecs), dtype="<u2").astype(np.int64)
        unwrapped = np.asarray(unwrap_counts(raw.tolist(), start=cal.seed_unwrapped(int(raw[0]))))
        w_samples = cal.width_at(unwrapped)
        w_samples = np.atleast_1d(w_samples)
        inside = (vt >= et[0]) & (vt <= et[-1])
        widths[inside] = np.interp(vt[inside], et, w_samples)
        a["width_present"][inside] = 1
        out_of_range = ~cal.in_range(unwrapped)
        if out_of_range.any():
            j = np.clip(np.searchsorted(et, vt, side="right") - 1, 0, et.size - 1)
            j1 = np.clip(j + 1, 0, et.size - 1)
            bad = inside & (out_of_range[j] | out_of_range[j1])
            flags[bad] |= FLAG_CAL_RANGE
            if bad.any():
                warnings.append(f"calibration_range_exceeded:{int(bad.sum())}")
    else:
        warnings.append("missing_encoder" if not session.has(StreamKind.ENCODER) else "missing_gripper_cal")
    flags[a["width_present"] == 0] |= FLAG_NO_WIDTH

    for side, bit in zip(SIDES, (FLAG_NO_TACTILE_LEFT, FLAG_NO_TACTILE_RIGHT)):
        frames = tactile[side]
        a[f"tactile_{side}_times"][:] = np.nan
        ref = None
        if frames:
            try:
                ref = build_reference(frames[: cfg.tactile_reference_frames], cfg.tactile_reference_frames)
            except TooFewFrames:
                warnings.append(f"tactile_{side}_too_few_reference_frames")
        else:
            warnings.append(f"missing_tactile_{side}")
        if ref is not None:
            _match_tactile(ep, side, frames, ref, cfg)
        flags[a[f"tactile_{side}_present"] == 0] |= bit

    lat = latency
    ep.provenance = {
        "session_id": session.header.session_id,
        "latency_delta_star": repr(float(lat.delta_star)),
        "latency_applied": repr(float(delta)),
        "latency_residual_mse": repr(float(lat.residual_mse)),
        "latency_source": source,
        "latency_flipped": str(int(lat.flipped)),
        "gripper_cal_sha256": cfg.gripper_cal.digest() if cfg.gripper_cal is not None else "none",
        "controller_cal_sha256": cfg.controller_cal.digest(),
        "tactile_tau": repr(float(cfg.tactile_tau)),
        "tactile_hold_tolerance": repr(float(cfg.tactile_hold_tolerance)),
        "video_frames_total": str(int(vt_all.size)),
        "frames_dropped": str(int(vt_all.size - n)),
        "warnings": ",".join(warnings) if warnings else "none",
    }
    return ep


def _match_tactile(ep: Episode, side: str, frames: list[TactileFrame], ref: ReferenceFrame, cfg: PipelineConfig) -> None:
    """Hold-last: each video frame takes the newest tactile sample not after it,
    if that sample is within the hold tolerance."""
    a = ep.arrays
    vt = a["frame_times"]
    tt = np.array([f.t for f in frames])
    j = np.searchsorted(tt, vt, side="right") - 1
    ok = (j >= 0) & (vt - tt[np.maximum(j, 0)] <= cfg.tactile_hold_tolerance)
    cache: dict[int, np.ndarray] = {}
    for i in np.flatnonzero(ok):
        k = int(j[i])
        if k not in cache:
            pt = process_frame(frames[k], ref, cfg.tactile_tau)
            cache[k] = to_fixed_point(pt.stacked())
        a[f"tactile_{side}_processed"][i] = cache[k]
        a[f"tactile_{side}_raw"][i] = frames[k].pixels
        a[f"tactile_{side}_times"][i] = tt[k]
        a[f"tactile_{side}_present"][i] = 1


# ----------------------------------------------------------------- container


def _sha(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def write_episode(ep: Episode, path: str | os.PathLike) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    h, w = ep.tactile_shape
    lines = [
        "# demosync episode",
        f"schema_version = {SCHEMA_VERSION}",
        f"n_frames = {len(ep)}",
        f"tactile_shape = {h} {w}",
    ]
    for name, dt, _ in _array_specs(h, w):
        arr = np.ascontiguousarray(ep.arrays[name], dtype=_DTYPES[dt])
        data = arr.tobytes()
        (d / f"{name}.bin").write_bytes(data)
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"array.{name} = {dt} {shape} {_sha(data)}")
    for k in sorted(ep.provenance):
        v = str(ep.provenance[k])
        if "\n" in v or "\n" in k:
            raise ValueError(f"provenance entry {k!r} must be single-line")
        lines.append(f"provenance.{k} = {v}")
    body = ("\n".join(lines) + "\n").encode()
    (d / "manifest.txt").write_bytes(body + f"manifest_sha256 = {_sha(body)}\n".encode())
    return d


def read_manifest(path: str | os.PathLike) -> dict[str, str]:
    d = Path(path)
    mp = d / "manifest.txt"
    if not mp.is_file():
        raise FileNotFoundError(f"{mp}")
    raw = mp.read_bytes()
    marker = b"manifest_sha256 = "
    cut = raw.rfind(b"\n" + marker)
    if cut < 0:
        raise ChecksumMismatch("manifest: no manifest_sha256 line")
    body, tail = raw[: cut + 1], raw[cut + 1 + len(marker) :]
    if tail.strip() != _sha(body).encode() or not tail.endswith(b"\n") or tail.count(b"\n") != 1:
        raise ChecksumMismatch("manifest")
    meta = {}
    for line in body.decode("utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition(" = ")
        meta[k] = v
    return meta


def read_episode(path: str | os.PathLike) -> Episode:
    d = Path(path)
    meta = read_manifest(d)
    if meta.get("schema_version") != str(SCHEMA_VERSION):
        raise SchemaVersionMismatch(f"container schema {meta.get('schema_version')!r}, reader {SCHEMA_VERSION}")
    h, w = (int(x) for x in meta["tactile_shape"].split())
    arrays = {}
    for name, dt, tail in _array_specs(h, w):
        entry = meta.get(f"array.{name}")
        if entry is None:
            raise ChecksumMismatch(f"{name}: missing from manifest")
        mdt, shape_s, digest = entry.split()
        if mdt != dt:
            raise SchemaVersionMismatch(f"{name}: dtype {mdt} where {dt} expected")
        shape = tuple(int(s) for s in shape_s.split(",") if s)
        fp = d / f"{name}.bin"
        if not fp.is_file():
            raise ChecksumMismatch(f"{name}: file missing")
        data = fp.read_bytes()
        if _sha(data) != digest:
            raise ChecksumMismatch(name)
        arr = np.frombuffer(data, dtype=_DTYPES[dt])
        if arr.size != int(np.prod(shape)):
            raise ChecksumMismatch(f"{name}: size does not match shape {shape}")
        arrays[name] = arr.reshape(shape).copy()
    prov = {k[len("provenance.") :]: v for k, v in meta.items() if k.startswith("provenance.")}
    return Episode(arrays, (h, w), prov)


# --------------------------------------------------------------- usability


@dataclass
class SessionOutcome:
    name: str
    usable: bool
    reason: str
    frames_video: int = 0
    frames_episode: int = 0
    frames_active: int = 0
    frames_tactile: int = 0
    warnings: str = ""

    @property
    def frames_dropped(self) -> int:
        return self.frames_video - self.frames_episode


def _session_name(s) -> str:
    if isinstance(s, RawSession):
        return s.header.session_id
    return str(s)


def usability_report(sessions: Sequence, cfgs: Sequence[PipelineConfig] | PipelineConfig):
    """Build every session and tally which ones yield an episode.

    ``sessions`` holds RawSession objects or session directories (loaded
    in recovery mode, so a torn log tail is a warning rather than a
    rejection).  A fatal pipeline error marks the session unusable with
    the error code as the reason.
    """
    from .metrics import UsabilityStats

    if isinstance(cfgs, PipelineConfig):
        cfgs = [cfgs] * len(sessions)
    if len(cfgs) != len(sessions):
        raise ValueError("need one config per session")
    outcomes = []
    for s, cfg in zip(sessions, cfgs):
        name = _session_name(s)
        try:
            session = s if isinstance(s, RawSession) else load_session(s, strict=False)
            n_video = len(session.records(StreamKind.VIDEO_META))
            ep = build_episode(session, cfg)
        except DemoSyncError as exc:
            outcomes.append(SessionOutcome(name, False, f"{exc.code}: {exc.context}"))
            continue
        except OSError as exc:
            outcomes.append(SessionOutcome(name, False, f"IoError: {exc}"))
            continue
        outcomes.append(
            SessionOutcome(
                name,
                True,
                "ok",
                frames_video=n_video,
                frames_episode=len(ep),
                frames_active=int(ep.active_frames(cfg.curation_threshold).sum()),
                frames_tactile=int(ep.tactile_present_any().sum()),
                warnings=ep.provenance.get("warnings", ""),
            )
        )
    return UsabilityStats.from_outcomes(outcomes)
