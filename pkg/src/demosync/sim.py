"""Synthetic capture sessions with analytic ground truth.

The tool path is a horizontal sweep on x (the latency-calibration motion)
plus slow motion on y and z and an optional rotation wobble.  Each sensor
samples that path on its own clock (true time + injected latency) and draws
noise from its own named RNG sub-stream, so switching a sensor on or off
never perturbs another sensor's samples.
"""

from __future__ import annotations

import ast
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import COUNTS_PER_REV
from .errors import InvalidScenario
from .geometry import RigidTransform, UnitQuaternion, compose_arrays, quat_multiply
from .protocol import (
    RawSession,
    SessionHeader,
    StreamKind,
    WireRecord,
    encoder_payload,
    marker_payload,
    tactile_payload,
    video_payload,
)
from .tactile import SENSOR_IDS

ALL_STREAMS = ("POSE", "ENCODER", "TACTILE", "VIDEO_META", "MARKER")

DEFAULT_WIDTH_PROFILE = (
    (0.0, 0.08), (1.5, 0.08), (2.5, 0.0), (4.5, 0.0), (5.5, 0.08),
    (6.5, 0.08), (7.5, 0.0), (8.5, 0.0), (9.5, 0.08),
)  # fmt: skip
# start, end, center row / col (fraction of H / W), radius (fraction of min(H, W)), depth
DEFAULT_CONTACTS = ((1.5, 4.5, 0.5, 0.5, 0.15, 0.3), (6.0, 9.0, 0.45, 0.55, 0.15, 0.3))
RING_GAIN = 0.6


@dataclass
class SimScenario:
    seed: int = 0
    duration: float = 10.0
    mocap_hz: float = 60.0
    video_hz: float = 30.0
    encoder_hz: float = 100.0
    tactile_hz: float = 30.0
    streams: tuple[str, ...] = ALL_STREAMS

    sweep_amplitude: float = 0.2
    sweep_freq: float = 1.0
    side_amplitude: tuple[float, float] = (0.05, 0.03)
    side_freq: tuple[float, float] = (0.23, 0.17)
    base_position: tuple[float, float, float] = (0.4, 0.0, 0.3)
    base_orientation: tuple[float, float, float, float] = (0.9961946980917455, 0.0, 0.08715574274765817, 0.0)
    rotation_amplitude: float = 0.0
    rotation_freq: float = 0.2
    rotation_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    latency_pose: float = 0.0
    latency_video: float = 0.0
    latency_encoder: float = 0.0
    latency_tactile: float = 0.0

    # qw qx qy qz tx ty tz of the controller in the tool frame
    mount_offset: tuple[float, ...] = (0.9914448613738104, 0.13052619222005157, 0.0, 0.0, 0.02, -0.05, 0.08)
    noise_sigma_pose: float = 0.002
    noise_sigma_marker: float = 0.64
    marker_scale: float = 320.0
    marker_origin: tuple[float, float] = (320.0, 240.0)

    encoder_offset: float = 3500.0
    encoder_counts_per_m: float = 12000.0
    encoder_curvature: float = 0.0
    width_profile: tuple[tuple[float, float], ...] = DEFAULT_WIDTH_PROFILE
    calibration_widths: tuple[float, ...] = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08)

    tactile_shape: tuple[int, int] = (240, 320)
    noise_sigma_tactile: float = 0.02
    contact_schedule: tuple[tuple[float, ...], ...] = DEFAULT_CONTACTS

    def __post_init__(self):
        self.streams = tuple(self.streams)
        self.side_amplitude = tuple(self.side_amplitude)
        self.side_freq = tuple(self.side_freq)
        self.base_position = tuple(self.base_position)
        self.base_orientation = tuple(self.base_orientation)
        self.rotation_axis = tuple(self.rotation_axis)
        self.mount_offset = tuple(self.mount_offset)
        self.marker_origin = tuple(self.marker_origin)
        self.width_profile = tuple(tuple(p) for p in self.width_profile)
        self.calibration_widths = tuple(self.calibration_widths)
        self.tactile_shape = tuple(int(v) for v in self.tactile_shape)
        self.contact_schedule = tuple(tuple(c) for c in self.contact_schedule)

    def validate(self) -> None:
        problems = []
        for name in ("duration", "mocap_hz", "video_hz", "encoder_hz", "tactile_hz"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        bad = set(self.streams) - set(ALL_STREAMS)
        if bad:
            problems.append(f"unknown streams {sorted(bad)}")
        if self.sweep_amplitude > 0 and self.duration * self.sweep_freq < 5 - 1e-9:
            problems.append("duration must cover >= 5 sweep periods")
        if len(self.mount_offset) != 7:
            problems.append("mount_offset needs 7 values")
        if any(s < 0 for s in (self.noise_sigma_pose, self.noise_sigma_marker, self.noise_sigma_tactile)):
            problems.append("noise sigmas must be >= 0")
        ts = [p[0] for p in self.width_profile]
        if len(ts) < 1 or any(b <= a for a, b in zip(ts, ts[1:])):
            problems.append("width_profile times must be strictly increasing")
        if any(not 0.0 <= p[1] <= 0.2 for p in self.width_profile):
            problems.append("width_profile widths must be in [0, 0.2] m")
        if len(self.tactile_shape) != 2 or min(self.tactile_shape) < 1:
            problems.append("tactile_shape must be two positive ints")
        for c in self.contact_schedule:
            if len(c) != 6 or c[1] <= c[0]:
                problems.append(f"bad contact entry {c}")
        if self.encoder_counts_per_m / self.encoder_hz * 0.5 >= COUNTS_PER_REV / 2:
            problems.append("encoder too coarse in time to unwrap")
        if problems:
            raise InvalidScenario("; ".join(problems))

    def stream_enabled(self, kind: StreamKind) -> bool:
        return kind.name in self.streams

    def latency_of(self, kind: StreamKind) -> float:
        return {
            StreamKind.POSE: self.latency_pose,
            StreamKind.VIDEO_META: self.latency_video,
            StreamKind.MARKER: self.latency_video,
            StreamKind.ENCODER: self.latency_encoder,
            StreamKind.TACTILE: self.latency_tactile,
        }[kind]


# ----------------------------------------------------------- scenario files


def dump_scenario(sc: SimScenario) -> str:
    lines = ["# demosync simulation scenario"]
    for f in fields(sc):
        v = getattr(sc, f.name)
        lines.append(f"{f.name} = {_fmt_value(v)}")
    return "\n".join(lines) + "\n"


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    if isinstance(v, str):
        return repr(v)
    return str(v)


def parse_scenario(text: str, **overrides) -> SimScenario:
    """Parse ``key = value`` lines; missing keys take defaults."""
    known = {f.name for f in fields(SimScenario)}
    kw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidScenario(f"line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in known:
            raise InvalidScenario(f"line {n}: unknown key {k!r}")
        try:
            kw[k] = ast.literal_eval(v)
        except (ValueError, SyntaxError):
            kw[k] = v
    kw.update(overrides)
    try:
        sc = SimScenario(**kw)
    except (TypeError, ValueError) as exc:
        raise InvalidScenario(str(exc)) from None
    try:
        sc.seed = int(sc.seed)
        for name in ("duration", "mocap_hz", "video_hz", "encoder_hz", "tactile_hz", "sweep_amplitude",
                     "sweep_freq", "latency_pose", "latency_video", "latency_encoder", "latency_tactile",
                     "noise_sigma_pose", "noise_sigma_marker", "noise_sigma_tactile", "marker_scale"):
            setattr(sc, name, float(getattr(sc, name)))
    except (TypeError, ValueError) as exc:
        raise InvalidScenario(str(exc)) from None
    sc.validate()
    return sc


def load_scenario(path, **overrides) -> SimScenario:
    return parse_scenario(Path(path).read_text(), **overrides)


# ------------------------------------------------------------- ground truth


@dataclass
class GroundTruth:
    scenario: SimScenario
    tactile_counts: dict[str, list[int]] = field(default_factory=dict)

    @property
    def expected_delta(self) -> float:
        """Offset the latency search should find for f = MoCap x, g = marker u."""
        return self.scenario.latency_video - self.scenario.latency_pose

    @property
    def video_latency(self) -> float:
        return self.scenario.latency_video

    def tool_position(self, t) -> np.ndarray:
        sc = self.scenario
        t = np.asarray(t, dtype=float)
        x = sc.base_position[0] + sc.sweep_amplitude * np.sin(2 * np.pi * sc.sweep_freq * t)
        y = sc.base_position[1] + sc.side_amplitude[0] * np.sin(2 * np.pi * sc.side_freq[0] * t + 0.3)
        z = sc.base_position[2] + sc.side_amplitude[1] * np.sin(2 * np.pi * sc.side_freq[1] * t + 1.1)
        return np.stack([x, y, z], axis=-1)

    def tool_orientation(self, t) -> np.ndarray:
        sc = self.scenario
        t = np.asarray(t, dtype=float)
        base = np.asarray(UnitQuaternion.from_array(sc.base_orientation).as_array())
        angle = sc.rotation_amplitude * np.sin(2 * np.pi * sc.rotation_freq * t)
        axis = np.asarray(sc.rotation_axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        half = angle[..., None] / 2.0
        wobble = np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)
        return quat_multiply(np.broadcast_to(base, wobble.shape), wobble)

    def width(self, t) -> np.ndarray:
        prof = np.asarray(self.scenario.width_profile, dtype=float)
        return np.interp(np.asarray(t, dtype=float), prof[:, 0], prof[:, 1])

    def count_model(self, w) -> np.ndarray:
        sc = self.scenario
        w = np.asarray(w, dtype=float)
        return sc.encoder_offset + sc.encoder_counts_per_m * w + sc.encoder_curvature * w * w

    def mount(self) -> RigidTransform:
        return RigidTransform.from_array(self.scenario.mount_offset)

    def contacts_at(self, t: float) -> list[tuple[float, ...]]:
        return [c for c in self.scenario.contact_schedule if c[0] <= t < c[1]]

    def contact_active(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros(t.shape, dtype=bool)
        for c in self.scenario.contact_schedule:
            out |= (t >= c[0]) & (t < c[1])
        return out

    def blob_mask(self, t: float, side: str) -> np.ndarray:
        """Pixels covered by any contact blob at true time ``t``."""
        h, w = self.scenario.tactile_shape
        rr, cc = np.mgrid[0:h, 0:w]
        mask = np.zeros((h, w), dtype=bool)
        for c in self.contacts_at(t):
            cy, cx, r = _blob_geometry(c, h, w, side)
            mask |= (rr - cy) ** 2 + (cc - cx) ** 2 <= r * r
        return mask


def _blob_geometry(c, h: int, w: int, side: str) -> tuple[float, float, float]:
    cy = c[2] * (h - 1)
    cx = c[3] * (w - 1)
    if side == "right":
        cx = (w - 1) - cx  # the opposite finger sees the object mirrored
    return cy, cx, c[4] * min(h, w)


def reference_image(shape: tuple[int, int]) -> np.ndarray:
    """Smooth no-contact illumination pattern, uint8."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    img = 120.0 + 25.0 * np.cos(2 * np.pi * xx / max(w, 1)) * np.cos(2 * np.pi * yy / max(h, 1))
    return np.rint(img).astype(np.uint8)


def render_tactile(gt: GroundTruth, t: float, side: str, noise: np.ndarray | None) -> np.ndarray:
    sc = gt.scenario
    h, w = sc.tactile_shape
    img = reference_image((h, w)).astype(np.float64)
    rr, cc = np.mgrid[0:h, 0:w]
    for c in gt.contacts_at(t):
        cy, cx, r = _blob_geometry(c, h, w, side)
        d2 = (rr - cy) ** 2 + (cc - cx) ** 2
        core = d2 < (0.5 * r) ** 2
        ring = (d2 <= r * r) & ~core
        # dark pressed centre, bright bulging rim
        img[core] -= 255.0 * c[5]
        img[ring] += 255.0 * c[5] * RING_GAIN
    if noise is not None:
        img += noise
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- generator


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]))


def _sample_times(duration: float, rate: float) -> np.ndarray:
    return np.arange(int(math.floor(duration * rate + 1e-9))) / rate


def generate_session(sc: SimScenario) -> tuple[RawSession, GroundTruth]:
    sc.validate()
    gt = GroundTruth(sc)
    logs: dict[StreamKind, list[WireRecord]] = {}

    if sc.stream_enabled(StreamKind.POSE):
        s = _sample_times(sc.duration, sc.mocap_hz)
        q_tool = gt.tool_orientation(s)
        p_tool = gt.tool_position(s)
        mount = np.asarray(sc.mount_offset, dtype=float)
        mq = UnitQuaternion.from_array(mount[:4]).as_array()
        q, p = compose_arrays(q_tool, p_tool, np.broadcast_to(mq, q_tool.shape), np.broadcast_to(mount[4:], p_tool.shape))
        if sc.noise_sigma_pose > 0:
            p = p + _rng(sc.seed, "pose").normal(0.0, sc.noise_sigma_pose, p.shape)
        stamps = s + sc.latency_pose
        rows = np.concatenate([q, p], axis=1)
        logs[StreamKind.POSE] = [
            WireRecord(StreamKind.POSE, float(t), row.astype("<f8").tobytes()) for t, row in zip(stamps, rows)
        ]

    if sc.stream_enabled(StreamKind.VIDEO_META) or sc.stream_enabled(StreamKind.MARKER):
        s = _sample_times(sc.duration, sc.video_hz)
        stamps = s + sc.latency_video
        if sc.stream_enabled(StreamKind.VIDEO_META):
            logs[StreamKind.VIDEO_META] = [
                WireRecord(StreamKind.VIDEO_META, float(t), video_payload(j)) for j, t in enumerate(stamps)
            ]
        if sc.stream_enabled(StreamKind.MARKER):
            pos = gt.tool_position(s)
            u = sc.marker_origin[0] + sc.marker_scale * (pos[:, 0] - sc.base_position[0])
            v = sc.marker_origin[1] - sc.marker_scale * (pos[:, 1] - sc.base_position[1])
            if sc.noise_sigma_marker > 0:
                nz = _rng(sc.seed, "marker").normal(0.0, sc.noise_sigma_marker, (s.size, 2))
                u = u + nz[:, 0]
                v = v + nz[:, 1]
            logs[StreamKind.MARKER] = [
                WireRecord(StreamKind.MARKER, float(t), marker_payload(float(a), float(b)))
                for t, a, b in zip(stamps, u, v)
            ]

    if sc.stream_enabled(StreamKind.ENCODER):
        s = _sample_times(sc.duration, sc.encoder_hz)
        counts = np.rint(gt.count_model(gt.width(s))).astype(np.int64) % COUNTS_PER_REV
        stamps = s + sc.latency_encoder
        logs[StreamKind.ENCODER] = [
            WireRecord(StreamKind.ENCODER, float(t), encoder_payload(int(c))) for t, c in zip(stamps, counts)
        ]

    if sc.stream_enabled(StreamKind.TACTILE):
        s = _sample_times(sc.duration, sc.tactile_hz)
        half = 0.5 / sc.tactile_hz
        h, w = sc.tactile_shape
        recs = []
        counts: dict[str, list[int]] = {"left": [], "right": []}
        rngs = {side: _rng(sc.seed, f"tactile-{side}") for side in ("left", "right")}
        for tk in s:
            for side, dt in (("left", 0.0), ("right", half)):
                t_true = float(tk + dt)
                noise = None
                if sc.noise_sigma_tactile > 0:
                    noise = rngs[side].normal(0.0, 255.0 * sc.noise_sigma_tactile, (h, w))
                pix = render_tactile(gt, t_true, side, noise)
                recs.append(
                    WireRecord(StreamKind.TACTILE, t_true + sc.latency_tactile, tactile_payload(SENSOR_IDS[side], pix))
                )
                counts[side].append(int(np.count_nonzero(gt.blob_mask(t_true, side))))
        logs[StreamKind.TACTILE] = recs
        gt.tactile_counts = counts

    header = SessionHeader(
        session_id=f"sim-{sc.seed}",
        epoch=0.0,
        streams=tuple(sorted(logs)),
        tactile_shape=sc.tactile_shape if StreamKind.TACTILE in logs else (0, 0),
    )
    return RawSession(header, logs), gt


# ---------------------------------------------------- calibration sweep files


def gripper_sweep_samples(sc: SimScenario) -> list[tuple[int, float]]:
    """What the 1 cm calibration sweep records: (raw count, width), closing order."""
    gt = GroundTruth(sc)
    widths = sorted(sc.calibration_widths, reverse=True)
    raw = np.rint(gt.count_model(widths)).astype(np.int64) % COUNTS_PER_REV
    return [(int(r), float(w)) for r, w in zip(raw, widths)]


def write_calibration_inputs(sc: SimScenario, directory) -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    gs = d / "gripper_samples.txt"
    gs.write_text("# raw_count width_m\n" + "".join(f"{r} {w!r}\n" for r, w in gripper_sweep_samples(sc)))
    cr = d / "controller_recorded.txt"
    cr.write_text("# qw qx qy qz tx ty tz\n" + " ".join(repr(float(v)) for v in sc.mount_offset) + "\n")
    return gs, cr


def truth_text(gt: GroundTruth) -> str:
    extra = [
        f"# expected_delta = {gt.expected_delta!r}",
        f"# video_latency = {gt.video_latency!r}",
    ]
    return dump_scenario(gt.scenario) + "\n".join(extra) + "\n"


def load_truth(path) -> GroundTruth:
    return GroundTruth(load_scenario(path))


def scenario_with(sc: SimScenario, **changes) -> SimScenario:
    d = asdict(sc)
    d.update(changes)
    return SimScenario(**d)


def make_scenarios(base: SimScenario, seeds: Sequence[int]) -> list[SimScenario]:
    return [scenario_with(base, seed=int(s)) for s in seeds]


# ------------------------------------------------------------------ scoring


def score_against_truth(ep, gt: GroundTruth):
    """Compare an episode built from a simulated session with its truth.

    Episode frames sit on the video clock; the matching true time is the
    frame stamp minus the video latency.
    """
    from .geometry import quat_angle_array
    from .metrics import ErrorStats

    n = len(ep)
    latency_ms = abs(float(ep.provenance.get("latency_applied", "nan")) - gt.expected_delta) * 1e3
    if n == 0:
        nan3 = (math.nan,) * 3
        return ErrorStats(nan3, nan3, math.nan, math.nan, math.nan, latency_ms, 0)
    t_true = ep.frame_times - gt.video_latency
    poses = ep.poses
    err = np.abs(poses[:, 4:] - gt.tool_position(t_true)) * 1e3
    rot = np.degrees(quat_angle_array(poses[:, :4], gt.tool_orientation(t_true)))
    present = ep.width_present.astype(bool)
    if present.any():
        dw = (ep.widths[present] - gt.width(t_true[present])) * 1e3
        width_rms = float(np.sqrt(np.mean(dw * dw)))
    else:
        width_rms = math.nan
    return ErrorStats(
        tuple(float(v) for v in err.mean(axis=0)),
        tuple(float(v) for v in err.max(axis=0)),
        float(rot.mean()),
        float(rot.max()),
        width_rms,
        latency_ms,
        n,
    )


def truth_positions_mm(ep, gt: GroundTruth) -> np.ndarray:
    return gt.tool_position(ep.frame_times - gt.video_latency) * 1e3
