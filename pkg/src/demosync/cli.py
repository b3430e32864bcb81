"""``demosync`` command line.

Exit status: 0 on success, 1 on a domain or I/O error (one ``ERROR <code>
<context>`` line on stderr), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import signal
import sys
import threading
from pathlib import Path

import numpy as np

from . import calibration as calib
from .episode import PipelineConfig, build_episode, read_episode, read_manifest, usability_report, write_episode
from .errors import DemoSyncError, IoError, SessionFormatError
from .geometry import Trajectory1D
from .latency import AXES, LatencyConfig, LatencyEstimate, estimate_latency
from .metrics import emit_alignment_plot, emit_error_plot
from .protocol import StreamKind, iter_records, load_session, session_dir_default, write_session
from .sim import (
    SimScenario,
    generate_session,
    load_scenario,
    load_truth,
    score_against_truth,
    truth_positions_mm,
    truth_text,
    write_calibration_inputs,
)

log = logging.getLogger("demosync")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _out(args, text: str) -> None:
    if not args.quiet:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _write_or_print(args, text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------ track loading


def _log_path(path: str, kind: StreamKind) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / kind.log_name
    if not p.is_file():
        raise FileNotFoundError(str(p))
    return p


def _load_stream(path: str, kind: StreamKind):
    data = _log_path(path, kind).read_bytes()
    recs = [rec for _, rec in iter_records(data)]
    recs = [r for r in recs if r.kind == kind]
    if len(recs) < 2:
        raise SessionFormatError(f"{path}: fewer than two {kind.name} records")
    return recs


def _mocap_track(path: str, axis: str) -> Trajectory1D:
    recs = _load_stream(path, StreamKind.POSE)
    raw = np.frombuffer(b"".join(r.payload for r in recs), dtype="<f8").reshape(-1, 7)
    return Trajectory1D([r.t for r in recs], raw[:, 4 + AXES[axis]])


def _marker_track(path: str, axis: str) -> Trajectory1D:
    recs = _load_stream(path, StreamKind.MARKER)
    uv = np.frombuffer(b"".join(r.payload for r in recs), dtype="<f8").reshape(-1, 2)
    return Trajectory1D([r.t for r in recs], uv[:, 0 if axis == "x" else 1])


# --------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scenario:
        sc = load_scenario(args.scenario, **overrides)
    else:
        sc = SimScenario(**overrides)
    session, gt = generate_session(sc)
    out = Path(args.out) if args.out else session_dir_default() / session.header.session_id
    write_session(session, out)
    write_calibration_inputs(sc, out / "calibration")
    if args.truth:
        Path(args.truth).write_text(truth_text(gt))
    counts = " ".join(f"{k.name.lower()}={len(v)}" for k, v in sorted(session.logs.items()))
    _out(args, f"session={out} {counts}")
    return 0


def cmd_hub(args) -> int:
    from .hub import Hub, parse_endpoint

    host, port = parse_endpoint(args.listen)
    out = Path(args.out) if args.out else session_dir_default()
    hub = Hub(host, port, out, session_id=args.session_id).start()
    _out(args, f"listening={hub.address[0]}:{hub.address[1]} out={out}")
    done = threading.Event()
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: done.set())
    done.wait(args.duration)
    session = hub.stop()
    counts = " ".join(f"{k.name.lower()}={len(v)}" for k, v in sorted(session.logs.items()))
    drops = hub.counters.get("out_of_order_drops", 0)
    _out(args, f"session={out} {counts} out_of_order_drops={drops}")
    return 0


def _latency_config(args) -> LatencyConfig:
    return LatencyConfig(
        epsilon=args.epsilon,
        splits_M=args.splits,
        window_N=args.window,
        delta_min=args.min,
        delta_max=args.max,
        min_overlap_fraction=args.min_overlap,
    )


def cmd_calibrate_latency(args) -> int:
    f = _mocap_track(args.mocap, args.axis)
    g = _marker_track(args.marker, args.axis)
    est = estimate_latency(f, g, _latency_config(args), allow_flip=args.allow_flip)
    record = est.to_record()
    if args.output:
        Path(args.output).write_text(record + "\n")
    if args.plot:
        gg = Trajectory1D(g.times, -g.values) if est.flipped else g
        emit_alignment_plot(f, gg, est.delta_star, args.plot)
    _out(args, record)
    return 0


def cmd_calibrate_gripper(args) -> int:
    samples = calib.read_gripper_samples(args.samples)
    cal = calib.build_gripper_map(samples)
    calib.save_calibration(cal, args.output)
    lo, hi = cal.count_range
    _out(args, f"kind=gripper knots={len(cal.counts)} count_range={lo:g}:{hi:g} out={args.output}")
    return 0


def cmd_calibrate_controller(args) -> int:
    recorded = calib.read_recorded_transform(args.recorded)
    cal = calib.make_controller_calibration(recorded)
    calib.save_calibration(cal, args.output)
    _out(args, f"kind=controller out={args.output}")
    return 0


def _load_typed_cal(path: str, kind: type):
    cal = calib.load_calibration(path)
    if not isinstance(cal, kind):
        raise calib.CalibrationFormatError(f"{path}: not a {kind.__name__}")
    return cal


def _pipeline_config(args) -> PipelineConfig:
    latency = None
    if args.latency:
        text = Path(args.latency).read_text().strip()
        try:
            latency = LatencyEstimate.from_record(text.splitlines()[-1] if text else "")
        except ValueError as exc:
            raise calib.CalibrationFormatError(f"{args.latency}: {exc}") from None
    return PipelineConfig(
        gripper_cal=_load_typed_cal(args.gripper_cal, calib.GripperCalibration) if args.gripper_cal else None,
        controller_cal=_load_typed_cal(args.controller_cal, calib.ControllerCalibration),
        latency=latency,
        latency_config=_latency_config(args),
        allow_flip=args.allow_flip,
        tactile_tau=args.tau,
        tactile_hold_tolerance=args.hold_tolerance,
        curation_threshold=args.threshold,
    )


def cmd_process(args) -> int:
    cfg = _pipeline_config(args)
    session = load_session(args.session, strict=False)
    ep = build_episode(session, cfg)
    write_episode(ep, args.output)
    p = ep.provenance
    _out(
        args,
        f"episode={args.output} frames={len(ep)} dropped={p['frames_dropped']} "
        f"latency={float(p['latency_applied']):.6f} warnings={p['warnings']}",
    )
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.episode)
    if not (path / "manifest.txt").is_file():
        raise IoError(f"{path}: no episode manifest")
    sys.stdout.write(Path(path / "manifest.txt").read_text())
    read_manifest(path)
    ep = read_episode(path)
    n = len(ep)
    lines = [f"frames = {n}"]
    if n:
        ft = ep.frame_times
        lines.append(f"span_s = {ft[0]:.6f} {ft[-1]:.6f}")
        lines.append(f"median_frame_period_s = {float(np.median(np.diff(ft))) if n > 1 else 0.0:.6f}")
        pos = ep.poses[:, 4:]
        lines.append("position_min_m = " + " ".join(f"{v:.4f}" for v in pos.min(axis=0)))
        lines.append("position_max_m = " + " ".join(f"{v:.4f}" for v in pos.max(axis=0)))
        wp = ep.width_present.astype(bool)
        lines.append(f"width_present_fraction = {wp.mean():.4f}")
        if wp.any():
            lines.append(f"width_range_m = {np.nanmin(ep.widths):.4f} {np.nanmax(ep.widths):.4f}")
        lines.append(f"tactile_present_fraction = {ep.tactile_present_any().mean():.4f}")
        lines.append(f"active_tactile_fraction = {ep.active_frames().mean():.4f}")
    sys.stdout.write("# summary\n" + "\n".join(lines) + "\n")
    return 0


def cmd_report(args) -> int:
    paths = sorted(p for p in glob.glob(args.sessions) if os.path.isdir(p))
    if not paths:
        raise IoError(f"no sessions match {args.sessions!r}")
    cfg = _pipeline_config(args)
    stats = usability_report(paths, cfg)
    _write_or_print(args, stats.to_csv(), args.output)
    return 0


def cmd_eval(args) -> int:
    ep = read_episode(args.episode)
    gt = load_truth(args.truth)
    stats = score_against_truth(ep, gt)
    _write_or_print(args, stats.to_csv(), args.output)
    if args.plot:
        emit_error_plot(ep.frame_times, ep.poses[:, 4:] * 1e3, truth_positions_mm(ep, gt), args.plot)
    return 0


# ----------------------------------------------------------------- parser


def _add_latency_flags(p) -> None:
    p.add_argument("--axis", choices=sorted(AXES), default="x")
    p.add_argument("--min", type=float, default=-0.5, help="lower latency bound, seconds")
    p.add_argument("--max", type=float, default=0.5, help="upper latency bound, seconds")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--min-overlap", type=float, default=0.5)
    p.add_argument("--allow-flip", action="store_true", help="also try the mirrored marker axis")


def _add_pipeline_flags(p) -> None:
    p.add_argument("--gripper-cal")
    p.add_argument("--controller-cal", required=True)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--latency", help="file holding a calibrate-latency record")
    grp.add_argument("--auto-latency", action="store_true", help="estimate from the session sweep (default)")
    p.add_argument("--tau", type=float, default=0.06)
    p.add_argument("--hold-tolerance", type=float, default=0.1)
    p.add_argument("--threshold", type=float, default=0.01)
    _add_latency_flags(p)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="key = value file of flag defaults")
    common.add_argument("--quiet", action="store_true")

    ap = _Parser(prog="demosync", description="multi-sensor demo capture toolkit", parents=[common])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic session")
    p.add_argument("--scenario")
    p.add_argument("--out")
    p.add_argument("--truth")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hub", parents=[common], help="record sensor streams over TCP")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--out")
    p.add_argument("--duration", type=float, default=None, help="stop after N seconds")
    p.add_argument("--session-id")
    p.set_defaults(func=cmd_hub)

    p = sub.add_parser("calibrate-latency", parents=[common], help="estimate MoCap vs camera latency")
    p.add_argument("--mocap", required=True)
    p.add_argument("--marker", required=True)
    p.add_argument("--plot", help="write a before/after SVG")
    p.add_argument("-o", "--output")
    _add_latency_flags(p)
    p.set_defaults(func=cmd_calibrate_latency)

    p = sub.add_parser("calibrate-gripper", parents=[common])
    p.add_argument("--samples", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_calibrate_gripper)

    p = sub.add_parser("calibrate-controller", parents=[common])
    p.add_argument("--recorded", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_calibrate_controller)

    p = sub.add_parser("process", parents=[common], help="build an episode container")
    p.add_argument("--session", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("inspect", parents=[common])
    p.add_argument("episode")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("report", parents=[common], help="usability CSV over many sessions")
    p.add_argument("--sessions", required=True, help="glob of session directories")
    p.add_argument("-o", "--output")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", parents=[common], help="score an episode against simulator truth")
    p.add_argument("--episode", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_eval)
    return ap


def _config_defaults(path: str) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return 2
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        if args.config:
            # config values become defaults; explicit flags still win
            sub = parser._subparsers._group_actions[0].choices[args.command]
            defaults = _config_defaults(args.config)
            known = {a.dest: a for a in sub._actions}
            typed = {}
            for k, v in defaults.items():
                if k not in known:
                    raise UsageError(f"{args.config}: unknown key {k!r}")
                act = known[k]
                if act.type is not None:
                    v = act.type(v)
                elif isinstance(act, argparse._StoreTrueAction):
                    v = v.lower() in ("1", "true", "yes")
                typed[k] = v
            sub.set_defaults(**typed)
            args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"demosync: error: {exc}\n")
        return 2
    except SystemExit as exc:  # --help, or argparse internals
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DemoSyncError as exc:
        sys.stderr.write(exc.diagnostic() + "\n")
    except FileNotFoundError as exc:
        sys.stderr.write(f"ERROR FileNotFound {exc.filename or exc}\n")
    except OSError as exc:
        sys.stderr.write(f"ERROR IoError {exc.filename or ''} {exc.strerror or exc}\n")
    except (ValueError, KeyError, IndexError) as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"ERROR InvalidInput {type(exc).__name__}: {msg}\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
