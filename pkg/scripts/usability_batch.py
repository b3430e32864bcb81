"""Simulate a batch of sessions on disk, optionally damage some, and report usability.

    python3 scripts/usability_batch.py --sessions 20 --damage 3 --workdir /tmp/batch
"""

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

from demosync.calibration import build_gripper_map, make_controller_calibration
from demosync.episode import PipelineConfig, usability_report
from demosync.geometry import RigidTransform
from demosync.protocol import StreamKind, write_session
from demosync.sim import SimScenario, generate_session, gripper_sweep_samples


def damage(d: Path, rng: np.random.Generator) -> str:
    """Apply one random fault to a session directory; returns its name."""
    kind = rng.choice(["truncate", "drop_encoder", "drop_pose"])
    if kind == "truncate":
        p = d / StreamKind.POSE.log_name
        data = p.read_bytes()
        p.write_bytes(data[: len(data) - int(rng.integers(1, 60))])
    elif kind == "drop_encoder":
        (d / StreamKind.ENCODER.log_name).unlink()
        hdr = d / "header.txt"
        hdr.write_text(hdr.read_text().replace(" ENCODER", ""))
    else:
        (d / StreamKind.POSE.log_name).unlink()
    return str(kind)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sessions", type=int, default=20)
    ap.add_argument("--damage", type=int, default=0, help="number of sessions to damage")
    ap.add_argument("--workdir", default="usability_batch")
    ap.add_argument("--tactile-shape", type=int, nargs=2, default=[60, 80])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-o", "--output")
    args = ap.parse_args(argv)

    work = Path(args.workdir)
    if work.exists():
        shutil.rmtree(work)
    rng = np.random.default_rng(args.seed)
    dirs = []
    base = None
    for i in range(args.sessions):
        sc = SimScenario(seed=args.seed + i, latency_pose=float(rng.uniform(-0.3, 0.3)), tactile_shape=tuple(args.tactile_shape))
        base = base or sc
        session, _ = generate_session(sc)
        dirs.append(write_session(session, work / f"session_{i:03d}"))
    for d in rng.choice(dirs, size=min(args.damage, len(dirs)), replace=False):
        print(f"{d.name}: {damage(Path(d), rng)}", file=sys.stderr)

    cfg = PipelineConfig(
        gripper_cal=build_gripper_map(gripper_sweep_samples(base)),
        controller_cal=make_controller_calibration(RigidTransform.from_array(base.mount_offset)),
    )
    stats = usability_report(dirs, cfg)
    text = stats.to_csv()
    if args.output:
        open(args.output, "w").write(text)
    else:
        sys.stdout.write(text)
    print(f"usable_fraction={stats.usable_fraction:.3f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
