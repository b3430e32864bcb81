"""Simulator scenarios and matching pipeline configs for tests."""

from demosync.calibration import build_gripper_map, make_controller_calibration
from demosync.episode import PipelineConfig
from demosync.geometry import RigidTransform
from demosync.sim import SimScenario, gripper_sweep_samples

SMALL = (24, 32)


def small_scenario(**kw):
    kw.setdefault("tactile_shape", SMALL)
    return SimScenario(**kw)


def pipeline_config(sc, **kw):
    return PipelineConfig(
        gripper_cal=build_gripper_map(gripper_sweep_samples(sc)),
        controller_cal=make_controller_calibration(RigidTransform.from_array(sc.mount_offset)),
        **kw,
    )
