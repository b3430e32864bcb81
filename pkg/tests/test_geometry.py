import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from demosync.errors import OutOfDomain
from demosync.geometry import (
    Pose6D,
    PoseArrays,
    PoseSample,
    RigidTransform,
    Trajectory1D,
    UnitQuaternion,
    compose,
    interp_linear,
    interp_linear_many,
    interp_pose,
    interp_poses,
    invert,
    quat_angle,
    slerp,
)

from conftest import random_quats, transforms, unit_quaternions


def _same_rotation(a: UnitQuaternion, b: UnitQuaternion, tol=1e-9):
    return quat_angle(a, b) < tol


def _rotmat(q: UnitQuaternion) -> np.ndarray:
    # independent oracle: the textbook rotation matrix
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def test_interp_sine_matches_analytic():
    t = np.arange(101) / 100.0
    traj = Trajectory1D(t, np.sin(2 * np.pi * t))
    assert abs(interp_linear(traj, 0.3712) - math.sin(2 * math.pi * 0.3712)) < 2e-3


def test_interp_out_of_domain():
    traj = Trajectory1D([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(OutOfDomain):
        interp_linear(traj, 1.0000001)
    assert np.isnan(interp_linear_many(traj, np.array([-0.1, 0.5]))[0])


def test_trajectory_rejects_bad_input():
    with pytest.raises(ValueError):
        Trajectory1D([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        Trajectory1D([0.0, 1.0], [1.0, np.nan])


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40))
def test_interp_exact_at_knots_and_monotone(vals):
    t = np.arange(len(vals), dtype=float) * 0.37
    traj = Trajectory1D(t, vals)
    for ti, vi in zip(t, vals):
        assert interp_linear(traj, float(ti)) == vi
    mono = Trajectory1D(t, np.sort(vals))
    q = np.linspace(t[0], t[-1], 257)
    assert np.all(np.diff(interp_linear_many(mono, q)) >= 0)


def test_slerp_fraction_of_angle(rng):
    for q0, q1 in zip(random_quats(rng, 200), random_quats(rng, 200)):
        a, b = UnitQuaternion(*q0), UnitQuaternion(*q1)
        r = slerp(a, b, 0.25)
        assert abs(quat_angle(a, r) - 0.25 * quat_angle(a, b)) < 1e-9


@given(unit_quaternions(), unit_quaternions(), st.floats(0.0, 1.0))
def test_slerp_unit_norm_and_endpoints(a, b, u):
    assert abs(slerp(a, b, u).norm() - 1.0) < 1e-9
    assert _same_rotation(slerp(a, b, 0.0), a)
    assert _same_rotation(slerp(a, b, 1.0), b)


def test_slerp_tiny_angle_is_stable():
    a = UnitQuaternion()
    b = UnitQuaternion.from_axis_angle([0, 0, 1], 1e-9)
    r = slerp(a, b, 0.5)
    assert abs(r.norm() - 1.0) < 1e-12
    assert quat_angle(a, r) < 1e-9


def test_rotate_matches_matrix(rng):
    for q in random_quats(rng, 50):
        uq = UnitQuaternion(*q)
        v = rng.normal(size=3)
        assert np.allclose(uq.rotate(v), _rotmat(uq) @ v, atol=1e-12)


def test_compose_pointwise(rng):
    for _ in range(100):
        t1 = RigidTransform(UnitQuaternion(*random_quats(rng, 1)[0]), tuple(rng.normal(size=3)))
        t2 = RigidTransform(UnitQuaternion(*random_quats(rng, 1)[0]), tuple(rng.normal(size=3)))
        p = rng.normal(size=3)
        assert np.allclose(compose(t1, t2).apply(p), t1.apply(t2.apply(p)), atol=1e-9)


@given(transforms(), transforms(), transforms(), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_group_laws(a, b, c, p):
    lhs = compose(compose(a, b), c).apply(p)
    rhs = compose(a, compose(b, c)).apply(p)
    assert np.allclose(lhs, rhs, atol=1e-9)
    ident = compose(a, invert(a))
    assert np.allclose(ident.apply(p), p, atol=1e-9)
    assert quat_angle(ident.rotation, UnitQuaternion()) < 1e-7


@given(unit_quaternions())
def test_serialization_canonical(q):
    neg = UnitQuaternion(-q.w, -q.x, -q.y, -q.z)
    for src in (q, neg):
        arr = Pose6D((0.0, 0.0, 0.0), src.canonical()).as_array()
        back = Pose6D.from_array(arr).orientation
        assert back.w >= 0
        assert quat_angle(back, q) < 1e-9


def test_sinusoid_pose_resampling_error():
    t = np.arange(601) / 60.0
    x = 0.2 * np.sin(2 * np.pi * t)
    q = UnitQuaternion.from_axis_angle([0, 1, 0], 0.3)
    track = [PoseSample(float(ti), Pose6D((float(xi), 0.0, 0.0), q)) for ti, xi in zip(t, x)]
    ts = np.arange(0, 300) / 30.0 + 1 / 120.0
    quats, pos = interp_poses(PoseArrays.from_samples(track), ts)
    assert np.max(np.abs(pos[:, 0] - 0.2 * np.sin(2 * np.pi * ts))) < 1e-3
    for ti in ts[::37]:
        single = interp_pose(track, float(ti))
        assert np.allclose(single.position, pos[np.searchsorted(ts, ti)], atol=1e-15)


def test_interp_poses_returns_knots_verbatim(rng):
    n = 20
    arr = PoseArrays(np.arange(n) * 0.1, random_quats(rng, n), rng.normal(size=(n, 3)))
    quats, pos = interp_poses(arr, arr.times)
    assert np.array_equal(quats, arr.quats)
    assert np.array_equal(pos, arr.positions)
    with pytest.raises(OutOfDomain):
        interp_poses(arr, np.array([arr.times[-1] + 1e-9]))
