import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demosync.errors import DegenerateSignal, NoValidOffset
from demosync.geometry import Pose6D, PoseSample, Trajectory1D, UnitQuaternion
from demosync.latency import (
    LatencyConfig,
    LatencyEstimate,
    apply_latency,
    estimate_latency,
    extract_axis,
    mse_curve,
    zscore_normalize,
)

from _tracks import brute_force_argmin, sweep_pair

EPS = LatencyConfig().epsilon


def test_extract_axis_is_exact_copy():
    t = np.arange(100) / 60.0
    x = 0.2 * np.sin(2 * np.pi * t)
    track = [PoseSample(float(a), Pose6D((float(b), 1.0, 2.0), UnitQuaternion())) for a, b in zip(t, x)]
    tr = extract_axis(track, "x")
    assert np.array_equal(tr.values, x)
    assert np.array_equal(tr.times, t)


@given(st.floats(0.01, 100.0) | st.floats(-100.0, -0.01), st.floats(-1e3, 1e3))
def test_zscore_affine_invariance(a, b):
    base = Trajectory1D(np.arange(50.0), np.sin(np.arange(50.0) * 0.7))
    zs = zscore_normalize(base).values
    za = zscore_normalize(Trajectory1D(base.times, a * base.values + b)).values
    assert np.allclose(za, np.sign(a) * zs, atol=1e-9)


def test_zscore_degenerate():
    with pytest.raises(DegenerateSignal):
        zscore_normalize(Trajectory1D([0.0, 1.0, 2.0], [3.0, 3.0, 3.0]))


def test_recovers_known_delay():
    f, g = sweep_pair(0.137, seed=1)
    est = estimate_latency(f, g)
    assert abs(est.delta_star - 0.137) < 0.005
    assert est.final_width < EPS
    assert est.passes <= LatencyConfig().max_passes()


@pytest.mark.parametrize("seed", range(5))
def test_matches_dense_grid_oracle(seed):
    d = np.random.default_rng(seed).uniform(-0.4, 0.4)
    f, g = sweep_pair(d, seed=seed)
    est = estimate_latency(f, g)
    lo, hi = est.delta_star - 0.01, est.delta_star + 0.01
    oracle = brute_force_argmin(f, g, lo, hi, 5e-5)
    assert abs(est.delta_star - oracle) < EPS


def test_fixed_point_after_correction():
    f, g = sweep_pair(0.137, seed=2)
    est = estimate_latency(f, g)
    again = estimate_latency(f.shifted(est.delta_star), g)
    assert abs(again.delta_star) < EPS


def test_convergence_bound():
    cfg = LatencyConfig()
    f, g = sweep_pair(-0.21, seed=3)
    est = estimate_latency(f, g, cfg)
    width = cfg.delta_max - cfg.delta_min
    for _ in range(est.passes):
        width *= 2 * cfg.window_N / cfg.splits_M
    assert est.final_width <= width * (1 + 1e-9)
    assert est.passes <= math.ceil(math.log((cfg.delta_max - cfg.delta_min) / cfg.epsilon, cfg.splits_M / (2 * cfg.window_N))) + 1


@settings(max_examples=25)
@given(st.floats(-0.2, 0.2), st.floats(-0.15, 0.15))
def test_shift_equivariance(d, s):
    f, g = sweep_pair(d, seed=4)
    base = estimate_latency(f, g).delta_star
    moved = estimate_latency(f, g.shifted(s)).delta_star
    assert abs(moved - (base + s)) < 2 * EPS


@settings(max_examples=25)
@given(st.floats(1e-3, 1e3))
def test_scale_invariance(a):
    f, g = sweep_pair(0.05, seed=5)
    base = estimate_latency(f, g).delta_star
    scaled = estimate_latency(f, Trajectory1D(g.times, a * g.values)).delta_star
    assert abs(scaled - base) < EPS


def test_flip_detection():
    # a pure sinusoid mirrors onto a half-period shift, so use an aperiodic path
    tf = np.arange(600) / 60.0
    tg = np.arange(300) / 30.0

    def path(t):
        return np.sin(2 * np.pi * t) + 0.8 * np.sin(2 * np.pi * 0.23 * t + 0.4)

    f = Trajectory1D(tf, path(tf))
    mirrored = Trajectory1D(tg, -320.0 * path(tg - 0.1))
    plain = estimate_latency(f, mirrored)
    flipped = estimate_latency(f, mirrored, allow_flip=True)
    assert flipped.flipped
    assert abs(flipped.delta_star - 0.1) < 0.005
    assert flipped.residual_mse < plain.residual_mse


def test_no_valid_offset():
    f = Trajectory1D(np.arange(60) / 60.0, np.sin(np.arange(60)))
    g = Trajectory1D(np.arange(30) / 30.0 + 50.0, np.cos(np.arange(30)))
    with pytest.raises(NoValidOffset):
        estimate_latency(f, g)


def test_mse_curve_overlap_exclusion():
    f, g = sweep_pair(0.0, seed=7, duration=2.0)
    mse, frac = mse_curve(zscore_normalize(f), zscore_normalize(g), np.array([0.0, 1.5]), 0.5)
    assert np.isfinite(mse[0]) and frac[0] > 0.99
    assert np.isinf(mse[1])


def test_config_validation():
    with pytest.raises(ValueError):
        LatencyConfig(epsilon=0)
    with pytest.raises(ValueError):
        LatencyConfig(delta_min=1, delta_max=0)
    with pytest.raises(ValueError):
        LatencyConfig(splits_M=4, window_N=2)


def test_record_round_trip():
    est = LatencyEstimate(0.1 + 1e-17, 0.25, 0.9, 4, 3e-5, True)
    assert LatencyEstimate.from_record(est.to_record()) == est
    with pytest.raises(ValueError):
        LatencyEstimate.from_record("residual_mse=1")


def test_apply_latency_round_trip():
    track = [PoseSample(t, Pose6D()) for t in np.linspace(0, 3, 50).tolist()]
    back = apply_latency(apply_latency(track, 0.1), -0.1)
    # float addition is not invertible bit-for-bit; a few ulp is the contract
    for a, b in zip(track, back):
        assert abs(a.t - b.t) <= 4 * np.spacing(max(abs(a.t), 1.0))
    assert apply_latency(track, 0.0) == track
