"""Shared synthetic sweep tracks for latency tests."""

import numpy as np

from demosync.geometry import Trajectory1D


def sweep_pair(delay, seed=0, noise=0.01, duration=10.0, amp=0.2, scale=320.0):
    """f: 60 Hz sweep in meters; g: same motion seen delay later at 30 Hz, in px."""
    rng = np.random.default_rng(seed)
    tf = np.arange(int(duration * 60)) / 60.0
    tg = np.arange(int(duration * 30)) / 30.0
    f = amp * np.sin(2 * np.pi * tf) + rng.normal(0, noise * amp, tf.size)
    g = scale * (amp * np.sin(2 * np.pi * (tg - delay)) + rng.normal(0, noise * amp, tg.size))
    return Trajectory1D(tf, f), Trajectory1D(tg, g)


def brute_force_argmin(f, g, lo, hi, step, min_overlap=0.5):
    """Plain-loop MSE scan over a dense delta grid (no shared code with the library)."""
    fz = (f.values - f.values.mean()) / f.values.std(ddof=1)
    gz = (g.values - g.values.mean()) / g.values.std(ddof=1)
    g0, g1 = g.times[0], g.times[-1]
    n = int(round((hi - lo) / step))
    best_d, best_m = None, np.inf
    for k in range(n + 1):
        d = lo + k * step
        q = f.times + d
        ok = (q >= g0) & (q <= g1)
        if ok.sum() < min_overlap * f.times.size:
            continue
        m = np.mean((fz[ok] - np.interp(q[ok], g.times, gz)) ** 2)
        if m < best_m:
            best_d, best_m = d, m
    return best_d
