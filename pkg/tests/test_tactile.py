import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from demosync.errors import EmptyChunk, ShapeMismatch, TooFewFrames
from demosync.sim import GroundTruth, SimScenario, reference_image, render_tactile
from demosync.tactile import (
    ReferenceFrame,
    TactileFrame,
    active_ratio,
    build_reference,
    chunks,
    curate_chunk,
    from_fixed_point,
    process_frame,
    rgb_to_gray,
    to_fixed_point,
)

SHAPE = (30, 40)
images = hnp.arrays(np.uint8, SHAPE)


def _gt(**kw):
    return GroundTruth(SimScenario(tactile_shape=SHAPE, **kw))


def test_reference_matches_naive_sum(rng):
    frames = [TactileFrame(i / 30, rng.integers(0, 256, SHAPE, dtype=np.uint8)) for i in range(12)]
    ref = build_reference(frames)
    h, w = SHAPE
    for y in range(0, h, 7):
        for x in range(0, w, 9):
            total = 0
            for f in frames:
                total += int(f.pixels[y, x])
            assert abs(ref.pixels[y, x] - total / len(frames)) < 1e-9


def test_reference_errors(rng):
    few = [TactileFrame(0.0, np.zeros(SHAPE, np.uint8))] * 3
    with pytest.raises(TooFewFrames):
        build_reference(few)
    mixed = [TactileFrame(0.0, np.zeros(SHAPE, np.uint8))] * 9 + [TactileFrame(0.0, np.zeros((2, 2), np.uint8))]
    with pytest.raises(ShapeMismatch):
        build_reference(mixed)
    ref = ReferenceFrame(np.zeros(SHAPE))
    with pytest.raises(ShapeMismatch):
        process_frame(TactileFrame(0.0, np.zeros((3, 3), np.uint8)), ref)


def test_blob_channels_match_pixel_loop():
    gt = _gt()
    ref = ReferenceFrame(reference_image(SHAPE).astype(float))
    frame = TactileFrame(2.0, render_tactile(gt, 2.0, "left", None))
    p = process_frame(frame, ref)
    tau = 0.06
    cvx = ccv = 0.0
    for y in range(SHAPE[0]):
        for x in range(SHAPE[1]):
            d = frame.pixels[y, x] / 255.0 - ref.pixels[y, x] / 255.0
            if d > tau:
                cvx += (d - tau) / (1 - tau)
            elif -d > tau:
                ccv += (-d - tau) / (1 - tau)
    assert abs(p.convex.sum() - cvx) < 1e-9
    assert abs(p.concave.sum() - ccv) < 1e-9
    # concave mass in the pressed centre, convex mass on the rim
    cy, cx = (SHAPE[0] - 1) * 0.5, (SHAPE[1] - 1) * 0.5
    assert p.concave[int(round(cy)), int(round(cx))] > 0
    assert p.convex[int(round(cy)), int(round(cx))] == 0


def test_active_ratio_equals_blob_pixel_count():
    gt = _gt()
    ref = ReferenceFrame(reference_image(SHAPE).astype(float))
    for side in ("left", "right"):
        mask = gt.blob_mask(2.0, side)
        p = process_frame(TactileFrame(2.0, render_tactile(gt, 2.0, side, None)), ref)
        assert active_ratio(p) == np.count_nonzero(mask) / mask.size


@settings(max_examples=200)
@given(images, images, st.floats(0.001, 0.5))
def test_disjoint_support(frame, ref, tau):
    p = process_frame(TactileFrame(0.0, frame), ReferenceFrame(ref.astype(float)), tau)
    assert not np.any((p.convex > 0) & (p.concave > 0))
    assert p.convex.min() >= 0 and p.concave.max() <= 1


@given(images, images, st.floats(0.01, 0.4), st.floats(0.01, 0.4))
def test_tau_monotone(frame, ref, t1, t2):
    lo, hi = sorted((t1, t2))
    r = ReferenceFrame(ref.astype(float))
    f = TactileFrame(0.0, frame)
    assert active_ratio(process_frame(f, r, hi)) <= active_ratio(process_frame(f, r, lo))


@given(images, images, st.integers(0, SHAPE[0] * SHAPE[1] - 1), st.integers(0, SHAPE[0] * SHAPE[1] - 1))
def test_pixelwise_local(frame, ref, i, j):
    def swap(a):
        a = a.copy().reshape(-1)
        a[i], a[j] = a[j], a[i]
        return a.reshape(SHAPE)

    base = process_frame(TactileFrame(0.0, frame), ReferenceFrame(ref.astype(float)))
    perm = process_frame(TactileFrame(0.0, swap(frame)), ReferenceFrame(swap(ref).astype(float)))
    for a, b in zip(base.stacked(), perm.stacked()):
        assert np.array_equal(swap(a), b)


def test_curation():
    gt = _gt()
    ref = ReferenceFrame(reference_image(SHAPE).astype(float))
    quiet = [process_frame(TactileFrame(t, render_tactile(gt, t, "left", None)), ref) for t in np.arange(8) / 30]
    assert not curate_chunk(quiet, 0.01)
    assert curate_chunk(quiet, 0.0)
    pressed = quiet[:7] + [process_frame(TactileFrame(2.0, render_tactile(gt, 2.0, "left", None)), ref)]
    assert curate_chunk(pressed, 0.01)
    with pytest.raises(EmptyChunk):
        curate_chunk([], 0.01)
    assert [len(c) for c in chunks(quiet + quiet[:3])] == [8, 3]


@given(hnp.arrays(np.float64, (5, 5), elements=st.floats(0, 1)))
def test_fixed_point_quantization(x):
    q = to_fixed_point(x)
    assert q.dtype == np.uint16
    assert np.all(np.abs(from_fixed_point(q) - x) <= 0.5 / 65535 + 1e-15)
    assert np.array_equal(to_fixed_point(from_fixed_point(q)), q)


def test_rgb_to_gray():
    rgb = np.zeros((1, 3, 3), np.uint8)
    rgb[0, 0] = (255, 255, 255)
    rgb[0, 1] = (255, 0, 0)
    assert rgb_to_gray(rgb).tolist() == [[255, 76, 0]]
