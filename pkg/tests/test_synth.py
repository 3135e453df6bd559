import math

import numpy as np
import pytest

from tessdet.core import DegenerateInputError, FrameStack, StackError
from tessdet.synth import (
    Background,
    SceneSpec,
    TargetSpec,
    accumulate,
    calibrate_amplitude,
    ground_truth,
    mean_scr,
    psf_patch,
    render,
    scr,
)


def test_psf_center_value():
    t = TargetSpec(5.0, 1.3, 0.7)
    patch, (x0, y0) = psf_patch(t, (10.0, 20.0), 3)
    assert patch.shape == (7, 7)
    assert (x0, y0) == (7, 17)
    assert patch[3, 3] == 5.0


def test_psf_one_sigma_offset():
    t = TargetSpec(2.0, 2.0, 1.0)
    patch, _ = psf_patch(t, (0.0, 0.0), 3)
    assert patch[3, 3 + 2] == pytest.approx(2.0 * math.exp(-0.5), rel=1e-15)


def test_psf_symmetric():
    patch, _ = psf_patch(TargetSpec(1.0, 1.1, 0.6), (4.0, 4.0), 4)
    assert np.array_equal(patch, patch[:, ::-1])
    assert np.array_equal(patch, patch[::-1, :])


def test_psf_subpixel_center():
    patch, (x0, y0) = psf_patch(TargetSpec(1.0, 1.0, 1.0), (2.5, 3.25), 2)
    xs = np.arange(x0, x0 + 5) - 2.5
    ys = np.arange(y0, y0 + 5) - 3.25
    expected = np.exp(-(xs[None, :] ** 2 + ys[:, None] ** 2) / 2)
    assert np.allclose(patch, expected, rtol=1e-14)


def test_psf_bad_extent():
    with pytest.raises(ValueError):
        psf_patch(TargetSpec(1.0), (0, 0), 0)


def test_target_and_scene_validation():
    with pytest.raises(ValueError):
        TargetSpec(0.0)
    with pytest.raises(ValueError):
        TargetSpec(1.0, sigma_x=0)
    with pytest.raises(ValueError):
        TargetSpec(1.0, start=(math.inf, 0))
    with pytest.raises(ValueError):
        SceneSpec(8, 8, 10, noise_sigma=-1)
    with pytest.raises(ValueError):
        SceneSpec(8, 8, 10, targets=(TargetSpec(1.0, birth_frame=5, death_frame=11),))


def test_render_constant_noiseless():
    stack, gt = render(SceneSpec(6, 5, 7, Background(level=42.0), 0.0))
    assert np.all(stack.data == 42.0)
    assert not gt.trajectory_mask().any()


def test_render_bump_unimodal():
    t = TargetSpec(10.0, 1.0, 1.0, (0.0, 3.0), (0.1, 0.0))
    stack, gt = render(SceneSpec(12, 7, 120, Background(level=100.0), 0.0, (t,)))
    series = stack.data[:, 3, 6].astype(np.float64) - 100
    peak = int(np.argmax(series))
    assert 50 <= peak <= 70  # centre passes x = 6 at frame 60
    assert np.all(np.diff(series[: peak + 1]) >= 0)
    assert np.all(np.diff(series[peak:]) <= 0)
    assert series[peak] == pytest.approx(10.0, rel=1e-6)


def test_render_deterministic_and_range_consistent():
    spec = SceneSpec(16, 12, 30, Background("drift", 50, amplitude=3, period=40), 2.0,
                     (TargetSpec(4.0, 1.0, 1.5, (2.0, 3.0), (0.3, 0.2)),), seed=11)
    a, _ = render(spec)
    b, _ = render(spec)
    assert np.array_equal(a.data, b.data)
    part, gt = render(spec, 10, 20)
    assert np.array_equal(part.data, a.data[10:20])
    assert gt.first_frame == 10
    assert np.array_equal(gt.centers, ground_truth(spec, 10, 20).centers)
    other, _ = render(SceneSpec(**{**spec.__dict__, "seed": 12}))
    assert not np.array_equal(other.data, a.data)


def test_render_bad_range():
    spec = SceneSpec(4, 4, 10)
    for start, stop in [(5, 5), (9, 10), (-1, 4), (0, 11)]:
        with pytest.raises(StackError):
            render(spec, start, stop)


def test_backgrounds():
    g, _ = render(SceneSpec(5, 4, 2, Background("gradient", 10, gradient=(1.0, 2.0)), 0.0))
    assert g.data[0, 3, 4] == 10 + 4 + 6
    d, _ = render(SceneSpec(8, 2, 3, Background("drift", 0, amplitude=2, period=4), 0.0))
    assert d.data[1, 0, 0] == pytest.approx(2 * math.sin(2 * math.pi / 4), abs=1e-6)
    with pytest.raises(ValueError):
        Background("wavy")


def test_lifetimes():
    t = TargetSpec(5.0, 1.0, 1.0, (4.0, 4.0), birth_frame=3, death_frame=6)
    stack, gt = render(SceneSpec(9, 9, 10, Background(level=0), 0.0, (t,)))
    alive = [gt.alive(0, i) for i in range(10)]
    assert alive == [False] * 3 + [True] * 3 + [False] * 4
    assert stack.data[2].max() == 0 and stack.data[3].max() == 5
    assert gt.mean_center(0, 0, 3) is None


def test_scr_examples():
    rng = np.random.default_rng(0)
    frame = rng.normal(size=(10, 10))
    tm = np.zeros((10, 10), bool)
    tm[4:6, 4:6] = True
    same = frame.copy()
    same[tm] = frame[~tm].mean()
    assert scr(same, tm, ~tm) == pytest.approx(0.0, abs=1e-12)
    # target mean 10, background mean 4 with std 2
    f = np.array([10.0, 10.0, 2.0, 6.0, 2.0, 6.0])
    t = np.array([1, 1, 0, 0, 0, 0], bool)
    assert scr(f, t, ~t) == pytest.approx(3.0)
    assert scr(frame * 7.5, tm, ~tm) == pytest.approx(scr(frame, tm, ~tm))
    with pytest.raises(DegenerateInputError):
        scr(np.ones(4), t[:4], ~t[:4])
    with pytest.raises(DegenerateInputError):
        scr(frame, np.zeros_like(tm), ~tm)


def test_accumulate():
    s = FrameStack(np.arange(24, dtype=float).reshape(4, 2, 3))
    assert np.array_equal(accumulate(s, 1), s.data[0])
    c = FrameStack(np.full((6, 3, 3), 2.5))
    assert np.all(accumulate(c, 4) == 10.0)
    for k in (0, 7):
        with pytest.raises(StackError):
            accumulate(c, k)


def test_noise_statistics():
    spec = SceneSpec(12, 10, 1000, Background(level=20.0), 3.0, seed=5)
    stack, _ = render(spec)
    d = stack.data.astype(np.float64)
    mean, std = d.mean(axis=0), d.std(axis=0)
    n = 1000
    # 3-sigma sampling bounds for the mean and for the standard deviation
    assert np.abs(mean - 20).max() < 3 * 3.0 / math.sqrt(n) * 1.5  # max over 120 pixels
    assert np.abs(std - 3).max() < 3 * 3.0 / math.sqrt(2 * n) * 1.5


def test_dwell_matches_noiseless_bump_support():
    t = TargetSpec(8.0, 1.2, 0.8, (3.3, 6.1), (0.21, 0.07))
    spec = SceneSpec(20, 14, 60, Background(level=0.0), 0.0, (t,), mask_epsilon=0.05)
    stack, gt = render(spec)
    first, last = gt.dwell_intervals()
    thr = 0.05 * 8.0
    for y in range(14):
        for x in range(20):
            on = np.flatnonzero(stack.data[:, y, x].astype(np.float64) >= thr * (1 - 1e-6))
            if first[y, x] < 0:
                assert len(on) == 0
            else:
                assert on[0] == first[y, x] and on[-1] == last[y, x]
                assert len(on) == last[y, x] - first[y, x] + 1


def test_boundary_mask():
    t = TargetSpec(8.0, 0.4, 0.4, (0.0, 2.0), (0.1, 0.0))
    gt = ground_truth(SceneSpec(12, 5, 100, targets=(t,)))
    b = gt.boundary_mask(10)
    assert b[2, 0] and b[2, 1] and b[2, 9]
    assert not b[2, 4]
    assert not (b & ~gt.trajectory_mask()).any()


def test_sqrt_k_gain_small():
    ks = (4, 16)
    s1, sk = 0.0, {k: 0.0 for k in ks}
    for seed in range(30):
        spec = SceneSpec(24, 24, 16, Background(level=10.0), 1.0, (TargetSpec(2.0, 1.0, 1.0, (12.0, 12.0)),), seed=seed)
        stack, gt = render(spec)
        m = gt.frame_mask(0)
        s1 += scr(accumulate(stack, 1), m, ~m)
        for k in ks:
            sk[k] += scr(accumulate(stack, k), m, ~m)
    for k in ks:
        assert sk[k] / s1 == pytest.approx(math.sqrt(k), rel=0.15)


def test_calibrate_amplitude():
    spec = SceneSpec(40, 40, 12, Background(level=100.0), 2.0,
                     (TargetSpec(1.0, 1.0, 1.0, (20.0, 20.0), (0.5, 0.0)),), seed=3)
    cal = calibrate_amplitude(spec, 1.5)
    stack, gt = render(cal)
    assert mean_scr(stack, gt) == pytest.approx(1.5, abs=1e-4)
    with pytest.raises(DegenerateInputError):
        calibrate_amplitude(SceneSpec(4, 4, 4), 1.0)
