"""
Synthetic infrared scenes
=========================

Render a dim target over noise, measure its signal-to-clutter ratio, and
watch frame accumulation raise that ratio by roughly sqrt(K).
"""

# %%
# A scene is a frozen description: size, background, noise and targets.
# Rendering is deterministic for a given seed.
import math

import numpy as np

from tessdet.synth import Background, SceneSpec, TargetSpec, accumulate, calibrate_amplitude, mean_scr, render, scr

target = TargetSpec(amplitude=3.0, sigma_x=1.0, sigma_y=1.0, start=(20.0, 32.0), velocity=(0.2, 0.05))
spec = SceneSpec(64, 64, 200, Background(level=100.0), noise_sigma=1.0, targets=(target,), seed=7)
stack, truth = render(spec)
print(stack, "value range", stack.data.min(), stack.data.max())

# %%
# Ground truth comes with the render: per-frame centres, per-frame masks and
# the dwell interval of every pixel the target passes over.
print("centre at frame 0 and 199:", truth.centers[0, 0], truth.centers[0, -1])
print("trajectory pixels:", int(truth.trajectory_mask().sum()))
first, last = truth.dwell_intervals()
dwell = (last - first + 1)[first >= 0]
print("median dwell (frames/pixel):", float(np.median(dwell)))

# %%
# SCR of a single frame and the average over the sequence.
m = truth.frame_mask(0)
print("SCR frame 0: %.3f   mean SCR: %.3f" % (scr(stack.data[0], m, ~m), mean_scr(stack, truth)))

# %%
# Amplitudes are usually chosen through the SCR they produce.
dim = calibrate_amplitude(spec, 1.0)
print("amplitude for mean SCR 1.0: %.4f" % dim.targets[0].amplitude)

# %%
# Summing K frames of a stationary target grows the signal K times and the
# noise sqrt(K) times.
ratios = {k: [] for k in (4, 16, 64)}
for seed in range(40):
    still = SceneSpec(24, 24, 64, Background(level=100.0), 1.0,
                      (TargetSpec(2.0, 1.0, 1.0, (12.0, 12.0)),), seed=seed)
    s, gt = render(still)
    mk = gt.frame_mask(0)
    base = scr(accumulate(s, 1), mk, ~mk)
    for k in ratios:
        ratios[k].append((scr(accumulate(s, k), mk, ~mk), base))
for k, pairs in ratios.items():
    got = sum(a for a, _ in pairs) / sum(b for _, b in pairs)
    print(f"K={k:2d}: gain {got:.2f}  (sqrt K = {math.sqrt(k):.0f})")
