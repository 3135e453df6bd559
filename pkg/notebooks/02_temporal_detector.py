"""
Temporal profile detection
==========================

Every pixel's time series is standardized, turned into a windowed
front-minus-rear distance signal, and scanned for its largest swing. The
swing is the pixel's score P and the window where it happens is T.
"""

# %%
import numpy as np

from tessdet.core import make_stack
from tessdet.metrics import roc_auc, scrg, tpr_at_fpr
from tessdet.synth import Background, SceneSpec, TargetSpec, calibrate_amplitude, render
from tessdet.tess import TessParams, detect_unit, distance_signal, peak_scan

# %%
# One pixel by hand: a step up produces a large negative distance (the rear
# half is brighter than the front half) when the window straddles it.
pixel = make_stack(1, 1, 12, [0, 0, 0, 0, 0, 0, 5, 5, 5, 5, 5, 5])
z = (pixel.itp(0, 0).values - 2.5) / 2.5
d = distance_signal(z, 4)
print("D:", np.round(d, 2))
print("(P, T):", peak_scan(d, 4))

# %%
# A dim target: one-pixel-wide PSF crossing a pixel every ~30 frames.
spec = SceneSpec(128, 128, 300, Background(level=100.0), 1.0,
                 (TargetSpec(1.0, 0.4, 0.4, (60.0, 64.0), (1 / 30, 0.0)),), seed=3)
spec = calibrate_amplitude(spec, 1.0)
stack, truth = render(spec)
result = detect_unit(stack, TessParams(window=60))
print("P range %.2f .. %.2f" % (result.position.min(), result.position.max()))

# %%
# Pixels whose passage touches either end of the unit cannot be seen by a
# window centred on them, so they are scored as "don't care".
mask = truth.trajectory_mask()
ignore = truth.boundary_mask(30)
_, auc = roc_auc(result.position, mask, ignore)
tpr, theta = tpr_at_fpr(result.position, mask, 0.005, ignore)
print(f"AUC {auc:.4f}, TPR {tpr:.2f} at FPR <= 0.005 (threshold {theta:.1f})")

# %%
# T follows the motion: along the path it increases from left to right.
ys, xs = np.nonzero(mask & ~ignore)
order = np.argsort(xs)
print("x:", xs[order][:8], "T:", result.time[ys[order], xs[order]][:8])

# %%
# Contrast gain of the score map over the input frames.
print("SCRG %.1f" % scrg(stack, result.position, truth))

# %%
# A fixed threshold gives the binary map; threads never change the output.
binary = result.threshold(theta)
again = detect_unit(stack, TessParams(window=60, threshold=theta), threads=4)
print("identical with 4 workers:", np.array_equal(binary.position, again.position))
