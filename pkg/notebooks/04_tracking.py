"""
Tracking trajectories across units
==================================

Each detection unit yields one observation per extracted line: its centre
and its displacement over the unit. A constant-velocity Kalman filter per
track, Hungarian assignment, and a Tentative/Confirmed/Deleted lifecycle
stitch the units together.
"""

# %%
import numpy as np

from tessdet.hough3d import HoughParams, extract_trajectories
from tessdet.metrics import track_score
from tessdet.synth import Background, SceneSpec, TargetSpec, render
from tessdet.tess import TessParams, detect_unit
from tessdet.tracker import (
    Track,
    Tracker,
    TrackerParams,
    TrackObservation,
    assign,
    match_cost,
    observation_from_line,
    predict,
    update,
)

# %%
# The filter: state (x, y, vx, vy) in pixels and pixels per unit.
t = Track(0, np.array([10.0, 10.0, 2.0, -1.0]), 10 * np.eye(4))
t = predict(t)
print("predicted", t.state)
t = update(t, TrackObservation((12.5, 8.8), (2.1, -1.0), 1))
print("updated  ", np.round(t.state, 3), "variances", np.round(np.diag(t.covariance), 3))

# %%
# Costs mix distance with velocity heading; assignment is minimum total
# cost with a gate.
p = TrackerParams()
print("opposite heading costs", match_cost(t, TrackObservation((12.0, 9.0), (-2.0, 1.0), 1), p))
print(assign([[1, 10], [10, 1]], gate=100))
print(assign([[1, 500]], gate=100))

# %%
# Two crossing targets and a third one well away from them.
unit = 500
spec = SceneSpec(220, 220, 6 * unit, Background(level=100.0), 1.0, (
    TargetSpec(8.0, 1.0, 1.0, (20.0, 45.0), (0.05, 0.05)),
    TargetSpec(8.0, 1.0, 1.0, (20.0, 170.0), (0.05, -0.05)),
    TargetSpec(8.0, 1.0, 1.0, (200.0, 25.0), (0.0, 0.06)),
), seed=1)
tracker = Tracker()
truth = []
for u in range(6):
    stack, gt = render(spec, u * unit, (u + 1) * unit)
    raw = detect_unit(stack, TessParams(window=50))
    _, lines = extract_trajectories(
        raw, HoughParams(min_votes=60, min_points=60, time_scale=0.1, inlier_tolerance=3), pre_threshold=50)
    events = tracker.step([observation_from_line(ln, None, u, unit) for ln in lines], u)
    truth.append({k: gt.mean_center(k) for k in range(3)})
    print(f"unit {u}:", ", ".join(f"{e.id}:{e.kind}" for e in events))

# %%
score = track_score(tracker.reports, truth)
print("confirmed:", [tr.id for tr in tracker.confirmed()])
print("per-target TPR", score.tpr, "track FPR", score.overall_fpr, "id swaps", score.id_swaps)
