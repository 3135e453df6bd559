"""Dim moving-target detection over multi-frame units.

Pipeline: temporal energy detector (:mod:`tessdet.tess`) -> 3D Hough
trajectory extraction (:mod:`tessdet.hough3d`) -> trajectory tracker
(:mod:`tessdet.tracker`), with a synthetic scene generator
(:mod:`tessdet.synth`) and evaluation metrics (:mod:`tessdet.metrics`).
"""
from .core import DegenerateInputError, DetectionUnitResult, FrameStack, Itp, Rng, StackError, itp, make_stack, mix_seed
from .hough3d import HoughParams, TrajectoryLine, extract_lines, extract_trajectories, tessellate_directions
from .metrics import EvalReport, bsf, roc_auc, scrg, tpr_at_fpr, tpr_fpr, track_score
from .synth import Background, GroundTruth, SceneSpec, TargetSpec, calibrate_amplitude, ground_truth, render
from .tess import TessParams, detect_unit, distance_signal, peak_scan, standardize_temporal
from .tracker import Track, TrackerParams, Tracker, TrackObservation, assign, match_cost, observation_from_line, predict, step, update

__version__ = "0.1.0"
