"""Temporal energy selective scaling (TESS) detection over a multi-frame unit.

Every pixel is processed independently:

1. z-score its temporal profile (population std; near-constant pixels become 0),
2. slide a window of ``W`` frames and take the energy difference between the
   front and rear halves, ``E = sum(front) - sum(rear)``, scaled by
   ``exp(|E / W|) - 1``,
3. slide a second window of ``W`` samples over that distance signal and keep
   the largest ``max - min`` together with the window start.

The largest response is the pixel's posterior intensity P and the window start
is its occurrence time T.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .core import DetectionUnitResult, FrameStack, Itp, StackError

__all__ = [
    "TessParams",
    "default_window",
    "standardize_temporal",
    "distance_signal",
    "peak_scan",
    "detect_unit",
]

STD_EPS = 1e-9
MU_CLAMP = 80.0
CHUNK_PIXELS = 4096


@dataclass(frozen=True)
class TessParams:
    """Detector settings.

    ``threshold=None`` keeps the raw P matrix (needed for ROC sweeps and
    trajectory extraction); a number binarizes P to {0, 255}.
    """

    window: int = 60
    threshold: float | None = None

    def validate(self, frames: int) -> None:
        w = self.window
        if w < 2 or w % 2:
            raise StackError(f"window must be even and >= 2, got {w}")
        if w > frames:
            raise StackError(f"window {w} exceeds the unit's {frames} frames")
        if self.threshold is not None and not self.threshold >= 0:
            raise StackError(f"threshold must be non-negative, got {self.threshold}")


def default_window(frames: int) -> int:
    """A tenth of the unit length, rounded down to an even count (minimum 2)."""
    w = frames // 10
    return max(2, w - w % 2)


def _sequential_sum(x: np.ndarray) -> np.ndarray:
    # Row-by-row accumulation keeps each pixel's rounding independent of how
    # many other pixels share the block.
    acc = x[0].copy()
    for row in x[1:]:
        acc += row
    return acc


def _zscore(x: np.ndarray) -> np.ndarray:
    """Column-wise z-score of an ``(N, M)`` float64 block."""
    n = x.shape[0]
    mean = _sequential_sum(x) / n
    dev = x - mean
    std = np.sqrt(_sequential_sum(dev * dev) / n)
    flat = std < STD_EPS
    std[flat] = 1.0
    dev /= std
    dev[:, flat] = 0.0
    return dev


def standardize_temporal(stack: FrameStack) -> FrameStack:
    n, h, w = stack.shape
    z = _zscore(stack.data.reshape(n, h * w).astype(np.float64))
    return FrameStack(z.reshape(n, h, w))


def _scale(energy: np.ndarray, window: int) -> np.ndarray:
    mu = np.minimum(np.abs(energy / window), MU_CLAMP)
    return energy * np.expm1(mu)


def distance_signal(profile, window: int) -> np.ndarray:
    """Scaled half-window energy difference of one temporal profile.

    Returns ``N - W + 1`` values; entry ``i`` compares ``profile[i:i+W/2]``
    (front) with ``profile[i+W/2:i+W]`` (rear).
    """
    values = profile.values if isinstance(profile, Itp) else profile
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if window < 2 or window % 2 or window > n:
        raise StackError(f"window must be even, >= 2 and <= {n}, got {window}")
    half = window // 2
    sums = sliding_window_view(values, half).sum(axis=-1)
    energy = sums[: n - window + 1] - sums[half:]
    return _scale(energy, window)


def peak_scan(distance, window: int) -> tuple[float, int]:
    """Largest ``max - min`` over all length-``window`` slices, and the first slice start achieving it."""
    d = np.asarray(distance, dtype=np.float64)
    if window < 1 or d.size < window:
        raise StackError(f"distance signal of length {d.size} is shorter than window {window}")
    views = sliding_window_view(d, window)
    spread = views.max(axis=-1) - views.min(axis=-1)
    at = int(np.argmax(spread))
    return float(spread[at]), at


def _detect_block(block: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """P and T for an ``(N, M)`` block of pixel profiles."""
    n, m = block.shape
    z = _zscore(block.astype(np.float64))
    csum = np.zeros((n + 1, m))
    np.cumsum(z, axis=0, out=csum[1:])
    del z
    half = window // 2
    length = n - window + 1
    front = csum[half : half + length] - csum[:length]
    rear = csum[window : window + length] - csum[half : half + length]
    dist = _scale(front - rear, window)
    del csum, front, rear
    if length < window:
        return np.zeros(m), np.zeros(m, dtype=np.int64)
    nwin = length - window + 1
    # For an even size the filter centred at index i covers [i - W/2, i + W/2 - 1].
    lo = window // 2
    hi = maximum_filter1d(dist, window, axis=0, mode="nearest")[lo : lo + nwin]
    hi -= minimum_filter1d(dist, window, axis=0, mode="nearest")[lo : lo + nwin]
    at = np.argmax(hi, axis=0)
    return hi[at, np.arange(m)], at.astype(np.int64)


def detect_unit(
    stack: FrameStack, params: TessParams = TessParams(), threads: int | None = 1
) -> DetectionUnitResult:
    """Run the detector on one unit.

    Pixels are split into fixed-size chunks; with ``threads > 1`` (or ``None``
    for all cores) chunks run on a thread pool. The output does not depend on
    the thread count.
    """
    params.validate(stack.frames)
    n, h, w = stack.shape
    flat = stack.data.reshape(n, h * w)
    starts = range(0, h * w, CHUNK_PIXELS)
    pos = np.empty(h * w)
    tim = np.empty(h * w, dtype=np.int64)

    def run(s: int) -> None:
        p, t = _detect_block(flat[:, s : s + CHUNK_PIXELS], params.window)
        pos[s : s + CHUNK_PIXELS] = p
        tim[s : s + CHUNK_PIXELS] = t

    workers = threads or os.cpu_count() or 1
    if workers == 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))

    raw = DetectionUnitResult(pos.reshape(h, w), tim.reshape(h, w))
    if params.threshold is None:
        return raw
    return raw.threshold(params.threshold)
