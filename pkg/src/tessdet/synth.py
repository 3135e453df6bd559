"""Ground-truthed synthetic scenes: Gaussian-PSF targets over a background plus white noise.

A frame is ``background(f) + sum of alive target PSFs + N(0, sigma_N^2)``.
PSFs are point-sampled at pixel centres (pixel ``(x, y)`` sits at integer
coordinates). Noise for frame ``f`` comes from its own child stream
``Rng(mix_seed(seed, f))``, so any frame range renders bit-identically to the
same frames of a full render.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .core import DegenerateInputError, FrameStack, Rng, StackError, mix_seed

__all__ = [
    "Background",
    "TargetSpec",
    "SceneSpec",
    "GroundTruth",
    "psf_patch",
    "ground_truth",
    "render",
    "scr",
    "mean_scr",
    "accumulate",
    "calibrate_amplitude",
]

# PSF samples below this fraction of the amplitude are not rendered.
RENDER_CUTOFF = 1e-6


@dataclass(frozen=True)
class Background:
    """``constant``: level; ``gradient``: level + gx*x + gy*y;
    ``drift``: level + amplitude*sin(2*pi*(f/period + x/width)), a slow travelling swell."""

    kind: str = "constant"
    level: float = 100.0
    gradient: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.0
    period: float = 1000.0

    def __post_init__(self):
        if self.kind not in ("constant", "gradient", "drift"):
            raise ValueError(f"unknown background kind {self.kind!r}")
        if self.kind == "drift" and self.period <= 0:
            raise ValueError("drift period must be positive")


@dataclass(frozen=True)
class TargetSpec:
    amplitude: float
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    start: tuple[float, float] = (0.0, 0.0)
    velocity: tuple[float, float] = (0.0, 0.0)
    birth_frame: int = 0
    death_frame: int | None = None  # exclusive; None means end of scene

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"target amplitude must be positive, got {self.amplitude}")
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("PSF sigmas must be positive")
        if not all(math.isfinite(v) for v in (*self.start, *self.velocity)):
            raise ValueError("target path must be finite")

    def alive(self, f: int, frames: int) -> bool:
        end = frames if self.death_frame is None else self.death_frame
        return self.birth_frame <= f < end

    def center(self, f: float) -> tuple[float, float]:
        dt = f - self.birth_frame
        return (self.start[0] + self.velocity[0] * dt, self.start[1] + self.velocity[1] * dt)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    frames: int
    background: Background = Background()
    noise_sigma: float = 1.0
    targets: tuple[TargetSpec, ...] = ()
    seed: int = 0
    mask_epsilon: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.width < 1 or self.height < 1 or self.frames < 2:
            raise ValueError(f"bad scene size {self.width}x{self.height}x{self.frames}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 < self.mask_epsilon < 1:
            raise ValueError("mask_epsilon must lie in (0, 1)")
        for t in self.targets:
            end = self.frames if t.death_frame is None else t.death_frame
            if not 0 <= t.birth_frame <= end <= self.frames:
                raise ValueError(f"target lifetime [{t.birth_frame}, {end}) outside scene")


def psf_patch(target: TargetSpec, center: tuple[float, float], extent: int):
    """Sample the target PSF on the ``(2*extent+1)``-square pixel grid around ``center``.

    Returns ``(patch, (x0, y0))`` where ``patch[j, i]`` is the value at pixel
    ``(x0 + i, y0 + j)``.
    """
    if extent < 1:
        raise ValueError("extent must be >= 1")
    cx, cy = center
    x0 = int(round(cx)) - extent
    y0 = int(round(cy)) - extent
    xs = np.arange(x0, x0 + 2 * extent + 1) - cx
    ys = np.arange(y0, y0 + 2 * extent + 1) - cy
    gx = np.exp(-(xs**2) / (2 * target.sigma_x**2))
    gy = np.exp(-(ys**2) / (2 * target.sigma_y**2))
    return target.amplitude * np.outer(gy, gx), (x0, y0)


def _extent(target: TargetSpec, fraction: float) -> int:
    r = math.sqrt(2 * math.log(1 / fraction)) * max(target.sigma_x, target.sigma_y)
    return max(1, math.ceil(r))


def _paste(img: np.ndarray, patch: np.ndarray, origin: tuple[int, int], op) -> None:
    h, w = img.shape
    x0, y0 = origin
    ph, pw = patch.shape
    xa, ya = max(x0, 0), max(y0, 0)
    xb, yb = min(x0 + pw, w), min(y0 + ph, h)
    if xa >= xb or ya >= yb:
        return
    op(img[ya:yb, xa:xb], patch[ya - y0 : yb - y0, xa - x0 : xb - x0])


def _add_into(dst, src):
    np.add(dst, src, out=dst)


def _or_into(dst, src):
    np.logical_or(dst, src, out=dst)


def _background_frame(bg: Background, f: int, w: int, h: int) -> np.ndarray:
    if bg.kind == "constant":
        return np.full((h, w), bg.level, dtype=np.float64)
    if bg.kind == "gradient":
        gx, gy = bg.gradient
        return (bg.level + gx * np.arange(w)[None, :] + gy * np.arange(h)[:, None]).astype(np.float64)
    phase = 2 * np.pi * (f / bg.period + np.arange(w) / w)
    return np.broadcast_to(bg.level + bg.amplitude * np.sin(phase)[None, :], (h, w)).copy()


@dataclass
class GroundTruth:
    """Analytic target paths for a rendered frame range.

    ``centers[k, i]`` is target ``k``'s centre at frame ``first_frame + i``
    (NaN while the target is not alive).
    """

    spec: SceneSpec
    first_frame: int
    centers: np.ndarray
    _masks: dict = field(default_factory=dict, repr=False)

    @property
    def frames(self) -> int:
        return self.centers.shape[1]

    def alive(self, k: int, i: int) -> bool:
        return bool(np.isfinite(self.centers[k, i, 0]))

    def target_mask(self, k: int, i: int) -> np.ndarray:
        """Pixels receiving at least ``mask_epsilon`` of target ``k``'s peak at local frame ``i``."""
        spec = self.spec
        mask = np.zeros((spec.height, spec.width), dtype=bool)
        if not self.alive(k, i):
            return mask
        t = spec.targets[k]
        patch, origin = psf_patch(t, tuple(self.centers[k, i]), _extent(t, spec.mask_epsilon) + 1)
        _paste(mask, patch >= spec.mask_epsilon * t.amplitude, origin, _or_into)
        return mask

    def frame_mask(self, i: int) -> np.ndarray:
        if i not in self._masks:
            mask = np.zeros((self.spec.height, self.spec.width), dtype=bool)
            for k in range(len(self.spec.targets)):
                mask |= self.target_mask(k, i)
            self._masks[i] = mask
        return self._masks[i]

    def trajectory_mask(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Union of the frame masks over local frames ``[start, stop)``."""
        stop = self.frames if stop is None else stop
        mask = np.zeros((self.spec.height, self.spec.width), dtype=bool)
        for i in range(start, stop):
            mask |= self.frame_mask(i)
        return mask

    def dwell_intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel first and last local frame inside any target mask (-1 where never)."""
        h, w = self.spec.height, self.spec.width
        first = np.full((h, w), -1, dtype=np.int64)
        last = np.full((h, w), -1, dtype=np.int64)
        for i in range(self.frames):
            m = self.frame_mask(i)
            first[m & (first < 0)] = i
            last[m] = i
        return first, last

    def boundary_mask(self, margin: int) -> np.ndarray:
        """Target pixels whose dwell interval reaches into the first or last ``margin`` frames.

        A temporal detector with half-window ``margin`` cannot see both sides of
        such a passage, so these pixels are usually excluded from scoring.
        """
        first, last = self.dwell_intervals()
        touched = first >= 0
        return touched & ((first < margin) | (last >= self.frames - margin))

    def mean_center(self, k: int, start: int = 0, stop: int | None = None) -> np.ndarray | None:
        c = self.centers[k, start:stop]
        c = c[np.isfinite(c[:, 0])]
        return c.mean(axis=0) if len(c) else None


def _check_range(spec: SceneSpec, start: int, stop: int | None) -> int:
    stop = spec.frames if stop is None else stop
    if not 0 <= start < stop <= spec.frames or stop - start < 2:
        raise StackError(f"bad frame range [{start}, {stop}) for a {spec.frames}-frame scene")
    return stop


def ground_truth(spec: SceneSpec, start: int = 0, stop: int | None = None) -> GroundTruth:
    """Ground truth for frames ``[start, stop)`` without rendering any pixels."""
    stop = _check_range(spec, start, stop)
    centers = np.full((len(spec.targets), stop - start, 2), np.nan)
    for i, f in enumerate(range(start, stop)):
        for k, t in enumerate(spec.targets):
            if t.alive(f, spec.frames):
                centers[k, i] = t.center(f)
    return GroundTruth(spec, start, centers)


def render(spec: SceneSpec, start: int = 0, stop: int | None = None) -> tuple[FrameStack, GroundTruth]:
    """Render frames ``[start, stop)`` of the scene and their ground truth."""
    stop = _check_range(spec, start, stop)
    h, w = spec.height, spec.width
    n = stop - start
    data = np.empty((n, h, w), dtype=np.float32)
    centers = np.full((len(spec.targets), n, 2), np.nan)
    static_bg = None if spec.background.kind == "drift" else _background_frame(spec.background, 0, w, h)
    for i, f in enumerate(range(start, stop)):
        img = static_bg.copy() if static_bg is not None else _background_frame(spec.background, f, w, h)
        for k, t in enumerate(spec.targets):
            if not t.alive(f, spec.frames):
                continue
            c = t.center(f)
            centers[k, i] = c
            patch, origin = psf_patch(t, c, _extent(t, RENDER_CUTOFF))
            _paste(img, patch, origin, _add_into)
        if spec.noise_sigma > 0:
            img += Rng(mix_seed(spec.seed, f)).normal(h * w, spec.noise_sigma).reshape(h, w)
        data[i] = img
    return FrameStack(data), GroundTruth(spec, start, centers)


def scr(frame, target_mask, background_mask) -> float:
    """``|mean(target) - mean(background)| / std(background)``."""
    frame = np.asarray(frame, dtype=np.float64)
    tm = np.asarray(target_mask, dtype=bool)
    bm = np.asarray(background_mask, dtype=bool)
    if not tm.any() or not bm.any():
        raise DegenerateInputError("SCR needs non-empty target and background masks")
    bg = frame[bm]
    sigma = bg.std()
    if sigma == 0:
        raise DegenerateInputError("SCR undefined: background standard deviation is zero")
    return float(abs(frame[tm].mean() - bg.mean()) / sigma)


def mean_scr(stack: FrameStack, truth: GroundTruth) -> float:
    """Average per-frame SCR over frames where some target is visible."""
    vals = []
    for i in range(stack.frames):
        m = truth.frame_mask(i)
        if m.any():
            vals.append(scr(stack.data[i], m, ~m))
    if not vals:
        raise DegenerateInputError("no frame contains a target")
    return float(np.mean(vals))


def accumulate(stack: FrameStack, k: int) -> np.ndarray:
    """Pixelwise sum of the first ``k`` frames."""
    if not 1 <= k <= stack.frames:
        raise StackError(f"K must lie in [1, {stack.frames}], got {k}")
    return stack.data[:k].astype(np.float64).sum(axis=0)


def calibrate_amplitude(spec: SceneSpec, target_scr: float, start: int = 0, stop: int | None = None) -> SceneSpec:
    """Scale all target amplitudes by one common factor so the rendered mean SCR hits ``target_scr``.

    Mask geometry is relative to each amplitude, so only the contrast changes.
    The noise is fixed by the seed, which makes the measured SCR a
    deterministic function of the factor; it is solved with Brent's method.
    """
    if not spec.targets:
        raise DegenerateInputError("scene has no targets to calibrate")

    def scaled(factor: float) -> SceneSpec:
        return replace(spec, targets=tuple(replace(t, amplitude=t.amplitude * factor) for t in spec.targets))

    def err(factor: float) -> float:
        stack, truth = render(scaled(factor), start, stop)
        return mean_scr(stack, truth) - target_scr

    lo, hi = 1e-3, 1.0
    while err(hi) < 0:
        lo, hi = hi, hi * 4
        if hi > 1e9:
            raise DegenerateInputError("could not bracket the requested SCR")
    factor = brentq(err, lo, hi, xtol=1e-6, rtol=1e-6)
    return scaled(factor)
