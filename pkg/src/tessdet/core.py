"""Shared types: frame stacks, temporal profiles, detection results, and the PRNG.

Stacks are stored frame-major as a ``(frames, height, width)`` float32 array,
so ``stack.data[k]`` is frame ``k`` and ``stack.data[:, y, x]`` is the temporal
profile of pixel ``(x, y)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StackError",
    "DegenerateInputError",
    "FrameStack",
    "Itp",
    "DetectionUnitResult",
    "make_stack",
    "itp",
    "Rng",
    "mix_seed",
]

_MASK64 = (1 << 64) - 1


class StackError(ValueError):
    """Raised for malformed stacks (bad dimensions, non-finite samples, bad indices)."""


class DegenerateInputError(ValueError):
    """Raised when a numeric routine receives input it cannot handle (zero spread, empty sets)."""


def _first_bad_index(values: np.ndarray) -> int:
    return int(np.flatnonzero(~np.isfinite(values.ravel()))[0])


class FrameStack:
    """Immutable W x H x N block of intensities.

    Integer inputs (8/16 bit frames) are widened to float32, which is exact
    for every value up to 2**24.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float32, copy=True)
        if arr.ndim != 3:
            raise StackError(f"stack data must be 3-D (frames, height, width), got shape {arr.shape}")
        n, h, w = arr.shape
        if w < 1 or h < 1:
            raise StackError(f"stack needs width >= 1 and height >= 1, got {w}x{h}")
        if n < 2:
            raise StackError(f"stack needs at least 2 frames, got {n}")
        if not np.isfinite(arr).all():
            raise StackError(f"non-finite value at flat index {_first_bad_index(arr)}")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def frames(self) -> int:
        return self._data.shape[0]

    @property
    def height(self) -> int:
        return self._data.shape[1]

    @property
    def width(self) -> int:
        return self._data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._data.shape

    def itp(self, x: int, y: int) -> "Itp":
        return itp(self, x, y)

    def frame(self, k: int) -> np.ndarray:
        return self._data[k]

    def __repr__(self) -> str:
        return f"FrameStack(width={self.width}, height={self.height}, frames={self.frames})"


def make_stack(width: int, height: int, frames: int, data) -> FrameStack:
    """Build a stack from a flat frame-major sequence of ``width*height*frames`` samples.

    Within a frame, samples are row-major (x fastest), so for a 2x1x2 stack
    ``[a, b, c, d]`` gives ``itp(0, 0) == [a, c]`` and ``itp(1, 0) == [b, d]``.
    """
    flat = np.asarray(data)
    expected = width * height * frames
    if flat.size != expected:
        raise StackError(
            f"dimension mismatch: {width}x{height}x{frames} needs {expected} samples, got {flat.size}"
        )
    flat = flat.ravel()
    if flat.dtype.kind in "fc" and not np.isfinite(flat).all():
        raise StackError(f"non-finite value at flat index {_first_bad_index(flat)}")
    return FrameStack(flat.reshape(frames, height, width))


@dataclass(frozen=True)
class Itp:
    """Intensity temporal profile of one pixel (read-only view into its stack)."""

    pixel: tuple[int, int]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def itp(stack: FrameStack, x: int, y: int) -> Itp:
    if not (0 <= x < stack.width and 0 <= y < stack.height):
        raise StackError(
            f"pixel ({x}, {y}) out of bounds for {stack.width}x{stack.height} stack"
        )
    return Itp((x, y), stack.data[:, y, x])


@dataclass
class DetectionUnitResult:
    """Position matrix P and occurrence-time matrix T for one detection unit.

    ``position`` holds the raw peak response unless ``thresholded`` is set, in
    which case it is binary {0, 255}. ``time`` is the start frame of the
    secondary window that produced the peak; it is meaningless where P == 0.
    """

    position: np.ndarray
    time: np.ndarray
    thresholded: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.time = np.asarray(self.time, dtype=np.int64)
        if self.position.shape != self.time.shape or self.position.ndim != 2:
            raise StackError(
                f"P and T must be matching 2-D matrices, got {self.position.shape} and {self.time.shape}"
            )
        if self.thresholded and not np.isin(self.position, (0.0, 255.0)).all():
            raise StackError("thresholded P must contain only 0 and 255")

    @property
    def shape(self) -> tuple[int, int]:
        return self.position.shape

    def threshold(self, theta: float) -> "DetectionUnitResult":
        """Binarize P: values below ``theta`` become 0, the rest 255."""
        if self.thresholded:
            raise StackError("result is already thresholded")
        keep = self.position >= theta
        pos = np.where(keep, 255.0, 0.0)
        return DetectionUnitResult(pos, np.where(keep, self.time, 0), thresholded=True)

    def mask(self) -> np.ndarray:
        return self.position > 0


# -- deterministic random numbers -------------------------------------------------


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, stream: int) -> int:
    """Child seed for an independent stream: two SplitMix64 rounds over (seed, stream)."""
    return _splitmix64(_splitmix64(seed & _MASK64) ^ (stream & _MASK64))


class Rng:
    """PCG64 (XSL-RR 128/64) seeded from a 64-bit integer.

    Uniforms take the top 53 bits of each raw 64-bit draw. Gaussian deviates
    use Box-Muller, consuming exactly two uniforms per pair of deviates; an odd
    request discards the second deviate of the last pair.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._bitgen = np.random.PCG64(self.seed)

    def spawn(self, stream: int) -> "Rng":
        return Rng(mix_seed(self.seed, stream))

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(n).astype(np.uint64, copy=False)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u1 lies in (0, 1]
        theta = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return sigma * z.ravel()[:n]
