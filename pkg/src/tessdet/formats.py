"""On-disk formats: PGM frames, DTS1 raw stacks, JSON-lines records.

PGM
    Binary ``P5``, one file per frame, zero-padded numeric names so that
    lexicographic order is frame order. Written with maxval 65535 (16-bit
    big-endian samples); 8-bit files (maxval < 256) are read as well.
DTS1
    ``b"DTS1"``, then width, height, frames as little-endian uint32, then
    ``width*height*frames`` little-endian float32 samples, frame-major and
    row-major within a frame. P and T matrices are DTS1 files with frames=1
    (T holds integer frame indices as floats).
JSON-lines
    UTF-8, one JSON object per line. Record layouts are built by the
    ``*_record`` helpers below.
"""
from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .core import DetectionUnitResult, FrameStack, StackError
from .hough3d import TrajectoryLine
from .synth import Background, SceneSpec, TargetSpec
from .tracker import TrackObservation

__all__ = [
    "FormatError",
    "MAGIC",
    "write_pgm",
    "read_pgm",
    "write_frames",
    "read_frames",
    "write_dts1",
    "read_dts1",
    "load_stack",
    "save_stack",
    "write_result",
    "read_result",
    "write_jsonl",
    "read_jsonl",
    "line_record",
    "observation_record",
    "observation_from_record",
    "scene_record",
    "scene_from_record",
    "write_truth",
    "read_truth",
]

MAGIC = b"DTS1"
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Malformed input file; the message names the file and byte offset."""

    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = str(path)
        self.offset = offset


# -- PGM -------------------------------------------------------------------------


def to_samples(frame) -> np.ndarray:
    """Round to the nearest integer (ties to even) and clip to the 16-bit range."""
    return np.clip(np.rint(np.asarray(frame, dtype=np.float64)), 0, 65535).astype(np.uint16)


def write_pgm(path, frame) -> None:
    img = to_samples(frame)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(img.astype(">u2").tobytes())


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise FormatError(path, 0, "not a binary PGM (missing 'P5' magic)")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        m = _TOKEN.match(buf, pos)
        if m is None or not m.group(1).isdigit():
            raise FormatError(path, pos, f"bad PGM header field {name}")
        fields.append(int(m.group(1)))
        pos = m.end()
    w, h, maxval = fields
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise FormatError(path, pos, f"bad PGM geometry {w}x{h} maxval {maxval}")
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise FormatError(path, pos, "missing whitespace after maxval")
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(buf) - pos < need:
        raise FormatError(path, len(buf), f"truncated raster: need {need} bytes after offset {pos}")
    return np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.float32)


def frame_name(i: int, n: int) -> str:
    return f"{i:0{max(6, len(str(n - 1)))}d}.pgm"


def write_frames(directory, stack: FrameStack) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(stack.frames):
        p = d / frame_name(i, stack.frames)
        write_pgm(p, stack.data[i])
        paths.append(p)
    return paths


def read_frames(directory) -> FrameStack:
    paths = sorted(Path(directory).glob("*.pgm"))
    if len(paths) < 2:
        raise FormatError(directory, 0, f"need at least 2 PGM frames, found {len(paths)}")
    frames = [read_pgm(p) for p in paths]
    for p, f in zip(paths, frames):
        if f.shape != frames[0].shape:
            raise FormatError(p, 0, f"frame size {f.shape[::-1]} differs from {frames[0].shape[::-1]}")
    return FrameStack(np.stack(frames))


# -- DTS1 ------------------------------------------------------------------------


def write_dts1(path, data) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    n, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w, h, n))
        fh.write(arr.astype("<f4").tobytes())


def read_dts1(path) -> np.ndarray:
    """Return the samples as a ``(frames, height, width)`` float32 array."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(path, len(buf), "truncated DTS1 header")
    magic, w, h, n = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {MAGIC!r}")
    if w < 1 or h < 1 or n < 1:
        raise FormatError(path, 4, f"bad dimensions {w}x{h}x{n}")
    need = _HEADER.size + 4 * w * h * n
    if len(buf) != need:
        raise FormatError(path, min(len(buf), need), f"payload size mismatch: file has {len(buf)} bytes, header implies {need}")
    arr = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(n, h, w).astype(np.float32)
    bad = np.flatnonzero(~np.isfinite(arr.ravel()))
    if len(bad):
        raise FormatError(path, _HEADER.size + 4 * int(bad[0]), "non-finite sample")
    return arr


def load_stack(path) -> FrameStack:
    """A directory of PGM frames or a DTS1 file."""
    p = Path(path)
    if p.is_dir():
        return read_frames(p)
    arr = read_dts1(p)
    try:
        return FrameStack(arr)
    except StackError as exc:
        raise FormatError(p, 0, str(exc)) from exc


def save_stack(path, stack: FrameStack, fmt: str = "pgm") -> None:
    if fmt == "pgm":
        write_frames(path, stack)
    elif fmt == "dts1":
        write_dts1(path, stack.data)
    else:
        raise ValueError(f"unknown stack format {fmt!r}")


def write_result(prefix, result: DetectionUnitResult) -> None:
    """Write ``<prefix>_P.dts1`` and ``<prefix>_T.dts1``."""
    write_dts1(f"{prefix}_P.dts1", result.position)
    write_dts1(f"{prefix}_T.dts1", result.time.astype(np.float64))


def read_result(prefix, thresholded: bool | None = None) -> DetectionUnitResult:
    pos = read_dts1(f"{prefix}_P.dts1")
    tim = read_dts1(f"{prefix}_T.dts1")
    for name, a in (("P", pos), ("T", tim)):
        if a.shape[0] != 1:
            raise FormatError(f"{prefix}_{name}.dts1", 12, f"expected frames=1, got {a.shape[0]}")
    if pos.shape != tim.shape:
        raise FormatError(f"{prefix}_T.dts1", 4, "P and T sizes differ")
    if thresholded is None:
        thresholded = bool(np.isin(pos, (0.0, 255.0)).all())
    return DetectionUnitResult(pos[0], tim[0].astype(np.int64), thresholded=thresholded)


# -- JSON-lines ------------------------------------------------------------------


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            text = raw.strip()
            if text:
                try:
                    rec = json.loads(text.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    raise FormatError(path, offset, f"invalid JSON record: {exc}") from exc
                if not isinstance(rec, dict):
                    raise FormatError(path, offset, "record is not a JSON object")
                out.append(rec)
            offset += len(raw)
    return out


def line_record(unit: int, line: TrajectoryLine, time_scale: float = 1.0) -> dict:
    """Anchor and direction are in (x, y, time_scale * t) image coordinates."""
    return {
        "unit": unit,
        "anchor": (line.anchor + line.offset).tolist(),
        "direction": line.direction.tolist(),
        "votes": int(line.votes),
        "inlier_count": len(line),
        "inlier_pixels": line.inliers.astype(np.int64).tolist(),
        "time_scale": time_scale,
    }


def observation_record(obs: TrackObservation) -> dict:
    return {"unit": obs.unit_index, "center": list(obs.center), "velocity": list(obs.velocity)}


def observation_from_record(rec: dict) -> TrackObservation:
    return TrackObservation(tuple(rec["center"]), tuple(rec["velocity"]), int(rec["unit"]))


def scene_record(spec: SceneSpec) -> dict:
    d = asdict(spec)
    d["kind"] = "scene"
    return d


def scene_from_record(rec: dict) -> SceneSpec:
    d = {k: v for k, v in rec.items() if k != "kind"}
    bg = d.pop("background")
    bg["gradient"] = tuple(bg["gradient"])
    targets = []
    for t in d.pop("targets"):
        t["start"] = tuple(t["start"])
        t["velocity"] = tuple(t["velocity"])
        targets.append(TargetSpec(**t))
    return SceneSpec(background=Background(**bg), targets=tuple(targets), **d)


def write_truth(path, spec: SceneSpec) -> None:
    """Scene record, then one record per frame with every alive target's centre."""

    def frames():
        yield scene_record(spec)
        for f in range(spec.frames):
            centers = {str(k): list(t.center(f)) for k, t in enumerate(spec.targets) if t.alive(f, spec.frames)}
            yield {"kind": "frame", "frame": f, "centers": centers}

    write_jsonl(path, frames())


def read_truth(path) -> SceneSpec:
    recs = read_jsonl(path)
    if not recs or recs[0].get("kind") != "scene":
        raise FormatError(path, 0, "first record must be the scene record")
    try:
        return scene_from_record(recs[0])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, 0, f"bad scene record: {exc}") from exc


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
