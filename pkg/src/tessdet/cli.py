"""``tessdet`` command line: synth, detect, extract, track, eval, pipeline.

Every command reads the same configuration: built-in defaults, overridden by
an optional ``--config`` file (UTF-8 ``key = value`` lines, ``#`` comments),
overridden by command-line flags. Each key has a flag spelled ``--`` + key
with dots and underscores turned into dashes (``tess.window`` ->
``--tess-window``); any key, including per-target ones such as
``target.0.amplitude``, can also be given as ``--set key=value``.

Stage outputs are directories::

    synth   frames/000000.pgm ... (or stack.dts1), truth.jsonl
    detect  units.jsonl, unit_0000_P.dts1, unit_0000_T.dts1, ...
    extract units.jsonl, unit_0000_P.dts1, unit_0000_T.dts1, ..., lines.jsonl
    track   observations.jsonl, events.jsonl, tracks.jsonl
    eval    report.jsonl

``pipeline`` writes ``detect/``, ``extract/``, ``track/`` (and ``eval/`` when
``--truth`` is given) under its output directory, byte-identical to running
the stages one after another.

``eval --truth`` accepts a synth ``truth.jsonl``, another detect/extract
output directory (its non-zero P pixels are the target), or a one-frame
DTS1 mask.

Exit codes: 0 success, 1 usage or configuration error, 2 malformed input
file, 3 numeric or degenerate input.
"""
from __future__ import annotations

import argparse
import math
import re
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DegenerateInputError, DetectionUnitResult, FrameStack, StackError
from .formats import (
    MAGIC,
    FormatError,
    frame_name,
    line_record,
    load_stack,
    observation_record,
    read_dts1,
    read_jsonl,
    read_pgm,
    read_result,
    read_truth,
    write_jsonl,
    write_pgm,
    write_result,
    write_truth,
)
from .hough3d import AccumulatorTooLarge, HoughParams, extract_trajectories
from .metrics import bsf, roc_auc, scrg, tpr_fpr, track_score
from .synth import Background, SceneSpec, TargetSpec, calibrate_amplitude, ground_truth, render, scr
from .tess import TessParams, detect_unit
from .tracker import TrackerParams, Tracker, observation_from_line

__all__ = ["ConfigError", "PipelineConfig", "load_config", "main"]

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("none", "") else int(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _opt_str(text: str) -> str | None:
    return None if text.strip() == "" else text.strip()


# key -> (parser, default). Units default to 500 frames with a 50-frame window.
KEYS: dict[str, tuple] = {
    "seed": (int, 42),
    "unit_length": (int, 500),
    "threads": (int, 0),
    "format": (str, "pgm"),
    "input": (_opt_str, None),
    "output": (_opt_str, None),
    "truth": (_opt_str, None),
    "stack": (_opt_str, None),
    "tracks": (_opt_str, None),
    "scene.width": (int, 256),
    "scene.height": (int, 256),
    "scene.frames": (int, 500),
    "scene.noise_sigma": (float, 1.0),
    "scene.mask_epsilon": (float, 0.05),
    "scene.background": (str, "constant"),
    "scene.level": (float, 100.0),
    "scene.gradient_x": (float, 0.0),
    "scene.gradient_y": (float, 0.0),
    "scene.drift_amplitude": (float, 0.0),
    "scene.drift_period": (float, 1000.0),
    "scene.target_scr": (_opt_float, None),
    "scene.default_target": (_bool, True),
    "tess.window": (int, 50),
    "tess.threshold": (_opt_float, None),
    "hough.tessellation_level": (int, 4),
    "hough.grid_step": (float, 4.0),
    "hough.min_votes": (int, 20),
    "hough.min_points": (int, 20),
    "hough.inlier_tolerance": (_opt_float, None),
    "hough.time_scale": (float, 1.0),
    "hough.pre_threshold": (float, 4.0),
    "track.alpha1": (float, 1.0),
    "track.alpha2": (float, 50.0),
    "track.gate": (float, 100.0),
    "track.max_age": (int, 3),
    "track.min_hits": (int, 3),
    "track.q": (float, 1.0),
    "track.r": (float, 1.0),
    "track.initial_covariance": (float, 10.0),
    "track.rescale_velocity": (_bool, True),
}

TARGET_FIELDS: dict[str, tuple] = {
    "amplitude": (float, 3.0),
    "sigma_x": (float, 1.0),
    "sigma_y": (float, 1.0),
    "x": (float, 0.0),
    "y": (float, 0.0),
    "vx": (float, 0.0),
    "vy": (float, 0.0),
    "birth": (int, 0),
    "death": (_opt_int, None),
}
_TARGET_KEY = re.compile(r"^target\.(\d+)\.([a-z_]+)$")

# Used when the configuration defines no target.N keys and
# scene.default_target is on: one target crossing the frame left to right.
DEFAULT_TARGETS = {0: {"amplitude": 3.0, "x": 64.0, "y": 128.0, "vx": 0.25}}


def flag_for(key: str) -> str:
    return "--" + key.replace(".", "-").replace("_", "-")


def parse_value(key: str, text: str):
    m = _TARGET_KEY.match(key)
    if m:
        if m.group(2) not in TARGET_FIELDS:
            raise ConfigError(f"unknown target field {m.group(2)!r} in {key!r}")
        conv = TARGET_FIELDS[m.group(2)][0]
    elif key in KEYS:
        conv = KEYS[key][0]
    else:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        return conv(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return out


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in KEYS.items()})
    targets: dict = field(default_factory=dict)

    def set(self, key: str, value) -> None:
        m = _TARGET_KEY.match(key)
        if m:
            self.targets.setdefault(int(m.group(1)), {})[m.group(2)] = value
        else:
            self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def threads(self) -> int | None:
        return self["threads"] or None

    def scene(self) -> SceneSpec:
        v = self.values
        bg = Background(
            kind=v["scene.background"],
            level=v["scene.level"],
            gradient=(v["scene.gradient_x"], v["scene.gradient_y"]),
            amplitude=v["scene.drift_amplitude"],
            period=v["scene.drift_period"],
        )
        targets = []
        chosen = self.targets or (DEFAULT_TARGETS if v["scene.default_target"] else {})
        for k in sorted(chosen):
            t = {f: d for f, (_, d) in TARGET_FIELDS.items()}
            t.update(chosen[k])
            targets.append(
                TargetSpec(
                    amplitude=t["amplitude"],
                    sigma_x=t["sigma_x"],
                    sigma_y=t["sigma_y"],
                    start=(t["x"], t["y"]),
                    velocity=(t["vx"], t["vy"]),
                    birth_frame=t["birth"],
                    death_frame=t["death"],
                )
            )
        return SceneSpec(
            width=v["scene.width"],
            height=v["scene.height"],
            frames=v["scene.frames"],
            background=bg,
            noise_sigma=v["scene.noise_sigma"],
            targets=tuple(targets),
            seed=v["seed"],
            mask_epsilon=v["scene.mask_epsilon"],
        )

    def tess(self) -> TessParams:
        return TessParams(window=self["tess.window"], threshold=self["tess.threshold"])

    def hough(self) -> HoughParams:
        return HoughParams(
            tessellation_level=self["hough.tessellation_level"],
            grid_step=self["hough.grid_step"],
            min_votes=self["hough.min_votes"],
            min_points=self["hough.min_points"],
            inlier_tolerance=self["hough.inlier_tolerance"],
            time_scale=self["hough.time_scale"],
        )

    def tracker(self) -> TrackerParams:
        return TrackerParams(
            alpha1=self["track.alpha1"],
            alpha2=self["track.alpha2"],
            gate=self["track.gate"],
            max_age=self["track.max_age"],
            min_hits=self["track.min_hits"],
            q=self["track.q"],
            r=self["track.r"],
            initial_covariance=self["track.initial_covariance"],
        )

    def validate(self) -> None:
        if self["unit_length"] < 2:
            raise ConfigError("unit_length must be >= 2")
        if self["unit_length"] < self["tess.window"]:
            raise ConfigError(f"unit_length {self['unit_length']} is shorter than tess.window {self['tess.window']}")
        if self["threads"] < 0:
            raise ConfigError("threads must be >= 0 (0 = all cores)")
        if self["format"] not in ("pgm", "dts1"):
            raise ConfigError(f"format must be pgm or dts1, got {self['format']!r}")
        try:
            self.tess().validate(self["unit_length"])
            self.hough()
            self.tracker()
        except (ValueError, StackError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Defaults, then the file at ``path``, then ``(key, value-text)`` overrides in order."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for k, v in parse_config_text(text, str(path)).items():
            cfg.set(k, v)
    for k, text in overrides:
        cfg.set(k, parse_value(k, text))
    return cfg


# -- unit I/O --------------------------------------------------------------------


def unit_bounds(frames: int, unit_length: int, window: int) -> list[tuple[int, int]]:
    """Consecutive ``unit_length`` blocks; a shorter tail is kept only if it holds a full window."""
    out = []
    for s in range(0, frames, unit_length):
        e = min(s + unit_length, frames)
        if e - s >= max(window, 2):
            out.append((s, e))
    return out


class StackSource:
    """Random access to frame ranges of a PGM directory or DTS1 file without loading it all."""

    def __init__(self, path):
        self.path = Path(path)
        if self.path.is_dir():
            self.frames_list = sorted(self.path.glob("*.pgm"))
            if len(self.frames_list) < 2:
                raise FormatError(self.path, 0, f"need at least 2 PGM frames, found {len(self.frames_list)}")
            self.frames = len(self.frames_list)
        elif self.path.is_file():
            with open(self.path, "rb") as fh:
                head = fh.read(16)
            if len(head) < 16:
                raise FormatError(self.path, len(head), "truncated DTS1 header")
            magic, w, h, n = struct.unpack("<4sIII", head)
            if magic != MAGIC:
                # let the full reader produce the diagnostic
                read_dts1(self.path)
            self.frames = n
            self.frames_list = None
        else:
            raise ConfigError(f"input {self.path} does not exist")

    def read(self, start: int, stop: int) -> FrameStack:
        if self.frames_list is not None:
            frames = [read_pgm(p) for p in self.frames_list[start:stop]]
            for p, f in zip(self.frames_list[start:stop], frames):
                if f.shape != frames[0].shape:
                    raise FormatError(p, 0, "frame size differs from the first frame of the unit")
            return FrameStack(np.stack(frames))
        if start == 0 and stop == self.frames:
            return load_stack(self.path)
        arr = read_dts1(self.path)[start:stop]
        return FrameStack(arr)


def _prefix(directory: Path, unit: int) -> Path:
    return directory / f"unit_{unit:04d}"


def _read_units(directory: Path) -> list[dict]:
    p = directory / "units.jsonl"
    if not p.exists():
        raise ConfigError(f"{directory} has no units.jsonl (not a detect/extract output directory)")
    return read_jsonl(p)


def _as_stored(result: DetectionUnitResult) -> DetectionUnitResult:
    """The result exactly as a later stage reads it back (P rounded to float32)."""
    pos = result.position.astype(np.float32).astype(np.float64)
    return DetectionUnitResult(pos, result.time, thresholded=result.thresholded)


# -- stages ----------------------------------------------------------------------


def detect_stage(cfg: PipelineConfig, src: StackSource, out: Path, units):
    results = []
    for u, (s, e) in enumerate(units):
        res = detect_unit(src.read(s, e), cfg.tess(), threads=cfg.threads)
        write_result(_prefix(out, u), res)
        results.append(_as_stored(res))
    write_jsonl(out / "units.jsonl", ({"unit": u, "start": s, "stop": e} for u, (s, e) in enumerate(units)))
    return results


def extract_one(cfg: PipelineConfig, res: DetectionUnitResult):
    if res.thresholded:
        raise ConfigError("extract needs raw P (run detect with tess.threshold = none)")
    return extract_trajectories(res, cfg.hough(), cfg["hough.pre_threshold"])


def _line_recs(cfg, u, lines):
    return [line_record(u, ln, cfg["hough.time_scale"]) for ln in lines]


def track_stage(cfg: PipelineConfig, unit_table: list[dict], line_recs: list[dict], out: Path):
    by_unit = {}
    for rec in line_recs:
        by_unit.setdefault(int(rec["unit"]), []).append(rec)
    tracker = Tracker(cfg.tracker())
    obs_out, rows = [], []
    for row in unit_table:
        u = int(row["unit"])
        length = int(row["stop"]) - int(row["start"])
        obs = []
        for rec in by_unit.get(u, []):
            pts = np.asarray(rec["inlier_pixels"], dtype=np.float64).reshape(-1, 3)
            o = observation_from_line(pts, None, u, length if cfg["track.rescale_velocity"] else None)
            obs.append(o)
            obs_out.append(observation_record(o))
        tracker.step(obs, u)
        updated = tracker.reports[-1]
        rows.append(
            {
                "unit": u,
                "tracks": [
                    {"id": t.id, "status": t.status.value, "state": t.state.tolist(), "reported": t.id in updated}
                    for t in tracker.tracks
                ],
            }
        )
    write_jsonl(out / "observations.jsonl", obs_out)
    write_jsonl(out / "events.jsonl", (e.to_dict() for e in tracker.events))
    write_jsonl(out / "tracks.jsonl", rows)
    return tracker


def _truth_for(truth_path, spec_cache, unit, start, stop, shape):
    """Truth mask for frames [start, stop) plus the GroundTruth when available.

    ``truth_path`` is a synth ``truth.jsonl``, a detect/extract output
    directory (non-zero P of the same unit is target) or a one-frame DTS1 mask.
    """
    p = Path(truth_path)
    if p.is_dir():
        arr = read_result(_prefix(p, unit)).position
        if arr.shape != shape:
            raise FormatError(_prefix(p, unit), 4, f"truth size {arr.shape[1]}x{arr.shape[0]} differs from P size {shape[1]}x{shape[0]}")
        return arr != 0, None
    if p.suffix == ".jsonl":
        if "spec" not in spec_cache:
            spec_cache["spec"] = read_truth(p)
        gt = ground_truth(spec_cache["spec"], start, stop)
        return gt.trajectory_mask(), gt
    arr = read_dts1(p)
    if arr.shape[1:] != shape:
        raise FormatError(p, 4, f"truth mask size {arr.shape[2]}x{arr.shape[1]} differs from P size {shape[1]}x{shape[0]}")
    return arr[0] != 0, None


def eval_stage(cfg: PipelineConfig, in_dir: Path, truth_path, out: Path, stack_path=None, tracks_dir=None):
    units = _read_units(in_dir)
    cache = {}
    src = StackSource(stack_path) if stack_path else None
    recs = []
    for row in units:
        u, s, e = int(row["unit"]), int(row["start"]), int(row["stop"])
        res = read_result(_prefix(in_dir, u))
        mask, gt = _truth_for(truth_path, cache, u, s, e, res.shape)
        rec = {"unit": u}
        if res.thresholded:
            rec["tpr"], rec["fpr"] = tpr_fpr(res.position > 0, mask)
        else:
            roc, rec["auc"] = roc_auc(res.position, mask)
            rec["roc_points"] = len(roc)
            if gt is not None:
                _, rec["auc_interior"] = roc_auc(res.position, mask, gt.boundary_mask(cfg["tess.window"] // 2))
            if src is not None and gt is not None:
                stack = src.read(s, e)
                rec["scrg"] = scrg(stack, res.position, gt)
                rec["bsf"] = bsf(stack, res.position, gt)
        recs.append(rec)
    summary = {"unit": "mean"}
    for key in ("tpr", "fpr", "auc", "auc_interior", "scrg", "bsf"):
        vals = [r[key] for r in recs if key in r]
        if vals:
            summary[key] = float(np.mean(vals))
    recs.append(summary)
    if tracks_dir is not None:
        if "spec" not in cache:
            if Path(truth_path).suffix != ".jsonl":
                raise ConfigError("track scoring needs a truth.jsonl scene file")
            cache["spec"] = read_truth(truth_path)
        spec = cache["spec"]
        reported, truth = [], []
        for row in read_jsonl(Path(tracks_dir) / "tracks.jsonl"):
            reported.append({t["id"]: tuple(t["state"][:2]) for t in row["tracks"] if t["reported"]})
        for row in units:
            gt = ground_truth(spec, int(row["start"]), int(row["stop"]))
            truth.append({k: tuple(c) for k in range(len(spec.targets)) if (c := gt.mean_center(k)) is not None})
        ts = track_score(reported, truth)
        recs.append(
            {
                "unit": "tracks",
                "track_tpr": {str(k): v for k, v in ts.tpr.items()},
                "track_fpr": {str(k): v for k, v in ts.fpr.items()},
                "overall_fpr": ts.overall_fpr,
                "id_swaps": ts.id_swaps,
            }
        )
    write_jsonl(out / "report.jsonl", recs)
    return recs


# -- commands --------------------------------------------------------------------


def _out_dir(cfg) -> Path:
    if not cfg["output"]:
        raise ConfigError("--output is required")
    p = Path(cfg["output"])
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {p}: {exc}") from exc
    return p


def _in_path(cfg, key="input") -> Path:
    if not cfg[key]:
        raise ConfigError(f"--{key} is required")
    return Path(cfg[key])


def cmd_synth(cfg: PipelineConfig) -> int:
    spec = cfg.scene()
    out = _out_dir(cfg)
    if cfg["scene.target_scr"] is not None:
        spec = calibrate_amplitude(spec, cfg["scene.target_scr"])
    fmt = cfg["format"]
    frames_dir = out / "frames"
    if fmt == "pgm":
        frames_dir.mkdir(exist_ok=True)
    scrs = []
    chunk = max(2, cfg["unit_length"])
    with open(out / "stack.dts1", "wb") if fmt == "dts1" else _NullFile() as fh:
        if fmt == "dts1":
            fh.write(struct.pack("<4sIII", MAGIC, spec.width, spec.height, spec.frames))
        for s in range(0, spec.frames, chunk):
            e = min(s + chunk, spec.frames)
            if e - s < 2:  # render needs two frames; the last one rides with its predecessor
                s, e = e - 2, e
                stack, gt = render(spec, s, e)
                stack_data, first = stack.data[1:], 1
            else:
                stack, gt = render(spec, s, e)
                stack_data, first = stack.data, 0
            for i, frame in enumerate(stack_data, start=first):
                m = gt.frame_mask(i)
                if m.any() and not m.all():
                    scrs.append(scr(frame, m, ~m))
                if fmt == "pgm":
                    write_pgm(frames_dir / frame_name(s + i, spec.frames), frame)
            if fmt == "dts1":
                fh.write(stack_data.astype("<f4").tobytes())
    write_truth(out / "truth.jsonl", spec)
    mean = float(np.mean(scrs)) if scrs else math.nan
    print(f"mean_scr {mean:.6f}")
    return EXIT_OK


class _NullFile:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def cmd_detect(cfg: PipelineConfig) -> int:
    src = StackSource(_in_path(cfg))
    out = _out_dir(cfg)
    units = unit_bounds(src.frames, cfg["unit_length"], cfg["tess.window"])
    if not units:
        raise ConfigError(f"input has {src.frames} frames, fewer than one window")
    detect_stage(cfg, src, out, units)
    print(f"detected {len(units)} unit(s)")
    return EXIT_OK


def cmd_extract(cfg: PipelineConfig) -> int:
    in_dir = _in_path(cfg)
    units = _read_units(in_dir)
    out = _out_dir(cfg)
    recs = []
    for row in units:
        u = int(row["unit"])
        cleaned, lines = extract_one(cfg, read_result(_prefix(in_dir, u), thresholded=False))
        write_result(_prefix(out, u), cleaned)
        recs += _line_recs(cfg, u, lines)
    write_jsonl(out / "units.jsonl", units)
    write_jsonl(out / "lines.jsonl", recs)
    print(f"extracted {len(recs)} line(s) from {len(units)} unit(s)")
    return EXIT_OK


def cmd_track(cfg: PipelineConfig) -> int:
    in_dir = _in_path(cfg)
    units = _read_units(in_dir)
    lines_path = in_dir / "lines.jsonl"
    if not lines_path.exists():
        raise ConfigError(f"{in_dir} has no lines.jsonl (not an extract output directory)")
    tracker = track_stage(cfg, units, read_jsonl(lines_path), _out_dir(cfg))
    print("confirmed tracks: " + " ".join(str(t.id) for t in tracker.confirmed()))
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig) -> int:
    in_dir = _in_path(cfg)
    truth = _in_path(cfg, "truth")
    recs = eval_stage(cfg, in_dir, truth, _out_dir(cfg), cfg["stack"], cfg["tracks"])
    print(" ".join(f"{k}={v:.6g}" for k, v in recs[-1 if "id_swaps" not in recs[-1] else -2].items() if k != "unit"))
    return EXIT_OK


def cmd_pipeline(cfg: PipelineConfig) -> int:
    src = StackSource(_in_path(cfg))
    out = _out_dir(cfg)
    units = unit_bounds(src.frames, cfg["unit_length"], cfg["tess.window"])
    if not units:
        raise ConfigError(f"input has {src.frames} frames, fewer than one window")
    dirs = {k: out / k for k in ("detect", "extract", "track")}
    for d in dirs.values():
        d.mkdir(exist_ok=True)
    table = [{"unit": u, "start": s, "stop": e} for u, (s, e) in enumerate(units)]
    line_recs = []
    for u, (s, e) in enumerate(units):
        res = detect_unit(src.read(s, e), cfg.tess(), threads=cfg.threads)
        write_result(_prefix(dirs["detect"], u), res)
        cleaned, lines = extract_one(cfg, _as_stored(res))
        write_result(_prefix(dirs["extract"], u), cleaned)
        line_recs += _line_recs(cfg, u, lines)
    write_jsonl(dirs["detect"] / "units.jsonl", table)
    write_jsonl(dirs["extract"] / "units.jsonl", table)
    write_jsonl(dirs["extract"] / "lines.jsonl", line_recs)
    tracker = track_stage(cfg, table, line_recs, dirs["track"])
    print("confirmed tracks: " + " ".join(str(t.id) for t in tracker.confirmed()))
    if cfg["truth"]:
        (out / "eval").mkdir(exist_ok=True)
        eval_stage(cfg, dirs["detect"], Path(cfg["truth"]), out / "eval", cfg["input"], dirs["track"])
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, "render a synthetic scene and its ground truth"),
    "detect": (cmd_detect, "run the temporal detector on every unit of a stack"),
    "extract": (cmd_extract, "extract straight trajectories from raw P/T"),
    "track": (cmd_track, "track trajectory observations across units"),
    "eval": (cmd_eval, "score detection output (and optionally tracks) against truth"),
    "pipeline": (cmd_pipeline, "detect, extract and track every unit"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tessdet", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any configuration key")
        for key in KEYS:
            p.add_argument(flag_for(key), dest="cfg:" + key, metavar="VALUE", default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        overrides = []
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides.append((k.strip(), v))
        overrides += [(k[4:], v) for k, v in vars(args).items() if k.startswith("cfg:")]
        cfg = load_config(args.config, overrides)
        cfg.validate()
        return COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"tessdet: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"tessdet: input format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (DegenerateInputError, StackError, AccumulatorTooLarge, FloatingPointError) as exc:
        print(f"tessdet: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # invalid scene/parameter values surfacing from constructors
        print(f"tessdet: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"tessdet: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
