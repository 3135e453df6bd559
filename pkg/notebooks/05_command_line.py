"""
The command line pipeline
=========================

The same chain through files: synth writes frames and truth, pipeline runs
detect -> extract -> track per unit and scores the result.
"""

# %%
import json
import tempfile
from pathlib import Path

from tessdet.cli import main

work = Path(tempfile.mkdtemp(prefix="tessdet-"))
cfg = work / "scene.cfg"
cfg.write_text("""\
# two targets, 3 units of 200 frames
scene.width = 96
scene.height = 96
scene.frames = 600
unit_length = 200
tess.window = 40
hough.pre_threshold = 50
hough.min_votes = 40
hough.min_points = 40
hough.time_scale = 0.1
hough.inlier_tolerance = 3
target.0.amplitude = 8
target.0.x = 10
target.0.y = 20
target.0.vx = 0.12
target.1.amplitude = 8
target.1.x = 80
target.1.y = 80
target.1.vy = -0.1
""")

# %%
main(["synth", "--config", str(cfg), "--output", str(work / "scene")])
main(["pipeline", "--config", str(cfg), "--input", str(work / "scene" / "frames"),
      "--truth", str(work / "scene" / "truth.jsonl"), "--output", str(work / "run")])

# %%
# Every stage leaves plain files behind.
for p in sorted((work / "run").rglob("*")):
    if p.is_file():
        print(p.relative_to(work), p.stat().st_size, "bytes")

# %%
for line in (work / "run" / "eval" / "report.jsonl").read_text().splitlines()[-2:]:
    print(json.loads(line))
