"""Run the command-line pipeline on the bundled sample, then the same steps one at a time."""

import filecmp
import tempfile
from pathlib import Path

from roadgrade.cli import main
from roadgrade.fixtures import fixture_path

work = Path(tempfile.mkdtemp())
mask = str(fixture_path())

code = main(["pipeline", "--mask", mask, "--out-dir", str(work / "all")])
print(f"pipeline exit code {code}; wrote {sorted(p.name for p in (work / 'all').iterdir())}")

steps = [
    ["skeletonize", "--mask", mask, "--out", str(work / "skeleton.png")],
    ["reconstruct", "--skeleton", str(work / "skeleton.png"), "--out", str(work / "fixed.png")],
    ["describe", "--mask", mask, "--skeleton", str(work / "fixed.png"),
     "--graph-out", str(work / "graph.json"), "--out", str(work / "descriptors.csv")],
    ["grade", "--descriptors", str(work / "descriptors.csv"), "--graph", str(work / "graph.json"),
     "--mask", mask, "--out", str(work / "grades.json")],
    ["render", "--mask", mask, "--graph", str(work / "graph.json"), "--grades", str(work / "grades.json"),
     "--out", str(work / "grades.png")],
]
for argv in steps:
    print(f"roadgrade {argv[0]} -> exit {main(argv)}")

same = filecmp.cmp(work / "grades.png", work / "all" / "grades.png", shallow=False)
print(f"step-by-step grades.png identical to the pipeline's: {same}")

# bad input is reported with exit code 1 and no traceback
print(f"missing mask -> exit {main(['skeletonize', '--mask', str(work / 'nope.png'), '--out', str(work / 'x.png')])}")
