"""Grade segments with offline stand-in providers and paint the grades on the mask.

Swap ``StubScoreProvider`` for ``HttpScoreProvider(url)`` to use a real
image/text scoring service speaking the JSON wire format.
"""

import tempfile
from pathlib import Path

import numpy as np

from roadgrade.arr import reconstruct
from roadgrade.descriptors import describe
from roadgrade.fixtures import load_fixture
from roadgrade.grading import (
    FusionConfig, GradeScores, StubScoreProvider, StubTextProvider, fuse, grade_segments, render_grade_mask,
)
from roadgrade.labels import Grade
from roadgrade.raster_io import save_grade_mask
from roadgrade.skeleton import build_graph, prune_spurs, skeletonize

# the fusion rule on its own: geometry says high, the scorer says low, the text says medium
choice = fuse(GradeScores(0.7, 0.2, 0.1), GradeScores(0.1, 0.1, 0.8), Grade.MEDIUM, FusionConfig(0.3, 0.5, 0.2))
print(f"fused grade for the conflicting cues: {choice.word}")

mask = load_fixture()
skel = reconstruct(prune_spurs(skeletonize(mask), 5))
graph = build_graph(skel)
vectors = describe(graph, mask, skel, mask.resolution_m, allow_outside=True)
records = grade_segments(vectors, graph, mask.data, StubScoreProvider(), StubTextProvider())
for r in records:
    print(f"segment {r.segment_id}: {r.grade.word:6s} via {r.provider} (text said {r.language_grade.word})")

grades = render_grade_mask(graph, {r.segment_id: r.grade for r in records}, mask)
counts = np.bincount(grades.labels.ravel(), minlength=4)
print(f"painted pixels: high {counts[3]}, medium {counts[2]}, low {counts[1]}, background {counts[0]}")
out = Path(tempfile.mkdtemp()) / "grades.png"
save_grade_mask(grades, out)
print(f"wrote {out}")
