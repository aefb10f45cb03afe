"""Measure every segment and turn the measurements into words and prompts."""

from roadgrade.arr import reconstruct
from roadgrade.descriptors import describe, discretize
from roadgrade.fixtures import load_fixture
from roadgrade.grading import build_prompt, heuristic_prior
from roadgrade.skeleton import build_graph, prune_spurs, skeletonize

mask = load_fixture()
skel = reconstruct(prune_spurs(skeletonize(mask), 5))
graph = build_graph(skel)
vectors = describe(graph, mask, skel, mask.resolution_m, allow_outside=True, extra=True)

for v in vectors:
    words = discretize(v)
    prior = heuristic_prior(v)
    print(f"segment {v.segment_id}: L={v.length_m:.1f} m  W={v.width_m:.1f} m  S={v.straightness:.3f}  "
          f"C={v.curvature:.4f}/m  D={v.degree}  rho={v.density:.4f}  lanes~{v.lane_count}")
    print(f"  words: {words.length_word}, {words.width_word}, {words.shape_word}, {words.context_word}")
    print(f"  prompt: {build_prompt(words).description}")
    print(f"  geometric prior: high {prior.high:.2f}  medium {prior.medium:.2f}  low {prior.low:.2f}")
