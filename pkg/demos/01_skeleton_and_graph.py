"""Thin the bundled sample mask and split the skeleton into a segment graph."""

import numpy as np

from roadgrade.fixtures import load_fixture
from roadgrade.skeleton import build_graph, connected_components, prune_spurs, skeletonize


def ascii_art(img, step=4):
    return "\n".join("".join("#" if img[r:r + step, c:c + step].any() else "." for c in range(0, img.shape[1], step))
                     for r in range(0, img.shape[0], step))


mask = load_fixture()
print(f"mask: {mask.height}x{mask.width} px at {mask.resolution_m} m/px, {int(mask.data.sum())} road pixels")
print(ascii_art(mask.data))

skel = prune_spurs(skeletonize(mask), 5)
_, n_mask = connected_components(mask.data)
_, n_skel = connected_components(skel)
print(f"\nskeleton: {int(skel.sum())} pixels; components {n_mask} in the mask, {n_skel} in the skeleton")
print(ascii_art(skel))

graph = build_graph(skel)
print(f"\ngraph: {len(graph.nodes)} nodes, {len(graph.edges)} segments")
for node in graph.nodes:
    print(f"  node {node.id} at {node.pixel} degree {node.degree}")
for edge in graph.edges:
    print(f"  segment {edge.id}: nodes {edge.node_ids}, {len(edge.pixels)} px")
# the side street is broken in two, which is what the next demo repairs
assert np.array_equal(skel & ~mask.data, np.zeros_like(skel))
