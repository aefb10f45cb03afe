import json

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import ndimage
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.draw import circle_perimeter, disk

from oracles import count_neighbours, flood_components
from roadgrade.skeleton import (
    SkeletonGraph, build_graph, connected_components, grade_components, neighbour_count, prune_spurs, skeletonize,
)


def full_blocks(img):
    return bool((img[:-1, :-1] & img[1:, :-1] & img[:-1, 1:] & img[1:, 1:]).any())


def check_invariants(mask):
    skel = skeletonize(mask)
    assert not (skel & ~mask).any()
    assert not full_blocks(skel)
    assert len(flood_components(skel)) == len(flood_components(mask))
    return skel


def test_horizontal_strip_centreline():
    m = np.zeros((9, 40), dtype=bool)
    m[:, :] = True
    m = np.pad(m, 2)
    skel = check_invariants(m)
    rows = np.argwhere(skel)[:, 0]
    assert set(rows) == {6}


def test_disk_and_ring():
    m = np.zeros((60, 60), dtype=bool)
    m[disk((30, 30), 20)] = True
    assert check_invariants(m).sum() >= 1
    ring = np.zeros((60, 60), dtype=bool)
    ring[disk((30, 30), 20)] = True
    ring[disk((30, 30), 12)] = False
    skel = check_invariants(ring)
    # a ring keeps its hole (background taken 4-connected)
    assert ndimage.label(~skel)[1] == 2


def test_empty_and_full():
    assert not skeletonize(np.zeros((5, 5), bool)).any()
    check_invariants(np.ones((7, 7), bool))
    check_invariants(np.ones((1, 1), bool))


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 24), st.integers(1, 24))))
def test_invariants_property(mask):
    check_invariants(mask)


@settings(max_examples=30, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_idempotent(mask):
    skel = skeletonize(mask)
    assert np.array_equal(skeletonize(skel), skel)


def test_neighbour_count_matches_oracle():
    rng = np.random.default_rng(3)
    img = rng.random((15, 17)) < 0.5
    nc = neighbour_count(img)
    for r in range(15):
        for c in range(17):
            assert nc[r, c] == count_neighbours(img, r, c)


def test_components_match_flood_fill():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = rng.random((20, 20)) < 0.4
        labels, n = connected_components(m)
        comps = flood_components(m)
        assert n == len(comps)
        for i, comp in enumerate(comps, 1):
            assert all(labels[p] == i for p in comp)


def test_grade_components_split_by_grade():
    g = np.array([[3, 3, 0, 1],
                  [0, 2, 0, 1],
                  [1, 0, 0, 0]])
    labels, n = grade_components(g)
    assert n == 4
    assert labels.tolist() == [[1, 1, 0, 2], [0, 3, 0, 2], [4, 0, 0, 0]]


def test_graph_t_junction():
    m = np.zeros((40, 41), dtype=bool)
    m[5, 2:39] = True
    m[5:35, 20] = True
    g = build_graph(m)
    degrees = sorted(n.degree for n in g.nodes)
    assert degrees == [1, 1, 1, 3]
    assert len(g.edges) == 3
    for e in g.edges:
        for p, q in zip(e.pixels, e.pixels[1:]):
            assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1
    covered = {tuple(p) for e in g.edges for p in e.pixels}
    assert covered == {tuple(p) for p in np.argwhere(m)}


def test_graph_loop_and_isolated():
    ring = np.zeros((30, 30), dtype=bool)
    rr, cc = circle_perimeter(15, 15, 10)
    ring[rr, cc] = True
    ring = skeletonize(ring)
    g = build_graph(ring)
    assert len(g.nodes) == 1 and g.nodes[0].degree == 2
    assert len(g.edges) == 1 and g.edges[0].closed
    dot = np.zeros((3, 3), bool)
    dot[1, 1] = True
    g = build_graph(dot)
    assert [n.degree for n in g.nodes] == [0] and len(g.edges) == 1


def test_graph_json_roundtrip():
    m = np.zeros((20, 20), bool)
    m[3, 2:18] = True
    m[3:15, 10] = True
    g = build_graph(m)
    again = SkeletonGraph.from_json(json.loads(g.dumps()))
    assert again.dumps() == g.dumps()


def test_prune_spurs():
    m = np.zeros((30, 40), bool)
    m[10, 2:38] = True
    m[11:13, 20] = True  # 2-pixel spur
    m[11:25, 30] = True  # long branch
    out = prune_spurs(m, 5)
    assert not out[11:13, 20].any()
    assert out[11:25, 30].all()
    assert out[10, 2:38].all()
    lone = np.zeros((5, 5), bool)
    lone[2, 1:4] = True
    assert np.array_equal(prune_spurs(lone, 5), lone)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_component_count_under_rotation(k):
    rng = np.random.default_rng(k)
    m = rng.random((30, 30)) < 0.5
    assert len(flood_components(skeletonize(np.rot90(m, k)))) == len(flood_components(m))


@settings(max_examples=40, deadline=None)
@given(arrays(bool, st.tuples(st.integers(3, 30), st.integers(3, 30))), st.integers(2, 8))
def test_prune_keeps_components(mask, length):
    skel = skeletonize(mask)
    pruned = prune_spurs(skel, length)
    assert not (pruned & ~skel).any()
    assert len(flood_components(pruned)) == len(flood_components(skel))
