"""Thinning of road masks and extraction of a node/edge skeleton graph.

Foreground connectivity is 8-neighbour throughout. Thinning uses the
two-subiteration parallel algorithm in scikit-image (``thin``); a clean-up
stage then removes redundant corner pixels and any remaining fully-set 2x2
blocks, each deletion re-checked with a simple-point test so the topology
of every connected component is preserved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from skimage.morphology import thin

# Neighbour offsets clockwise from north: N, NE, E, SE, S, SW, W, NW.
OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
EIGHT = np.ones((3, 3), dtype=bool)


def neighbour_codes(img: np.ndarray) -> np.ndarray:
    """8-bit neighbourhood code per pixel (bit k set iff neighbour OFFSETS[k] is set)."""
    p = np.pad(img.astype(np.uint8), 1)
    h, w = img.shape
    code = np.zeros((h, w), dtype=np.uint8)
    for k, (dr, dc) in enumerate(OFFSETS):
        code |= p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w] << k
    return code


def neighbour_count(img: np.ndarray) -> np.ndarray:
    """Number of set 8-neighbours of each pixel."""
    img = np.asarray(img, dtype=bool)
    return ndimage.convolve(img.astype(np.uint8), EIGHT.astype(np.uint8), mode="constant") - img


def _bits(code: int) -> list:
    return [(code >> k) & 1 for k in range(8)]


def _fg_components(code: int) -> int:
    """Number of 8-components formed by the set neighbours."""
    b = _bits(code)
    pts = [OFFSETS[k] for k in range(8) if b[k]]
    seen, comps = set(), 0
    for p in pts:
        if p in seen:
            continue
        comps += 1
        stack = [p]
        seen.add(p)
        while stack:
            r, c = stack.pop()
            for q in pts:
                if q not in seen and max(abs(q[0] - r), abs(q[1] - c)) == 1:
                    seen.add(q)
                    stack.append(q)
    return comps


def _bg4_components(code: int) -> int:
    """Number of background 4-components in the ring that are 4-adjacent to the centre."""
    b = _bits(code)
    bg = {OFFSETS[k] for k in range(8) if not b[k]}
    seen, comps = set(), 0
    for start in [(-1, 0), (0, 1), (1, 0), (0, -1)]:
        if start not in bg or start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            r, c = stack.pop()
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                q = (r + dr, c + dc)
                if q in bg and q not in seen:
                    seen.add(q)
                    stack.append(q)
    return comps


@lru_cache(maxsize=None)
def _tables():
    simple = np.zeros(256, dtype=bool)
    fg_single = np.zeros(256, dtype=bool)
    for code in range(256):
        n_fg = _fg_components(code)
        simple[code] = n_fg == 1 and _bg4_components(code) == 1
        fg_single[code] = n_fg == 1
    return simple, fg_single


def _code_at(img: np.ndarray, r: int, c: int) -> int:
    h, w = img.shape
    code = 0
    for k, (dr, dc) in enumerate(OFFSETS):
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
            code |= 1 << k
    return code


def _delete_confirmed(img: np.ndarray, candidates: np.ndarray, simple: np.ndarray) -> int:
    """Sequentially delete candidates that are still simple non-endpoints."""
    removed = 0
    for r, c in np.argwhere(candidates):
        code = _code_at(img, r, c)
        if simple[code] and bin(code).count("1") >= 2:
            img[r, c] = False
            removed += 1
    return removed


def _clean_redundant(img: np.ndarray, simple: np.ndarray, deletable: np.ndarray) -> None:
    # Remove simple pixels that are not line ends (corner "staircase" pixels
    # and thick spots) until none remain.
    while True:
        cand = img & deletable & simple[neighbour_codes(img)] & (neighbour_count(img) >= 2)
        if not cand.any() or _delete_confirmed(img, cand, simple) == 0:
            return


def _full_blocks(img: np.ndarray) -> np.ndarray:
    """Top-left corners of fully set 2x2 blocks."""
    return np.argwhere(img[:-1, :-1] & img[1:, :-1] & img[:-1, 1:] & img[1:, 1:])


def _break_blocks(img: np.ndarray, simple: np.ndarray, fg_single: np.ndarray, deletable: np.ndarray) -> bool:
    """Remove one pixel from the first breakable 2x2 block; False if there is none."""
    for r0, c0 in _full_blocks(img):
        cells = [(r, c) for r, c in ((r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)) if deletable[r, c]]
        if cells:
            break
    else:
        return False
    for table in (simple, fg_single):
        for r, c in cells:
            if table[_code_at(img, r, c)]:
                img[r, c] = False
                return True
    # Every block pixel is a cut pixel. Drop the one whose removal orphans the
    # fewest pixels and drop the orphans too, keeping the component count.
    best = None
    for r, c in cells:
        trial = img.copy()
        trial[r, c] = False
        lab, _ = ndimage.label(trial, structure=EIGHT)
        ids = {lab[r + dr, c + dc] for dr, dc in OFFSETS
               if 0 <= r + dr < img.shape[0] and 0 <= c + dc < img.shape[1] and trial[r + dr, c + dc]}
        sizes = {i: int((lab == i).sum()) for i in ids}
        keep = max(sizes, key=lambda i: (sizes[i], -i))
        orphaned = sum(s for i, s in sizes.items() if i != keep)
        if best is None or orphaned < best[0]:
            best = (orphaned, r, c, [i for i in ids if i != keep], lab)
    _, r, c, drop, lab = best
    img[r, c] = False
    if drop:
        img[np.isin(lab, drop)] = False
    return True


def thin_cleanup(img: np.ndarray, deletable: np.ndarray | None = None) -> np.ndarray:
    """Make a near-thin skeleton 8-minimal and free of full 2x2 blocks, in place.

    Only pixels flagged in ``deletable`` (default: all) may be removed.
    """
    simple, fg_single = _tables()
    if deletable is None:
        deletable = np.ones(img.shape, dtype=bool)
    while True:
        _clean_redundant(img, simple, deletable)
        if not _break_blocks(img, simple, fg_single, deletable):
            return img


def skeletonize(mask) -> np.ndarray:
    """Thin a binary mask to a one-pixel-wide skeleton.

    Parameters
    ----------
    mask : array_like of bool or BinaryMask
        Road mask, ``True`` on road pixels.

    Returns
    -------
    numpy.ndarray of bool
        Skeleton with the same shape. It is a subset of ``mask``, contains no
        fully set 2x2 block, and has exactly one 8-connected component per
        8-connected component of ``mask``.
    """
    img = np.array(mask, dtype=bool, copy=True)
    if not img.any():
        return img
    img = thin(img).astype(bool)
    return thin_cleanup(img)


def connected_components(mask) -> tuple:
    """8-connected labelling; returns ``(labels, count)`` with labels 1..count.

    Labels are assigned in row-major order of each component's first pixel.
    """
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=EIGHT)
    return labels, int(count)


def grade_components(grade_labels) -> tuple:
    """Connected components computed separately per grade value.

    Returns ``(labels, count)``; a component never mixes grades.
    """
    grade_labels = np.asarray(grade_labels)
    out = np.zeros(grade_labels.shape, dtype=np.int32)
    total = 0
    for value in np.unique(grade_labels):
        if value == 0:
            continue
        lab, n = ndimage.label(grade_labels == value, structure=EIGHT)
        out[lab > 0] = lab[lab > 0] + total
        total += n
    # relabel to row-major first-pixel order for determinism
    if total:
        values, first = np.unique(out.ravel(), return_index=True)
        keep = values > 0
        values, first = values[keep], first[keep]
        remap = np.zeros(total + 1, dtype=np.int32)
        remap[values[np.argsort(first)]] = np.arange(1, len(values) + 1, dtype=np.int32)
        out = remap[out]
    return out, total


def prune_spurs(skel, min_length: int = 5) -> np.ndarray:
    """Drop terminal branches shorter than ``min_length`` pixels.

    A terminal branch runs from a line end to a junction. Isolated segments
    (no junction) are kept whatever their length, and a single pass is made
    so that pruning cannot eat whole roads.
    """
    img = np.array(skel, dtype=bool, copy=True)
    if min_length <= 1:
        return img
    graph = build_graph(img)
    drop = []
    for edge in graph.edges:
        a, b = (graph.nodes[i] for i in edge.node_ids)
        if {a.degree, b.degree} & {1} and max(a.degree, b.degree) >= 3 and len(edge.pixels) < min_length:
            tip = a if a.degree == 1 else b
            drop.append((edge, tip))
    dropped = {id(edge) for edge, _ in drop}
    keep = {tuple(p) for e in graph.edges if id(e) not in dropped for p in e.pixels}
    for edge, tip in drop:
        for r, c in list(edge.pixels) + list(tip.pixels):
            if (r, c) not in keep:
                img[r, c] = False
    return img


@dataclass
class Node:
    id: int
    pixel: tuple
    degree: int
    pixels: list = field(default_factory=list)


@dataclass
class Segment:
    """One skeleton edge: an 8-connected pixel polyline between two nodes.

    ``pixels`` runs from the first node pixel to the second node pixel
    inclusive, so consecutive entries are always 8-adjacent.
    """

    id: int
    pixels: list
    node_ids: tuple

    @property
    def closed(self) -> bool:
        return len(self.pixels) > 1 and tuple(self.pixels[0]) == tuple(self.pixels[-1])


@dataclass
class SkeletonGraph:
    shape: tuple
    nodes: list
    edges: list

    def adjacency(self) -> dict:
        adj = {n.id: [] for n in self.nodes}
        for e in self.edges:
            for nid in e.node_ids:
                adj[nid].append(e.id)
        return adj

    def node_of_pixel(self) -> dict:
        return {tuple(p): n.id for n in self.nodes for p in n.pixels}

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "nodes": [{"id": n.id, "pixel": list(n.pixel), "degree": n.degree,
                       "pixels": [list(p) for p in n.pixels]} for n in self.nodes],
            "edges": [{"id": e.id, "nodes": list(e.node_ids), "pixels": [list(p) for p in e.pixels]}
                      for e in self.edges],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SkeletonGraph":
        nodes = [Node(n["id"], tuple(n["pixel"]), n["degree"], [tuple(p) for p in n["pixels"]])
                 for n in obj["nodes"]]
        edges = [Segment(e["id"], [tuple(p) for p in e["pixels"]], tuple(e["nodes"])) for e in obj["edges"]]
        return cls(tuple(obj["shape"]), nodes, edges)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _neighbours(img: np.ndarray, r: int, c: int):
    h, w = img.shape
    for dr, dc in OFFSETS:
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
            yield rr, cc


def _cluster_path(node: Node, target) -> list:
    """Pixels inside a node cluster from its representative to ``target``."""
    if target == node.pixel:
        return [target]
    members = set(node.pixels)
    parent = {node.pixel: None}
    queue = [node.pixel]
    for cur in queue:
        if cur == target:
            break
        for dr, dc in OFFSETS:
            q = (cur[0] + dr, cur[1] + dc)
            if q in members and q not in parent:
                parent[q] = cur
                queue.append(q)
    out, cur = [], target
    while cur is not None:
        out.append(cur)
        cur = parent[cur]
    return out[::-1]


def build_graph(skel) -> SkeletonGraph:
    """Convert a skeleton raster into nodes and edges.

    Pixels whose neighbour count differs from two are node pixels; touching
    junction pixels (three or more neighbours) merge into one node whose
    representative is the member closest to the cluster centroid. Every
    other skeleton pixel lies inside exactly one edge. A loop without
    junctions gets an anchor node at its first pixel in row-major order and
    one closed edge; an isolated pixel is a degree-0 node with a one-pixel
    edge. Node degree is the number of incident edge ends.
    """
    img = np.asarray(skel, dtype=bool)
    counts = neighbour_count(img)
    node_mask = img & (counts != 2)
    junction_lab, _ = ndimage.label(node_mask & (counts >= 3), structure=EIGHT)

    nodes: list = []
    pixel_node: dict = {}

    def add_node(pixels) -> Node:
        pixels = sorted(pixels)
        centre = np.mean(pixels, axis=0)
        rep = min(pixels, key=lambda p: ((p[0] - centre[0]) ** 2 + (p[1] - centre[1]) ** 2, p))
        node = Node(len(nodes), rep, 0, pixels)
        nodes.append(node)
        for p in pixels:
            pixel_node[p] = node.id
        return node

    clusters: dict = {}
    for r, c in np.argwhere(junction_lab):
        clusters.setdefault(int(junction_lab[r, c]), []).append((int(r), int(c)))
    for r, c in np.argwhere(node_mask):
        r, c = int(r), int(c)
        k = int(junction_lab[r, c])
        if (r, c) in pixel_node:
            continue
        add_node(clusters[k] if k else [(r, c)])

    edges: list = []
    used = np.zeros(img.shape, dtype=bool)
    direct = set()

    for node in list(nodes):
        for p in node.pixels:
            for q in _neighbours(img, *p):
                other = pixel_node.get(q)
                if other == node.id:
                    continue
                if other is not None:
                    key = (min(node.id, other), max(node.id, other))
                    if key not in direct:
                        direct.add(key)
                        a, b = nodes[key[0]], nodes[key[1]]
                        pa, pb = (p, q) if a is node else (q, p)
                        path = _cluster_path(a, pa) + _cluster_path(b, pb)[::-1]
                        edges.append(Segment(len(edges), path, key))
                    continue
                if used[q]:
                    continue
                path = _cluster_path(node, p)
                prev, cur = p, q
                while cur not in pixel_node:
                    used[cur] = True
                    path.append(cur)
                    nxt = [n for n in _neighbours(img, *cur) if n != prev and not used[n]]
                    if not nxt:
                        break
                    prev, cur = cur, nxt[0]
                end = pixel_node.get(cur)
                if end is None:
                    end = node.id  # dead end inside a malformed skeleton
                else:
                    path.extend(_cluster_path(nodes[end], cur)[::-1])
                edges.append(Segment(len(edges), path, (node.id, end)))

    # Remaining interior pixels form junction-free loops.
    for r, c in np.argwhere(img & ~used & ~node_mask):
        r, c = int(r), int(c)
        if used[r, c]:
            continue
        anchor = add_node([(r, c)])
        used[r, c] = True
        path, prev, cur = [(r, c)], None, (r, c)
        while True:
            nxt = [n for n in _neighbours(img, *cur) if n != prev and not used[n]]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            used[cur] = True
            path.append(cur)
        path.append((r, c))
        edges.append(Segment(len(edges), path, (anchor.id, anchor.id)))

    for e in edges:
        for nid in e.node_ids:
            nodes[nid].degree += 1
    for node in nodes:
        if node.degree == 0:
            edges.append(Segment(len(edges), [node.pixel], (node.id, node.id)))
    return SkeletonGraph(tuple(img.shape), nodes, edges)


def segments(graph: SkeletonGraph) -> list:
    """All edges of the graph in id order."""
    return sorted(graph.edges, key=lambda e: e.id)
