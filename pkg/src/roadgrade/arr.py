"""Automatic road reconstruction: bridge gaps between skeleton line ends.

Angles are in degrees, measured counter-clockwise from the +x (column)
axis with y pointing up the image, so a pixel ``(row, col)`` has
``x = col`` and ``y = -row``. The orientation of an endpoint points from
the endpoint into the road it terminates; a gap is continued along the
reversed direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from skimage.draw import line as raster_line

from .errors import DegeneratePath, ValidationError
from .skeleton import OFFSETS, build_graph, neighbour_count, thin_cleanup


@dataclass(frozen=True)
class ArrConfig:
    backtrack_lengths: tuple = (10, 15, 20)
    max_angle_dev: float = 30.0
    w1: float = 0.2
    w2: float = 0.8
    max_search_radius: float = 100.0
    passes: int = 1

    def __post_init__(self):
        lengths = tuple(int(v) for v in self.backtrack_lengths)
        object.__setattr__(self, "backtrack_lengths", lengths)
        if not lengths or lengths[0] < 1 or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValidationError(f"backtrack_lengths must be positive and strictly increasing: {lengths}")
        if not 0 < self.max_angle_dev < 90:
            raise ValidationError("max_angle_dev must lie in (0, 90) degrees")
        if not (self.w1 > 0 and self.w2 > 0):
            raise ValidationError("w1 and w2 must be positive")
        if not self.max_search_radius > 0:
            raise ValidationError("max_search_radius must be positive")
        if self.passes < 1:
            raise ValidationError("passes must be >= 1")

    @property
    def weights(self) -> tuple:
        total = sum(self.backtrack_lengths)
        return tuple(l / total for l in self.backtrack_lengths)


@dataclass
class Endpoint:
    pixel: tuple
    beta: float
    backtrack_points: list = field(default_factory=list)  # [(pixel, steps)]
    segment_id: int | None = None


@dataclass
class MatchCandidate:
    source: Endpoint
    target: Endpoint
    beta: float          # target orientation
    alpha: float         # direction of the connecting line source -> target
    distance: float
    degree: float = math.nan  # matching degree, filled by the caller


@dataclass(frozen=True)
class Bridge:
    a: tuple
    b: tuple
    degree: float


def direction(p0, p1) -> float:
    """Direction in degrees [0, 360) from pixel ``p0`` to pixel ``p1``."""
    return math.degrees(math.atan2(-(p1[0] - p0[0]), p1[1] - p0[1])) % 360.0


def angular_deviation(a: float, b: float) -> float:
    """Minimal circular distance between two angles, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


def detect_endpoints(skel) -> list:
    """Skeleton pixels with exactly one 8-neighbour, in row-major order."""
    img = np.asarray(skel, dtype=bool)
    return [(int(r), int(c)) for r, c in np.argwhere(img & (neighbour_count(img) == 1))]


def walk(skel, start, max_steps: int) -> list:
    """Follow the skeleton from ``start`` for at most ``max_steps`` steps.

    The walk stops early at a branching pixel (more than one way forward) or
    a dead end. Returns the visited pixels, ``start`` first.
    """
    img = np.asarray(skel, dtype=bool)
    h, w = img.shape
    path = [tuple(start)]
    visited = {tuple(start)}
    prev = None
    while len(path) <= max_steps:
        r, c = path[-1]
        nxt = [(r + dr, c + dc) for dr, dc in OFFSETS
               if 0 <= r + dr < h and 0 <= c + dc < w and img[r + dr, c + dc] and (r + dr, c + dc) not in visited]
        if len(nxt) > 1 and prev is not None:
            # pixels also touching the previous one are corner shortcuts, not branches
            nxt = [q for q in nxt if max(abs(q[0] - prev[0]), abs(q[1] - prev[1])) > 1] or nxt
        if len(nxt) != 1:
            break
        prev = path[-1]
        path.append(nxt[0])
        visited.add(nxt[0])
    return path


def backtrack_points(skel, p0, cfg: ArrConfig = ArrConfig()) -> list:
    """Backtracking points ``[(pixel, steps)]`` used for the orientation of ``p0``.

    Uses the configured step counts that the skeleton path can supply; when
    the path is shorter than the first one, the farthest reachable pixel is
    used alone.
    """
    path = walk(skel, p0, max(cfg.backtrack_lengths))
    if len(path) < 2:
        raise DegeneratePath(f"no skeleton path leaves {tuple(p0)}")
    available = len(path) - 1
    points = [(path[l], l) for l in cfg.backtrack_lengths if l <= available]
    return points or [(path[-1], available)]


def weighted_orientation(p0, points) -> float:
    """Length-weighted mean direction from ``p0`` to the backtracking points.

    Angles are unwrapped around the first one before averaging so that, for
    example, 359 and 1 degrees average to 0 rather than 180.
    """
    total = sum(l for _, l in points)
    ref = direction(p0, points[0][0])
    acc = 0.0
    for p, l in points:
        a = direction(p0, p)
        a += 360.0 * round((ref - a) / 360.0)
        acc += a * (l / total)
    return acc % 360.0


def backtrack_orientation(skel, p0, cfg: ArrConfig = ArrConfig()) -> float:
    """Weighted-average orientation (degrees) of the endpoint ``p0``."""
    return weighted_orientation(p0, backtrack_points(skel, p0, cfg))


def make_endpoints(skel, cfg: ArrConfig = ArrConfig(), graph=None) -> list:
    """Detect endpoints and attach orientation and segment id to each."""
    img = np.asarray(skel, dtype=bool)
    graph = graph or build_graph(img)
    seg_of = {}
    for e in graph.edges:
        for p in (e.pixels[0], e.pixels[-1]):
            seg_of.setdefault(tuple(p), e.id)
    out = []
    for p in detect_endpoints(img):
        pts = backtrack_points(img, p, cfg)
        out.append(Endpoint(p, weighted_orientation(p, pts), pts, seg_of.get(p)))
    return out


def candidate(e: Endpoint, other: Endpoint) -> MatchCandidate:
    dist = math.hypot(other.pixel[0] - e.pixel[0], other.pixel[1] - e.pixel[1])
    return MatchCandidate(e, other, other.beta, direction(e.pixel, other.pixel), dist)


def filter_candidates(e: Endpoint, others, cfg: ArrConfig = ArrConfig()) -> list:
    """Partners admissible for ``e`` under the distance and angular gates.

    Both the partner's orientation and the connecting-line direction must
    deviate from ``e``'s outward direction by strictly less than
    ``cfg.max_angle_dev``. Partners on the same segment are skipped.
    """
    outward = (e.beta + 180.0) % 360.0
    kept = []
    for o in others:
        if o is e or o.pixel == e.pixel:
            continue
        if e.segment_id is not None and o.segment_id == e.segment_id:
            continue
        c = candidate(e, o)
        if not 0 < c.distance <= cfg.max_search_radius:
            continue
        if angular_deviation(c.beta, outward) >= cfg.max_angle_dev:
            continue
        if angular_deviation(c.alpha, outward) >= cfg.max_angle_dev:
            continue
        c.degree = matching_degree(c, cfg)
        kept.append(c)
    return kept


def matching_degree(c: MatchCandidate, cfg: ArrConfig = ArrConfig()) -> float:
    """Arc-length matching degree; smaller is better.

    The orientation deviation (radians) times the gap length is the arc the
    deviation sweeps at that radius, so both terms are in pixels.
    """
    outward = (c.source.beta + 180.0) % 360.0
    dev = math.radians(angular_deviation(c.beta, outward))
    return dev * c.distance * cfg.w1 + c.distance * cfg.w2


def _best(cands) -> MatchCandidate | None:
    # ties go to the partner that comes first in row-major order
    return min(cands, key=lambda c: (c.degree, c.target.pixel), default=None)


def match_endpoints(endpoints, cfg: ArrConfig = ArrConfig()) -> list:
    """Mutual-best pairing repeated over the unmatched endpoints until stable.

    A pair is considered only when each end passes the other's gates, so an
    endpoint never waits on a partner that could not accept it.
    """
    admissible = {e.pixel: filter_candidates(e, endpoints, cfg) for e in endpoints}
    accepts = {p: {c.target.pixel for c in cands} for p, cands in admissible.items()}
    admissible = {p: [c for c in cands if p in accepts[c.target.pixel]] for p, cands in admissible.items()}
    free = {e.pixel: e for e in endpoints}
    bridges = []
    while True:
        best = {}
        for p, e in free.items():
            b = _best([c for c in admissible[p] if c.target.pixel in free])
            if b is not None:
                best[p] = b
        new = [(p, b) for p, b in best.items()
               if b.target.pixel in best and best[b.target.pixel].target.pixel == p and p < b.target.pixel]
        if not new:
            return bridges
        for p, b in sorted(new):
            bridges.append(Bridge(p, b.target.pixel, b.degree))
            free.pop(p)
            free.pop(b.target.pixel)


def bridge_pixels(a, b) -> list:
    rr, cc = raster_line(int(a[0]), int(a[1]), int(b[0]), int(b[1]))
    return list(zip(rr.tolist(), cc.tolist()))


def reconstruct(skel, cfg: ArrConfig = ArrConfig(), return_bridges: bool = False):
    """Close skeleton gaps by joining mutually best-matching endpoints.

    Parameters
    ----------
    skel : array_like of bool
        One-pixel-wide skeleton.
    cfg : ArrConfig
        Backtracking lengths, angular limit, matching weights, search radius
        and number of passes.
    return_bridges : bool
        Also return the list of :class:`Bridge` objects that were drawn.

    Returns
    -------
    numpy.ndarray of bool, or (array, list of Bridge)
    """
    img = np.array(skel, dtype=bool, copy=True)
    all_bridges = []
    for _ in range(cfg.passes):
        bridges = match_endpoints(make_endpoints(img, cfg), cfg)
        if not bridges:
            break
        touched = np.zeros(img.shape, dtype=bool)
        for br in bridges:
            for r, c in bridge_pixels(br.a, br.b):
                img[r, c] = True
                touched[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = True
        _rethin(img, touched)
        all_bridges.extend(bridges)
    return (img, all_bridges) if return_bridges else img


def _rethin(img: np.ndarray, region: np.ndarray) -> None:
    # Re-thin only around the bridges; the rest of the skeleton is untouched.
    rows, cols = np.nonzero(region)
    r0, r1 = max(rows.min() - 1, 0), min(rows.max() + 2, img.shape[0])
    c0, c1 = max(cols.min() - 1, 0), min(cols.max() + 2, img.shape[1])
    window = img[r0:r1, c0:c1].copy()
    img[r0:r1, c0:c1] = thin_cleanup(window, deletable=region[r0:r1, c0:c1])
