"""Per-segment geometric descriptors and their discretisation into words."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage, stats

from .errors import EmptySegment, InvalidThresholds, SegmentOutsideMask, ValidationError

DEFAULT_CURVATURE_STEP = 5.0
DEFAULT_DENSITY_RADIUS = 64
LANE_WIDTH_M = 3.5


@dataclass
class DescriptorVector:
    segment_id: int
    length_m: float
    width_m: float
    straightness: float
    curvature: float
    degree: int
    density: float
    curvature_valid: bool = True
    orientation_var: float | None = None
    lane_count: int | None = None


@dataclass(frozen=True)
class DescriptorThresholds:
    """Cut points; a value equal to a cut point belongs to the upper class."""

    length_m: tuple = (200.0, 1000.0)
    width_m: tuple = (6.0, 15.0)
    straight_min: float = 0.9
    dense_min: float = 0.02

    def __post_init__(self):
        for name in ("length_m", "width_m"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo < hi):
                raise InvalidThresholds(f"{name} thresholds must satisfy 0 <= low < high, got {(lo, hi)}")
        if not 0 <= self.straight_min <= 1:
            raise InvalidThresholds("straight_min must lie in [0, 1]")
        if not 0 <= self.dense_min <= 1:
            raise InvalidThresholds("dense_min must lie in [0, 1]")


@dataclass(frozen=True)
class DescriptorCategories:
    length_word: str
    width_word: str
    shape_word: str
    context_word: str

    @property
    def area_word(self) -> str:
        # approximation: dense surroundings are taken to be urban
        return "urban" if self.context_word == "dense" else "rural"


def _pixels(seg) -> np.ndarray:
    px = getattr(seg, "pixels", seg)
    arr = np.asarray(px, dtype=float).reshape(-1, 2)
    if len(arr) == 0:
        raise EmptySegment("segment has no pixels")
    return arr


def _path_length_px(pts: np.ndarray) -> float:
    return float(np.hypot(*np.diff(pts, axis=0).T).sum()) if len(pts) > 1 else 0.0


def segment_length(seg, resolution_m: float) -> float:
    """Polyline length in metres (unit steps for axis moves, sqrt(2) for diagonals)."""
    return _path_length_px(_pixels(seg)) * resolution_m


def width_map(mask) -> np.ndarray:
    """Local road width in pixels, ``2 * EDT - 1``, zero off the road."""
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        # no background anywhere: measure against an all-background frame
        edt = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
    else:
        edt = ndimage.distance_transform_edt(mask)
    return np.where(mask, 2.0 * edt - 1.0, 0.0)


def mean_width(seg, mask, resolution_m: float, widths: np.ndarray | None = None,
               allow_outside: bool = False) -> float:
    """Mean road width (metres) sampled on the segment pixels.

    ``widths`` may carry a precomputed :func:`width_map`. With
    ``allow_outside`` pixels off the mask (such as reconstruction bridges)
    are skipped instead of raising.
    """
    mask = np.asarray(mask, dtype=bool)
    if widths is None:
        widths = width_map(mask)
    px = _pixels(seg).astype(int)
    inside = mask[px[:, 0], px[:, 1]]
    if not inside.all():
        if not allow_outside or not inside.any():
            r, c = px[~inside][0]
            raise SegmentOutsideMask(f"segment pixel ({r}, {c}) is not a road pixel")
        px = px[inside]
    return float(widths[px[:, 0], px[:, 1]].mean() * resolution_m)


def straightness(seg) -> float:
    """Chord length over path length; 1 for a single pixel, 0 for a closed loop."""
    pts = _pixels(seg)
    path = _path_length_px(pts)
    if path == 0:
        return 1.0
    return float(min(1.0, np.hypot(*(pts[-1] - pts[0])) / path))


def _offsets(pts: np.ndarray, step: float) -> np.ndarray:
    # Interpolate offsets from the first pixel so that lattice rotations and
    # translations give bit-identical turning angles.
    rel = pts - pts[0]
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    s = np.arange(0.0, cum[-1] + 1e-9, step)
    return np.column_stack([np.interp(s, cum, rel[:, 0]), np.interp(s, cum, rel[:, 1])])


def resample(seg, step: float) -> np.ndarray:
    """Points at fixed arc-length spacing along the pixel polyline."""
    pts = _pixels(seg)
    return pts if len(pts) < 2 else pts[0] + _offsets(pts, step)


def _turns(seg, step: float) -> np.ndarray:
    pts = _pixels(seg)
    if len(pts) < 2:
        return np.zeros(0)
    d = np.diff(_offsets(pts, step), axis=0)
    a, b = d[:-1], d[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    return np.arctan2(cross, dot)


def _headings(seg, step: float) -> np.ndarray:
    d = np.diff(resample(seg, step), axis=0)
    return np.arctan2(-d[:, 0], d[:, 1])


def mean_curvature(seg, resolution_m: float, step: float = DEFAULT_CURVATURE_STEP,
                   return_valid: bool = False):
    """Mean absolute turning per metre after resampling every ``step`` pixels.

    Segments too short to give three samples report 0.0; pass
    ``return_valid=True`` to get ``(value, valid)``.
    """
    turns = _turns(seg, step)
    if len(turns) < 1:
        return (0.0, False) if return_valid else 0.0
    value = float(np.abs(turns).mean() / (step * resolution_m))
    return (value, True) if return_valid else value


def orientation_variability(seg, step: float = DEFAULT_CURVATURE_STEP) -> float:
    """Circular standard deviation (degrees) of resampled tangent directions. Experimental."""
    heads = _headings(seg, step)
    if len(heads) < 2:
        return 0.0
    return float(np.degrees(stats.circstd(heads)))


def lane_count(width_m: float, lane_width_m: float = LANE_WIDTH_M) -> int:
    """Rough lane count from road width. Experimental."""
    return max(1, int(round(width_m / lane_width_m)))


def node_degree(seg, graph) -> int:
    """Largest degree among the segment's two end nodes (at least 1)."""
    by_id = {n.id: n for n in graph.nodes}
    return max(1, *(by_id[i].degree for i in seg.node_ids))


def _disk_offsets(radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = yy ** 2 + xx ** 2 <= radius ** 2
    return np.column_stack([yy[keep], xx[keep]])


def local_density(seg, skel, radius_px: float = DEFAULT_DENSITY_RADIUS) -> float:
    """Share of the disc around the segment midpoint covered by other skeleton pixels."""
    if radius_px < 1:
        raise ValidationError("radius_px must be >= 1")
    skel = np.asarray(skel, dtype=bool)
    pts = _pixels(seg).astype(int)
    mid = pts[len(pts) // 2]
    off = _disk_offsets(radius_px) + mid
    ok = (off[:, 0] >= 0) & (off[:, 0] < skel.shape[0]) & (off[:, 1] >= 0) & (off[:, 1] < skel.shape[1])
    off = off[ok]
    hits = skel[off[:, 0], off[:, 1]].copy()
    own = {tuple(p) for p in pts.tolist()}
    hits &= np.array([tuple(p) not in own for p in off.tolist()], dtype=bool)
    return float(min(1.0, max(0.0, hits.sum() / (math.pi * radius_px ** 2))))


def describe_segment(seg, graph, mask, skel, resolution_m: float, widths=None,
                     density_radius: float = DEFAULT_DENSITY_RADIUS,
                     curvature_step: float = DEFAULT_CURVATURE_STEP,
                     extra: bool = False, allow_outside: bool = False) -> DescriptorVector:
    width = mean_width(seg, mask, resolution_m, widths, allow_outside=allow_outside)
    curv, valid = mean_curvature(seg, resolution_m, curvature_step, return_valid=True)
    v = DescriptorVector(
        segment_id=seg.id,
        length_m=segment_length(seg, resolution_m),
        width_m=width,
        straightness=straightness(seg),
        curvature=curv,
        degree=node_degree(seg, graph),
        density=local_density(seg, skel, density_radius),
        curvature_valid=valid,
    )
    if extra:
        v.orientation_var = orientation_variability(seg, curvature_step)
        v.lane_count = lane_count(width)
    return v


def describe(graph, mask, skel, resolution_m: float, **kwargs) -> list:
    """Descriptor vectors for every edge of ``graph``, in segment id order."""
    widths = width_map(mask)
    return [describe_segment(e, graph, mask, skel, resolution_m, widths=widths, **kwargs)
            for e in sorted(graph.edges, key=lambda e: e.id)]


def _three_way(value: float, cuts: tuple, words: tuple) -> str:
    lo, hi = cuts
    if value < lo:
        return words[0]
    return words[1] if value < hi else words[2]


def discretize(v: DescriptorVector, thresholds: DescriptorThresholds = DescriptorThresholds()) -> DescriptorCategories:
    return DescriptorCategories(
        length_word=_three_way(v.length_m, thresholds.length_m, ("short", "medium", "long")),
        width_word=_three_way(v.width_m, thresholds.width_m, ("narrow", "medium", "wide")),
        shape_word="straight" if v.straightness >= thresholds.straight_min else "curvy",
        context_word="dense" if v.density >= thresholds.dense_min else "sparse",
    )


CATEGORY_FIELDS = ("length_word", "width_word", "shape_word", "context_word")


def table_rows(vectors, thresholds: DescriptorThresholds = DescriptorThresholds()) -> list:
    rows = []
    for v in vectors:
        row = asdict(v)
        row.update(asdict(discretize(v, thresholds)))
        rows.append(row)
    return rows


def write_csv(vectors, path, thresholds: DescriptorThresholds = DescriptorThresholds()) -> None:
    names = [f.name for f in fields(DescriptorVector)] + list(CATEGORY_FIELDS)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for row in table_rows(vectors, thresholds):
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in names})


def write_json(vectors, path, thresholds: DescriptorThresholds = DescriptorThresholds()) -> None:
    with open(path, "w") as fh:
        json.dump({"segments": table_rows(vectors, thresholds)}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> list:
    with open(path) as fh:
        rows = json.load(fh)["segments"]
    names = {f.name for f in fields(DescriptorVector)}
    return [DescriptorVector(**{k: v for k, v in row.items() if k in names}) for row in rows]
