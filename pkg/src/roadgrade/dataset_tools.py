"""Ground-truth construction: centreline files, road buffers, split manifests.

Centreline JSON layout::

    {"resolution_m": 0.8,
     "units": "px",                      # or "m"; optional, default "px"
     "lines": [{"id": 1, "grade": "high", "points": [[x, y], ...], "width_m": 15.0}]}

``x`` is the column and ``y`` the row of a pixel centre. Unknown keys are
kept and written back unchanged.
"""

from __future__ import annotations

import copy
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLine, EmptyCatalog, EmptyDirectory, InvalidGrade, ParseError, TooFewPoints, ValidationError,
)
from .labels import BACKGROUND, Grade
from .raster_io import DEFAULT_RESOLUTION_M

LANE_WIDTHS_M = (3.25, 3.5, 3.75)
LANE_COUNTS = (2, 4, 6, 8)
# published split sizes: train, val, test
SPLIT_SIZES = (871, 108, 100)
TILE_SUFFIXES = (".png", ".pgm", ".ppm", ".tif", ".tiff", ".jpg", ".jpeg")


@dataclass
class Centerline:
    id: object
    grade: Grade
    points: list
    width_m: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class CenterlineFile:
    lines: list
    resolution_m: float = DEFAULT_RESOLUTION_M
    units: str = "px"
    extra: dict = field(default_factory=dict)

    def pixel_points(self, line: Centerline) -> np.ndarray:
        pts = np.asarray(line.points, dtype=float)
        return pts / self.resolution_m if self.units == "m" else pts


def _fail(cls, where: str, msg: str):
    raise cls(f"{where}: {msg}")


def parse_centerlines(obj, source: str = "<json>") -> CenterlineFile:
    if not isinstance(obj, dict):
        _fail(ParseError, source, "top level must be an object")
    res = obj.get("resolution_m", DEFAULT_RESOLUTION_M)
    if not isinstance(res, (int, float)) or isinstance(res, bool) or not res > 0:
        _fail(ParseError, f"{source}: field 'resolution_m'", f"must be a positive number, got {res!r}")
    units = obj.get("units", "px")
    if units not in ("px", "m"):
        _fail(ParseError, f"{source}: field 'units'", f"must be 'px' or 'm', got {units!r}")
    raw_lines = obj.get("lines")
    if not isinstance(raw_lines, list):
        _fail(ParseError, f"{source}: field 'lines'", "must be a list")
    lines = []
    for i, raw in enumerate(raw_lines):
        where = f"{source}: lines[{i}]"
        if not isinstance(raw, dict):
            _fail(ParseError, where, "must be an object")
        for key in ("id", "grade", "points"):
            if key not in raw:
                _fail(ParseError, where, f"missing field {key!r}")
        lid = raw["id"]
        where = f"{source}: line id {lid!r}"
        try:
            grade = Grade.from_word(raw["grade"]) if isinstance(raw["grade"], str) else None
        except ValueError:
            grade = None
        if grade is None:
            _fail(InvalidGrade, where, f"grade {raw['grade']!r} is not one of high/medium/low")
        pts = raw["points"]
        if not isinstance(pts, list) or len(pts) < 2:
            _fail(TooFewPoints, where, "needs at least 2 points")
        for j, p in enumerate(pts):
            if (not isinstance(p, (list, tuple)) or len(p) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in p)):
                _fail(ParseError, f"{where} points[{j}]", f"must be a pair of finite numbers, got {p!r}")
        width = raw.get("width_m")
        if width is not None and (not isinstance(width, (int, float)) or isinstance(width, bool) or not width > 0):
            _fail(ParseError, f"{where} field 'width_m'", f"must be a positive number, got {width!r}")
        extra = {k: copy.deepcopy(v) for k, v in raw.items() if k not in ("id", "grade", "points", "width_m")}
        lines.append(Centerline(lid, grade, [list(p) for p in pts], width, extra))
    extra = {k: copy.deepcopy(v) for k, v in obj.items() if k not in ("resolution_m", "units", "lines")}
    return CenterlineFile(lines, float(res), units, extra)


def load_centerlines(path) -> CenterlineFile:
    """Read and validate a centreline JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: no such file") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_centerlines(obj, str(path))


def centerlines_to_json(cf: CenterlineFile) -> dict:
    out = dict(copy.deepcopy(cf.extra))
    out["resolution_m"] = cf.resolution_m
    out["units"] = cf.units
    out["lines"] = []
    for line in cf.lines:
        row = dict(copy.deepcopy(line.extra))
        row.update({"id": line.id, "grade": line.grade.word, "points": [list(p) for p in line.points]})
        if line.width_m is not None:
            row["width_m"] = line.width_m
        out["lines"].append(row)
    return out


def save_centerlines(cf: CenterlineFile, path) -> None:
    Path(path).write_text(json.dumps(centerlines_to_json(cf), indent=2) + "\n")


def width_catalog(lane_widths=LANE_WIDTHS_M, lane_counts=LANE_COUNTS) -> tuple:
    """Sorted, de-duplicated lane width x lane count products (metres)."""
    widths = {round(w * n, 9) for w, n in itertools.product(lane_widths, lane_counts)}
    if any(w <= 0 for w in widths):
        raise ValidationError("catalog widths must be positive")
    return tuple(sorted(widths))


def select_buffer_width(observed_m: float, catalog=None) -> float:
    """Catalogue width closest to the observed width; ties go to the narrower one."""
    catalog = width_catalog() if catalog is None else tuple(sorted(catalog))
    if not catalog:
        raise EmptyCatalog("width catalog is empty")
    if not observed_m > 0:
        raise ValidationError(f"observed width must be positive, got {observed_m}")
    return min(catalog, key=lambda w: (abs(w - observed_m), w))


def _distance_to_polyline(rows: np.ndarray, cols: np.ndarray, pts: np.ndarray) -> np.ndarray:
    d2 = np.full(rows.shape, np.inf)
    px, py = cols.astype(float), rows.astype(float)
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        dx, dy = x1 - x0, y1 - y0
        seg2 = dx * dx + dy * dy
        if seg2 == 0:
            t = np.zeros_like(px)
        else:
            t = np.clip(((px - x0) * dx + (py - y0) * dy) / seg2, 0.0, 1.0)
        d2 = np.minimum(d2, (px - (x0 + t * dx)) ** 2 + (py - (y0 + t * dy)) ** 2)
    return np.sqrt(d2)


def buffer_rasterize(points, width_m: float, shape, resolution_m: float = DEFAULT_RESOLUTION_M) -> np.ndarray:
    """Pixels whose centre lies within half the road width of the polyline.

    ``points`` are ``(x, y)`` pixel coordinates. Caps and joins are round.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2 or np.all(pts == pts[0]):
        raise DegenerateLine("polyline needs two distinct points")
    if width_m < resolution_m:
        raise ValidationError(f"width {width_m} m is below the pixel size {resolution_m} m")
    half = width_m / (2.0 * resolution_m)
    h, w = shape
    c0 = max(int(math.floor(pts[:, 0].min() - half)), 0)
    c1 = min(int(math.ceil(pts[:, 0].max() + half)) + 1, w)
    r0 = max(int(math.floor(pts[:, 1].min() - half)), 0)
    r1 = min(int(math.ceil(pts[:, 1].max() + half)) + 1, h)
    out = np.zeros((h, w), dtype=bool)
    if r0 >= r1 or c0 >= c1:
        return out
    rows, cols = np.mgrid[r0:r1, c0:c1]
    out[r0:r1, c0:c1] = _distance_to_polyline(rows, cols, pts) <= half + 1e-9
    return out


def rasterize_centerlines(cf: CenterlineFile, shape, width="auto", catalog=None,
                          default_width_m: float | None = None) -> tuple:
    """Buffer every line and return ``(road_mask, grade_labels)``.

    ``width`` is ``"auto"`` (snap each line's ``width_m`` to the catalogue)
    or a fixed width in metres. Overlaps keep the higher grade; directional
    carriageways drawn as separate lines are simply unioned.
    """
    road = np.zeros(shape, dtype=bool)
    labels = np.zeros(shape, dtype=np.uint8)
    for line in cf.lines:
        if width == "auto":
            observed = line.width_m if line.width_m is not None else default_width_m
            if observed is None:
                raise ValidationError(f"line {line.id!r} has no width_m for automatic width selection")
            w = select_buffer_width(observed, catalog)
        else:
            w = float(width)
        m = buffer_rasterize(cf.pixel_points(line), w, shape, cf.resolution_m)
        road |= m
        np.maximum(labels, np.where(m, int(line.grade), BACKGROUND).astype(np.uint8), out=labels)
    return road, labels


def split_counts(n: int, sizes=SPLIT_SIZES) -> tuple:
    """Largest-remainder apportionment of ``n`` items in the ratio of ``sizes``."""
    total = sum(sizes)
    quotas = [n * s / total for s in sizes]
    counts = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


def make_manifest(tile_dir, seed: int = 0, out_path=None) -> dict:
    """Seeded train/val/test split of the tiles in ``tile_dir``."""
    tile_dir = Path(tile_dir)
    names = sorted(p.name for p in tile_dir.iterdir() if p.is_file() and p.suffix.lower() in TILE_SUFFIXES) \
        if tile_dir.is_dir() else []
    if not names:
        raise EmptyDirectory(f"no tiles found in {tile_dir}")
    perm = np.random.default_rng(seed).permutation(len(names))
    n_train, n_val, _ = split_counts(len(names))
    shuffled = [names[i] for i in perm]
    manifest = {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train:n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val:]),
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
