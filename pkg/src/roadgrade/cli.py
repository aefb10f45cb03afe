"""Command-line entry point: ``roadgrade <subcommand> [options]``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then ``ROADGRADE_<KEY>`` environment variables, then
command-line flags (highest precedence). Exit status is 0 on success, 1 on
invalid input or configuration and 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .arr import ArrConfig, reconstruct
from .dataset_tools import load_centerlines, make_manifest, rasterize_centerlines
from .descriptors import DescriptorThresholds, DescriptorVector, describe, write_csv
from .errors import ConfigInvalid, MissingFile, RoadGradeError, ShapeMismatch, ValidationError
from .grading import (
    FusionConfig, HttpScoreProvider, HttpTextProvider, StubScoreProvider, StubTextProvider, grade_segments,
    read_grades, render_grade_mask, write_grades,
)
from .metrics import evaluate, write_report
from .raster_io import (
    GradeMask, load_grade_labels, load_grade_mask, load_mask, save_grade_labels, save_grade_mask, save_mask,
    tile, untile,
)
from .skeleton import SkeletonGraph, build_graph, prune_spurs, skeletonize

log = logging.getLogger("roadgrade")

ENV_PREFIX = "ROADGRADE_"
SUBCOMMANDS = ("skeletonize", "reconstruct", "describe", "grade", "render", "evaluate", "buffer", "manifest",
               "pipeline")


def _floats(text, n=None):
    vals = tuple(float(v) for v in str(text).replace(" ", "").split(",") if v != "")
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers")
    return vals


def _ints(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v != "")


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


@dataclass
class PipelineConfig:
    resolution_m: float = 0.8
    backtrack: tuple = (10, 15, 20)
    max_angle_dev: float = 30.0
    arr_w1: float = 0.2
    arr_w2: float = 0.8
    max_radius: float = 100.0
    arr_passes: int = 1
    min_spur_px: int = 5
    length_thresholds: tuple = (200.0, 1000.0)
    width_thresholds: tuple = (6.0, 15.0)
    straight_min: float = 0.9
    dense_min: float = 0.02
    density_radius: float = 64.0
    extra_descriptors: bool = False
    fusion_weights: tuple = (0.3, 0.5, 0.2)
    provider: str = "stub"
    provider_url: str = ""
    text_provider: str = "stub"
    text_provider_url: str = ""
    provider_timeout_ms: int = 10000
    provider_retries: int = 2
    max_in_flight: int = 4
    jobs: int = 1
    tile_size: int = 0
    seed: int = 0

    def arr_config(self) -> ArrConfig:
        return ArrConfig(self.backtrack, self.max_angle_dev, self.arr_w1, self.arr_w2, self.max_radius,
                         self.arr_passes)

    def thresholds(self) -> DescriptorThresholds:
        return DescriptorThresholds(self.length_thresholds, self.width_thresholds, self.straight_min,
                                    self.dense_min)

    def fusion(self) -> FusionConfig:
        return FusionConfig(*self.fusion_weights, max_in_flight=self.max_in_flight)

    def providers(self):
        if self.provider == "http":
            vlm = HttpScoreProvider(self.provider_url, self.provider_timeout_ms, self.provider_retries)
        else:
            vlm = StubScoreProvider() if self.provider == "stub" else None
        if self.text_provider == "http":
            text = HttpTextProvider(self.text_provider_url, self.provider_timeout_ms, self.provider_retries)
        else:
            text = StubTextProvider() if self.text_provider == "stub" else None
        return vlm, text

    def validate(self) -> "PipelineConfig":
        checks = [
            ("resolution_m", self.resolution_m > 0, "must be positive"),
            ("min_spur_px", self.min_spur_px >= 0, "must be >= 0"),
            ("density_radius", self.density_radius >= 1, "must be >= 1"),
            ("provider_timeout_ms", self.provider_timeout_ms > 0, "must be positive"),
            ("provider_retries", self.provider_retries >= 0, "must be >= 0"),
            ("jobs", self.jobs >= 1, "must be >= 1"),
            ("tile_size", self.tile_size >= 0, "must be >= 0"),
            ("provider_url", self.provider != "http" or bool(self.provider_url), "required when provider = http"),
            ("text_provider_url", self.text_provider != "http" or bool(self.text_provider_url),
             "required when text_provider = http"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigInvalid(f"{name}: {msg}")
        for name, build in (("arr", self.arr_config), ("thresholds", self.thresholds), ("fusion", self.fusion)):
            try:
                build()
            except ValidationError as exc:
                raise ConfigInvalid(f"{name}: {exc}") from exc
        return self


# key -> (flag, parser, help)
OPTIONS = {
    "resolution_m": ("--resolution", float, "metres per pixel"),
    "backtrack": ("--backtrack", _ints, "backtracking step counts, e.g. 10,15,20"),
    "max_angle_dev": ("--max-angle-dev", float, "angular gate in degrees"),
    "arr_w1": ("--arr-w1", float, "weight of the arc-length term"),
    "arr_w2": ("--arr-w2", float, "weight of the distance term"),
    "max_radius": ("--max-radius", float, "endpoint search radius in pixels"),
    "arr_passes": ("--arr-passes", int, "number of reconstruction passes"),
    "min_spur_px": ("--min-spur", int, "drop terminal branches shorter than this"),
    "length_thresholds": ("--length-thresholds", lambda t: _floats(t, 2), "short/medium/long cuts in metres"),
    "width_thresholds": ("--width-thresholds", lambda t: _floats(t, 2), "narrow/medium/wide cuts in metres"),
    "straight_min": ("--straight-min", float, "straightness at or above which a segment is straight"),
    "dense_min": ("--dense-min", float, "density at or above which surroundings are dense"),
    "density_radius": ("--density-radius", float, "radius in pixels for local density"),
    "extra_descriptors": ("--extra-descriptors", _bool, "also compute orientation variability and lane count"),
    "fusion_weights": ("--fusion-weights", lambda t: _floats(t, 3), "geometry,scorer,language weights"),
    "provider": ("--provider", _choice("stub", "http", "none"), "grade scorer"),
    "provider_url": ("--provider-url", str, "scorer endpoint"),
    "text_provider": ("--text-provider", _choice("stub", "http", "none"), "free-text grade provider"),
    "text_provider_url": ("--text-provider-url", str, "text provider endpoint"),
    "provider_timeout_ms": ("--provider-timeout-ms", int, "per-request timeout"),
    "provider_retries": ("--provider-retries", int, "retries after a timeout or server error"),
    "max_in_flight": ("--max-in-flight", int, "concurrent provider requests"),
    "jobs": ("--jobs", int, "tiles processed in parallel"),
    "tile_size": ("--tile-size", int, "process the mask in square tiles of this size (0 = whole image)"),
    "seed": ("--seed", int, "random seed"),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"config file not found: {path}")
    out = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigInvalid(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(args: argparse.Namespace, environ=None) -> PipelineConfig:
    environ = os.environ if environ is None else environ
    layers = []
    if getattr(args, "config", None):
        layers.append(("config file", read_config_file(args.config)))
    layers.append(("environment", {k: environ[ENV_PREFIX + k.upper()] for k in OPTIONS
                                   if ENV_PREFIX + k.upper() in environ}))
    layers.append(("command line", {k: getattr(args, k) for k in OPTIONS if hasattr(args, k)}))
    values = {}
    for source, layer in layers:
        for key, raw in layer.items():
            parse = OPTIONS[key][1]
            try:
                values[key] = raw if source == "command line" else parse(raw)
            except ValueError as exc:
                raise ConfigInvalid(f"{key} ({source}): {exc}") from exc
    return PipelineConfig(**values).validate()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    g = p.add_argument_group("settings")
    for key, (flag, parse, help_) in OPTIONS.items():
        g.add_argument(flag, dest=key, type=parse, default=argparse.SUPPRESS, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roadgrade", description="Road skeleton reconstruction and hierarchy grading.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    p = sub.add_parser("skeletonize", help="thin a road mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", help="bridge gaps in a skeleton")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bridges", help="write the drawn bridges as JSON")

    p = sub.add_parser("describe", help="segment graph and geometric descriptors")
    p.add_argument("--mask", required=True)
    p.add_argument("--skeleton", required=True)
    p.add_argument("--graph-out", required=True)
    p.add_argument("--out", required=True, help="descriptor CSV")
    p.add_argument("--json-out")

    p = sub.add_parser("grade", help="assign a grade to every segment")
    p.add_argument("--descriptors", required=True, help="descriptor CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--image", help="image used for patches (default: the mask)")
    p.add_argument("--mask", help="road mask used for patches when no image is given")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="paint segment grades over the road mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--grades", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", help="also write the single-channel label raster")

    p = sub.add_parser("evaluate", help="compare a predicted grade mask with ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--labels", action="store_true", help="inputs are label rasters rather than RGB")
    p.add_argument("--include-background", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")

    p = sub.add_parser("buffer", help="rasterise centreline buffers")
    p.add_argument("--centerlines", required=True)
    p.add_argument("--width", default="auto", help="'auto' or a width in metres")
    p.add_argument("--shape", default="1024,1024", help="rows,cols")
    p.add_argument("--out", required=True)
    p.add_argument("--grade-out")

    p = sub.add_parser("manifest", help="seeded train/val/test split")
    p.add_argument("--tiles", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="skeletonize, reconstruct, describe, grade and render")
    p.add_argument("--mask", required=True)
    p.add_argument("--image")
    p.add_argument("--out-dir", required=True)

    for name, sp in sub.choices.items():
        _add_options(sp)
    return parser


def _require(*paths) -> None:
    for path in paths:
        if path is not None and not Path(path).is_file():
            raise MissingFile(f"input not found: {path}")


def _load_image(path):
    from PIL import Image
    _require(path)
    return np.asarray(Image.open(path).convert("RGB"))


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_descriptor_csv(path) -> list:
    _require(path)
    kinds = {f.name: f.type for f in fields(DescriptorVector)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for name, kind in kinds.items():
                raw = row.get(name, "")
                if raw == "":
                    continue
                if name in ("segment_id", "degree", "lane_count"):
                    vals[name] = int(raw)
                elif name == "curvature_valid":
                    vals[name] = raw == "True"
                else:
                    vals[name] = float(raw)
            out.append(DescriptorVector(**vals))
    return out


def _describe(mask, skel, cfg: PipelineConfig):
    graph = build_graph(skel)
    vectors = describe(graph, mask, skel, cfg.resolution_m, density_radius=cfg.density_radius,
                       extra=cfg.extra_descriptors, allow_outside=True)
    return graph, vectors


def run_pipeline(mask, cfg: PipelineConfig, image=None) -> dict:
    """All stages on one in-memory mask; returns every intermediate product."""
    mask = np.asarray(mask, dtype=bool)
    skel = prune_spurs(skeletonize(mask), cfg.min_spur_px)
    skel, bridges = reconstruct(skel, cfg.arr_config(), return_bridges=True)
    graph, vectors = _describe(mask, skel, cfg)
    vlm, text = cfg.providers()
    patches = image if image is not None else mask
    records = grade_segments(vectors, graph, patches, vlm, text, cfg.fusion(), cfg.thresholds())
    grades = {r.segment_id: r.grade for r in records}
    grade_mask = render_grade_mask(graph, grades, mask) if mask.any() else GradeMask(np.zeros(mask.shape, np.uint8))
    return {"skeleton": skel, "bridges": bridges, "graph": graph, "descriptors": vectors,
            "records": records, "grade_mask": grade_mask}


def _write_pipeline_outputs(out_dir: Path, res: dict, cfg: PipelineConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_mask(res["skeleton"], out_dir / "skeleton.png")
    _write_json(out_dir / "graph.json", res["graph"].to_json())
    write_csv(res["descriptors"], out_dir / "descriptors.csv", cfg.thresholds())
    save_grade_mask(res["grade_mask"], out_dir / "grades.png")
    _write_json(out_dir / "run_log.json", {
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
        "bridges": [{"a": list(b.a), "b": list(b.b), "degree": b.degree} for b in res["bridges"]],
        "fallbacks": sum(r.fallback for r in res["records"]),
        "segments": [r.to_json() for r in res["records"]],
    })


def cmd_pipeline(args, cfg: PipelineConfig) -> None:
    _require(args.mask, args.image)
    mask = load_mask(args.mask, cfg.resolution_m)
    image = _load_image(args.image) if args.image else None
    out = Path(args.out_dir)
    data = np.asarray(mask)
    if image is not None and image.shape[:2] != data.shape:
        raise ShapeMismatch(f"image size {image.shape[:2]} differs from mask size {data.shape}")
    if cfg.tile_size and (data.shape[0] > cfg.tile_size or data.shape[1] > cfg.tile_size):
        tiles = tile(data, cfg.tile_size)
        img_tiles = None if image is None else tile(image, cfg.tile_size)
        cols = -(-data.shape[1] // cfg.tile_size)

        def one(i):
            res = run_pipeline(tiles[i], cfg, None if img_tiles is None else img_tiles[i])
            _write_pipeline_outputs(out / f"tile_{i // cols:03d}_{i % cols:03d}", res, cfg)
            return res["grade_mask"]

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            grade_tiles = list(pool.map(one, range(len(tiles))))
        out.mkdir(parents=True, exist_ok=True)
        save_grade_mask(GradeMask(untile([np.asarray(g) for g in grade_tiles], data.shape)), out / "grades.png")
        return
    _write_pipeline_outputs(out, run_pipeline(data, cfg, image), cfg)


def cmd_skeletonize(args, cfg):
    mask = load_mask(args.mask, cfg.resolution_m)
    save_mask(prune_spurs(skeletonize(mask), cfg.min_spur_px), args.out)


def cmd_reconstruct(args, cfg):
    skel = load_mask(args.skeleton)
    out, bridges = reconstruct(skel, cfg.arr_config(), return_bridges=True)
    save_mask(out, args.out)
    if args.bridges:
        _write_json(args.bridges, [{"a": list(b.a), "b": list(b.b), "degree": b.degree} for b in bridges])


def cmd_describe(args, cfg):
    _require(args.mask, args.skeleton)
    mask, skel = load_mask(args.mask, cfg.resolution_m), load_mask(args.skeleton)
    if mask.data.shape != skel.data.shape:
        raise ValidationError("mask and skeleton sizes differ")
    graph, vectors = _describe(mask, skel, cfg)
    _write_json(args.graph_out, graph.to_json())
    write_csv(vectors, args.out, cfg.thresholds())
    if args.json_out:
        from .descriptors import write_json
        write_json(vectors, args.json_out, cfg.thresholds())


def _read_graph(path) -> SkeletonGraph:
    _require(path)
    return SkeletonGraph.from_json(json.loads(Path(path).read_text()))


def cmd_grade(args, cfg):
    vectors = read_descriptor_csv(args.descriptors)
    graph = _read_graph(args.graph)
    if args.image:
        image = _load_image(args.image)
    elif args.mask:
        image = np.asarray(load_mask(args.mask))
    else:
        image = np.zeros(graph.shape, dtype=bool)
        for e in graph.edges:
            for r, c in e.pixels:
                image[r, c] = True
    vlm, text = cfg.providers()
    records = grade_segments(vectors, graph, image, vlm, text, cfg.fusion(), cfg.thresholds())
    write_grades(records, args.out)


def cmd_render(args, cfg):
    _require(args.mask, args.grades)
    mask = load_mask(args.mask)
    graph = _read_graph(args.graph)
    gm = render_grade_mask(graph, read_grades(args.grades), mask)
    save_grade_mask(gm, args.out)
    if args.labels_out:
        save_grade_labels(gm, args.labels_out)


def cmd_evaluate(args, cfg):
    _require(args.pred, args.gt)
    load = load_grade_labels if args.labels else load_grade_mask
    report = evaluate(load(args.pred), load(args.gt), args.include_background)
    write_report(report, args.out, args.csv)


def cmd_buffer(args, cfg):
    cf = load_centerlines(args.centerlines)
    try:
        shape = tuple(int(v) for v in args.shape.replace("x", ",").split(","))
        width = args.width if args.width == "auto" else float(args.width)
    except ValueError as exc:
        raise ConfigInvalid(f"bad --shape or --width: {exc}") from exc
    if len(shape) != 2 or min(shape) < 1:
        raise ConfigInvalid("--shape must be two positive integers")
    road, labels = rasterize_centerlines(cf, shape, width)
    save_mask(road, args.out)
    if args.grade_out:
        save_grade_mask(GradeMask(labels), args.grade_out)


def cmd_manifest(args, cfg):
    make_manifest(args.tiles, cfg.seed, args.out)


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("roadgrade: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        cfg = resolve_config(args, environ)
        COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"roadgrade: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (RoadGradeError, OSError) as exc:
        print(f"roadgrade: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
