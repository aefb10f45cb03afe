"""Road grade assignment from geometry, an image/prompt scorer and a text channel.

Each segment gets three cues: a geometric prior computed offline from its
descriptors, soft grade scores from a pluggable scorer that sees the image
patch and the geometry-aware prompts, and optionally a grade parsed from
free text returned by a text provider. The cues are combined by a convex
weighted sum and the winning grade is painted back over the road mask.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np
import requests
from PIL import Image
from scipy import ndimage

from .descriptors import DescriptorCategories, DescriptorThresholds, DescriptorVector, discretize
from .errors import (
    AllWeightsZero, MalformedResponse, NoGradeFound, NonFiniteScore, ProviderError, ProviderTimeout,
    UngradedSegment, ValidationError,
)
from .labels import BACKGROUND, GRADE_ORDER, Grade
from .raster_io import GradeMask

log = logging.getLogger(__name__)

CROP_MARGIN = 32


@dataclass(frozen=True)
class GradeScores:
    """Non-negative scores in (high, medium, low) order."""

    high: float
    medium: float
    low: float

    def __post_init__(self):
        vals = self.as_tuple()
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteScore(f"non-finite grade score in {vals}")
        if any(v < 0 for v in vals):
            raise ValidationError(f"negative grade score in {vals}")

    def as_tuple(self) -> tuple:
        return (self.high, self.medium, self.low)

    def as_dict(self) -> dict:
        return {"high": self.high, "medium": self.medium, "low": self.low}

    def __getitem__(self, grade: Grade) -> float:
        return getattr(self, Grade(grade).word)

    def normalized(self) -> "GradeScores":
        total = sum(self.as_tuple())
        if total <= 0:
            raise ValidationError("grade scores sum to zero")
        return GradeScores(*(v / total for v in self.as_tuple()))

    def argmax(self) -> Grade:
        return argmax_grade(self.as_tuple())

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "GradeScores":
        return cls(float(obj["high"]), float(obj["medium"]), float(obj["low"]))


def argmax_grade(values) -> Grade:
    """Index of the largest of (high, medium, low); ties go to the higher grade."""
    best = max(values)
    return next(g for g, v in zip(GRADE_ORDER, values) if v == best)


@dataclass(frozen=True)
class PromptSet:
    description: str
    queries: Mapping[Grade, str]

    def as_wire(self) -> dict:
        return {g.word: self.queries[g] for g in GRADE_ORDER}


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def build_prompt(cat: DescriptorCategories) -> PromptSet:
    """Template prompts describing a segment, one query per grade."""
    area = cat.area_word
    description = f"a {cat.length_word} and {cat.width_word} road segment in {_article(area)} {area} area"
    queries = {g: f"{description}; this is a {g.word} grade road" for g in GRADE_ORDER}
    return PromptSet(description, queries)


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def heuristic_prior(v: DescriptorVector) -> GradeScores:
    """Offline geometric prior over grades.

    A single score rises with width (3 m per unit), length (log scale) and
    straightness; an ordered-logistic split of that score gives the three
    grade probabilities, so the High share rises strictly with width.
    """
    z = (v.width_m - 9.0) / 3.0
    z += 0.75 * math.log10(max(v.length_m, 1.0) / 300.0)
    z += 2.0 * (v.straightness - 0.8)
    high = _sigmoid(z - 1.0)
    at_least_medium = _sigmoid(z + 1.0)
    return GradeScores(high, at_least_medium - high, 1.0 - at_least_medium)


# ---------------------------------------------------------------------------
# providers


class ScoreProvider(Protocol):
    name: str

    def score(self, segment_id: int, image_png: bytes, prompts: PromptSet) -> Mapping: ...


class TextProvider(Protocol):
    name: str

    def describe(self, image_png: bytes, prompt: str) -> str: ...


def _post_json(session, url: str, payload: dict, timeout_s: float, retries: int) -> dict:
    last = None
    for attempt in range(retries + 1):
        try:
            resp = session.post(url, json=payload, timeout=timeout_s)
        except requests.Timeout as exc:
            last = ProviderTimeout(f"{url}: timed out after {timeout_s:.3f}s (attempt {attempt + 1})")
            last.__cause__ = exc
            continue
        except requests.RequestException as exc:
            last = ProviderError(f"{url}: {exc}")
            continue
        if resp.status_code >= 500:
            last = ProviderError(f"{url}: HTTP {resp.status_code}")
            continue
        if resp.status_code >= 400:
            raise ProviderError(f"{url}: HTTP {resp.status_code}")
        try:
            return json.loads(resp.text)
        except ValueError as exc:
            raise MalformedResponse(f"{url}: response is not JSON: {exc}") from exc
    raise last


@dataclass
class HttpScoreProvider:
    """JSON-over-HTTP grade scorer.

    Request ``{"segment_id", "image_png_base64", "prompts": {"high", "medium", "low"}}``,
    response ``{"segment_id", "scores": {"high", "medium", "low"}}``.
    """

    url: str
    timeout_ms: int = 10000
    retries: int = 2
    name: str = "http"
    session: requests.Session = field(default_factory=requests.Session, repr=False)

    def score(self, segment_id: int, image_png: bytes, prompts: PromptSet) -> Mapping:
        payload = {
            "segment_id": int(segment_id),
            "image_png_base64": base64.b64encode(image_png).decode("ascii"),
            "prompts": prompts.as_wire(),
        }
        body = _post_json(self.session, self.url, payload, self.timeout_ms / 1000.0, self.retries)
        if not isinstance(body, dict) or body.get("segment_id") != int(segment_id):
            raise MalformedResponse(f"response segment_id {body.get('segment_id') if isinstance(body, dict) else None!r}"
                                    f" does not match request {segment_id}")
        return body.get("scores")


@dataclass
class HttpTextProvider:
    """Free-text provider: request ``{"image_png_base64", "prompt"}``, response ``{"text"}``."""

    url: str
    timeout_ms: int = 20000
    retries: int = 2
    name: str = "http-text"
    session: requests.Session = field(default_factory=requests.Session, repr=False)

    def describe(self, image_png: bytes, prompt: str) -> str:
        payload = {"image_png_base64": base64.b64encode(image_png).decode("ascii"), "prompt": prompt}
        body = _post_json(self.session, self.url, payload, self.timeout_ms / 1000.0, self.retries)
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise MalformedResponse("text response lacks a string 'text' field")
        return body["text"]


_STUB_WORDS = {
    "long": (2.0, 1.0, 0.5), "medium": (1.0, 2.0, 1.0), "short": (0.5, 1.0, 2.0),
    "wide": (3.0, 1.0, 0.5), "narrow": (0.5, 1.0, 3.0),
    "urban": (1.0, 1.5, 1.0), "rural": (1.0, 1.0, 1.5),
}


@dataclass
class StubScoreProvider:
    """Deterministic offline scorer.

    Returns ``scores`` verbatim when given; otherwise multiplies fixed word
    weights found in the segment description.
    """

    scores: Mapping | None = None
    name: str = "stub"

    def score(self, segment_id: int, image_png: bytes, prompts: PromptSet) -> Mapping:
        if self.scores is not None:
            return dict(self.scores)
        acc = np.ones(3)
        for word in re.findall(r"[a-z]+", prompts.description.lower()):
            acc *= _STUB_WORDS.get(word, (1.0, 1.0, 1.0))
        return dict(zip(("high", "medium", "low"), acc.tolist()))


@dataclass
class StubTextProvider:
    """Deterministic text channel answering with the highest score listed in the prompt."""

    text: str | None = None
    name: str = "stub-text"

    def describe(self, image_png: bytes, prompt: str) -> str:
        if self.text is not None:
            return self.text
        found = dict(re.findall(r"(high|medium|low)=([0-9]+(?:\.[0-9]+)?)", prompt))
        if not found:
            return "cannot determine"
        grade = argmax_grade([float(found.get(g.word, 0)) for g in GRADE_ORDER])
        return f"This is a {grade.word.capitalize()} Grade road."


def validate_scores(raw) -> GradeScores:
    """Check a provider payload and return it normalised to sum 1."""
    if not isinstance(raw, Mapping) or not {"high", "medium", "low"} <= set(raw):
        raise MalformedResponse(f"scores must map high/medium/low to numbers, got {raw!r}")
    vals = []
    for key in ("high", "medium", "low"):
        v = raw[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedResponse(f"score {key!r} is not a number: {v!r}")
        if not math.isfinite(v):
            raise NonFiniteScore(f"score {key!r} is {v}")
        if v < 0:
            raise MalformedResponse(f"score {key!r} is negative: {v}")
        vals.append(float(v))
    if sum(vals) <= 0:
        raise MalformedResponse("scores sum to zero")
    return GradeScores(*vals).normalized()


def query_vlm_prior(provider: ScoreProvider, patch, prompts: PromptSet, segment_id: int = 0) -> GradeScores:
    """Ask ``provider`` for grade scores of one patch; result sums to 1.

    Raises ProviderTimeout, MalformedResponse or NonFiniteScore (all
    ProviderError subclasses) when the provider misbehaves.
    """
    png = patch if isinstance(patch, (bytes, bytearray)) else encode_png(patch)
    if not png:
        raise ValidationError("empty image patch")
    try:
        raw = provider.score(segment_id, bytes(png), prompts)
    except ValidationError as exc:
        raise MalformedResponse(str(exc)) from exc
    return validate_scores(raw)


_GRADE_WORDS = {"high": Grade.HIGH, "medium": Grade.MEDIUM, "low": Grade.LOW}
_ANCHORS = {"grade", "road"}


def parse_grade_text(text: str) -> Grade:
    """First high/medium/low within two tokens of "grade" or "road"."""
    tokens = re.findall(r"[a-z]+", str(text).lower())
    for i, tok in enumerate(tokens):
        if tok in _GRADE_WORDS and _ANCHORS & set(tokens[max(0, i - 2):i] + tokens[i + 1:i + 3]):
            return _GRADE_WORDS[tok]
    raise NoGradeFound(f"no grade mentioned in {text!r}")


def render_grade_text(grade: Grade) -> str:
    return f"This is a {Grade(grade).word.capitalize()} Grade road."


@dataclass(frozen=True)
class FusionConfig:
    geom_weight: float = 0.3
    vlm_weight: float = 0.5
    lang_weight: float = 0.2
    max_in_flight: int = 4
    crop_margin: int = CROP_MARGIN

    def __post_init__(self):
        ws = (self.geom_weight, self.vlm_weight, self.lang_weight)
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise ValidationError(f"fusion weights must be finite and >= 0, got {ws}")
        if sum(ws) <= 0:
            raise AllWeightsZero("fusion weights sum to zero")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")
        if self.crop_margin < 0:
            raise ValidationError("crop_margin must be >= 0")


def fused_scores(geom: GradeScores, vlm: GradeScores, lang: Grade | None,
                 cfg: FusionConfig = FusionConfig()) -> tuple:
    """Weighted evidence per grade in (high, medium, low) order, weights renormalised."""
    wg, wv, wl = cfg.geom_weight, cfg.vlm_weight, (cfg.lang_weight if lang is not None else 0.0)
    total = wg + wv + wl
    if total <= 0:
        raise AllWeightsZero("no fusion weight left for the available cues")
    return tuple(
        (wg * geom[g] + wv * vlm[g] + wl * (1.0 if lang == g else 0.0)) / total
        for g in GRADE_ORDER
    )


def fuse(geom: GradeScores, vlm: GradeScores, lang: Grade | None = None,
         cfg: FusionConfig = FusionConfig()) -> Grade:
    """Final grade: argmax of the fused evidence, ties resolved High > Medium > Low."""
    return argmax_grade(fused_scores(geom, vlm, lang, cfg))


# ---------------------------------------------------------------------------
# patches and batch grading


def encode_png(array) -> bytes:
    arr = np.asarray(array)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def crop_patch(image, pixels, margin: int = CROP_MARGIN) -> np.ndarray:
    """Bounding box of ``pixels`` grown by ``margin`` and clamped to the image."""
    img = np.asarray(image)
    pts = np.asarray(pixels, dtype=int).reshape(-1, 2)
    r0, c0 = pts.min(axis=0) - margin
    r1, c1 = pts.max(axis=0) + margin + 1
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, img.shape[0]), min(c1, img.shape[1])
    return img[r0:r1, c0:c1]


def language_prompt(prompts: PromptSet, vlm: GradeScores) -> str:
    scores = ", ".join(f"{g.word}={vlm[g]:.4f}" for g in GRADE_ORDER)
    return (f"The image shows {prompts.description}. Grade scores from an image-text model: {scores}. "
            "Which grade is this road: high, medium or low? Answer with 'This is a <grade> Grade road.'")


@dataclass
class SegmentGrade:
    segment_id: int
    grade: Grade
    description: str
    geom_scores: GradeScores
    vlm_scores: GradeScores
    fused: tuple
    provider: str
    fallback: bool = False
    fallback_reason: str | None = None
    language_grade: Grade | None = None
    language_text: str | None = None
    language_error: str | None = None

    def to_json(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "grade": self.grade.word,
            "description": self.description,
            "geom_scores": self.geom_scores.as_dict(),
            "vlm_scores": self.vlm_scores.as_dict(),
            "fused": dict(zip(("high", "medium", "low"), self.fused)),
            "provider": self.provider,
            "fallback": self.fallback,
            "fallback_reason": self.fallback_reason,
            "language_grade": self.language_grade.word if self.language_grade else None,
            "language_text": self.language_text,
            "language_error": self.language_error,
        }


def grade_segment(v: DescriptorVector, pixels, image, provider: ScoreProvider | None,
                  text_provider: TextProvider | None = None, cfg: FusionConfig = FusionConfig(),
                  thresholds: DescriptorThresholds = DescriptorThresholds()) -> SegmentGrade:
    """Grade one segment, falling back to the geometric prior if the scorer fails."""
    prompts = build_prompt(discretize(v, thresholds))
    geom = heuristic_prior(v)
    png = encode_png(crop_patch(image, pixels, cfg.crop_margin))
    fallback, reason, name = False, None, getattr(provider, "name", "none")
    if provider is None:
        vlm, fallback, reason, name = geom, True, "no provider configured", "heuristic"
    else:
        try:
            vlm = query_vlm_prior(provider, png, prompts, v.segment_id)
        except ProviderError as exc:
            vlm, fallback, reason = geom, True, f"{type(exc).__name__}: {exc}"
            log.warning("segment %d: scorer failed, using heuristic prior (%s)", v.segment_id, reason)
    lang = text = lang_err = None
    if text_provider is not None:
        try:
            text = text_provider.describe(png, language_prompt(prompts, vlm))
            lang = parse_grade_text(text)
        except (ProviderError, NoGradeFound) as exc:
            lang_err = f"{type(exc).__name__}: {exc}"
            log.info("segment %d: no language grade (%s)", v.segment_id, lang_err)
    fused = fused_scores(geom, vlm, lang, cfg)
    return SegmentGrade(v.segment_id, argmax_grade(fused), prompts.description, geom, vlm, fused, name,
                        fallback, reason, lang, text, lang_err)


def grade_segments(vectors, graph, image, provider: ScoreProvider | None = None,
                   text_provider: TextProvider | None = None, cfg: FusionConfig = FusionConfig(),
                   thresholds: DescriptorThresholds = DescriptorThresholds()) -> list:
    """Grade every segment; provider calls run concurrently, results come back in segment order."""
    pixels = {e.id: e.pixels for e in graph.edges}
    vectors = sorted(vectors, key=lambda v: v.segment_id)
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        futures = {v.segment_id: pool.submit(grade_segment, v, pixels[v.segment_id], image, provider,
                                             text_provider, cfg, thresholds) for v in vectors}
        return [futures[v.segment_id].result() for v in vectors]


def render_grade_mask(graph, grades: Mapping, mask) -> GradeMask:
    """Spread segment grades from the skeleton over the whole road mask.

    Each road pixel takes the grade of the nearest graded skeleton pixel,
    measured along 8-connected paths inside the mask; equal distances go to
    the higher grade. Road pixels that no skeleton pixel can reach inside the
    mask fall back to the Euclidean nearest skeleton pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    seeds = np.zeros(mask.shape, dtype=np.uint8)
    for e in graph.edges:
        if e.id not in grades:
            raise UngradedSegment(f"segment {e.id} has no grade")
        g = int(grades[e.id])
        for r, c in e.pixels:
            if mask[r, c]:
                seeds[r, c] = max(seeds[r, c], g)
    if mask.any() and not seeds.any():
        raise UngradedSegment("no graded skeleton pixel lies on the road mask")
    labels = seeds.copy()
    h, w = mask.shape
    while True:
        p = np.pad(labels, 1)
        grown = np.zeros_like(labels)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr or dc:
                    np.maximum(grown, p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w], out=grown)
        new = mask & (labels == BACKGROUND) & (grown > 0)
        if not new.any():
            break
        labels[new] = grown[new]
    left = mask & (labels == BACKGROUND)
    if left.any():
        _, (ri, ci) = ndimage.distance_transform_edt(seeds == 0, return_indices=True)
        labels[left] = seeds[ri[left], ci[left]]
    return GradeMask(labels)


def write_grades(records, path) -> None:
    with open(path, "w") as fh:
        json.dump({"segments": [r.to_json() for r in records]}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_grades(path) -> dict:
    """Segment id to Grade from a grades JSON file."""
    with open(path) as fh:
        rows = json.load(fh)["segments"]
    return {int(r["segment_id"]): Grade.from_word(r["grade"]) for r in rows}
