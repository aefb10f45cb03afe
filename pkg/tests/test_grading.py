import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fault_server import Handler, fault_server
from roadgrade.descriptors import DescriptorCategories, DescriptorVector
from roadgrade.errors import (
    AllWeightsZero, MalformedResponse, NoGradeFound, NonFiniteScore, ProviderError, ProviderTimeout, UngradedSegment,
)
from roadgrade.grading import (
    FusionConfig, GradeScores, HttpScoreProvider, HttpTextProvider, StubScoreProvider, StubTextProvider,
    build_prompt, fuse, fused_scores, grade_segment, grade_segments, heuristic_prior, parse_grade_text,
    query_vlm_prior, read_grades, render_grade_mask, render_grade_text, write_grades,
)
from roadgrade.labels import Grade
from roadgrade.skeleton import build_graph, skeletonize

# -- prompts and text --------------------------------------------------------


def test_prompt_text():
    p = build_prompt(DescriptorCategories("long", "wide", "straight", "dense"))
    assert p.description == "a long and wide road segment in an urban area"
    assert p.queries[Grade.HIGH] == "a long and wide road segment in an urban area; this is a high grade road"
    p = build_prompt(DescriptorCategories("short", "narrow", "curvy", "sparse"))
    assert p.description == "a short and narrow road segment in a rural area"
    assert set(p.as_wire()) == {"high", "medium", "low"}


@pytest.mark.parametrize("g", list(Grade))
def test_text_roundtrip(g):
    assert parse_grade_text(render_grade_text(g)) == g
    assert parse_grade_text(f"This is a {g.word.capitalize()} Grade road.") == g


def test_text_parsing_edge_cases():
    assert parse_grade_text("I think it is a MEDIUM-grade road, not high.") == Grade.MEDIUM
    with pytest.raises(NoGradeFound):
        parse_grade_text("the image is blurry")
    with pytest.raises(NoGradeFound):
        parse_grade_text("high quality picture of a field")


# -- priors and fusion ------------------------------------------------------


def vec(width=8.0, length=300.0, s=0.8, sid=0):
    return DescriptorVector(sid, length, width, s, 0.0, 1, 0.0)


def test_heuristic_prior_sums_to_one():
    p = heuristic_prior(vec())
    assert sum(p.as_tuple()) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 40), st.floats(0.5, 40), st.floats(1, 5000), st.floats(0, 1))
def test_heuristic_high_monotone_in_width(w1, w2, length, s):
    lo, hi = sorted((w1, w2))
    assert heuristic_prior(vec(lo, length, s)).high <= heuristic_prior(vec(hi, length, s)).high + 1e-15


def test_fuse_worked_example():
    geom, vlm = GradeScores(0.7, 0.2, 0.1), GradeScores(0.1, 0.1, 0.8)
    scores = fused_scores(geom, vlm, Grade.MEDIUM, FusionConfig(0.3, 0.5, 0.2))
    assert scores == pytest.approx((0.26, 0.31, 0.43), abs=1e-9)
    assert fuse(geom, vlm, Grade.MEDIUM) == Grade.LOW


def test_fuse_ties_and_missing_language():
    assert fuse(GradeScores(0.5, 0.5, 0.0), GradeScores(0.5, 0.5, 0.0)) == Grade.HIGH
    scores = fused_scores(GradeScores(1, 0, 0), GradeScores(0, 1, 0), None, FusionConfig(0.3, 0.5, 0.2))
    assert scores == pytest.approx((0.375, 0.625, 0.0))
    with pytest.raises(AllWeightsZero):
        FusionConfig(0, 0, 0)
    with pytest.raises(AllWeightsZero):
        fused_scores(GradeScores(1, 0, 0), GradeScores(1, 0, 0), None, FusionConfig(0, 0, 1))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=6, max_size=6), st.sampled_from([None, *Grade]),
       st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
def test_fusion_is_convex(vals, lang, w):
    geom, vlm = GradeScores(*vals[:3]), GradeScores(*vals[3:])
    out = fused_scores(geom, vlm, lang, FusionConfig(*w))
    for i, g in enumerate((Grade.HIGH, Grade.MEDIUM, Grade.LOW)):
        cues = [geom[g], vlm[g]] + ([1.0 if lang == g else 0.0] if lang else [])
        assert min(cues) - 1e-12 <= out[i] <= max(cues) + 1e-12


# -- providers --------------------------------------------------------------


@pytest.fixture(scope="module")
def server():
    with fault_server() as url:
        yield url


PROMPTS = build_prompt(DescriptorCategories("long", "wide", "straight", "dense"))
PATCH = np.zeros((4, 4), dtype=np.uint8)


def test_http_ok(server):
    s = query_vlm_prior(HttpScoreProvider(server + "/ok"), PATCH, PROMPTS, 3)
    assert s.as_tuple() == pytest.approx((0.25, 0.25, 0.5))


@pytest.mark.parametrize("path,err", [
    ("/slow", ProviderTimeout), ("/badjson", MalformedResponse), ("/nan", NonFiniteScore),
    ("/missing", MalformedResponse), ("/wrongid", MalformedResponse), ("/nowhere", ProviderError),
])
def test_http_faults(server, path, err):
    with pytest.raises(err):
        query_vlm_prior(HttpScoreProvider(server + path, timeout_ms=100, retries=1), PATCH, PROMPTS, 3)


def test_http_retries_server_errors(server):
    Handler.calls.pop("/flaky", None)
    s = query_vlm_prior(HttpScoreProvider(server + "/flaky", retries=2), PATCH, PROMPTS, 1)
    assert Handler.calls["/flaky"] == 2 and s.low == pytest.approx(0.5)


def test_http_text(server):
    assert HttpTextProvider(server + "/text").describe(b"x", "prompt") == "This is a High Grade road."


@pytest.mark.parametrize("path", ["/slow", "/badjson", "/nan"])
def test_fault_falls_back_to_prior(server, path, caplog):
    v = vec(20.0, 2000.0, 0.95)
    with caplog.at_level(logging.WARNING, logger="roadgrade.grading"):
        rec = grade_segment(v, [(5, 5)], np.zeros((10, 10)), HttpScoreProvider(server + path, 100, 0))
    assert rec.fallback and rec.fallback_reason
    assert rec.vlm_scores == heuristic_prior(v)
    assert rec.to_json()["fallback"] is True
    assert any("heuristic prior" in r.getMessage() for r in caplog.records)


def test_stub_scores_validation():
    with pytest.raises(NonFiniteScore):
        query_vlm_prior(StubScoreProvider({"high": float("nan"), "medium": 1, "low": 1}), PATCH, PROMPTS)
    with pytest.raises(MalformedResponse):
        query_vlm_prior(StubScoreProvider({"high": -1, "medium": 1, "low": 1}), PATCH, PROMPTS)
    with pytest.raises(MalformedResponse):
        query_vlm_prior(StubScoreProvider({"high": "x", "medium": 1, "low": 1}), PATCH, PROMPTS)


def test_stub_text_follows_scores():
    rec = grade_segment(vec(), [(1, 1)], PATCH, StubScoreProvider({"high": 0.1, "medium": 0.7, "low": 0.2}),
                        StubTextProvider())
    assert rec.language_grade == Grade.MEDIUM
    rec = grade_segment(vec(), [(1, 1)], PATCH, None, StubTextProvider("no idea"))
    assert rec.language_grade is None and rec.language_error and rec.provider == "heuristic"


# -- batch grading and rendering ---------------------------------------------


def two_road_scene():
    mask = np.zeros((40, 60), bool)
    mask[5:12, 2:58] = True
    mask[12:38, 28:33] = True
    skel = skeletonize(mask)
    return mask, skel, build_graph(skel)


def test_grade_segments_ordered_and_deterministic():
    mask, skel, g = two_road_scene()
    vecs = [vec(sid=e.id) for e in reversed(g.edges)]
    a = grade_segments(vecs, g, mask, StubScoreProvider(), StubTextProvider(), FusionConfig(max_in_flight=3))
    b = grade_segments(vecs, g, mask, StubScoreProvider(), StubTextProvider(), FusionConfig(max_in_flight=1))
    assert [r.segment_id for r in a] == sorted(e.id for e in g.edges)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


def test_render_against_bfs_oracle():
    mask, skel, g = two_road_scene()
    grades = {e.id: [Grade.HIGH, Grade.LOW, Grade.MEDIUM][e.id % 3] for e in g.edges}
    out = np.asarray(render_grade_mask(g, grades, mask))
    assert np.array_equal(out != 0, mask)
    seeds = np.zeros(mask.shape, np.uint8)
    for e in g.edges:
        for p in e.pixels:
            seeds[p] = max(seeds[p], int(grades[e.id]))
    for p, (dist, grade) in oracles.render_oracle(mask, seeds).items():
        assert dist is not None and out[p] == grade


def test_render_unreachable_pixels_use_nearest_seed():
    mask = np.zeros((10, 20), bool)
    mask[2:5, 1:10] = True
    mask[7, 15:18] = True  # island without skeleton
    skel = np.zeros_like(mask)
    skel[3, 2:9] = True
    g = build_graph(skel)
    out = np.asarray(render_grade_mask(g, {0: Grade.MEDIUM}, mask))
    assert np.array_equal(out != 0, mask) and set(out[mask]) == {2}


def test_render_errors():
    mask, skel, g = two_road_scene()
    with pytest.raises(UngradedSegment):
        render_grade_mask(g, {}, mask)


def test_grades_json_roundtrip(tmp_path):
    mask, skel, g = two_road_scene()
    recs = grade_segments([vec(sid=e.id) for e in g.edges], g, mask, StubScoreProvider())
    write_grades(recs, tmp_path / "g.json")
    assert read_grades(tmp_path / "g.json") == {r.segment_id: r.grade for r in recs}
