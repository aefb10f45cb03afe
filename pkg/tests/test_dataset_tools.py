import json

import numpy as np
import pytest

from roadgrade.dataset_tools import (
    buffer_rasterize, centerlines_to_json, load_centerlines, make_manifest, parse_centerlines,
    rasterize_centerlines, save_centerlines, select_buffer_width, split_counts, width_catalog,
)
from roadgrade.errors import DegenerateLine, EmptyCatalog, EmptyDirectory, InvalidGrade, ParseError, TooFewPoints
from roadgrade.labels import Grade

SAMPLE = {
    "resolution_m": 0.8,
    "source": "survey-2020",
    "lines": [
        {"id": "a1", "grade": "high", "points": [[5, 20], [100, 20]], "width_m": 14.2, "name": "ring road"},
        {"id": 2, "grade": "low", "points": [[50, 0], [50, 60]]},
    ],
}


def test_catalog():
    cat = width_catalog()
    assert 6.5 in cat and 30.0 in cat and len(cat) == 12
    assert select_buffer_width(7.2) == 7.0
    assert select_buffer_width(13.5) == 13.0
    with pytest.raises(EmptyCatalog):
        select_buffer_width(5.0, [])


def test_buffer_is_round_capped_distance_band():
    res, width = 0.8, 7.2
    out = buffer_rasterize([(10, 20), (40, 20)], width, (40, 60), res)
    half = width / (2 * res)
    for r in range(40):
        for c in range(60):
            t = min(max(c, 10), 40)
            d = np.hypot(r - 20, c - t)
            assert out[r, c] == (d <= half)
    assert out[:, 25].sum() == 9


def test_buffer_errors():
    with pytest.raises(DegenerateLine):
        buffer_rasterize([(3, 3), (3, 3)], 7.0, (10, 10))


def test_rasterize_overlap_keeps_higher_grade(tmp_path):
    cf = parse_centerlines(SAMPLE)
    road, labels = rasterize_centerlines(cf, (64, 128), width=7.0)
    assert labels[20, 50] == Grade.HIGH
    assert labels[50, 50] == Grade.LOW
    assert np.array_equal(road, labels > 0)


def test_centerline_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(SAMPLE))
    cf = load_centerlines(path)
    save_centerlines(cf, tmp_path / "d.json")
    again = json.loads((tmp_path / "d.json").read_text())
    assert again == {**SAMPLE, "units": "px"}
    assert centerlines_to_json(load_centerlines(tmp_path / "d.json")) == again


def test_centerline_diagnostics(tmp_path):
    bad = {"lines": [{"id": 7, "grade": "super", "points": [[0, 0], [1, 1]]}]}
    with pytest.raises(InvalidGrade, match="id 7"):
        parse_centerlines(bad)
    with pytest.raises(TooFewPoints):
        parse_centerlines({"lines": [{"id": 1, "grade": "low", "points": [[0, 0]]}]})
    with pytest.raises(ParseError, match="points"):
        parse_centerlines({"lines": [{"id": 1, "grade": "low", "points": [[0, 0], [1, "x"]]}]})
    (tmp_path / "broken.json").write_text('{"lines": [\n  {"id": 1,,}]}')
    with pytest.raises(ParseError, match="line 2"):
        load_centerlines(tmp_path / "broken.json")


def test_metre_units():
    cf = parse_centerlines({"resolution_m": 0.5, "units": "m", "lines": [
        {"id": 1, "grade": "medium", "points": [[5, 10], [20, 10]]}]})
    assert cf.pixel_points(cf.lines[0]).tolist() == [[10, 20], [40, 20]]


def test_split_counts():
    assert split_counts(100) == (81, 10, 9)
    assert split_counts(1079) == (871, 108, 100)
    assert sum(split_counts(7)) == 7


def make_tiles(tmp_path, n):
    for i in range(n):
        (tmp_path / f"t{i:03d}.png").write_bytes(b"")
    return tmp_path


def test_manifest(tmp_path):
    d = make_tiles(tmp_path, 100)
    a, b = make_manifest(d, 1), make_manifest(d, 1)
    assert a == b
    assert [len(a[k]) for k in ("train", "val", "test")] == [81, 10, 9]
    assert sorted(a["train"] + a["val"] + a["test"]) == sorted(p.name for p in d.iterdir())
    c = make_manifest(d, 2)
    assert c != a and [len(c[k]) for k in ("train", "val", "test")] == [81, 10, 9]


def test_manifest_empty(tmp_path):
    with pytest.raises(EmptyDirectory):
        make_manifest(tmp_path)
