"""Small synthetic road scenes used by the demos, the tests and the bundled sample."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .raster_io import BinaryMask, load_mask

FIXTURE_NAME = "fixture_128.png"


def _disc_brush(mask: np.ndarray, rows, cols, radius: float) -> None:
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w]
    for r, c in zip(rows, cols):
        mask |= (yy - r) ** 2 + (xx - c) ** 2 <= radius ** 2


def synthetic_scene(size: int = 128) -> np.ndarray:
    """Road mask with a wide avenue, a gapped side street and a narrow curved lane."""
    m = np.zeros((size, size), dtype=bool)
    s = size / 128.0
    # wide avenue
    m[int(28 * s):int(39 * s), :] = True
    # side street with a break the reconstruction should close
    c0, c1 = int(78 * s), int(85 * s)
    m[int(39 * s):int(70 * s), c0:c1] = True
    m[int(78 * s):, c0:c1] = True
    # narrow curved lane leaving the avenue
    t = np.linspace(0.0, np.pi / 2, 200)
    rows = 39 * s + 70 * s * np.sin(t)
    cols = 10 * s + 40 * s * (1 - np.cos(t))
    _disc_brush(m, rows, cols, 1.5 * s)
    return m


def fixture_path():
    return resources.files("roadgrade") / "data" / FIXTURE_NAME


def load_fixture(resolution_m: float = 0.8) -> BinaryMask:
    """The bundled 128x128 sample mask."""
    with resources.as_file(fixture_path()) as p:
        return load_mask(p, resolution_m)
