"""Loading, saving and tiling of binary road masks and grade masks.

Supported on-disk formats are 8-bit PNG and binary PGM/PPM. Grade masks are
written either as RGB images using a palette or as single-channel label
images holding ``{0: background, 1: low, 2: medium, 3: high}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    IoFailure, MissingFile, UnknownColor, UnsupportedFormat, ValidationError, ZeroDimension, ZeroTileSize,
)
from .labels import BACKGROUND, DEFAULT_PALETTE, Grade

DEFAULT_RESOLUTION_M = 0.8
ROAD_THRESHOLD = 127

_ACCEPTED_FORMATS = {"PNG", "PPM"}  # Pillow reports PGM files as PPM
_ACCEPTED_MODES = {"1", "L", "LA", "P", "RGB", "RGBA"}


@dataclass(frozen=True)
class BinaryMask:
    """Road membership raster, ``data[row, col]`` is True on road pixels."""

    data: np.ndarray
    resolution_m: float = DEFAULT_RESOLUTION_M

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 2:
            raise ZeroDimension(f"mask must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ZeroDimension(f"mask has a zero dimension: {data.shape}")
        if not self.resolution_m > 0:
            raise ValidationError("resolution_m must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True)
class GradeMask:
    """Per-pixel grade labels (see :mod:`roadgrade.labels`)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2 or 0 in labels.shape:
            raise ZeroDimension(f"grade mask must be non-empty 2-D, got shape {labels.shape}")
        if labels.size and labels.max() > int(Grade.HIGH):
            raise ValidationError(f"label value {int(labels.max())} outside 0..3")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def road(self) -> np.ndarray:
        return self.labels != BACKGROUND

    def __array__(self, dtype=None, copy=None):
        return self.labels if dtype is None else self.labels.astype(dtype)


@dataclass(frozen=True)
class Palette:
    """Bijective mapping from labels (background + three grades) to RGB."""

    colors: Mapping[int, tuple] = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    def __post_init__(self):
        keys = {int(k) for k in self.colors}
        if keys != {BACKGROUND, *map(int, Grade)}:
            raise ValidationError("palette must define background, low, medium and high")
        values = [tuple(int(c) for c in v) for v in self.colors.values()]
        if len(set(values)) != len(values):
            raise ValidationError("palette colours must be distinct")

    def lut(self) -> np.ndarray:
        table = np.zeros((4, 3), dtype=np.uint8)
        for label, rgb in self.colors.items():
            table[int(label)] = rgb
        return table

    def encode(self, labels: np.ndarray) -> np.ndarray:
        return self.lut()[np.asarray(labels, dtype=np.uint8)]

    def decode(self, rgb: np.ndarray) -> np.ndarray:
        rgb = np.asarray(rgb, dtype=np.uint8)
        packed = (rgb[..., 0].astype(np.uint32) << 16) | (rgb[..., 1].astype(np.uint32) << 8) | rgb[..., 2]
        out = np.full(packed.shape, 255, dtype=np.uint8)
        for label, (r, g, b) in self.colors.items():
            out[packed == ((r << 16) | (g << 8) | b)] = int(label)
        bad = out == 255
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise UnknownColor(f"pixel ({row}, {col}) has colour {tuple(rgb[row, col])} not in palette")
        return out


def _open(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if img.format not in _ACCEPTED_FORMATS or img.mode not in _ACCEPTED_MODES:
        raise UnsupportedFormat(f"{path}: {img.format} image in mode {img.mode} is not an 8-bit gray/RGB raster")
    if img.width < 1 or img.height < 1:
        raise ZeroDimension(f"{path}: image has a zero dimension")
    return img


def load_mask(path, resolution_m: float = DEFAULT_RESOLUTION_M) -> BinaryMask:
    """Read a road mask; a pixel is road iff its luminance exceeds 127."""
    img = _open(path)
    if img.mode in ("LA", "RGBA", "P"):
        img = img.convert("RGB")
    gray = np.asarray(img.convert("L"), dtype=np.uint8)
    return BinaryMask(gray > ROAD_THRESHOLD, resolution_m)


def save_mask(mask, path) -> None:
    """Write a binary mask (or skeleton) as a 0/255 grayscale raster."""
    data = np.asarray(mask, dtype=bool)
    _save(Image.fromarray(np.where(data, 255, 0).astype(np.uint8), mode="L"), path)


def save_grade_mask(mask: GradeMask, path, palette: Palette | None = None) -> None:
    """Write the grade mask as an RGB image using ``palette``."""
    palette = palette or Palette()
    _save(Image.fromarray(palette.encode(np.asarray(mask)), mode="RGB"), path)


def load_grade_mask(path, palette: Palette | None = None) -> GradeMask:
    img = _open(path).convert("RGB")
    return GradeMask((palette or Palette()).decode(np.asarray(img)))


def save_grade_labels(mask: GradeMask, path) -> None:
    """Write the single-channel label encoding (values 0..3)."""
    _save(Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L"), path)


def load_grade_labels(path) -> GradeMask:
    img = _open(path)
    if img.mode != "L":
        raise UnsupportedFormat(f"{path}: label rasters must be single-channel, got {img.mode}")
    return GradeMask(np.asarray(img, dtype=np.uint8))


def _save(img: Image.Image, path) -> None:
    path = Path(path)
    fmt = "PNG" if path.suffix.lower() == ".png" else "PPM"
    if path.suffix.lower() not in (".png", ".pgm", ".ppm", ".pnm"):
        raise UnsupportedFormat(f"{path}: output must be .png, .pgm or .ppm")
    try:
        img.save(path, format=fmt)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def tile(mask, tile_size: int) -> list:
    """Split into ``tile_size`` squares in row-major order.

    Edge tiles are zero-padded. Trailing axes (such as colour channels) are
    kept. Returns ``BinaryMask`` tiles when given a ``BinaryMask`` and plain
    arrays otherwise.
    """
    if tile_size < 1:
        raise ZeroTileSize("tile_size must be >= 1")
    data = np.asarray(mask)
    h, w = data.shape[:2]
    rows, cols = math.ceil(h / tile_size), math.ceil(w / tile_size)
    padded = np.zeros((rows * tile_size, cols * tile_size) + data.shape[2:], dtype=data.dtype)
    padded[:h, :w] = data
    tiles = [
        padded[r * tile_size:(r + 1) * tile_size, c * tile_size:(c + 1) * tile_size].copy()
        for r in range(rows) for c in range(cols)
    ]
    if isinstance(mask, BinaryMask):
        return [BinaryMask(t, mask.resolution_m) for t in tiles]
    return tiles


def untile(tiles: Sequence, shape: tuple) -> np.ndarray:
    """Inverse of :func:`tile`: stitch tiles back and crop the padding."""
    if not tiles:
        raise ValidationError("no tiles given")
    arrays = [np.asarray(t) for t in tiles]
    size = arrays[0].shape[0]
    h, w = shape
    rows, cols = math.ceil(h / size), math.ceil(w / size)
    if len(arrays) != rows * cols:
        raise ValidationError(f"expected {rows * cols} tiles for shape {shape}, got {len(arrays)}")
    full = np.concatenate([np.concatenate(arrays[r * cols:(r + 1) * cols], axis=1) for r in range(rows)], axis=0)
    return full[:h, :w]
