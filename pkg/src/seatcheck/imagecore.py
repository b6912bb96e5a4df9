"""Grayscale image container, gradients, and multi-scale pyramids.

Pixels live in [0, 1] as float64 regardless of on-disk bit depth, so all
downstream math is independent of storage format. Binary PGM (P5, 8-bit)
is the canonical bit-exact interchange format; PNG loading is optional
and requires Pillow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

# Levels smaller than one descriptor patch per side are useless everywhere
# downstream, so pyramid construction refuses to create them.
MIN_LEVEL_SIDE = 24


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GrayImage:
    """Single-channel intensity raster with values in [0, 1].

    ``pixels`` is a read-only (height, width) float64 array.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = _frozen(self.pixels)
        if px.ndim != 2:
            raise DataError(f"expected a 2-D pixel raster, got ndim={px.ndim}")
        if px.size == 0:
            raise DataError("empty image")
        if not np.isfinite(px).all():
            raise DataError("image contains non-finite pixels")
        lo, hi = float(px.min()), float(px.max())
        if lo < 0.0 or hi > 1.0:
            raise DataError(f"pixel values outside [0, 1]: min={lo}, max={hi}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class GradientField:
    """Per-pixel gradient magnitude and orientation (radians in [0, 2*pi))."""

    magnitude: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "magnitude", _frozen(self.magnitude))
        object.__setattr__(self, "orientation", _frozen(self.orientation))
        if self.magnitude.shape != self.orientation.shape:
            raise DataError("magnitude/orientation shape mismatch")


@dataclass(frozen=True)
class ScalePyramid:
    """Ordered image levels; level 0 is the original, factors strictly decrease."""

    levels: tuple[GrayImage, ...]
    scale_factors: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.levels) != len(self.scale_factors):
            raise DataError("levels/scale_factors length mismatch")
        if not self.levels:
            raise DataError("empty pyramid")
        if self.scale_factors[0] != 1.0:
            raise DataError("level 0 must have scale factor 1.0")
        diffs = np.diff(self.scale_factors)
        if len(diffs) and not (diffs < 0).all():
            raise DataError("scale factors must be strictly decreasing")


def compute_gradients(img: GrayImage) -> GradientField:
    """Central-difference gradients (one-sided on borders).

    Orientation is atan2(dy, dx) mapped into [0, 2*pi); a zero gradient
    yields orientation 0 and magnitude 0.
    """
    if img.width < 3 or img.height < 3:
        raise DataError(
            f"image {img.width}x{img.height} too small for gradients (need >= 3x3)"
        )
    p = img.pixels
    dx = np.empty_like(p)
    dy = np.empty_like(p)
    dx[:, 1:-1] = (p[:, 2:] - p[:, :-2]) * 0.5
    dx[:, 0] = p[:, 1] - p[:, 0]
    dx[:, -1] = p[:, -1] - p[:, -2]
    dy[1:-1, :] = (p[2:, :] - p[:-2, :]) * 0.5
    dy[0, :] = p[1, :] - p[0, :]
    dy[-1, :] = p[-1, :] - p[-2, :]

    mag = np.hypot(dx, dy)
    ori = np.arctan2(dy, dx)
    ori = np.where(ori < 0.0, ori + 2.0 * np.pi, ori)
    # atan2 returns values in (-pi, pi]; after the shift anything that still
    # rounds up to 2*pi (tiny negative angles) is folded back to 0.
    ori = np.where(ori >= 2.0 * np.pi, 0.0, ori)
    return GradientField(magnitude=mag, orientation=ori)


def level_size(side: int, factor: float, level: int) -> int:
    """Side length of pyramid level ``level``: round(side * factor**level), half-up."""
    return int(math.floor(side * factor**level + 0.5))


def _bilinear_resize(p: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = p.shape
    # Pixel-center alignment: output center (i+0.5)/out maps to the same
    # relative position in the input, clamped at the borders.
    sx = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    sy = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    x0 = np.clip(np.floor(sx).astype(int), 0, in_w - 1)
    y0 = np.clip(np.floor(sy).astype(int), 0, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    top = p[y0[:, None], x0[None, :]] * (1.0 - fx) + p[y0[:, None], x1[None, :]] * fx
    bot = p[y1[:, None], x0[None, :]] * (1.0 - fx) + p[y1[:, None], x1[None, :]] * fx
    return top * (1.0 - fy[:, None]) + bot * fy[:, None]


def resize_bilinear(img: GrayImage, height: int, width: int) -> GrayImage:
    """Resample to an arbitrary size with pixel-center-aligned bilinear interpolation."""
    if height < 1 or width < 1:
        raise DataError("target size must be positive")
    return GrayImage(np.clip(_bilinear_resize(img.pixels, height, width), 0.0, 1.0))


def build_pyramid(img: GrayImage, levels: int = 3, factor: float = 1.0 / math.sqrt(2.0)) -> ScalePyramid:
    """Downsample ``img`` into ``levels`` bilinear levels at the given per-level factor.

    Level ``l`` has side lengths round(original * factor**l). Raises if any
    requested level would drop below MIN_LEVEL_SIDE (24 px) per side.
    """
    if levels < 1:
        raise DataError("levels must be >= 1")
    if not (0.0 < factor < 1.0):
        raise DataError("factor must lie in (0, 1)")
    sizes = [(level_size(img.height, factor, l), level_size(img.width, factor, l)) for l in range(levels)]
    for l, (h, w) in enumerate(sizes):
        if h < MIN_LEVEL_SIDE or w < MIN_LEVEL_SIDE:
            raise DataError(
                f"pyramid level {l} would be {w}x{h}, below the minimum "
                f"patch size of {MIN_LEVEL_SIDE} pixels per side"
            )
    imgs = [img]
    factors = [1.0]
    for l in range(1, levels):
        h, w = sizes[l]
        imgs.append(GrayImage(np.clip(_bilinear_resize(img.pixels, h, w), 0.0, 1.0)))
        factors.append(factor**l)
    return ScalePyramid(levels=tuple(imgs), scale_factors=tuple(factors))


# --- image file I/O -------------------------------------------------------


def load_pgm(path: str | Path) -> GrayImage:
    """Read a binary (P5) 8-bit PGM file."""
    data = Path(path).read_bytes()
    return parse_pgm(data)


def parse_pgm(data: bytes) -> GrayImage:
    if not data.startswith(b"P5"):
        raise DataError("not a binary PGM (P5) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as e:
        raise DataError(f"malformed PGM header: {e}") from e
    if maxval != 255:
        raise DataError(f"only 8-bit PGM supported (maxval 255), got {maxval}")
    n = width * height
    raster = data[pos : pos + n]
    if len(raster) != n:
        raise DataError(f"PGM raster truncated: expected {n} bytes, got {len(raster)}")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(px.astype(np.float64) / 255.0)


def save_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a binary (P5) 8-bit PGM file; pixels are rounded to 1/255 steps."""
    Path(path).write_bytes(pgm_bytes(img))


def pgm_bytes(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    raster = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    return header + raster.tobytes()


def load_image(path: str | Path) -> GrayImage:
    """Load PGM directly or any Pillow-readable format (converted to grayscale)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return load_pgm(path)
    try:
        from PIL import Image
    except ImportError as e:
        raise DataError(
            f"loading {path.suffix} images requires Pillow; only .pgm is built in"
        ) from e
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return GrayImage(arr)
