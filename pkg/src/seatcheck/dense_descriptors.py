"""Dense SIFT-style descriptor extraction on a regular grid.

Each 24x24 patch yields a 128-D vector: 4x4 spatial cells x 8 orientation
bins, with soft bilinear voting in x, y, and orientation. Cells are laid
out row-major with the orientation bin index varying fastest. Extraction is
upright (no dominant-orientation alignment): the inputs are dashboard-level
crops, so rotation invariance would only blur the signal.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .imagecore import ScalePyramid, compute_gradients, level_size

N_CELLS = 4
N_ORI_BINS = 8
RAW_DIM = N_CELLS * N_CELLS * N_ORI_BINS

# Descriptors whose gradient energy falls below this L2 norm are mapped to
# the zero vector instead of being normalized (flat empty-seat regions must
# encode, not crash).
NORM_FLOOR = 1e-10

CLIP_THRESHOLD = 0.2


@dataclass(frozen=True)
class LocalDescriptor:
    """One local descriptor with its normalized patch-center position."""

    vector: np.ndarray
    x_norm: float
    y_norm: float
    scale_level: int


@dataclass(frozen=True)
class DescriptorSet:
    """All descriptors of one image, stored columnar for vector math.

    ``vectors`` is (T, dim); positions are patch centers divided by the
    width/height of the level they came from, so they always lie in [0, 1].
    """

    vectors: np.ndarray
    x_norm: np.ndarray
    y_norm: np.ndarray
    scale_level: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise DataError("descriptor vectors must be a (T, dim) array")
        t = v.shape[0]
        for name in ("x_norm", "y_norm", "scale_level"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (t,):
                raise DataError(f"{name} length {arr.shape} does not match T={t}")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "x_norm", np.asarray(self.x_norm, dtype=np.float64))
        object.__setattr__(self, "y_norm", np.asarray(self.y_norm, dtype=np.float64))
        object.__setattr__(self, "scale_level", np.asarray(self.scale_level, dtype=np.int64))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, i: int) -> LocalDescriptor:
        return LocalDescriptor(
            vector=self.vectors[i],
            x_norm=float(self.x_norm[i]),
            y_norm=float(self.y_norm[i]),
            scale_level=int(self.scale_level[i]),
        )

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _orientation_planes(mag: np.ndarray, ori: np.ndarray) -> np.ndarray:
    """Split gradient energy into (H, W, 8) planes by soft orientation voting.

    Bin centers sit at b * (2*pi/8), so an exactly-horizontal gradient votes
    entirely into bin 0.
    """
    delta = 2.0 * np.pi / N_ORI_BINS
    o = ori / delta
    b0 = np.floor(o)
    frac = o - b0
    b0 = b0.astype(np.int64) % N_ORI_BINS
    b1 = (b0 + 1) % N_ORI_BINS
    h, w = mag.shape
    planes = np.zeros((h, w, N_ORI_BINS))
    yy, xx = np.indices((h, w))
    planes[yy, xx, b0] = mag * (1.0 - frac)
    planes[yy, xx, b1] += mag * frac
    return planes


def _spatial_kernels(patch: int) -> np.ndarray:
    """(16, patch*patch) bilinear cell-interpolation weights, cells row-major."""
    cs = patch / N_CELLS
    pos = (np.arange(patch) + 0.5) / cs - 0.5
    c0 = np.floor(pos).astype(np.int64)
    frac = pos - c0
    w1d = np.zeros((N_CELLS, patch))
    for p in range(patch):
        if 0 <= c0[p] < N_CELLS:
            w1d[c0[p], p] = 1.0 - frac[p]
        if 0 <= c0[p] + 1 < N_CELLS:
            w1d[c0[p] + 1, p] = frac[p]
    kernels = np.einsum("ia,jb->ijab", w1d, w1d)  # (cy, cx, py, px)
    return kernels.reshape(N_CELLS * N_CELLS, patch * patch)


def _normalize_descriptors(desc: np.ndarray) -> np.ndarray:
    """L2-normalize, clip components at 0.2, re-L2-normalize.

    Rows with norm under NORM_FLOOR become the zero vector.
    """

    def safe_unit(d):
        norms = np.sqrt(np.sum(d * d, axis=1, keepdims=True))
        live = norms > NORM_FLOOR
        return np.where(live, d / np.where(live, norms, 1.0), 0.0)

    desc = safe_unit(desc)
    desc = np.minimum(desc, CLIP_THRESHOLD)
    return safe_unit(desc)


def extract_dense(pyr: ScalePyramid, patch: int = 24, stride: int = 4, source_id: str = "") -> DescriptorSet:
    """Extract descriptors at every (i*stride, j*stride) patch on every level."""
    if patch < N_CELLS or stride < 1:
        raise DataError(f"invalid patch/stride: {patch}/{stride}")
    for l, lv in enumerate(pyr.levels):
        if lv.width < patch or lv.height < patch:
            raise DataError(
                f"pyramid level {l} ({lv.width}x{lv.height}) smaller than patch {patch}"
            )

    kernels = _spatial_kernels(patch)
    all_vec, all_x, all_y, all_lvl = [], [], [], []
    for l, lv in enumerate(pyr.levels):
        g = compute_gradients(lv)
        planes = _orientation_planes(g.magnitude, g.orientation)
        windows = sliding_window_view(planes, (patch, patch), axis=(0, 1))
        windows = windows[::stride, ::stride]  # (ny, nx, 8, patch, patch)
        ny, nx = windows.shape[:2]
        flat = np.ascontiguousarray(windows).reshape(ny * nx * N_ORI_BINS, patch * patch)
        cell_hist = flat @ kernels.T  # (ny*nx*8, 16)
        desc = cell_hist.reshape(ny * nx, N_ORI_BINS, N_CELLS * N_CELLS)
        desc = np.ascontiguousarray(np.swapaxes(desc, 1, 2)).reshape(ny * nx, RAW_DIM)
        all_vec.append(_normalize_descriptors(desc))

        xs = np.arange(nx) * stride + patch / 2.0
        ys = np.arange(ny) * stride + patch / 2.0
        gx, gy = np.meshgrid(xs / lv.width, ys / lv.height)
        all_x.append(gx.ravel())
        all_y.append(gy.ravel())
        all_lvl.append(np.full(ny * nx, l, dtype=np.int64))

    return DescriptorSet(
        vectors=np.concatenate(all_vec),
        x_norm=np.concatenate(all_x),
        y_norm=np.concatenate(all_y),
        scale_level=np.concatenate(all_lvl),
        source_id=source_id,
    )


def descriptor_count(
    width: int,
    height: int,
    levels: int = 3,
    factor: float = 0.7071067811865476,
    patch: int = 24,
    stride: int = 4,
) -> int:
    """Total grid positions across all levels; extract_dense yields exactly this."""
    if min(width, height, levels, patch, stride) < 1 or factor <= 0.0:
        raise DataError("descriptor_count arguments must be positive")
    total = 0
    for l in range(levels):
        w = width if l == 0 else level_size(width, factor, l)
        h = height if l == 0 else level_size(height, factor, l)
        if w >= patch and h >= patch:
            total += ((w - patch) // stride + 1) * ((h - patch) // stride + 1)
    return total


def descriptors_to_csv(ds: DescriptorSet) -> str:
    """Debug dump: one descriptor per line as x_norm, y_norm, scale_level, values."""
    buf = io.StringIO()
    for i in range(len(ds)):
        head = f"{float(ds.x_norm[i])!r},{float(ds.y_norm[i])!r},{int(ds.scale_level[i])}"
        tail = ",".join(repr(float(v)) for v in ds.vectors[i])
        buf.write(head + "," + tail + "\n")
    return buf.getvalue()


def save_descriptors_csv(ds: DescriptorSet, path: str | Path) -> None:
    Path(path).write_text(descriptors_to_csv(ds))
