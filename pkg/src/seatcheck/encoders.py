"""Aggregate a set of local descriptors into one fixed-length image signature.

Three encoders share the same contract (descriptors in, one vector out):

* BoW: nearest-word histograms over a 1 + 2x2 + 4x4 spatial pyramid
  (21 regions), each region L1-normalized, concatenated, L2-normalized.
* VLAD: per-word accumulation of residuals x_t - mu_i, concatenated,
  then power- and L2-normalized.
* Fisher vector: per-component posterior-weighted, sigma-whitened mean
  residuals, g_i = (1 / (T * sqrt(w_i))) * sum_t alpha_t(i) (x_t - mu_i) / sigma_i,
  concatenated over components, then power- and L2-normalized.

VLAD and FV sums run over descriptors in a canonical (lexicographically
sorted) order, so encodings are bit-identical under any permutation of the
input set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebooks import GmmModel, KmeansCodebook, assign_nearest, posteriors
from .dense_descriptors import DescriptorSet
from .errors import DataError, NumericalError

ENCODER_KINDS = ("bow", "vlad", "fisher")

# 1 whole-image region + 2x2 + 4x4 grid cells.
BOW_REGIONS = 1 + 4 + 16

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class EncodedVector:
    """One fixed-length image signature plus the provenance of its encoder.

    ``compressed_dim`` is set when the vector was further reduced by PCA
    (e.g. Fisher to 512-D); the native length contract then no longer
    applies and the fingerprint records the compressed dimension.
    """

    values: np.ndarray
    encoder_kind: str
    K: int
    d: int
    normalized: bool
    compressed_dim: int | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.encoder_kind not in ENCODER_KINDS:
            raise DataError(f"unknown encoder kind {self.encoder_kind!r}")
        if self.compressed_dim is None:
            expected = BOW_REGIONS * self.K if self.encoder_kind == "bow" else self.K * self.d
        else:
            expected = self.compressed_dim
        if v.shape != (expected,):
            raise DataError(
                f"{self.encoder_kind} vector must have length {expected}, got {v.shape}"
            )
        if self.normalized:
            norm = float(np.linalg.norm(v))
            if norm != 0.0 and abs(norm - 1.0) > UNIT_NORM_TOL:
                raise DataError(f"vector marked normalized has L2 norm {norm!r}")
        object.__setattr__(self, "values", v)

    @property
    def fingerprint(self) -> str:
        base = f"{self.encoder_kind}:K={self.K}:d={self.d}"
        if self.compressed_dim is not None:
            base += f":pca={self.compressed_dim}"
        return base


def power_l2_normalize(v: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Signed power (|z|^alpha with z's sign) followed by L2 normalization.

    The all-zero vector maps to itself; anything non-finite is rejected.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise NumericalError("power_l2_normalize received non-finite input")
    powered = np.sign(v) * np.abs(v) ** alpha
    norm = np.linalg.norm(powered)
    if norm == 0.0:
        return np.zeros_like(powered)
    return powered / norm


def _l2_or_zero(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm != 0.0 else np.zeros_like(v)


def _canonical_order(vectors: np.ndarray) -> np.ndarray:
    """Sort descriptor rows lexicographically (column 0 is the primary key)."""
    return np.lexsort(vectors.T[::-1])


def _check_nonempty(ds: DescriptorSet, model_d: int) -> None:
    if len(ds) == 0:
        raise DataError("cannot encode an empty descriptor set")
    if ds.dim != model_d:
        raise DataError(f"descriptor dim {ds.dim} does not match model dim {model_d}")


def _grid_index(coord: np.ndarray, n: int) -> np.ndarray:
    """Half-open bins [i/n, (i+1)/n) with the final bin closed at 1.0."""
    return np.minimum(np.floor(coord * n).astype(np.int64), n - 1)


def encode_bow(ds: DescriptorSet, cb: KmeansCodebook, normalize: bool = True) -> EncodedVector:
    """Spatial-pyramid bag-of-words: whole image + 2x2 + 4x4 region histograms.

    Each region histogram is L1-normalized (empty regions stay zero) so the
    dense 4x4 level cannot drown the whole-image histogram; the 21*K
    concatenation is then L2-normalized. BoW receives no power normalization.
    """
    _check_nonempty(ds, cb.d)
    words = assign_nearest(cb, ds.vectors)
    K = cb.K
    hists = np.zeros((BOW_REGIONS, K))
    hists[0] = np.bincount(words, minlength=K)
    region = 1
    for n in (2, 4):
        ix = _grid_index(ds.x_norm, n)
        iy = _grid_index(ds.y_norm, n)
        cell = iy * n + ix
        for c in range(n * n):
            mask = cell == c
            if mask.any():
                hists[region + c] = np.bincount(words[mask], minlength=K)
        region += n * n
    sums = hists.sum(axis=1, keepdims=True)
    hists = np.divide(hists, sums, out=np.zeros_like(hists), where=sums > 0)
    flat = hists.ravel()
    if normalize:
        flat = _l2_or_zero(flat)
    return EncodedVector(values=flat, encoder_kind="bow", K=K, d=ds.dim, normalized=normalize)


def encode_vlad(ds: DescriptorSet, cb: KmeansCodebook, normalize: bool = True) -> EncodedVector:
    """VLAD: accumulate x_t - mu_i over descriptors nearest to word i."""
    _check_nonempty(ds, cb.d)
    order = _canonical_order(ds.vectors)
    x = ds.vectors[order]
    words = assign_nearest(cb, x)
    acc = np.zeros((cb.K, cb.d))
    np.add.at(acc, words, x - cb.centroids[words])
    flat = acc.ravel()
    if normalize:
        flat = power_l2_normalize(flat)
    return EncodedVector(values=flat, encoder_kind="vlad", K=cb.K, d=cb.d, normalized=normalize)


def encode_fv(ds: DescriptorSet, gmm: GmmModel, normalize: bool = True) -> EncodedVector:
    """Fisher vector over the mean parameters of a diagonal GMM.

    With S0_i = sum_t alpha_t(i) and S1_i = sum_t alpha_t(i) x_t, component
    i contributes (S1_i - S0_i mu_i) / (sigma_i * T * sqrt(w_i)), which is
    the posterior-weighted whitened residual sum.
    """
    _check_nonempty(ds, gmm.d)
    order = _canonical_order(ds.vectors)
    x = ds.vectors[order]
    t = x.shape[0]
    alpha = posteriors(gmm, x)  # (T, K)
    s0 = alpha.sum(axis=0)
    s1 = alpha.T @ x
    sigma = np.sqrt(gmm.variances)
    g = (s1 - s0[:, None] * gmm.means) / (sigma * (t * np.sqrt(gmm.weights))[:, None])
    flat = g.ravel()
    if normalize:
        flat = power_l2_normalize(flat)
    return EncodedVector(values=flat, encoder_kind="fisher", K=gmm.K, d=gmm.d, normalized=normalize)


def fisher_kernel(a: EncodedVector, b: EncodedVector) -> float:
    """Dot product of two normalized Fisher vectors."""
    for v in (a, b):
        if v.encoder_kind != "fisher":
            raise DataError("fisher_kernel requires fisher-kind vectors")
        if not v.normalized:
            raise DataError("fisher_kernel requires normalized vectors")
    if a.K != b.K or a.d != b.d or a.values.shape != b.values.shape:
        raise DataError("fisher_kernel operands have mismatched shapes")
    return float(np.dot(a.values, b.values))
