"""Persistence: the versioned pipeline model file and bulk corpus formats.

The model file is structured JSON. Python's float repr is the shortest
round-tripping decimal, so JSON serialization is lossless for every finite
float64 and save -> load -> score is bit-exact. Keys are sorted and arrays
are nested lists, making files diffable and byte-deterministic.

Bulk data (descriptor sets, encoded corpora) uses a one-line JSON header
followed by raw little-endian float64, which is compact, deterministic,
and trivially seekable. All writes go through a temp-file rename so a
failed run never leaves a partial artifact.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codebooks import GmmModel, KmeansCodebook
from .dense_descriptors import DescriptorSet
from .dpm_face import Edge, PartMixtureModel, PartTree
from .encoders import BOW_REGIONS, EncodedVector
from .errors import DataError
from .linear_classifier import LinearModel
from .pca_reduce import PcaModel

MODEL_FORMAT = "seatcheck-model"
MODEL_VERSION = 1
DESC_MAGIC = b"SCDS1\n"
CORPUS_MAGIC = b"SCEC1\n"


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class PipelineModel:
    """Everything needed to score a new image, bundled and versioned."""

    encoder_kind: str
    k: int
    d: int
    pca: PcaModel | None
    quantizer: KmeansCodebook | GmmModel
    classifier: LinearModel
    final_pca: PcaModel | None = None
    dpm: PartMixtureModel | None = None
    version: int = MODEL_VERSION

    def __post_init__(self):
        if self.version != MODEL_VERSION:
            raise DataError(f"unsupported model version {self.version}")
        if self.encoder_kind == "fisher":
            if not isinstance(self.quantizer, GmmModel):
                raise DataError("fisher encoding requires a GMM quantizer")
        elif self.encoder_kind in ("bow", "vlad"):
            if not isinstance(self.quantizer, KmeansCodebook):
                raise DataError(f"{self.encoder_kind} encoding requires a k-means codebook")
        else:
            raise DataError(f"unknown encoder kind {self.encoder_kind!r}")
        if self.quantizer.K != self.k or self.quantizer.d != self.d:
            raise DataError("quantizer shape does not match declared (k, d)")
        if self.pca is not None and self.pca.d_out != self.d:
            raise DataError(f"PCA output dim {self.pca.d_out} does not match d={self.d}")
        native = BOW_REGIONS * self.k if self.encoder_kind == "bow" else self.k * self.d
        expected = self.final_pca.d_out if self.final_pca is not None else native
        if self.final_pca is not None and self.final_pca.d_in != native:
            raise DataError("final PCA input dim does not match encoded length")
        if self.classifier.weights.shape[0] != expected:
            raise DataError(
                f"classifier expects {self.classifier.weights.shape[0]} dims, encoder yields {expected}"
            )


# --- JSON codecs --------------------------------------------------------------


def _pca_to_json(m: PcaModel | None):
    if m is None:
        return None
    return {
        "mean": m.mean.tolist(),
        "basis": m.basis.tolist(),
        "eigenvalues": m.eigenvalues.tolist(),
    }


def _pca_from_json(obj) -> PcaModel | None:
    if obj is None:
        return None
    return PcaModel(
        mean=np.array(obj["mean"]),
        basis=np.array(obj["basis"]),
        eigenvalues=np.array(obj["eigenvalues"]),
    )


def _quantizer_to_json(q: KmeansCodebook | GmmModel):
    if isinstance(q, GmmModel):
        return {
            "type": "gmm",
            "weights": q.weights.tolist(),
            "means": q.means.tolist(),
            "variances": q.variances.tolist(),
        }
    return {"type": "kmeans", "centroids": q.centroids.tolist()}


def _quantizer_from_json(obj):
    if obj["type"] == "gmm":
        return GmmModel(
            weights=np.array(obj["weights"]),
            means=np.array(obj["means"]),
            variances=np.array(obj["variances"]),
        )
    if obj["type"] == "kmeans":
        return KmeansCodebook(centroids=np.array(obj["centroids"]))
    raise DataError(f"unknown quantizer type {obj['type']!r}")


def _dpm_to_json(model: PartMixtureModel | None):
    if model is None:
        return None
    mixtures = []
    for tree in model.mixtures:
        mixtures.append(
            {
                "root": tree.root,
                "templates": [t.tolist() for t in tree.templates],
                "edges": [
                    {
                        "parent": e.parent,
                        "child": e.child,
                        "anchor": [e.anchor_x, e.anchor_y],
                        "a": e.a,
                        "b": e.b,
                        "c": e.c,
                        "d": e.d,
                    }
                    for e in tree.edges
                ],
            }
        )
    return {
        "cell_size": model.cell_size,
        "bins": model.bins,
        "biases": list(model.biases),
        "mixtures": mixtures,
    }


def _dpm_from_json(obj) -> PartMixtureModel | None:
    if obj is None:
        return None
    trees = []
    for t in obj["mixtures"]:
        edges = tuple(
            Edge(
                parent=e["parent"],
                child=e["child"],
                anchor_x=e["anchor"][0],
                anchor_y=e["anchor"][1],
                a=e["a"],
                b=e["b"],
                c=e["c"],
                d=e["d"],
            )
            for e in t["edges"]
        )
        trees.append(
            PartTree(
                templates=tuple(np.array(x) for x in t["templates"]),
                edges=edges,
                root=t["root"],
            )
        )
    return PartMixtureModel(
        mixtures=tuple(trees),
        biases=tuple(obj["biases"]),
        cell_size=obj["cell_size"],
        bins=obj["bins"],
    )


def model_to_json(model: PipelineModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": model.version,
        "encoder": {"kind": model.encoder_kind, "k": model.k, "d": model.d},
        "pca": _pca_to_json(model.pca),
        "quantizer": _quantizer_to_json(model.quantizer),
        "final_pca": _pca_to_json(model.final_pca),
        "classifier": {
            "weights": model.classifier.weights.tolist(),
            "bias": model.classifier.bias,
            "lambda": model.classifier.lambda_,
            "trained_on": model.classifier.trained_on,
        },
        "dpm": _dpm_to_json(model.dpm),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def model_from_json(text: str) -> PipelineModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"model file is not valid JSON: {e}") from e
    if doc.get("format") != MODEL_FORMAT:
        raise DataError("not a seatcheck model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')}")
    cls = doc["classifier"]
    return PipelineModel(
        encoder_kind=doc["encoder"]["kind"],
        k=doc["encoder"]["k"],
        d=doc["encoder"]["d"],
        pca=_pca_from_json(doc["pca"]),
        quantizer=_quantizer_from_json(doc["quantizer"]),
        final_pca=_pca_from_json(doc["final_pca"]),
        classifier=LinearModel(
            weights=np.array(cls["weights"]),
            bias=cls["bias"],
            lambda_=cls["lambda"],
            trained_on=cls["trained_on"],
        ),
        dpm=_dpm_from_json(doc["dpm"]),
        version=doc["version"],
    )


def save_model(model: PipelineModel, path: str | Path) -> None:
    atomic_write_text(path, model_to_json(model))


def load_model(path: str | Path) -> PipelineModel:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read model file: {e}") from e
    return model_from_json(text)


def save_quantizer(q: KmeansCodebook | GmmModel, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(_quantizer_to_json(q), sort_keys=True) + "\n")


def load_quantizer(path: str | Path):
    try:
        return _quantizer_from_json(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"cannot read quantizer file: {e}") from e


def save_pca(m: PcaModel, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(_pca_to_json(m), sort_keys=True) + "\n")


def load_pca(path: str | Path) -> PcaModel:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read PCA file: {e}") from e
    m = _pca_from_json(obj)
    if m is None:
        raise DataError("PCA file holds null")
    return m


def save_classifier(clf: LinearModel, path: str | Path) -> None:
    doc = {
        "weights": clf.weights.tolist(),
        "bias": clf.bias,
        "lambda": clf.lambda_,
        "trained_on": clf.trained_on,
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def load_classifier(path: str | Path) -> LinearModel:
    try:
        doc = json.loads(Path(path).read_text())
        return LinearModel(
            weights=np.array(doc["weights"]),
            bias=doc["bias"],
            lambda_=doc["lambda"],
            trained_on=doc["trained_on"],
        )
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"cannot read classifier file: {e}") from e


def save_dpm_model(model: PartMixtureModel, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(_dpm_to_json(model), sort_keys=True) + "\n")


def load_dpm_model(path: str | Path) -> PartMixtureModel:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read DPM model file: {e}") from e
    m = _dpm_from_json(obj)
    if m is None:
        raise DataError("DPM file holds null")
    return m


# --- descriptor corpus ---------------------------------------------------------


def save_descriptor_sets(sets: list[DescriptorSet], path: str | Path) -> None:
    """One file for a whole corpus: header line + per-image float64 blocks.

    Each image block is (count, 3 + dim): x_norm, y_norm, scale_level, vector.
    """
    if not sets:
        raise DataError("refusing to write an empty descriptor corpus")
    dim = sets[0].dim
    if any(d.dim != dim for d in sets):
        raise DataError("all descriptor sets in a corpus must share one dim")
    header = {
        "dim": dim,
        "images": [{"id": d.source_id, "count": len(d)} for d in sets],
    }
    blobs = [DESC_MAGIC, (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")]
    for d in sets:
        block = np.column_stack(
            [d.x_norm, d.y_norm, d.scale_level.astype(np.float64), d.vectors]
        )
        blobs.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(blobs))


def load_descriptor_sets(path: str | Path) -> list[DescriptorSet]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read descriptor corpus: {e}") from e
    if not data.startswith(DESC_MAGIC):
        raise DataError("not a seatcheck descriptor corpus")
    nl = data.index(b"\n", len(DESC_MAGIC))
    header = json.loads(data[len(DESC_MAGIC) : nl])
    dim = header["dim"]
    out = []
    offset = nl + 1
    width = 3 + dim
    for entry in header["images"]:
        count = entry["count"]
        nbytes = count * width * 8
        block = np.frombuffer(data[offset : offset + nbytes], dtype="<f8")
        if block.size != count * width:
            raise DataError("descriptor corpus truncated")
        block = block.reshape(count, width)
        offset += nbytes
        out.append(
            DescriptorSet(
                vectors=block[:, 3:].copy(),
                x_norm=block[:, 0].copy(),
                y_norm=block[:, 1].copy(),
                scale_level=block[:, 2].astype(np.int64),
                source_id=entry["id"],
            )
        )
    return out


# --- encoded corpus -------------------------------------------------------------


def save_corpus(
    vectors: list[EncodedVector],
    labels: list[int] | None,
    ids: list[str],
    path: str | Path,
) -> None:
    """Dense matrix file: JSON header (encoder kind, K, d, count, ids, labels)
    followed by row-major float64 values."""
    if not vectors:
        raise DataError("refusing to write an empty corpus")
    first = vectors[0]
    if any(v.fingerprint != first.fingerprint or v.normalized != first.normalized for v in vectors):
        raise DataError("all corpus vectors must share encoder provenance")
    if len(ids) != len(vectors) or (labels is not None and len(labels) != len(vectors)):
        raise DataError("ids/labels length mismatch")
    header = {
        "encoder_kind": first.encoder_kind,
        "k": first.K,
        "d": first.d,
        "count": len(vectors),
        "length": int(first.values.shape[0]),
        "normalized": first.normalized,
        "compressed_dim": first.compressed_dim,
        "ids": list(ids),
        "labels": list(labels) if labels is not None else None,
    }
    mat = np.stack([v.values for v in vectors])
    atomic_write_bytes(
        path,
        CORPUS_MAGIC
        + (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
        + np.ascontiguousarray(mat, dtype="<f8").tobytes(),
    )


def load_corpus(path: str | Path) -> tuple[list[EncodedVector], list[int] | None, list[str]]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read corpus: {e}") from e
    if not data.startswith(CORPUS_MAGIC):
        raise DataError("not a seatcheck encoded corpus")
    nl = data.index(b"\n", len(CORPUS_MAGIC))
    header = json.loads(data[len(CORPUS_MAGIC) : nl])
    count, length = header["count"], header["length"]
    mat = np.frombuffer(data[nl + 1 :], dtype="<f8")
    if mat.size != count * length:
        raise DataError("corpus truncated")
    mat = mat.reshape(count, length)
    vectors = [
        EncodedVector(
            values=mat[i].copy(),
            encoder_kind=header["encoder_kind"],
            K=header["k"],
            d=header["d"],
            normalized=header["normalized"],
            compressed_dim=header["compressed_dim"],
        )
        for i in range(count)
    ]
    return vectors, header["labels"], header["ids"]


def corpus_to_csv(vectors: list[EncodedVector], labels: list[int] | None, ids: list[str]) -> str:
    """Inspection export: id, label (blank if unknown), then the values."""
    lines = []
    for i, v in enumerate(vectors):
        label = "" if labels is None else str(labels[i])
        lines.append(",".join([ids[i], label] + [repr(float(x)) for x in v.values]))
    return "\n".join(lines) + "\n"
