"""End-to-end orchestration: extract -> PCA -> vocabulary -> encode -> SVM -> evaluate.

All fitting (PCA, codebook/GMM, final PCA, SVM) happens on the train split
only; the test split flows through frozen transforms. Every random choice
takes an explicit seed from the config, so a config determines the model
file and metric CSVs byte-for-byte. Artifacts are written atomically at the
end of the run: a failed stage leaves no partial model behind.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .codebooks import GmmModel, KmeansCodebook, train_gmm, train_kmeans
from .dense_descriptors import DescriptorSet, extract_dense
from .dpm_face import build_synthetic_face_model, detect_occupancy
from .encoders import EncodedVector, encode_bow, encode_fv, encode_vlad
from .errors import DataError, SeatcheckError, StageError
from .eval_metrics import (
    ScoredSample,
    accuracy,
    accuracy_table,
    accuracy_vs_yield,
    best_threshold,
    curve_to_csv,
    roc_curve,
)
from .imagecore import build_pyramid
from .linear_classifier import score, train_svm
from .pca_reduce import fit_pca, project, project_set
from .store import PipelineModel, atomic_write_text, load_pca, load_quantizer, save_model
from .synthetic import LabeledImage, split

DEFAULT_YIELD_GRID = tuple(q / 20.0 for q in range(1, 21))


def check_quantizer_kind(encoder: str, quantizer) -> None:
    """Fisher needs a GMM; bow/vlad need a k-means codebook."""
    if encoder == "fisher" and not isinstance(quantizer, GmmModel):
        raise DataError("fisher encoding requires a GMM vocabulary")
    if encoder in ("bow", "vlad") and not isinstance(quantizer, KmeansCodebook):
        raise DataError(f"{encoder} encoding requires a k-means codebook")


@dataclass(frozen=True)
class PipelineConfig:
    encoder: str = "fisher"  # bow | vlad | fisher
    k: int = 32
    pca_dim: int | None = 64
    final_pca: int | None = None  # e.g. 512 to compress FV/VLAD signatures
    patch: int = 24
    stride: int = 4
    levels: int = 3
    scale_factor: float = 1.0 / math.sqrt(2.0)
    lambda_: float = 1e-5
    epochs: int = 50
    train_fraction: float = 0.8
    vocab_sample: int = 60000  # descriptor subsample cap for vocabulary training
    gmm_max_iter: int = 100
    gmm_tol: float = 1e-5
    kmeans_max_iter: int = 100
    split_seed: int = 1
    sample_seed: int = 2
    vocab_seed: int = 3
    svm_seed: int = 4
    with_dpm: bool = False
    dpm_seed: int = 5
    yield_grid: tuple[float, ...] = DEFAULT_YIELD_GRID
    # optional pretrained components, reused instead of fitting
    pca_path: str | None = None
    vocab_path: str | None = None


@dataclass(frozen=True)
class PipelineResult:
    model: PipelineModel
    accuracy: float
    auc: float
    yield_curve: tuple[tuple[float, float], ...]
    test_samples: tuple[ScoredSample, ...]
    dpm_accuracy: float | None = None
    dpm_threshold: float | None = None
    artifacts: tuple[str, ...] = field(default=())


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except SeatcheckError as e:
                raise StageError(name, e) from e

        return run

    return wrap


@_stage("extract")
def _extract_all(images, config) -> list[DescriptorSet]:
    out = []
    for im in images:
        pyr = build_pyramid(im.image, levels=config.levels, factor=config.scale_factor)
        out.append(extract_dense(pyr, patch=config.patch, stride=config.stride, source_id=im.image_id))
    return out


@_stage("pca")
def _fit_project_pca(train_sets, test_sets, config):
    if config.pca_dim is None and config.pca_path is None:
        return None, train_sets, test_sets
    if config.pca_path is not None:
        pca = load_pca(config.pca_path)
    else:
        pca = fit_pca(np.concatenate([d.vectors for d in train_sets]), config.pca_dim)
    return (
        pca,
        [project_set(pca, d) for d in train_sets],
        [project_set(pca, d) for d in test_sets],
    )


@_stage("vocab")
def _train_vocab(train_sets, config):
    if config.vocab_path is not None:
        return load_quantizer(config.vocab_path)
    pool = np.concatenate([d.vectors for d in train_sets])
    if pool.shape[0] > config.vocab_sample:
        rng = np.random.default_rng(config.sample_seed)
        pool = pool[rng.choice(pool.shape[0], size=config.vocab_sample, replace=False)]
    if config.encoder == "fisher":
        return train_gmm(
            pool, K=config.k, seed=config.vocab_seed,
            max_iter=config.gmm_max_iter, tol=config.gmm_tol,
        )
    return train_kmeans(pool, K=config.k, seed=config.vocab_seed, max_iter=config.kmeans_max_iter)


@_stage("encode")
def _encode_all(sets, quantizer, config) -> list[EncodedVector]:
    check_quantizer_kind(config.encoder, quantizer)
    encode = {"bow": encode_bow, "vlad": encode_vlad, "fisher": encode_fv}[config.encoder]
    return [encode(d, quantizer) for d in sets]


@_stage("final-pca")
def _compress(train_enc, test_enc, config):
    if config.final_pca is None:
        return None, train_enc, test_enc
    pca = fit_pca(np.stack([v.values for v in train_enc]), config.final_pca)

    def apply(vectors):
        out = []
        for v in vectors:
            proj = project(pca, v.values)
            norm = np.linalg.norm(proj)
            proj = proj / norm if norm != 0.0 else proj
            out.append(
                EncodedVector(
                    values=proj,
                    encoder_kind=v.encoder_kind,
                    K=v.K,
                    d=v.d,
                    normalized=True,
                    compressed_dim=config.final_pca,
                )
            )
        return out

    return pca, apply(train_enc), apply(test_enc)


@_stage("svm")
def _train_classifier(train_enc, train_labels, config):
    return train_svm(
        list(zip(train_enc, train_labels)),
        lambda_=config.lambda_,
        epochs=config.epochs,
        seed=config.svm_seed,
    )


@_stage("dpm")
def _dpm_comparison(train_images, test_images, config):
    faces = [(im.image, im.gt_face_box) for im in train_images if im.label == "person"]
    negatives = [im.image for im in train_images if im.label == "empty"]
    model = build_synthetic_face_model(faces, negatives, seed=config.dpm_seed)
    samples = []
    for im in test_images:
        _, det = detect_occupancy(model, im.image, threshold=-math.inf,
                                  levels=config.levels, factor=config.scale_factor)
        samples.append(
            ScoredSample(id=im.image_id, score=det.score, label=1 if im.label == "person" else -1)
        )
    threshold, acc = best_threshold(samples)
    return model, threshold, acc


def _labels_of(images: list[LabeledImage]) -> list[int]:
    return [1 if im.label == "person" else -1 for im in images]


def run_pipeline(
    images: list[LabeledImage],
    config: PipelineConfig = PipelineConfig(),
    out_dir: str | Path | None = None,
) -> PipelineResult:
    """Train and evaluate one configuration on a labeled image corpus.

    When ``out_dir`` is given, writes model.json, roc.csv, yield.csv,
    metrics.json, and table.csv there (atomically, only on success).
    """
    try:
        train_images, test_images = split(images, config.train_fraction, config.split_seed)
    except SeatcheckError as e:
        raise StageError("split", e) from e

    train_sets = _extract_all(train_images, config)
    test_sets = _extract_all(test_images, config)
    pca, train_sets, test_sets = _fit_project_pca(train_sets, test_sets, config)
    quantizer = _train_vocab(train_sets, config)
    train_enc = _encode_all(train_sets, quantizer, config)
    test_enc = _encode_all(test_sets, quantizer, config)
    final_pca, train_enc, test_enc = _compress(train_enc, test_enc, config)
    classifier = _train_classifier(train_enc, _labels_of(train_images), config)

    try:
        samples = tuple(
            ScoredSample(id=im.image_id, score=score(classifier, v), label=y)
            for im, v, y in zip(test_images, test_enc, _labels_of(test_images))
        )
        acc = accuracy(samples)
        roc, auc = roc_curve(samples)
        yc = accuracy_vs_yield(samples, list(config.yield_grid))
    except SeatcheckError as e:
        raise StageError("evaluate", e) from e

    dpm_model = None
    dpm_acc = None
    dpm_threshold = None
    if config.with_dpm:
        dpm_model, dpm_threshold, dpm_acc = _dpm_comparison(train_images, test_images, config)

    model = PipelineModel(
        encoder_kind=config.encoder,
        k=config.k,
        d=train_sets[0].dim,
        pca=pca,
        quantizer=quantizer,
        classifier=classifier,
        final_pca=final_pca,
        dpm=dpm_model,
    )

    artifacts: list[str] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            save_model(model, out_dir / "model.json")
            atomic_write_text(out_dir / "roc.csv", curve_to_csv(roc))
            atomic_write_text(out_dir / "yield.csv", curve_to_csv(yc))
            atomic_write_text(out_dir / "table.csv", accuracy_table([(config.encoder, config.k, acc)]))
            metrics = {
                "accuracy": acc,
                "auc": auc,
                "count": len(images),
                "train": len(train_images),
                "test": len(test_images),
                "encoder": config.encoder,
                "k": config.k,
                "dpm_accuracy": dpm_acc,
                "dpm_threshold": dpm_threshold,
            }
            atomic_write_text(
                out_dir / "metrics.json", json.dumps(metrics, sort_keys=True, indent=2) + "\n"
            )
            artifacts = [
                str(out_dir / n)
                for n in ("model.json", "roc.csv", "yield.csv", "table.csv", "metrics.json")
            ]
        except OSError as e:
            raise StageError("persist", SeatcheckError(str(e))) from e

    return PipelineResult(
        model=model,
        accuracy=acc,
        auc=auc,
        yield_curve=yc.points,
        test_samples=samples,
        dpm_accuracy=dpm_acc,
        dpm_threshold=dpm_threshold,
        artifacts=tuple(artifacts),
    )


def score_image(model: PipelineModel, image, config: PipelineConfig | None = None) -> float:
    """Score one GrayImage with a persisted pipeline model."""
    config = config or PipelineConfig()
    pyr = build_pyramid(image, levels=config.levels, factor=config.scale_factor)
    ds = extract_dense(pyr, patch=config.patch, stride=config.stride)
    if model.pca is not None:
        ds = project_set(model.pca, ds)
    encode = {"bow": encode_bow, "vlad": encode_vlad, "fisher": encode_fv}[model.encoder_kind]
    vec = encode(ds, model.quantizer)
    if model.final_pca is not None:
        proj = project(model.final_pca, vec.values)
        norm = np.linalg.norm(proj)
        vec = EncodedVector(
            values=proj / norm if norm != 0.0 else proj,
            encoder_kind=vec.encoder_kind,
            K=vec.K,
            d=vec.d,
            normalized=True,
            compressed_dim=model.final_pca.d_out,
        )
    return score(model.classifier, vec)


def config_with(config: PipelineConfig, **kwargs) -> PipelineConfig:
    return replace(config, **kwargs)
