import numpy as np
import pytest

from seatcheck.codebooks import GmmModel, KmeansCodebook
from seatcheck.dense_descriptors import DescriptorSet
from seatcheck.dpm_face import Edge, PartMixtureModel, PartTree
from seatcheck.encoders import EncodedVector
from seatcheck.errors import DataError
from seatcheck.linear_classifier import LinearModel
from seatcheck.pca_reduce import fit_pca
from seatcheck.store import (
    PipelineModel,
    corpus_to_csv,
    load_corpus,
    load_descriptor_sets,
    load_dpm_model,
    load_model,
    load_pca,
    load_quantizer,
    save_corpus,
    save_descriptor_sets,
    save_dpm_model,
    save_model,
    save_pca,
    save_quantizer,
)


def small_model(rng, with_dpm=False):
    d, k = 6, 3
    pca = fit_pca(rng.normal(size=(40, 8)), d)
    w = rng.uniform(0.5, 1.5, size=k)
    gmm = GmmModel(
        weights=w / w.sum(),
        means=rng.normal(size=(k, d)),
        variances=rng.uniform(0.5, 2.0, size=(k, d)),
    )
    clf = LinearModel(
        weights=rng.normal(size=k * d),
        bias=float(rng.normal()),
        lambda_=1e-5,
        trained_on=f"fisher:K={k}:d={d}",
    )
    dpm = None
    if with_dpm:
        tpl = rng.normal(size=(2, 2, 9))
        dpm = PartMixtureModel(
            mixtures=(
                PartTree(
                    templates=(tpl, tpl[:1, :1]),
                    edges=(Edge(parent=0, child=1, anchor_x=1, anchor_y=0, a=-0.5, b=-0.5, c=0.1),),
                ),
            ),
            biases=(0.25,),
            cell_size=4,
            bins=9,
        )
    return PipelineModel(
        encoder_kind="fisher", k=k, d=d, pca=pca, quantizer=gmm, classifier=clf, dpm=dpm
    )


def test_model_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    model = small_model(rng, with_dpm=True)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert np.array_equal(back.classifier.weights, model.classifier.weights)
    assert back.classifier.bias == model.classifier.bias
    assert np.array_equal(back.quantizer.means, model.quantizer.means)
    assert np.array_equal(back.pca.basis, model.pca.basis)
    assert np.array_equal(back.dpm.mixtures[0].templates[0], model.dpm.mixtures[0].templates[0])
    assert back.dpm.mixtures[0].edges == model.dpm.mixtures[0].edges
    # byte-deterministic serialization
    save_model(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_model_validation_rejects_mismatches():
    rng = np.random.default_rng(1)
    m = small_model(rng)
    with pytest.raises(DataError):
        PipelineModel(
            encoder_kind="bow", k=m.k, d=m.d, pca=m.pca, quantizer=m.quantizer,
            classifier=m.classifier,
        )  # bow needs kmeans
    bad_clf = LinearModel(weights=np.zeros(7), bias=0.0, lambda_=1.0, trained_on="x")
    with pytest.raises(DataError):
        PipelineModel(
            encoder_kind="fisher", k=m.k, d=m.d, pca=m.pca, quantizer=m.quantizer,
            classifier=bad_clf,
        )


def test_model_file_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(DataError):
        load_model(p)
    p.write_text('{"format": "something-else"}')
    with pytest.raises(DataError):
        load_model(p)


def test_quantizer_and_pca_files(tmp_path):
    rng = np.random.default_rng(2)
    cb = KmeansCodebook(centroids=rng.normal(size=(4, 3)))
    save_quantizer(cb, tmp_path / "cb.json")
    back = load_quantizer(tmp_path / "cb.json")
    assert isinstance(back, KmeansCodebook)
    assert np.array_equal(back.centroids, cb.centroids)

    pca = fit_pca(rng.normal(size=(30, 5)), 2)
    save_pca(pca, tmp_path / "pca.json")
    back = load_pca(tmp_path / "pca.json")
    assert np.array_equal(back.basis, pca.basis)
    assert np.array_equal(back.mean, pca.mean)


def test_dpm_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    model = small_model(rng, with_dpm=True)
    save_dpm_model(model.dpm, tmp_path / "dpm.json")
    back = load_dpm_model(tmp_path / "dpm.json")
    assert back.cell_size == model.dpm.cell_size
    assert np.array_equal(back.mixtures[0].templates[1], model.dpm.mixtures[0].templates[1])


def test_descriptor_corpus_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    sets = []
    for i in range(3):
        t = int(rng.integers(5, 12))
        sets.append(
            DescriptorSet(
                vectors=rng.normal(size=(t, 7)),
                x_norm=rng.uniform(size=t),
                y_norm=rng.uniform(size=t),
                scale_level=rng.integers(0, 3, size=t),
                source_id=f"img-{i}",
            )
        )
    save_descriptor_sets(sets, tmp_path / "desc.bin")
    back = load_descriptor_sets(tmp_path / "desc.bin")
    assert [d.source_id for d in back] == ["img-0", "img-1", "img-2"]
    for a, b in zip(sets, back):
        assert np.array_equal(a.vectors, b.vectors)
        assert np.array_equal(a.x_norm, b.x_norm)
        assert np.array_equal(a.scale_level, b.scale_level)


def test_encoded_corpus_round_trip_and_csv(tmp_path):
    rng = np.random.default_rng(5)
    vectors = []
    for _ in range(4):
        v = rng.normal(size=6)
        v /= np.linalg.norm(v)
        vectors.append(EncodedVector(values=v, encoder_kind="vlad", K=2, d=3, normalized=True))
    ids = [f"im{i}" for i in range(4)]
    labels = [1, -1, 1, -1]
    save_corpus(vectors, labels, ids, tmp_path / "corpus.bin")
    back, blabels, bids = load_corpus(tmp_path / "corpus.bin")
    assert blabels == labels and bids == ids
    for a, b in zip(vectors, back):
        assert np.array_equal(a.values, b.values)
        assert b.fingerprint == a.fingerprint and b.normalized

    csv_text = corpus_to_csv(vectors, labels, ids)
    lines = csv_text.strip().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("im0,1,")

    with pytest.raises(DataError):
        save_corpus([], None, [], tmp_path / "empty.bin")
    mixed = vectors[:1] + [
        EncodedVector(values=np.zeros(8), encoder_kind="vlad", K=2, d=4, normalized=False)
    ]
    with pytest.raises(DataError):
        save_corpus(mixed, None, ["a", "b"], tmp_path / "mixed.bin")
