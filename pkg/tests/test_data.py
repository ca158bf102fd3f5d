import gzip
import math

import numpy as np
import pytest

from deepkmeans.clustering import kmeans
from deepkmeans.data import (
    SIGNED_UNIT,
    LabeledDataset,
    TermCounts,
    export_embeddings,
    load_dense_csv,
    load_idx_images,
    load_term_counts,
    make_blobs,
    read_labels,
    save_dense_csv,
    subsample,
    tfidf_select,
    validation_split,
    write_idx_images,
    write_idx_labels,
    write_labels,
)
from deepkmeans.errors import FormatError
from deepkmeans.evaluation import clustering_scores


@pytest.fixture
def idx_files(tmp_path, rng):
    images = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    images[0, 0, 0], images[0, 0, 1] = 0, 255
    labels = np.array([3, 1, 4, 1, 5])
    write_idx_images(tmp_path / "img.idx", images)
    write_idx_labels(tmp_path / "lab.idx", labels)
    return tmp_path, images, labels


def test_idx_round_trip(idx_files):
    d, images, labels = idx_files
    ds = load_idx_images(d / "img.idx", d / "lab.idx")
    assert ds.samples.shape == (5, 12)
    np.testing.assert_array_equal(np.round(ds.samples * 255).astype(np.uint8), images.reshape(5, 12))
    assert ds.labels.tolist() == [1, 0, 2, 0, 3]
    assert ds.provenance["label_values"] == [1, 3, 4, 5]


def test_idx_normalization_endpoints(idx_files):
    d, _, _ = idx_files
    unit = load_idx_images(d / "img.idx")
    assert unit.samples[0, 0] == 0.0 and unit.samples[0, 1] == 1.0
    signed = load_idx_images(d / "img.idx", normalization=SIGNED_UNIT)
    assert signed.samples[0, 0] == -1.0 and signed.samples[0, 1] == 1.0
    assert signed.samples.min() >= -1 and signed.samples.max() <= 1


def test_idx_gzip(idx_files):
    d, images, _ = idx_files
    (d / "img.idx.gz").write_bytes(gzip.compress((d / "img.idx").read_bytes()))
    assert np.array_equal(load_idx_images(d / "img.idx.gz").samples, load_idx_images(d / "img.idx").samples)


def test_idx_bad_magic(idx_files):
    d, _, _ = idx_files
    with pytest.raises(FormatError, match="offset 0"):
        load_idx_images(d / "lab.idx")


def test_idx_truncated(idx_files):
    d, _, _ = idx_files
    raw = (d / "img.idx").read_bytes()
    (d / "short.idx").write_bytes(raw[:-1])
    with pytest.raises(FormatError, match="truncated"):
        load_idx_images(d / "short.idx")


def test_idx_label_count_mismatch(idx_files, tmp_path):
    d, _, _ = idx_files
    write_idx_labels(tmp_path / "few.idx", [1, 2])
    with pytest.raises(FormatError, match="2 labels"):
        load_idx_images(d / "img.idx", tmp_path / "few.idx")


def test_csv_examples(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,2,0\n3,4,1")
    ds = load_dense_csv(p, has_labels=True)
    assert ds.samples.tolist() == [[1, 2], [3, 4]]
    assert ds.labels.tolist() == [0, 1]
    p.write_text("1,2,0\n3,4,1\n")
    assert load_dense_csv(p, has_labels=True).samples.shape == (2, 2)


def test_csv_labels_are_dense_encoded(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0.5,7\n0.1,3\n0.2,7\n")
    ds = load_dense_csv(p, has_labels=True)
    assert ds.labels.tolist() == [1, 0, 1]
    assert ds.provenance["label_values"] == [3, 7]


def test_csv_round_trip(tmp_path, rng):
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 3, 6)
    save_dense_csv(tmp_path / "r.csv", x, y)
    ds = load_dense_csv(tmp_path / "r.csv", has_labels=True)
    assert np.array_equal(ds.samples, x)
    assert ds.labels.tolist() == np.unique(y, return_inverse=True)[1].tolist()


def test_csv_ragged_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4\n5\n")
    with pytest.raises(FormatError, match=":3:"):
        load_dense_csv(p)


def test_csv_non_numeric_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\nx,4\n")
    with pytest.raises(FormatError, match=":2:"):
        load_dense_csv(p)


def test_csv_empty(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("\n")
    with pytest.raises(FormatError):
        load_dense_csv(p)


def test_dataset_rejects_non_finite():
    with pytest.raises(ValueError, match="NaN"):
        LabeledDataset(np.array([[1.0, np.nan]]))


def test_fingerprint_tracks_content(rng):
    x = rng.normal(size=(4, 2))
    assert LabeledDataset(x).fingerprint() == LabeledDataset(x.copy()).fingerprint()
    y = x.copy()
    y[0, 0] += 1e-12
    assert LabeledDataset(x).fingerprint() != LabeledDataset(y).fingerprint()


def test_labels_file_round_trip(tmp_path):
    write_labels(tmp_path / "l.txt", [2, 0, 1])
    assert read_labels(tmp_path / "l.txt").tolist() == [2, 0, 1]
    (tmp_path / "bad.txt").write_text("1\nfoo\n")
    with pytest.raises(FormatError, match=":2:"):
        read_labels(tmp_path / "bad.txt")


def test_export_embeddings_header(tmp_path):
    export_embeddings(tmp_path / "e.csv", np.zeros((2, 3)), [0, 1], [1, 1])
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "h0,h1,h2,cluster,label"
    assert len(lines) == 3


def test_tfidf_term_in_every_document_scores_zero():
    counts = np.array([[1, 2, 0], [3, 0, 1], [1, 1, 1]])
    ds = tfidf_select(counts, top_k=3)
    assert np.all(ds.samples[:, 0] == 0)


def test_tfidf_single_document_is_all_zero():
    ds = tfidf_select(np.array([[3, 1, 2]]), top_k=2)
    assert np.all(ds.samples == 0)


def test_tfidf_toy_corpus():
    counts = np.array([[2, 0, 1, 0], [0, 1, 1, 0], [0, 0, 1, 3]])
    ds = tfidf_select(counts, top_k=2)
    # term 0: 2*ln3, term 1: ln3, term 2: 0, term 3: 3*ln3
    assert ds.provenance["kept_terms"] == [0, 3]
    expected = np.array([[2 * math.log(3), 0], [0, 0], [0, 3 * math.log(3)]])
    np.testing.assert_allclose(ds.samples, expected, rtol=1e-15)


def test_tfidf_ties_prefer_lower_index():
    counts = np.array([[1, 1, 1], [0, 0, 0]])
    assert tfidf_select(counts, top_k=2).provenance["kept_terms"] == [0, 1]


def test_tfidf_top_k_too_large():
    with pytest.raises(ValueError):
        tfidf_select(np.ones((2, 3)), top_k=4)


def test_term_count_file(tmp_path):
    p = tmp_path / "tc.txt"
    p.write_text("0 0 2\n0 2 1\n\n1 1 1\n1 2 1\n2 2 1\n2 3 3\n")
    tc = load_term_counts(p)
    assert tc.shape == (3, 4)
    assert tc.to_dense().tolist() == [[2, 0, 1, 0], [0, 1, 1, 0], [0, 0, 1, 3]]
    p.write_text("0 0\n")
    with pytest.raises(FormatError, match=":1:"):
        load_term_counts(p)


def test_term_counts_from_dense_round_trip(rng):
    m = rng.integers(0, 3, size=(5, 7))
    assert np.array_equal(TermCounts.from_dense(m).to_dense(), m)


def test_validation_split_small():
    s = validation_split(10, seed=3)
    assert len(s.validation) == 1 and len(s.test) == 9
    assert sorted(np.concatenate([s.validation, s.test]).tolist()) == list(range(10))


def test_validation_split_reproducible():
    a, b = validation_split(500, seed=7), validation_split(500, seed=7)
    assert np.array_equal(a.validation, b.validation)
    assert not np.array_equal(a.validation, validation_split(500, seed=8).validation)


def test_validation_split_large_is_partition():
    s = validation_split(10000, seed=0)
    assert len(s.validation) == 1000 and len(s.test) == 9000
    assert not set(s.validation.tolist()) & set(s.test.tolist())


def test_validation_split_too_small():
    with pytest.raises(ValueError):
        validation_split(9)


def test_blobs_without_noise_sit_on_centers():
    ds = make_blobs(5, 3, 4, noise_sigma=0.0, seed=1)
    for k in range(3):
        assert len(np.unique(ds.samples[ds.labels == k], axis=0)) == 1


def test_blobs_single_cluster():
    ds = make_blobs(7, 1, 2, seed=0)
    assert ds.labels.tolist() == [0] * 7


def test_blobs_recovered_by_kmeans():
    ds = make_blobs(100, 3, 10, 10.0, 0.5, seed=0)
    res = kmeans(ds.samples, 3, np.random.default_rng(0))
    assert clustering_scores(res.assignment, ds.labels)["acc"] >= 0.99


def test_subsample_relabels_densely():
    ds = LabeledDataset(np.arange(20.0).reshape(10, 2), np.array([0, 0, 0, 0, 0, 1, 1, 1, 2, 2]))
    sub = subsample(ds, 3, seed=1)
    assert len(sub) == 3
    assert sub.labels.max() == len(np.unique(sub.labels)) - 1
    with pytest.raises(ValueError):
        subsample(ds, 11)
