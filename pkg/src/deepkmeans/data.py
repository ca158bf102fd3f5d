"""Dataset loaders, preprocessing, splits and synthetic fixtures."""

from __future__ import annotations

import csv
import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

UNIT_INTERVAL = "unit_interval"
SIGNED_UNIT = "signed_unit"
NORMALIZATIONS = (UNIT_INTERVAL, SIGNED_UNIT)


@dataclass
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"{self.name or 'dataset'}: samples contain NaN or Inf")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.samples),):
                raise ValueError("one label per sample required")
            if self.labels.size and (self.labels.min() < 0 or len(np.unique(self.labels)) != self.labels.max() + 1):
                raise ValueError("labels must be dense ids in [0, n_classes)")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.samples, dtype="<f8").tobytes())
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


def dense_labels(raw) -> tuple[np.ndarray, list]:
    """Re-encode arbitrary label values as 0..n_classes-1 (sorted order)."""
    values, inverse = np.unique(np.asarray(raw), return_inverse=True)
    return inverse.astype(np.int64), values.tolist()


# ------------------------------------------------------------------------ IDX

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, path, magic: int) -> tuple[tuple[int, ...], np.ndarray]:
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header at offset 0")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic number 0x{found:08x} at offset 0, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    expected = int(np.prod(dims))
    body = len(raw) - header_end
    if body < expected:
        raise FormatError(f"{path}: truncated data at offset {len(raw)}, expected {header_end + expected} bytes")
    data = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header_end)
    return dims, data


def load_idx_images(images_path, labels_path=None, normalization: str = UNIT_INTERVAL,
                    name: str | None = None) -> LabeledDataset:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    dims, pixels = _parse_idx(_read_bytes(images_path), images_path, IDX_IMAGES_MAGIC)
    n, rows, cols = dims
    x = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    if normalization == SIGNED_UNIT:
        x = 2.0 * x - 1.0
    lo, hi = (0.0, 1.0) if normalization == UNIT_INTERVAL else (-1.0, 1.0)
    assert x.min(initial=lo) >= lo and x.max(initial=hi) <= hi
    labels = None
    if labels_path is not None:
        (n_labels,), raw_labels = _parse_idx(_read_bytes(labels_path), labels_path, IDX_LABELS_MAGIC)
        if n_labels != n:
            raise FormatError(f"{labels_path}: {n_labels} labels at offset 4 but {n} images")
        labels, values = dense_labels(raw_labels.astype(np.int64))
    prov = {"source": "idx", "normalization": normalization, "image_shape": [rows, cols]}
    if labels is not None:
        prov["label_values"] = values
    return LabeledDataset(x, labels, name or Path(images_path).name, prov)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


# ------------------------------------------------------------------------ CSV

def load_dense_csv(path, has_labels: bool = False, name: str | None = None) -> LabeledDataset:
    """Numeric CSV, one sample per row; the label is the last column when ``has_labels``."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    prov = {"source": "csv", "has_labels": has_labels}
    if has_labels:
        raw = table[:, -1]
        if not np.all(raw == np.round(raw)):
            raise FormatError(f"{path}: label column must hold integers")
        labels, values = dense_labels(raw.astype(np.int64))
        prov["label_values"] = values
        return LabeledDataset(table[:, :-1], labels, name or Path(path).name, prov)
    return LabeledDataset(table, None, name or Path(path).name, prov)


def save_dense_csv(path, samples: np.ndarray, labels=None) -> None:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, row in enumerate(samples):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            w.writerow(cells)


def export_embeddings(path, embeddings: np.ndarray, assignment=None, labels=None) -> None:
    """Embeddings as CSV (optionally followed by cluster and class columns) for external projection."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        p = embeddings.shape[1]
        header = [f"h{j}" for j in range(p)]
        if assignment is not None:
            header.append("cluster")
        if labels is not None:
            header.append("label")
        w.writerow(header)
        for i, row in enumerate(embeddings):
            cells = [repr(float(v)) for v in row]
            if assignment is not None:
                cells.append(int(assignment[i]))
            if labels is not None:
                cells.append(int(labels[i]))
            w.writerow(cells)


def read_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer label: {line!r}") from None
    return np.array(out, dtype=np.int64)


def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


# --------------------------------------------------------------------- tf-idf

@dataclass
class TermCounts:
    """Sparse document-term counts in coordinate form."""
    docs: np.ndarray
    terms: np.ndarray
    counts: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        self.docs = np.asarray(self.docs, dtype=np.int64)
        self.terms = np.asarray(self.terms, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if np.any(self.counts < 0):
            raise ValueError("term counts must be nonnegative")

    @classmethod
    def from_dense(cls, matrix) -> "TermCounts":
        m = np.asarray(matrix)
        d, t = np.nonzero(m)
        return cls(d, t, m[d, t], m.shape)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.docs, self.terms), self.counts)
        return out


def load_term_counts(path, n_docs: int | None = None, n_terms: int | None = None) -> TermCounts:
    """Whitespace-separated ``doc_id term_id count`` triplets, one per line."""
    docs, terms, counts = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                d, t, c = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer field") from None
            if d < 0 or t < 0 or c < 0:
                raise FormatError(f"{path}:{lineno}: negative value")
            docs.append(d)
            terms.append(t)
            counts.append(c)
    shape = (n_docs or (max(docs, default=-1) + 1), n_terms or (max(terms, default=-1) + 1))
    return TermCounts(np.array(docs), np.array(terms), np.array(counts), shape)


def tfidf_select(term_counts, top_k: int = 2000, labels=None, name: str = "") -> LabeledDataset:
    """Keep the ``top_k`` terms with the highest tf-idf anywhere in the corpus.

    tf is the raw count and idf = ln(N / df); a term's score is its maximum
    tf-idf over documents, ties going to the lower term index. Output
    columns follow ascending term index.
    """
    tc = term_counts if isinstance(term_counts, TermCounts) else TermCounts.from_dense(term_counts)
    n_docs, n_terms = tc.shape
    if top_k > n_terms or top_k < 1:
        raise ValueError(f"top_k must lie in [1, {n_terms}], got {top_k}")
    dense = tc.to_dense()
    df = np.count_nonzero(dense > 0, axis=0)
    with np.errstate(divide="ignore"):
        idf = np.where(df > 0, np.log(n_docs / np.maximum(df, 1)), 0.0)
    tfidf = dense * idf
    score = tfidf.max(axis=0, initial=0.0)
    order = np.lexsort((np.arange(n_terms), -score))
    kept = np.sort(order[:top_k])
    prov = {
        "source": "term_counts", "weighting": "raw_tf*ln(N/df)", "score": "max_over_documents",
        "top_k": top_k, "kept_terms": kept.tolist(),
    }
    return LabeledDataset(tfidf[:, kept], labels, name, prov)


# --------------------------------------------------------------------- splits

@dataclass
class SplitIndices:
    validation: np.ndarray
    test: np.ndarray
    seed: int


def validation_split(n: int, seed: int = 0) -> SplitIndices:
    """10% validation / 90% test partition of ``range(n)``."""
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    k = n // 10
    return SplitIndices(np.sort(perm[:k]), np.sort(perm[k:]), seed)


def subsample(dataset: LabeledDataset, n: int, seed: int = 0) -> LabeledDataset:
    if n > len(dataset):
        raise ValueError(f"cannot draw {n} samples from {len(dataset)}")
    idx = np.sort(np.random.default_rng(seed).choice(len(dataset), size=n, replace=False))
    labels = None
    prov = dict(dataset.provenance, subsample={"n": n, "seed": seed})
    if dataset.labels is not None:
        labels, values = dense_labels(dataset.labels[idx])
        prov["subsample"]["label_values"] = values
    return LabeledDataset(dataset.samples[idx], labels, dataset.name, prov)


def make_blobs(n_per_cluster: int, n_clusters: int, dim: int, center_spread: float = 10.0,
               noise_sigma: float = 0.5, seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_spread, center_spread, size=(n_clusters, dim))
    labels = np.repeat(np.arange(n_clusters), n_per_cluster)
    samples = centers[labels] + rng.normal(0.0, noise_sigma, size=(len(labels), dim))
    prov = {"source": "blobs", "n_per_cluster": n_per_cluster, "n_clusters": n_clusters, "dim": dim,
            "center_spread": center_spread, "noise_sigma": noise_sigma, "seed": seed}
    return LabeledDataset(samples, labels, "blobs", prov)
