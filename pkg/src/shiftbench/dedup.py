"""Train/test overlap detection via embedding cosine similarity.

Indexes hold unit-norm float32 rows (the on-disk precision); comparisons
renormalize in float64, and threshold tests carry a 1e-12 guard so exact
duplicates survive the float32 round trip even at threshold 1.0. The
exhaustive pairwise scan is the reference path; the optional prefilter
prunes with a partial-dot Cauchy-Schwarz bound and produces identical
flags by construction (verified in tests).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

INDEX_MAGIC = b"ROZE"
_THRESHOLD_GUARD = 1e-12
_PREFILTER_HEAD = 8


@dataclass
class EmbeddingIndex:
    encoder_id: str
    vectors: np.ndarray              # (n, d) float32, unit-norm rows
    dataset_id: str = ""

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValueError("index vectors must be a 2D array")
        norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("index rows must be unit-norm within 1e-6")

    def __len__(self) -> int:
        return len(self.vectors)

    def unit_rows(self) -> np.ndarray:
        """Float64 re-normalized rows for similarity computations."""
        rows = self.vectors.astype(np.float64)
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def build_embedding_index(encoder, dataset: Dataset) -> EmbeddingIndex:
    """Embed every dataset image; rejects dimension drift across images."""
    vectors, dim = [], None
    for i, ex in enumerate(dataset):
        v = np.asarray(encoder.embed_image(ex.image), dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"encoder returned a {v.ndim}D embedding")
        if dim is None:
            dim = v.size
        elif v.size != dim:
            raise ValueError(
                f"embedding dimension drift at image {i}: {v.size} != {dim}")
        v = v / np.linalg.norm(v)
        vectors.append(v.astype(np.float32))
    return EmbeddingIndex(encoder_id=encoder.snapshot_id,
                          vectors=np.stack(vectors) if vectors else np.zeros((0, 1), np.float32),
                          dataset_id=dataset.identity)


def save_index(path, index: EmbeddingIndex) -> None:
    enc = index.encoder_id.encode("utf-8")
    n, d = index.vectors.shape
    with open(path, "wb") as f:
        f.write(INDEX_MAGIC)
        f.write(struct.pack("<I", len(enc)))
        f.write(enc)
        f.write(struct.pack("<II", d, n))
        f.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())


def load_index(path) -> EmbeddingIndex:
    with open(path, "rb") as f:
        if f.read(4) != INDEX_MAGIC:
            raise ValueError(f"{path}: not an embedding index (bad magic)")
        (elen,) = struct.unpack("<I", f.read(4))
        encoder_id = f.read(elen).decode("utf-8")
        d, n = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(4 * n * d), dtype="<f4").reshape(n, d)
    return EmbeddingIndex(encoder_id=encoder_id, vectors=data.copy())


@dataclass
class OverlapMatch:
    test_id: int
    train_id: int
    similarity: float


def detect_overlaps(test_index: EmbeddingIndex, train_index: EmbeddingIndex,
                    threshold: float, prefilter: bool = False) -> list[OverlapMatch]:
    """Test rows whose max cosine against the train index reaches the
    threshold, with their best train match."""
    if test_index.encoder_id != train_index.encoder_id:
        raise ValueError(
            f"encoder mismatch: {test_index.encoder_id} vs {train_index.encoder_id}")
    a = test_index.unit_rows()
    b = train_index.unit_rows()
    cut = threshold - _THRESHOLD_GUARD
    matches = []
    if prefilter:
        ah, bh = a[:, :_PREFILTER_HEAD], b[:, :_PREFILTER_HEAD]
        at = np.linalg.norm(a[:, _PREFILTER_HEAD:], axis=1)
        bt = np.linalg.norm(b[:, _PREFILTER_HEAD:], axis=1)
    for i in range(len(a)):
        if prefilter:
            bound = ah[i] @ bh.T + at[i] * bt
            cand = np.nonzero(bound >= cut)[0]
            if cand.size == 0:
                continue
            sims = a[i] @ b[cand].T
            j = int(np.argmax(sims))
            best, best_j = float(sims[j]), int(cand[j])
        else:
            sims = a[i] @ b.T
            best_j = int(np.argmax(sims))
            best = float(sims[best_j])
        if best >= cut:
            matches.append(OverlapMatch(i, best_j, best))
    return matches


@dataclass
class OverlapReport:
    threshold: float
    overlapped_ids: list[int]
    overlap_fraction: float
    accuracy_full: float
    accuracy_cleaned: float | None    # None marks an empty cleaned set


def overlap_sweep_report(model, test_dataset: Dataset,
                         test_index: EmbeddingIndex, train_index: EmbeddingIndex,
                         thresholds) -> list[OverlapReport]:
    """Overlap fraction and full/cleaned accuracies per threshold."""
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("empty threshold list")
    if thresholds != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    if len(test_index) != len(test_dataset):
        raise ValueError("test index size does not match the dataset")
    correct = np.array([model.predict(ex.image) == ex.label for ex in test_dataset])
    accuracy_full = float(correct.mean())
    reports = []
    for th in thresholds:
        flagged = sorted(m.test_id for m in detect_overlaps(test_index, train_index, th))
        keep = np.ones(len(test_dataset), dtype=bool)
        keep[flagged] = False
        cleaned = float(correct[keep].mean()) if keep.any() else None
        reports.append(OverlapReport(
            threshold=th, overlapped_ids=flagged,
            overlap_fraction=len(flagged) / len(test_dataset),
            accuracy_full=accuracy_full, accuracy_cleaned=cleaned))
    return reports


DEFAULT_THRESHOLD_GRID = (0.80, 0.85, 0.90, 0.95, 0.99)
