"""Overlap detection against the exhaustive pairwise oracle."""

import numpy as np
import pytest

from shiftbench.data import Dataset, Image, LabeledExample
from shiftbench.dedup import (DEFAULT_THRESHOLD_GRID, EmbeddingIndex,
                              build_embedding_index, detect_overlaps,
                              load_index, overlap_sweep_report, save_index)
from shiftbench.models import linear_fixture
from shiftbench.rng import substream


class ProjectionEncoder:
    """Deterministic random-projection image embedder (test fixture)."""

    def __init__(self, in_dim, out_dim=16, seed=0):
        rng = substream(seed, "projection")
        self.w = rng.normal(size=(in_dim, out_dim))
        self.snapshot_id = f"projection-{seed}-{out_dim}"

    def embed_image(self, image):
        v = image.data.reshape(-1) @ self.w
        return v / np.linalg.norm(v)


def tiny_dataset(seed, n, h=4, w=4):
    rng = substream(seed, "imgs")
    examples = [LabeledExample(Image(rng.uniform(0, 1, size=(3, h, w))), i % 2)
                for i in range(n)]
    return Dataset(examples, ["a", "b"], name=f"tiny-{seed}")


def test_identical_images_identical_vectors_cosine_one():
    ds = tiny_dataset(0, 4)
    ds.examples[3] = LabeledExample(ds.examples[0].image.copy(), ds.examples[0].label)
    enc = ProjectionEncoder(48)
    idx = build_embedding_index(enc, ds)
    assert np.array_equal(idx.vectors[0], idx.vectors[3])
    rows = idx.unit_rows()
    assert float(rows[0] @ rows[3]) == pytest.approx(1.0, abs=1e-12)
    # index rows match un-batched per-image recomputation
    for i, ex in enumerate(ds):
        v = enc.embed_image(ex.image)
        v = (v / np.linalg.norm(v)).astype(np.float32)
        assert np.array_equal(idx.vectors[i], v)


def test_byte_equal_image_flagged_at_threshold_one():
    train = tiny_dataset(1, 6)
    test = tiny_dataset(2, 6)
    test.examples[2] = LabeledExample(train.examples[4].image.copy(), 0)
    enc = ProjectionEncoder(48)
    ti = build_embedding_index(enc, test)
    tr = build_embedding_index(enc, train)
    flagged = detect_overlaps(ti, tr, 1.0)
    assert [m.test_id for m in flagged] == [2]
    assert flagged[0].train_id == 4


def test_threshold_above_one_flags_nothing():
    enc = ProjectionEncoder(48)
    ti = build_embedding_index(enc, tiny_dataset(3, 5))
    tr = build_embedding_index(enc, tiny_dataset(4, 5))
    assert detect_overlaps(ti, tr, 1.01) == []


def test_encoder_mismatch_rejected():
    ds = tiny_dataset(5, 3)
    a = build_embedding_index(ProjectionEncoder(48, seed=1), ds)
    b = build_embedding_index(ProjectionEncoder(48, seed=2), ds)
    with pytest.raises(ValueError, match="encoder mismatch"):
        detect_overlaps(a, b, 0.9)


def test_dimension_drift_rejected():
    class DriftingEncoder:
        snapshot_id = "drift"

        def __init__(self):
            self.n = 0

        def embed_image(self, image):
            self.n += 1
            v = np.ones(4 if self.n == 1 else 5)
            return v / np.linalg.norm(v)

    with pytest.raises(ValueError, match="dimension drift"):
        build_embedding_index(DriftingEncoder(), tiny_dataset(6, 2))


def test_index_file_roundtrip_bit_exact(tmp_path):
    enc = ProjectionEncoder(48)
    idx = build_embedding_index(enc, tiny_dataset(7, 5))
    path = tmp_path / "index.roze"
    save_index(path, idx)
    again = load_index(path)
    assert again.encoder_id == idx.encoder_id
    assert np.array_equal(again.vectors, idx.vectors)
    assert again.vectors.dtype == np.float32


def test_flags_match_bruteforce_scan_200x200():
    rng = substream(8, "embed")
    d = 24
    train = rng.normal(size=(200, d))
    test = rng.normal(size=(200, d))
    test[::10] = train[::10] + rng.normal(scale=1e-4, size=(20, d))  # near dups
    train /= np.linalg.norm(train, axis=1, keepdims=True)
    test /= np.linalg.norm(test, axis=1, keepdims=True)
    ti = EmbeddingIndex("e", test.astype(np.float32))
    tr = EmbeddingIndex("e", train.astype(np.float32))
    for threshold in (0.8, 0.95, 0.999):
        flags = {m.test_id for m in detect_overlaps(ti, tr, threshold)}
        # O(n*m) python-loop oracle over the same stored rows
        a, b = ti.unit_rows(), tr.unit_rows()
        expect = set()
        for i in range(len(a)):
            best = max(float(a[i] @ b[j]) for j in range(len(b)))
            if best >= threshold - 1e-12:
                expect.add(i)
        assert flags == expect
        pre = {m.test_id for m in detect_overlaps(ti, tr, threshold, prefilter=True)}
        assert pre == flags


def test_flag_count_non_increasing_over_default_grid():
    rng = substream(9, "embed")
    train = rng.normal(size=(80, 12))
    test = rng.normal(size=(80, 12))
    test[:20] = train[:20]
    train /= np.linalg.norm(train, axis=1, keepdims=True)
    test /= np.linalg.norm(test, axis=1, keepdims=True)
    ti = EmbeddingIndex("e", test.astype(np.float32))
    tr = EmbeddingIndex("e", train.astype(np.float32))
    counts = [len(detect_overlaps(ti, tr, t)) for t in DEFAULT_THRESHOLD_GRID]
    assert all(x >= y for x, y in zip(counts, counts[1:]))
    assert counts[-1] >= 20  # planted copies survive every threshold


def test_planted_overlap_sweep_and_cleaned_accuracy():
    train = tiny_dataset(10, 40)
    test = tiny_dataset(11, 40)
    planted = list(range(0, 40, 2))[:8]  # 20% of the test set
    for i, j in zip(planted, range(8)):
        test.examples[i] = LabeledExample(train.examples[j].image.copy(),
                                          test.examples[i].label)
    enc = ProjectionEncoder(48)
    ti = build_embedding_index(enc, test)
    tr = build_embedding_index(enc, train)

    class FixedPredictor:
        snapshot_id = "fixed"

        def predict(self, image):
            return 0

    model = FixedPredictor()
    reports = overlap_sweep_report(model, test, ti, tr, [0.999])
    rep = reports[0]
    assert rep.overlapped_ids == planted
    assert rep.overlap_fraction == pytest.approx(0.2)
    # hand recount over the 80% remainder
    keep = [k for k in range(40) if k not in planted]
    expect = np.mean([test.examples[k].label == 0 for k in keep])
    assert rep.accuracy_cleaned == pytest.approx(expect)
    assert abs(len(rep.overlapped_ids) + len(keep) - len(test)) == 0


def test_disjoint_sets_cleaned_equals_full():
    enc = ProjectionEncoder(48)
    test = tiny_dataset(12, 30)
    train = tiny_dataset(13, 30)
    ti = build_embedding_index(enc, test)
    tr = build_embedding_index(enc, train)
    model = linear_fixture()

    class MeanPredictor:
        snapshot_id = "mean"

        def predict(self, image):
            return int(image.data.mean() > 0.5)

    reports = overlap_sweep_report(MeanPredictor(), test, ti, tr, [0.9999])
    assert reports[0].overlap_fraction == 0.0
    assert reports[0].accuracy_cleaned == pytest.approx(reports[0].accuracy_full)


def test_cosine_symmetry():
    rng = substream(15, "sym")
    rows = rng.normal(size=(20, 10))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    idx = EmbeddingIndex("e", rows.astype(np.float32))
    u = idx.unit_rows()
    for i in range(5):
        for j in range(5):
            assert abs(float(u[i] @ u[j]) - float(u[j] @ u[i])) <= 1e-7


def test_sweep_validates_inputs():
    enc = ProjectionEncoder(48)
    ds = tiny_dataset(14, 4)
    idx = build_embedding_index(enc, ds)

    class P:
        snapshot_id = "p"

        def predict(self, image):
            return 0

    with pytest.raises(ValueError, match="empty threshold"):
        overlap_sweep_report(P(), ds, idx, idx, [])
    with pytest.raises(ValueError, match="sorted"):
        overlap_sweep_report(P(), ds, idx, idx, [0.9, 0.8])
