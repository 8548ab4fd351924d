"""Corruption suite, perturbation sequences, toy data generators."""

import numpy as np
import pytest

from shiftbench.data import Image
from shiftbench.rng import substream
from shiftbench.shifts import (CORRUPTION_KINDS, NOISE_KINDS, CorruptionSpec,
                               apply_corruption, build_perturbation_sequences,
                               build_sequence, corrupt_dataset,
                               generate_toy_dataset)
from shiftbench.shifts.corruptions import brightness, gaussian_noise

from util import random_image


def test_zero_knob_primitives_are_identity():
    img = random_image(substream(0, "img"), h=8, w=8)
    assert np.array_equal(gaussian_noise(img.data, 0.0, substream(1, "r")), img.data)
    assert np.array_equal(brightness(img.data, 0.0), img.data)


def test_unknown_kind_and_severity_rejected():
    with pytest.raises(ValueError, match="unknown corruption"):
        CorruptionSpec("fog", 1)
    with pytest.raises(ValueError, match="severity"):
        CorruptionSpec("gaussian_noise", 6)


def test_all_corruptions_stay_in_range_and_deterministic():
    rng = substream(2, "imgs")
    for kind in CORRUPTION_KINDS:
        for severity in (1, 3, 5):
            spec = CorruptionSpec(kind, severity)
            img = random_image(rng, h=12, w=12)
            a = apply_corruption(img, spec, seed=9)
            b = apply_corruption(img, spec, seed=9)
            assert np.array_equal(a.data, b.data), kind
            assert a.data.min() >= 0.0 and a.data.max() <= 1.0


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_noise_magnitude_strictly_increases_with_severity(kind):
    rng = substream(3, "mc")
    images = [random_image(rng, h=8, w=8) for _ in range(100)]
    deltas = []
    for severity in range(1, 6):
        spec = CorruptionSpec(kind, severity)
        total = 0.0
        for i, img in enumerate(images):
            out = apply_corruption(img, spec, seed=i)
            total += np.abs(out.data - img.data).mean()
        deltas.append(total / len(images))
    assert all(a < b for a, b in zip(deltas, deltas[1:])), deltas


def test_corrupt_dataset_maps_every_image():
    ds = generate_toy_dataset(n_per_class=2, image_size=16, seed=0)
    out = corrupt_dataset(ds, CorruptionSpec("brightness", 2), seed=1)
    assert len(out) == len(ds)
    assert out.class_names == ds.class_names
    assert all(o.label == e.label for o, e in zip(out, ds))


# -- perturbation sequences --------------------------------------------------

def test_sequence_length_one_is_clean_frame_only():
    img = random_image(substream(4, "img"), h=8, w=8)
    seq = build_sequence(img, "rotate", 1)
    assert len(seq) == 1
    assert np.array_equal(seq.frames[0].data, img.data)


def test_sequence_rejects_zero_length():
    img = random_image(substream(4, "img"), h=8, w=8)
    with pytest.raises(ValueError, match="length"):
        build_sequence(img, "rotate", 0)
    with pytest.raises(ValueError, match="unknown perturbation"):
        build_sequence(img, "warp", 3)


def test_translate_frames_shift_exact_pixels():
    img = random_image(substream(5, "img"), h=8, w=8)
    seq = build_sequence(img, "translate", 4)
    for j, frame in enumerate(seq.frames):
        shift = j  # frame j shifted by exactly j pixels (frame 0 clean)
        if shift == 0:
            assert np.array_equal(frame.data, img.data)
        else:
            assert np.array_equal(frame.data[:, :, shift:],
                                  img.data[:, :, :8 - shift])
            assert np.all(frame.data[:, :, :shift] == 0.0)


def test_noise_sequence_frames_all_differ():
    img = random_image(substream(6, "img"), h=8, w=8)
    seq = build_sequence(img, "gaussian_noise", 5, seed=3)
    datas = [f.data for f in seq.frames]
    for j in range(1, 5):
        assert not np.array_equal(datas[j], datas[0])
        for k in range(1, j):
            assert not np.array_equal(datas[j], datas[k])


def test_geometric_first_frame_clean_and_deterministic():
    ds = generate_toy_dataset(n_per_class=2, image_size=16, seed=2)
    seqs_a = build_perturbation_sequences(ds, "tilt", 3, seed=5)
    seqs_b = build_perturbation_sequences(ds, "tilt", 3, seed=5)
    assert len(seqs_a) == len(ds)
    for sa, sb, ex in zip(seqs_a, seqs_b, ds):
        assert np.array_equal(sa.frames[0].data, ex.image.data)
        for fa, fb in zip(sa.frames, sb.frames):
            assert np.array_equal(fa.data, fb.data)
    assert seqs_a[0].notes["approximation"] == "shear"


# -- toy shapes ---------------------------------------------------------------

def test_toy_dataset_deterministic_hash():
    a = generate_toy_dataset(n_per_class=4, image_size=16, seed=11)
    b = generate_toy_dataset(n_per_class=4, image_size=16, seed=11)
    assert a.content_hash() == b.content_hash()
    c = generate_toy_dataset(n_per_class=4, image_size=16, seed=12)
    assert c.content_hash() != a.content_hash()


def test_toy_shift_variant_hurts_clean_trained_model():
    from shiftbench.models import TrainConfig, train_classifier
    train = generate_toy_dataset(n_per_class=40, image_size=16, seed=0)
    test_iid = generate_toy_dataset(n_per_class=15, image_size=16, seed=1)
    test_shift = generate_toy_dataset(n_per_class=15, image_size=16, seed=1,
                                      shift_variant="background")
    model = train_classifier(train, arch="mlp",
                             config=TrainConfig(epochs=30, seed=0,
                                                learning_rate=0.08),
                             hidden=(32,))
    acc_iid = model.accuracy(test_iid)
    acc_shift = model.accuracy(test_shift)
    assert acc_iid >= 0.9
    assert acc_iid > acc_shift


def test_toy_class_names_are_caption_words():
    ds = generate_toy_dataset(n_per_class=1, image_size=16, seed=0)
    for name in ds.class_names:
        assert name.isalpha() and name == name.lower()
