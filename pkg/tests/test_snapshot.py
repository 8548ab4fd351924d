"""Model snapshot file round trips."""

import numpy as np
import pytest

from shiftbench.models import (TrainConfig, load_classifier, load_encoder,
                               save_classifier, save_encoder, train_classifier,
                               train_dual_encoder)
from shiftbench.rng import substream

from util import random_image, separable_dataset


def test_classifier_snapshot_roundtrip_bit_exact(tmp_path):
    model = train_classifier(separable_dataset(), arch="mlp",
                             config=TrainConfig(epochs=3, seed=1), hidden=(6,))
    path = tmp_path / "model.rozm"
    save_classifier(path, model)
    again = load_classifier(path)
    assert again.class_names == model.class_names
    assert again.input_hwc == model.input_hwc
    # f32 on disk: saving the loaded model must reproduce the same bytes
    path2 = tmp_path / "model2.rozm"
    save_classifier(path2, again)
    assert path.read_bytes() == path2.read_bytes()


def test_loaded_classifier_agrees_with_native_to_f32(tmp_path):
    model = train_classifier(separable_dataset(), arch="mlp",
                             config=TrainConfig(epochs=3, seed=4), hidden=(6,))
    path = tmp_path / "model.rozm"
    save_classifier(path, model)
    again = load_classifier(path)
    img = random_image(substream(0, "img"), h=2, w=2)
    assert np.abs(again.logits(img) - model.logits(img)).max() < 1e-4


def test_encoder_snapshot_roundtrip(tmp_path):
    rng = substream(1, "pairs")
    pairs = [(random_image(rng, h=2, w=2), cap)
             for cap in ["a blob", "a spot", "a blob", "a spot"]]
    enc = train_dual_encoder(pairs, TrainConfig(epochs=2, batch_size=4,
                                                learning_rate=0.01, seed=0,
                                                embed_dim=6), hidden=(5,))
    path = tmp_path / "encoder.rozm"
    save_encoder(path, enc)
    again = load_encoder(path)
    assert again.tokenizer.vocab == enc.tokenizer.vocab
    img = random_image(substream(2, "img"), h=2, w=2)
    assert np.abs(again.embed_image(img) - enc.embed_image(img)).max() < 1e-5
    assert np.abs(again.embed_text("a blob") - enc.embed_text("a blob")).max() < 1e-5
    assert again.temperature == pytest.approx(enc.temperature, rel=1e-6)


def test_snapshot_rejects_bad_magic(tmp_path):
    path = tmp_path / "bogus.rozm"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_classifier(path)
