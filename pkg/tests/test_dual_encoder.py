"""Contrastive dual encoder: loss values, gradients, training behavior."""

import numpy as np
import pytest

from shiftbench import grad as G
from shiftbench.data import Image
from shiftbench.models import TrainConfig, Tokenizer, init_dual_encoder, train_dual_encoder
from shiftbench.models.encoder import batch_loss_node, contrastive_batch_loss, retrieval_accuracy
from shiftbench.rng import substream

from util import assert_grad_close, random_image


def tiny_encoder(seed=0, hwc=(2, 2, 3), d=6):
    tok = Tokenizer.from_corpus(["a photo of a blob", "a photo of a spot"])
    cfg = TrainConfig(seed=seed, embed_dim=d)
    return init_dual_encoder(tok, hwc, cfg, hidden=(5,))


def test_tokenizer_lowercases_and_splits_punctuation():
    tok = Tokenizer.from_corpus(["A photo, of a Dog!"])
    assert tok.split("A photo, of a Dog!") == ["a", "photo", "of", "a", "dog"]
    assert tok.encode("DOG photo") == tok.encode("dog photo")
    # unknown words fall back to <unk> = 0
    assert tok.encode("zzzz")[0] == 0


def test_uniform_similarity_batch_loss_is_ln_b():
    enc = tiny_encoder()
    img = random_image(substream(0, "img"), h=2, w=2)
    images = [img.copy() for _ in range(5)]
    captions = ["a photo of a blob"] * 5
    loss = contrastive_batch_loss(enc, images, captions)
    assert loss == pytest.approx(np.log(5), abs=1e-9)


def test_contrastive_gradients_match_finite_differences():
    enc = tiny_encoder(seed=3)
    rng = substream(1, "pairs")
    images = [random_image(rng, h=2, w=2) for _ in range(3)]
    captions = ["a photo of a blob", "a photo of a spot", "blob spot"]
    rows = enc.batch_image_rows(images)
    ids = [enc.tokenizer.encode(c) for c in captions]

    pvars = {k: G.Var(v) for k, v in enc.params.items()}
    loss, _ = batch_loss_node(enc, rows, ids, pvars)
    G.backward(loss)

    def loss_at(params):
        val, _ = batch_loss_node(enc, rows, ids, params)
        return float(G.value_of(val))

    from util import central_diff
    for name in ["emb", "tw", "tb", "iw0", "ib0", "iw1", "ib1", "log_tau"]:
        base = enc.params[name].copy()

        def fn(x, _n=name, _base=base):
            trial = dict(enc.params)
            trial[_n] = x
            return loss_at(trial)

        numeric = central_diff(fn, base.copy())
        analytic = pvars[name].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        assert_grad_close(analytic, numeric, rel=1e-3, floor=1e-7)


def test_batch_size_below_two_rejected():
    img = random_image(substream(2, "x"), h=2, w=2)
    pairs = [(img, "a blob")] * 4
    with pytest.raises(ValueError, match="batch size"):
        train_dual_encoder(pairs, TrainConfig(batch_size=1))
    with pytest.raises(ValueError, match="2 pairs"):
        train_dual_encoder(pairs[:1], TrainConfig(batch_size=4))


def test_training_decreases_loss_and_is_deterministic():
    rng = substream(5, "corpus")
    pairs = []
    for i in range(16):
        base = np.zeros((3, 2, 2))
        if i % 2 == 0:
            base[0] = 0.9  # red-ish
            cap = "a photo of a blob"
        else:
            base[2] = 0.9  # blue-ish
            cap = "a photo of a spot"
        base += rng.uniform(0, 0.1, size=base.shape)
        pairs.append((Image(np.clip(base, 0, 1)), cap))
    cfg = TrainConfig(epochs=20, batch_size=8, learning_rate=0.02, seed=4, embed_dim=8)
    before = contrastive_batch_loss(
        init_dual_encoder(Tokenizer.from_corpus([c for _, c in pairs]), (2, 2, 3), cfg, hidden=(5,)),
        [im for im, _ in pairs], [c for _, c in pairs])
    enc = train_dual_encoder(pairs, cfg, hidden=(5,))
    after = contrastive_batch_loss(enc, [im for im, _ in pairs], [c for _, c in pairs])
    assert after < before
    assert retrieval_accuracy(enc, pairs) >= 0.95

    enc2 = train_dual_encoder(pairs, cfg, hidden=(5,))
    assert enc.snapshot_id == enc2.snapshot_id


from hypothesis import given, settings
from hypothesis import strategies as st


@settings(max_examples=30, deadline=None)
@given(st.text(alphabet=st.characters(codec="ascii"), max_size=40))
def test_tokenizer_total_and_case_insensitive(text):
    tok = Tokenizer.from_corpus(["a photo of a blob"])
    ids = tok.encode(text)
    assert len(ids) >= 1
    assert all(0 <= i < len(tok) for i in ids)
    assert ids == tok.encode(text.upper())


def test_embeddings_unit_norm_and_temperature_positive():
    enc = tiny_encoder(seed=8)
    img = random_image(substream(3, "y"), h=2, w=2)
    assert np.linalg.norm(enc.embed_image(img)) == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(enc.embed_text("a blob")) == pytest.approx(1.0, abs=1e-6)
    assert enc.temperature > 0
    # clamp: huge log_tau values saturate at e^5
    enc.params["log_tau"] = np.array(40.0)
    assert enc.temperature == pytest.approx(np.exp(5.0))
