"""Reference classifiers: forward oracles, gradient oracles, training."""

import numpy as np
import pytest

from shiftbench import grad as G
from shiftbench.data import Image
from shiftbench.errors import ShapeMismatchError
from shiftbench.models import (FeedForwardClassifier, TrainConfig,
                               init_feed_forward, linear_fixture,
                               linear_fixture_example, train_classifier)
from shiftbench.rng import substream

from util import assert_grad_close, central_diff, random_image, separable_dataset


def test_single_class_model_always_predicts_it():
    model = FeedForwardClassifier({"w0": np.zeros((3, 1)), "b0": np.zeros(1)},
                                  (1, 1, 3), ["only"])
    img = Image(np.array([0.2, 0.9, 0.4]).reshape(3, 1, 1))
    assert model.logits(img).shape == (1,)
    assert model.predict(img) == 0


def test_linear_fixture_margin_is_point_one():
    model = linear_fixture()
    ex = linear_fixture_example()
    z = model.logits(ex.image)
    assert z[0] - z[1] == pytest.approx(0.1, abs=1e-12)
    assert model.predict(ex.image) == 0


def test_mlp_logits_match_bruteforce_recomputation():
    model = init_feed_forward("mlp", (4, 4, 3), ["a", "b", "c"], hidden=(8, 5),
                              pool=1, seed=7)
    img = random_image(substream(1, "probe"))
    z = model.logits(img)
    # independent layer-by-layer recomputation
    v = img.data.reshape(1, -1)
    v = np.maximum(v @ model.weights["w0"] + model.weights["b0"], 0.0)
    v = np.maximum(v @ model.weights["w1"] + model.weights["b1"], 0.0)
    v = v @ model.weights["w2"] + model.weights["b2"]
    assert np.abs(z - v[0]).max() <= 1e-6


def test_pooled_model_matches_manual_pooling():
    model = init_feed_forward("linear", (4, 4, 3), ["a", "b"], hidden=(),
                              pool=2, seed=3)
    img = random_image(substream(2, "probe"))
    pooled = img.data.reshape(3, 2, 2, 2, 2).mean(axis=(2, 4)).reshape(1, -1)
    expect = pooled @ model.weights["w0"] + model.weights["b0"]
    assert model.logits(img) == pytest.approx(expect[0], abs=1e-12)


def test_shape_mismatch_rejected_with_diagnostic():
    model = linear_fixture()
    with pytest.raises(ShapeMismatchError, match="c=3, h=1, w=1"):
        model.logits(Image(np.zeros((3, 2, 2))))


def test_constant_model_zero_input_gradient():
    model = FeedForwardClassifier({"w0": np.zeros((3, 2)), "b0": np.array([1.0, -1.0])},
                                  (1, 1, 3), ["a", "b"])
    img = Image(np.array([0.3, 0.6, 0.9]).reshape(3, 1, 1))
    g = model.input_gradient(img, 0)
    assert np.all(g == 0.0)


def test_linear_softmax_gradient_closed_form():
    model = init_feed_forward("linear", (2, 2, 3), ["a", "b", "c"], hidden=(),
                              pool=1, seed=11)
    img = random_image(substream(3, "probe"), h=2, w=2)
    label = 1
    g = model.input_gradient(img, label)
    z = model.logits(img)
    p = np.exp(z - z.max())
    p /= p.sum()
    p[label] -= 1.0
    expect = (model.weights["w0"] @ p).reshape(3, 2, 2)
    assert g == pytest.approx(expect, abs=1e-10)


def test_mlp_input_gradient_matches_finite_differences():
    model = init_feed_forward("mlp", (4, 4, 3), ["a", "b", "c"], hidden=(10,),
                              pool=1, seed=5)
    rng = substream(4, "probe")
    for trial in range(5):
        img = random_image(rng)
        label = int(rng.integers(0, 3))
        analytic = model.input_gradient(img, label)
        numeric = central_diff(lambda x: model.loss(Image(np.clip(x, 0, 1)), label),
                               img.data.copy())
        assert_grad_close(analytic, numeric)


def test_minimize_direction_is_negated():
    model = linear_fixture()
    ex = linear_fixture_example()
    up = model.input_gradient(ex.image, ex.label, "maximize")
    down = model.input_gradient(ex.image, ex.label, "minimize")
    assert up == pytest.approx(-down)


def test_training_reaches_high_accuracy_on_separable_data():
    data = separable_dataset()
    model = train_classifier(data, arch="linear", config=TrainConfig(epochs=25, seed=0))
    assert model.accuracy(data) >= 0.99


def test_zero_epochs_returns_seeded_initialization():
    data = separable_dataset()
    cfg = TrainConfig(epochs=0, seed=9)
    trained = train_classifier(data, arch="mlp", config=cfg, hidden=(6,))
    fresh = init_feed_forward("mlp", (2, 2, 3), data.class_names, (6,), 1, seed=9)
    assert trained.snapshot_id == fresh.snapshot_id


def test_same_seed_bit_identical_snapshots():
    data = separable_dataset()
    cfg = TrainConfig(epochs=4, seed=13)
    a = train_classifier(data, arch="mlp", config=cfg, hidden=(6,))
    b = train_classifier(data, arch="mlp", config=cfg, hidden=(6,))
    assert a.snapshot_id == b.snapshot_id
    for k in a.weights:
        assert np.array_equal(a.weights[k], b.weights[k])
