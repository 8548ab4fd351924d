"""Built-in reference classifiers with exact input gradients.

Architectures are deliberately small: optional mean-pool stem, then a
stack of affine layers with relu in between. Gradients come from the
minimal tape in `shiftbench.grad` and are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .. import grad as G
from ..data import Dataset, Image
from ..errors import NonFiniteError
from ..rng import substream
from .base import ClassifierModel, signed_gradient


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    temperature_init: float = 10.0
    embed_dim: int = 32

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch size and lr positive")
        if self.temperature_init <= 0 or self.embed_dim <= 0:
            raise ValueError("temperature and embedding dim must be positive")


def params_digest(params: dict[str, np.ndarray]) -> str:
    # hashed at snapshot (f32) precision so a model and its saved/reloaded
    # copy share one id
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype="<f4").tobytes())
    return h.hexdigest()[:16]


def pooled_flat(x, hwc: tuple[int, int, int], pool: int):
    """Mean-pool an image (c,h,w) by `pool` and flatten to a (1, D) row."""
    h, w, c = hwc
    if pool > 1:
        x = G.reshape(x, (c, h // pool, pool, w // pool, pool))
        x = G.mean(x, axis=(2, 4))
    return G.reshape(x, (1, -1))


class FeedForwardClassifier(ClassifierModel):
    """Affine/relu stack over (optionally pooled) flattened pixels.

    `weights` maps layer names to arrays: w{i} of shape (in, out) and
    b{i} of shape (out,). A single layer is a linear classifier.
    """

    has_input_gradient = True

    def __init__(self, weights: dict[str, np.ndarray], input_hwc, class_names,
                 pool: int = 1):
        h, w, c = input_hwc
        if pool < 1 or h % pool or w % pool:
            raise ValueError(f"pool {pool} must divide the spatial dims {h}x{w}")
        self.weights = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self.input_hwc = tuple(input_hwc)
        self.class_names = list(class_names)
        self.pool = pool
        self.n_layers = sum(1 for k in self.weights if k.startswith("w"))
        self._sid = params_digest(self.weights)

    @property
    def snapshot_id(self) -> str:
        return self._sid

    def _forward(self, x, weights=None):
        weights = weights if weights is not None else self.weights
        z = pooled_flat(x, self.input_hwc, self.pool)
        for i in range(self.n_layers):
            z = G.affine(z, weights[f"w{i}"], weights[f"b{i}"])
            if i < self.n_layers - 1:
                z = G.relu(z)
        return z

    def logits(self, image: Image) -> np.ndarray:
        self.check_input(image)
        return np.asarray(self._forward(image.data))[0]

    def logits_and_input_grad(self, image: Image, label: int):
        self.check_input(image)
        x = G.Var(image.data)
        z = self._forward(x)
        loss = G.cross_entropy(z, [label])
        G.backward(loss)
        return np.asarray(z.value)[0], x.grad

    def input_gradient(self, image, label, direction="maximize"):
        _, raw = self.logits_and_input_grad(image, label)
        return signed_gradient(raw, direction)

    def logit_input_gradients(self, image: Image) -> np.ndarray:
        """(C, c, h, w) array of per-class logit gradients (DeepFool)."""
        self.check_input(image)
        grads = []
        for k in range(self.n_classes):
            x = G.Var(image.data)
            z = self._forward(x)
            G.backward(G.element(z, (0, k)))
            grads.append(x.grad)
        return np.stack(grads)

    def batched_logits(self, flat_rows: np.ndarray, weights=None) -> np.ndarray:
        """Logits for pre-pooled flattened rows (training fast path)."""
        weights = weights if weights is not None else self.weights
        z = flat_rows
        for i in range(self.n_layers):
            z = G.affine(z, weights[f"w{i}"], weights[f"b{i}"])
            if i < self.n_layers - 1:
                z = G.relu(z)
        return z


def init_feed_forward(arch: str, input_hwc, class_names, hidden, pool, seed):
    """Seeded He-style initialization of the layer stack."""
    h, w, c = input_hwc
    d_in = (h // pool) * (w // pool) * c
    dims = [d_in] + list(hidden if arch == "mlp" else []) + [len(class_names)]
    rng = substream(seed, "init")
    weights = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        weights[f"w{i}"] = rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b))
        weights[f"b{i}"] = np.zeros(b)
    return FeedForwardClassifier(weights, input_hwc, class_names, pool=pool)


def _pool_rows(dataset: Dataset, hwc, pool) -> np.ndarray:
    return np.stack([np.asarray(pooled_flat(ex.image.data, hwc, pool))[0]
                     for ex in dataset.examples])


def train_classifier(dataset: Dataset, arch: str = "mlp",
                     config: TrainConfig | None = None,
                     hidden=(64,), pool: int = 1) -> FeedForwardClassifier:
    """Train a reference classifier with seeded minibatch SGD.

    Deterministic for a given config; aborts on non-finite loss.
    """
    if arch not in ("linear", "mlp"):
        raise ValueError(f"arch must be 'linear' or 'mlp', got {arch!r}")
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    config = config or TrainConfig()
    img0 = dataset.examples[0].image
    hwc = (img0.height, img0.width, img0.channels)
    model = init_feed_forward(arch, hwc, dataset.class_names, hidden, pool, config.seed)

    rows = _pool_rows(dataset, hwc, pool)
    labels = np.array([ex.label for ex in dataset.examples])
    order_rng = substream(config.seed, "shuffle")
    weights = model.weights
    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(rows))
        for start in range(0, len(rows), config.batch_size):
            idx = perm[start:start + config.batch_size]
            wvars = {k: G.Var(v) for k, v in weights.items()}
            z = model.batched_logits(rows[idx], wvars)
            loss = G.cross_entropy(z, labels[idx])
            if not np.isfinite(loss.value):
                raise NonFiniteError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}")
            G.backward(loss)
            for k, v in wvars.items():
                weights[k] = weights[k] - config.learning_rate * v.grad
    model.weights = weights
    model._sid = params_digest(weights)
    return model


def linear_fixture() -> FeedForwardClassifier:
    """Binary linear model with weight rows (1,-1,0) and zeros over a 1x1
    RGB input: logit margin 0.1 at x=(0.6,0.5,0.0) and ||w_diff||_1 = 2,
    so the minimal flipping perturbation is exactly 0.05.
    """
    w = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]])
    b = np.zeros(2)
    return FeedForwardClassifier({"w0": w, "b0": b}, (1, 1, 3), ["pos", "neg"])


def linear_fixture_example():
    from ..data import LabeledExample
    img = Image(np.array([0.6, 0.5, 0.0]).reshape(3, 1, 1))
    return LabeledExample(img, 0)
