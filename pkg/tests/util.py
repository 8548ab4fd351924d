"""Shared test helpers: finite differences and small fixtures."""

import numpy as np

from shiftbench.data import Dataset, Image, LabeledExample
from shiftbench.rng import substream


def central_diff(fn, x, step=1e-4):
    """Central finite-difference gradient of scalar fn at flat array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        g.reshape(-1)[i] = (up - down) / (2 * step)
    return g


def assert_grad_close(analytic, numeric, rel=1e-3, floor=1e-6):
    """Elementwise |a-n| <= rel * max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = np.abs(analytic - numeric) / scale
    assert err.max() <= rel, f"max relative gradient error {err.max():.3e} > {rel}"


def random_image(rng, h=4, w=4, c=3) -> Image:
    return Image(rng.uniform(0.12, 0.88, size=(c, h, w)))


def random_dataset(seed=0, n=16, classes=("a", "b", "c"), h=4, w=4) -> Dataset:
    rng = substream(seed, "testdata")
    examples = []
    for i in range(n):
        examples.append(LabeledExample(random_image(rng, h, w), i % len(classes)))
    return Dataset(examples, list(classes), name="random-test")


def separable_dataset(seed=0, n_per_class=40, h=2, w=2):
    """Two classes split by overall brightness; linearly separable."""
    rng = substream(seed, "separable")
    examples = []
    for _ in range(n_per_class):
        lo = rng.uniform(0.0, 0.28, size=(3, h, w))
        hi = rng.uniform(0.72, 1.0, size=(3, h, w))
        examples.append(LabeledExample(Image(lo), 0))
        examples.append(LabeledExample(Image(hi), 1))
    return Dataset(examples, ["dark", "bright"], name="separable")
