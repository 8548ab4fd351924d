"""Synthetic corruption suite with 5-severity parameter tables.

Seven corruption kinds are implemented (noise, blur, photometric and
digital families); the severity tables below are this project's own
documented constants, monotone in corruption magnitude. Every generator
is a pure function of (image, spec, seed) with outputs clipped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..data import Image
from ..rng import substream

#: severity (1..5) -> knob value, strictly increasing in magnitude
SEVERITY_TABLES = {
    "gaussian_noise": [0.04, 0.08, 0.12, 0.18, 0.26],   # additive sigma
    "shot_noise":     [1 / 60, 1 / 25, 1 / 12, 1 / 5, 1 / 3],  # 1 / photon rate
    "impulse_noise":  [0.03, 0.06, 0.09, 0.17, 0.27],   # salt&pepper fraction
    "defocus_blur":   [1, 2, 3, 4, 6],                  # disk radius (pixels)
    "brightness":     [0.1, 0.2, 0.3, 0.4, 0.5],        # additive shift
    "contrast":       [0.75, 0.60, 0.45, 0.30, 0.20],   # scale toward the mean
    "pixelate":       [0.6, 0.5, 0.4, 0.3, 0.25],       # downscale factor
}

CORRUPTION_KINDS = tuple(SEVERITY_TABLES)
NOISE_KINDS = ("gaussian_noise", "shot_noise", "impulse_noise")


@dataclass
class CorruptionSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in SEVERITY_TABLES:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not (1 <= self.severity <= 5):
            raise ValueError(f"severity {self.severity} outside [1, 5]")

    @property
    def knob(self) -> float:
        return SEVERITY_TABLES[self.kind][self.severity - 1]


# -- primitives (knob value 0 is the identity where meaningful) --------------

def gaussian_noise(x: np.ndarray, sigma: float, rng) -> np.ndarray:
    if sigma == 0:
        return x.copy()
    return np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)


def shot_noise(x: np.ndarray, inv_rate: float, rng) -> np.ndarray:
    if inv_rate == 0:
        return x.copy()
    rate = 1.0 / inv_rate
    return np.clip(rng.poisson(x * rate) / rate, 0.0, 1.0)


def impulse_noise(x: np.ndarray, amount: float, rng) -> np.ndarray:
    if amount == 0:
        return x.copy()
    out = x.copy()
    # shared mask across channels: salt/pepper hits whole pixels
    mask = rng.random(x.shape[1:])
    salt = mask < amount / 2
    pepper = mask > 1 - amount / 2
    out[:, salt] = 1.0
    out[:, pepper] = 0.0
    return out


def _disk_kernel(radius: int) -> np.ndarray:
    if radius == 0:
        return np.ones((1, 1))
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    k = (yy ** 2 + xx ** 2 <= radius ** 2).astype(np.float64)
    return k / k.sum()


def defocus_blur(x: np.ndarray, radius: int, rng=None) -> np.ndarray:
    if radius == 0:
        return x.copy()
    k = _disk_kernel(int(radius))
    out = np.stack([ndimage.convolve(ch, k, mode="nearest") for ch in x])
    return np.clip(out, 0.0, 1.0)


def brightness(x: np.ndarray, shift: float, rng=None) -> np.ndarray:
    if shift == 0:
        return x.copy()
    return np.clip(x + shift, 0.0, 1.0)


def contrast(x: np.ndarray, factor: float, rng=None) -> np.ndarray:
    if factor == 1.0:
        return x.copy()
    mean = x.mean(axis=(1, 2), keepdims=True)
    return np.clip((x - mean) * factor + mean, 0.0, 1.0)


def pixelate(x: np.ndarray, factor: float, rng=None) -> np.ndarray:
    if factor == 1.0:
        return x.copy()
    c, h, w = x.shape
    nh, nw = max(1, int(h * factor)), max(1, int(w * factor))
    rows = np.minimum((np.arange(h) * nh) // h, nh - 1)
    cols = np.minimum((np.arange(w) * nw) // w, nw - 1)
    srows = np.minimum((np.arange(nh) * h) // nh, h - 1)
    scols = np.minimum((np.arange(nw) * w) // nw, w - 1)
    small = x[:, srows][:, :, scols]
    return small[:, rows][:, :, cols]


_PRIMITIVES = {
    "gaussian_noise": gaussian_noise,
    "shot_noise": shot_noise,
    "impulse_noise": impulse_noise,
    "defocus_blur": defocus_blur,
    "brightness": brightness,
    "contrast": contrast,
    "pixelate": pixelate,
}


def apply_corruption(image: Image, spec: CorruptionSpec, seed: int = 0) -> Image:
    """Corrupt one image at the spec's severity; deterministic in seed."""
    rng = substream(seed, spec.kind, spec.severity)
    out = _PRIMITIVES[spec.kind](image.data, spec.knob, rng)
    return Image(out)


def corrupt_dataset(dataset, spec: CorruptionSpec, seed: int = 0):
    """Per-image corruption with per-image RNG streams (order-independent)."""
    from ..data import Dataset, LabeledExample
    examples = []
    for i, ex in enumerate(dataset):
        rng = substream(seed, spec.kind, spec.severity, i)
        out = _PRIMITIVES[spec.kind](ex.image.data, spec.knob, rng)
        examples.append(LabeledExample(Image(out), ex.label, ex.target))
    return Dataset(examples, list(dataset.class_names),
                   name=f"{dataset.name}-{spec.kind}-s{spec.severity}")
