"""Perturbation sequences for prediction-stability metrics.

Noise kinds emit i.i.d. perturbations of the clean frame (frame 1 is the
clean image). Geometric kinds ramp the transform magnitude monotonically
per frame. "tilt" is approximated by a horizontal shear; a true
perspective tilt would need a camera model, and the approximation is
recorded in the sequence metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..data import Dataset, Image
from ..rng import substream
from .corruptions import gaussian_noise, shot_noise

SEQUENCE_KINDS = ("gaussian_noise", "shot_noise", "translate", "rotate",
                  "scale", "brightness", "tilt")
NOISE_SEQUENCE_KINDS = ("gaussian_noise", "shot_noise")

#: per-frame magnitude steps for the geometric/photometric ramps
_RAMP = {
    "translate": 1.0,    # pixels per frame
    "rotate": 2.0,       # degrees per frame
    "scale": 0.02,       # zoom factor increment per frame
    "brightness": 0.03,  # additive shift per frame
    "tilt": 0.04,        # shear factor per frame
}
_NOISE_KNOB = {"gaussian_noise": 0.08, "shot_noise": 1 / 25}


@dataclass
class PerturbationSequence:
    kind: str
    frames: list[Image]
    notes: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def _translate(x: np.ndarray, pixels: int) -> np.ndarray:
    if pixels == 0:
        return x.copy()
    out = np.zeros_like(x)
    out[:, :, pixels:] = x[:, :, : x.shape[2] - pixels]
    return out


def _rotate(x: np.ndarray, degrees: float) -> np.ndarray:
    if degrees == 0:
        return x.copy()
    out = ndimage.rotate(x, degrees, axes=(1, 2), reshape=False, order=1,
                         mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def _scale(x: np.ndarray, zoom: float) -> np.ndarray:
    if zoom == 1.0:
        return x.copy()
    c, h, w = x.shape
    # sample the zoomed-in center crop on the original grid
    rows = np.clip(((np.arange(h) - h / 2) / zoom + h / 2).astype(int), 0, h - 1)
    cols = np.clip(((np.arange(w) - w / 2) / zoom + w / 2).astype(int), 0, w - 1)
    return x[:, rows][:, :, cols]


def _shear(x: np.ndarray, factor: float) -> np.ndarray:
    if factor == 0.0:
        return x.copy()
    c, h, w = x.shape
    out = np.zeros_like(x)
    for i in range(h):
        shift = int(round(factor * (i - h / 2)))
        src = np.arange(w) - shift
        ok = (src >= 0) & (src < w)
        out[:, i, ok] = x[:, i, src[ok]]
    return out


def build_sequence(image: Image, kind: str, length: int, seed: int = 0,
                   sample_index: int = 0) -> PerturbationSequence:
    """Frames for one clean image; frame 1 is clean for geometric kinds."""
    if kind not in SEQUENCE_KINDS:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    x = image.data
    frames = [image.copy()]
    notes = {"approximation": "shear"} if kind == "tilt" else {}
    for j in range(1, length):
        if kind in NOISE_SEQUENCE_KINDS:
            rng = substream(seed, kind, sample_index, j)
            fn = gaussian_noise if kind == "gaussian_noise" else shot_noise
            frames.append(Image(fn(x, _NOISE_KNOB[kind], rng)))
        elif kind == "translate":
            frames.append(Image(_translate(x, int(j * _RAMP[kind]))))
        elif kind == "rotate":
            frames.append(Image(_rotate(x, j * _RAMP[kind])))
        elif kind == "scale":
            frames.append(Image(_scale(x, 1.0 + j * _RAMP[kind])))
        elif kind == "brightness":
            frames.append(Image(np.clip(x + j * _RAMP[kind], 0.0, 1.0)))
        else:  # tilt
            frames.append(Image(_shear(x, j * _RAMP[kind])))
    return PerturbationSequence(kind, frames, notes)


def build_perturbation_sequences(dataset: Dataset, kind: str, length: int,
                                 seed: int = 0) -> list[PerturbationSequence]:
    """One sequence per dataset image; per-image RNG streams."""
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    return [build_sequence(ex.image, kind, length, seed, i)
            for i, ex in enumerate(dataset)]
