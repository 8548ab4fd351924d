"""Desk-scale toy datasets: colored shapes, and a web-like caption corpus.

The shapes dataset stands in for a supervised training distribution. The
caption corpus stands in for web-crawled pretraining pairs: a fraction of
its images carry the class word rendered as pixels (on the shape image or
on an otherwise empty background), which is what makes a contrastively
trained encoder respond to rendered text.
"""

from __future__ import annotations

import numpy as np

from ..data import Dataset, Image, LabeledExample
from ..rng import substream
from .font8x8 import GLYPH_SIZE
from .typographic import render_text_block, sample_coordinates

SHAPE_NAMES = ("ring", "cross", "disk", "bars")

_SHAPE_COLORS = {
    "ring": (0.90, 0.20, 0.20),
    "cross": (0.20, 0.85, 0.25),
    "disk": (0.25, 0.35, 0.90),
    "bars": (0.90, 0.80, 0.20),
}

SHIFT_VARIANTS = ("none", "background", "texture")


def _shape_mask(name: str, h: int, w: int, rng) -> np.ndarray:
    cy = h / 2 + rng.integers(-2, 3)
    cx = w / 2 + rng.integers(-2, 3)
    r = min(h, w) / 4 + rng.integers(-1, 2)
    yy, xx = np.mgrid[0:h, 0:w]
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    if name == "disk":
        return dist <= r
    if name == "ring":
        return (dist <= r) & (dist >= r - 2.2)
    if name == "cross":
        in_box = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
        arms = (np.abs(yy - cy) <= 1.4) | (np.abs(xx - cx) <= 1.4)
        return in_box & arms
    if name == "bars":
        in_box = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
        stripes = ((xx - int(cx)) // 2) % 2 == 0
        return in_box & stripes
    raise ValueError(f"unknown shape {name!r}")


def _render_example(name: str, size: int, variant: str, rng) -> Image:
    h = w = size
    if variant == "background":
        # saturated colored backgrounds collide with color features
        bg = rng.uniform(0.35, 0.85, size=3)
    else:
        bg = np.repeat(rng.uniform(0.10, 0.35), 3)
    arr = np.broadcast_to(bg[:, None, None], (3, h, w)).copy()
    arr += rng.normal(0.0, 0.02, size=arr.shape)
    if variant == "texture":
        yy, xx = np.mgrid[0:h, 0:w]
        arr += 0.08 * (((xx + yy) // 3) % 2)
    color = np.array(_SHAPE_COLORS[name]) + rng.uniform(-0.08, 0.08, size=3)
    mask = _shape_mask(name, h, w, rng)
    for c in range(3):
        arr[c][mask] = np.clip(color[c], 0.0, 1.0)
    arr = np.clip(arr, 0.0, 1.0)
    # quantize to 8-bit levels so persistence round trips bit-exactly
    return Image(np.round(arr * 255.0) / 255.0)


def generate_toy_dataset(classes=SHAPE_NAMES, n_per_class: int = 100,
                         image_size: int = 32, shift_variant: str = "none",
                         seed: int = 0) -> Dataset:
    """Deterministic colored-shapes dataset with optional shifted variants."""
    classes = list(classes)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    unknown = set(classes) - set(SHAPE_NAMES)
    if unknown:
        raise ValueError(f"unknown shape classes: {sorted(unknown)}")
    if shift_variant not in SHIFT_VARIANTS:
        raise ValueError(f"unknown shift variant {shift_variant!r}")
    if image_size < 4 * GLYPH_SIZE // 2:
        raise ValueError(f"image size {image_size} too small to render shapes")
    examples = []
    for label, name in enumerate(classes):
        for i in range(n_per_class):
            rng = substream(seed, "toy", shift_variant, name, i)
            examples.append(LabeledExample(_render_example(name, image_size,
                                                           shift_variant, rng),
                                           label))
    return Dataset(examples, classes, name=f"toy-shapes-{shift_variant}-{seed}")


def build_caption_corpus(dataset: Dataset, template: str = "a photo of a {label}",
                         word_overlay_prob: float = 0.35,
                         text_only_prob: float = 0.25,
                         overlays_per_image: int = 2,
                         font_scale: int = 1, seed: int = 0):
    """(Image, caption) pretraining pairs from a labeled dataset.

    With probability `text_only_prob` the image is replaced by a dark
    background carrying only the rendered class word; with probability
    `word_overlay_prob` the word is rendered on top of the shape image.
    The rest stay clean. Captions always come from the template.
    """
    if word_overlay_prob + text_only_prob > 1.0:
        raise ValueError("overlay probabilities sum above 1")
    pairs = []
    for i, ex in enumerate(dataset):
        rng = substream(seed, "corpus", i)
        word = dataset.class_names[ex.label].lower()
        caption = template.replace("{label}", word)
        roll = rng.random()
        if roll < text_only_prob:
            data = np.full_like(ex.image.data, 0.05)
        elif roll < text_only_prob + word_overlay_prob:
            data = ex.image.data.copy()
        else:
            pairs.append((ex.image.copy(), caption))
            continue
        h, w = ex.image.height, ex.image.width
        for (x, y) in sample_coordinates(rng, w, h, font_scale, overlays_per_image):
            render_text_block(data, word, x, y, font_scale)
        pairs.append((Image(np.round(data * 255.0) / 255.0), caption))
    return pairs
