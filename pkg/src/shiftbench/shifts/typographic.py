"""Typographic attack datasets: target class names painted onto images.

The target class for each image is sampled uniformly over the other
classes from a per-image seeded stream. The same k coordinates (sampled
once per run) are used on every image; glyphs render white on a black
rectangle, and pixels outside the painted rectangles stay byte-identical
to the source.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, Image, LabeledExample
from ..rng import substream
from .font8x8 import GLYPH_SIZE, text_mask

#: coordinate-count conventions: 8 for ImageNet-style, 4 for CIFAR-style
COORDS_IMAGENET_STYLE = 8
COORDS_CIFAR_STYLE = 4

#: width (in characters) of the placement window used to sample x
WINDOW_CHARS = 8


def default_font_scale(height: int) -> int:
    """Glyph height of roughly max(8, 7% of the image height)."""
    return max(1, round(0.07 * height / GLYPH_SIZE))


@dataclass
class TypographicSpec:
    k_coords: int = COORDS_IMAGENET_STYLE
    coordinates: list[tuple[int, int]] | None = None   # fixed (x, y) per run
    font_scale: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k_coords < 0:
            raise ValueError("k_coords must be >= 0")
        if self.font_scale is not None and self.font_scale < 1:
            raise ValueError("font_scale must be >= 1")


def sample_coordinates(rng, width: int, height: int, scale: int, k: int):
    """k top-left corners, uniform over positions keeping an 8-character
    window in bounds (x collapses to 0 on narrow images)."""
    cell = GLYPH_SIZE * scale
    x_max = max(0, width - WINDOW_CHARS * cell)
    y_max = max(0, height - cell)
    coords = []
    for _ in range(k):
        x = int(rng.integers(0, x_max + 1))
        y = int(rng.integers(0, y_max + 1))
        coords.append((x, y))
    return coords


def render_text_block(data: np.ndarray, text: str, x: int, y: int,
                      scale: int) -> tuple[str, bool]:
    """Paint `text` (white glyphs on a black box) at (x, y), in place.

    x is clamped so the text fits; if the image is narrower than the text
    the tail characters are dropped. Returns (rendered_text, truncated).
    """
    _, height, width = data.shape
    cell = GLYPH_SIZE * scale
    max_chars = width // cell
    truncated = False
    if len(text) > max_chars:
        text, truncated = text[:max_chars], True
    x = max(0, min(x, width - len(text) * cell))
    y = max(0, min(y, height - cell))
    mask = text_mask(text, scale)
    h, w = mask.shape
    region = data[:, y:y + h, x:x + w]
    region[:] = 0.0
    region[:, mask] = 1.0
    return text, truncated


def sample_target(rng, label: int, n_classes: int) -> int:
    t = int(rng.integers(0, n_classes - 1))
    return t + 1 if t >= label else t


def generate_typographic_dataset(dataset: Dataset, spec: TypographicSpec):
    """Targeted typographic variant of `dataset` plus a generator manifest.

    Bit-identical across runs with the same seed; truncated renderings are
    flagged in the manifest, never silent.
    """
    if dataset.n_classes < 2:
        raise ValueError("typographic targets need at least 2 classes")
    if len(dataset) == 0:
        raise ValueError("cannot generate from an empty dataset")
    img0 = dataset.examples[0].image
    scale = spec.font_scale or default_font_scale(img0.height)
    coords = spec.coordinates
    if coords is None:
        coord_rng = substream(spec.seed, "typo-coords")
        coords = sample_coordinates(coord_rng, img0.width, img0.height, scale,
                                    spec.k_coords)
    coords = [tuple(map(int, c)) for c in coords]

    examples, targets, truncated_names = [], [], set()
    for i, ex in enumerate(dataset):
        target = sample_target(substream(spec.seed, "typo-target", i),
                               ex.label, dataset.n_classes)
        targets.append(target)
        data = ex.image.data.copy()
        text = dataset.class_names[target].lower()
        for (x, y) in coords:
            rendered, was_truncated = render_text_block(data, text, x, y, scale)
            if was_truncated:
                truncated_names.add(dataset.class_names[target])
        examples.append(LabeledExample(Image(data), ex.label, target))

    out = Dataset(examples, list(dataset.class_names),
                  name=f"{dataset.name}-typographic")
    manifest = {
        "kind": "typographic",
        "seed": spec.seed,
        "k_coords": spec.k_coords,
        "font_scale": scale,
        "coordinates": [list(c) for c in coords],
        "targets": targets,
        "truncated_class_names": sorted(truncated_names),
        "source": dataset.identity,
    }
    return out, manifest
