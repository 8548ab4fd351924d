"""Core sample containers: images, labeled examples, datasets."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Image:
    """Dense RGB image, channel-major float64 data in [0, 1].

    `data` has shape (channels, height, width); channels is 3 for every
    real dataset (tiny analytic fixtures may use degenerate spatial dims).
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"image data must be (c, h, w), got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"image dimensions must be positive, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("image values must be finite")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_u8(cls, arr: np.ndarray) -> "Image":
        """Build from a (c, h, w) uint8 array."""
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    def to_u8(self) -> np.ndarray:
        return np.round(self.data * 255.0).astype(np.uint8)

    def copy(self) -> "Image":
        return Image(self.data.copy())


@dataclass
class LabeledExample:
    image: Image
    label: int
    target: int | None = None

    def __post_init__(self):
        if self.target is not None and self.target == self.label:
            raise ValueError("attack target must differ from the true label")


@dataclass
class Dataset:
    """Ordered examples plus class names; identity = name + content hash."""

    examples: list[LabeledExample]
    class_names: list[str]
    name: str = "dataset"
    _hash: str | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.class_names)
        for i, ex in enumerate(self.examples):
            if not (0 <= ex.label < n):
                raise ValueError(f"example {i} has label {ex.label} outside [0, {n})")
            if ex.target is not None and not (0 <= ex.target < n):
                raise ValueError(f"example {i} has target {ex.target} outside [0, {n})")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def content_hash(self) -> str:
        """SHA-256 over the 8-bit quantized pixels, labels and class names.

        Computed on the quantized representation so the hash is stable
        across a save/load round trip through PNG files.
        """
        if self._hash is None:
            h = hashlib.sha256()
            for name in self.class_names:
                h.update(name.encode("utf-8"))
                h.update(b"\x00")
            for ex in self.examples:
                h.update(ex.image.to_u8().tobytes())
                h.update(int(ex.label).to_bytes(4, "little"))
                t = -1 if ex.target is None else int(ex.target)
                h.update(t.to_bytes(4, "little", signed=True))
            self._hash = h.hexdigest()
        return self._hash

    @property
    def identity(self) -> str:
        return f"{self.name}:{self.content_hash()}"

    def subset(self, indices, name: str | None = None) -> "Dataset":
        return Dataset([self.examples[i] for i in indices], list(self.class_names),
                       name or self.name)
