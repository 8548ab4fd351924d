"""Classifier scoring interface every attack and metric is defined over."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..data import Image
from ..errors import ShapeMismatchError, UnsupportedCapabilityError
from .. import grad as G


class ClassifierModel(ABC):
    """Pure scoring interface: logits, cross-entropy loss, input gradients.

    Models are immutable after construction; concurrent read-only inference
    is safe. `snapshot_id` is a deterministic digest of the parameters so
    two models can be compared for identity.
    """

    class_names: list[str]
    input_hwc: tuple[int, int, int]
    has_input_gradient: bool = False

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def snapshot_id(self) -> str:
        raise NotImplementedError

    def check_input(self, image: Image) -> None:
        h, w, c = self.input_hwc
        if (image.channels, image.height, image.width) != (c, h, w):
            raise ShapeMismatchError(
                f"model expects (c={c}, h={h}, w={w}), "
                f"got (c={image.channels}, h={image.height}, w={image.width})")

    @abstractmethod
    def logits(self, image: Image) -> np.ndarray:
        """Length-C logit vector; argmax defines the prediction."""

    def predict(self, image: Image) -> int:
        return int(np.argmax(self.logits(image)))

    def loss(self, image: Image, label: int) -> float:
        """Cross-entropy of the logits against `label`."""
        z = self.logits(image)[None, :]
        return float(G.cross_entropy(z, [label]))

    def input_gradient(self, image: Image, label: int,
                       direction: str = "maximize") -> np.ndarray:
        """Gradient of the cross-entropy loss w.r.t. the image pixels.

        direction="maximize" returns the ascent direction (untargeted
        attacks); "minimize" returns the descent direction.
        """
        raise UnsupportedCapabilityError(
            f"{type(self).__name__} does not expose input gradients")

    def accuracy(self, dataset) -> float:
        if len(dataset) == 0:
            raise ValueError("accuracy over an empty dataset is undefined")
        correct = sum(1 for ex in dataset if self.predict(ex.image) == ex.label)
        return correct / len(dataset)


def signed_gradient(raw: np.ndarray, direction: str) -> np.ndarray:
    if direction == "maximize":
        return raw
    if direction == "minimize":
        return -raw
    raise ValueError(f"direction must be 'maximize' or 'minimize', got {direction!r}")
