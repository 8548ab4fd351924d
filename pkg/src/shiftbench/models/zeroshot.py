"""Zero-shot classifier synthesis from class prompts (embedding ensembling)."""

from __future__ import annotations

import hashlib

import numpy as np

from .. import grad as G
from ..data import Image
from .base import ClassifierModel, signed_gradient
from .encoder import DualEncoder


def render_prompt(prompt: str, class_name: str) -> str:
    """Fill the {label} placeholder; prompts without it are used verbatim."""
    return prompt.replace("{label}", class_name)


def class_embedding(encoder: DualEncoder, prompts: list[str], class_name: str) -> np.ndarray:
    """Average the prompt embeddings for one class, then re-normalize."""
    embs = [encoder.embed_text(render_prompt(p, class_name)) for p in prompts]
    mean = np.mean(embs, axis=0)
    return mean / np.linalg.norm(mean)


class ZeroShotClassifier(ClassifierModel):
    """Cosine-similarity classifier over ensembled class text embeddings.

    Logits are temperature-scaled cosine similarities; input gradients flow
    through the image encoder.
    """

    has_input_gradient = True

    def __init__(self, encoder: DualEncoder, class_embeds: np.ndarray,
                 class_names: list[str], prompts_used=None):
        self.encoder = encoder
        self.class_embeds = np.asarray(class_embeds, dtype=np.float64)
        self.class_names = list(class_names)
        h, w, c = encoder.input_hwc
        self.input_hwc = (h, w, c)
        self.prompts_used = prompts_used or {}
        h_ = hashlib.sha256(encoder.snapshot_id.encode())
        h_.update(self.class_embeds.tobytes())
        self._sid = h_.hexdigest()[:16]

    @property
    def snapshot_id(self) -> str:
        return self._sid

    def _logit_node(self, x):
        img = self.encoder.image_embed_node(x)
        sims = G.matmul(img, self.class_embeds.T)
        return G.mul(sims, self.encoder.temperature)

    def logits(self, image: Image) -> np.ndarray:
        self.check_input(image)
        return np.asarray(self._logit_node(image.data))[0]

    def input_gradient(self, image, label, direction="maximize"):
        self.check_input(image)
        x = G.Var(image.data)
        loss = G.cross_entropy(self._logit_node(x), [label])
        G.backward(loss)
        return signed_gradient(x.grad, direction)

    def logit_input_gradients(self, image: Image) -> np.ndarray:
        self.check_input(image)
        grads = []
        for k in range(self.n_classes):
            x = G.Var(image.data)
            z = self._logit_node(x)
            G.backward(G.element(z, (0, k)))
            grads.append(x.grad)
        return np.stack(grads)


def synthesize_zero_shot_classifier(encoder: DualEncoder,
                                    class_prompts: dict[str, list[str]] | list[list[str]],
                                    class_names: list[str]) -> ZeroShotClassifier:
    """Build a classifier from per-class prompt lists.

    Every class needs at least one prompt. Per class the prompt embeddings
    are averaged then re-normalized (embedding-space ensembling).
    """
    if isinstance(class_prompts, dict):
        per_class = [class_prompts.get(name, []) for name in class_names]
    else:
        per_class = list(class_prompts)
        if len(per_class) != len(class_names):
            raise ValueError("need one prompt list per class")
    for name, prompts in zip(class_names, per_class):
        if not prompts:
            raise ValueError(f"class {name!r} has an empty prompt list")
    embeds = np.stack([class_embedding(encoder, prompts, name)
                       for name, prompts in zip(class_names, per_class)])
    used = {name: list(prompts) for name, prompts in zip(class_names, per_class)}
    return ZeroShotClassifier(encoder, embeds, class_names, prompts_used=used)
