"""Gradient-based attacks: sign-step family and minimal-perturbation search.

All of them perturb under the l-inf norm and keep iterates inside
[x - eps, x + eps] intersected with [0, 1]. The input-diversity transform
is a nearest-neighbour resize with zero padding; its exact vector-Jacobian
(a scatter-add over the index map) pulls the model gradient back to the
original pixels, so diversity works with any gradient-capable model.
"""

from __future__ import annotations

import numpy as np

from ..data import Image
from ..errors import NonFiniteError, UnsupportedCapabilityError
from .config import AttackConfig, project_ball


class GradientCounter:
    """Wraps a model to count gradient calls (the white-box query metric)."""

    def __init__(self, model):
        self.model = model
        self.calls = 0

    def ascend(self, x: np.ndarray, label: int) -> np.ndarray:
        self.calls += 1
        g = self.model.input_gradient(Image(x), label, "maximize")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite input gradient")
        return g


def _l1(g: np.ndarray) -> float:
    return float(np.abs(g).sum())


def diversity_map(shape, rng, factor_range=(0.9, 1.0)):
    """Flat source-index map for random resize-and-pad of a (c, h, w) image."""
    c, h, w = shape
    f = rng.uniform(*factor_range)
    nh, nw = max(1, round(h * f)), max(1, round(w * f))
    oy = int(rng.integers(0, h - nh + 1))
    ox = int(rng.integers(0, w - nw + 1))
    src = np.full((c, h, w), -1, dtype=np.intp)
    rows = np.minimum((np.arange(nh) * h) // nh, h - 1)
    cols = np.minimum((np.arange(nw) * w) // nw, w - 1)
    for ch in range(c):
        base = ch * h * w
        src[ch, oy:oy + nh, ox:ox + nw] = base + rows[:, None] * w + cols[None, :]
    return src.reshape(-1)


def _apply_map(x: np.ndarray, src: np.ndarray) -> np.ndarray:
    flat = x.reshape(-1)
    out = np.where(src >= 0, flat[np.maximum(src, 0)], 0.0)
    return out.reshape(x.shape)


def _pullback(g: np.ndarray, src: np.ndarray, shape) -> np.ndarray:
    acc = np.zeros(int(np.prod(shape)))
    flat = g.reshape(-1)
    valid = src >= 0
    np.add.at(acc, src[valid], flat[valid])
    return acc.reshape(shape)


def fgsm(model, example, config: AttackConfig, rng):
    counter = GradientCounter(model)
    x = example.image.data
    g = counter.ascend(x, example.label)
    adv = project_ball(x + config.epsilon * np.sign(g), x, config.epsilon)
    return adv, counter.calls


def iterative_sign(model, example, config: AttackConfig, rng, *,
                   momentum: bool, diversity: bool, transfer: bool = False):
    """Shared BIM/MIM/DIM loop: projected sign steps, optional momentum
    accumulator and optional per-step input diversity."""
    counter = GradientCounter(model)
    x = example.image.data
    adv = x.copy()
    acc = np.zeros_like(x)
    steps = config.resolved_steps(transfer)
    alpha = config.resolved_step_size(transfer)
    for _ in range(steps):
        if diversity and rng.random() < config.diversity_prob:
            src = diversity_map(adv.shape, rng)
            probe = np.clip(_apply_map(adv, src), 0.0, 1.0)
            g = counter.ascend(probe, example.label)
            g = _pullback(g, src, adv.shape)
        else:
            g = counter.ascend(adv, example.label)
        if momentum:
            acc = config.momentum_decay * acc + g / max(_l1(g), 1e-12)
            step_dir = np.sign(acc)
        else:
            step_dir = np.sign(g)
        adv = project_ball(adv + alpha * step_dir, x, config.epsilon)
    return adv, counter.calls


def deepfool(model, example, config: AttackConfig, rng):
    """Multiclass l-inf DeepFool: minimal linearized step toward the nearest
    class boundary with overshoot, up to the configured iteration cap.

    Returns the (unbudgeted) minimizing perturbation; budget capping is
    applied by the caller when running in budgeted mode.
    """
    if not hasattr(model, "logit_input_gradients"):
        raise UnsupportedCapabilityError(
            f"{type(model).__name__} does not expose per-class logit gradients")
    x = example.image.data
    label = example.label
    r_tot = np.zeros_like(x)
    adv = x.copy()
    grad_calls = 0
    for _ in range(config.resolved_steps()):
        z = model.logits(Image(adv))
        if int(np.argmax(z)) != label:
            break
        grads = model.logit_input_gradients(Image(adv))
        grad_calls += model.n_classes
        if not np.all(np.isfinite(grads)):
            raise NonFiniteError("non-finite logit gradients")
        best_pert, best_w = np.inf, None
        for k in range(model.n_classes):
            if k == label:
                continue
            w_k = grads[k] - grads[label]
            f_k = z[k] - z[label]
            denom = max(_l1(w_k), 1e-12)
            pert = abs(f_k) / denom
            if pert < best_pert:
                best_pert, best_w = pert, w_k
        if best_w is None:
            break
        r_tot = r_tot + (best_pert + 1e-6) * np.sign(best_w)
        adv = np.clip(x + (1.0 + config.overshoot) * r_tot, 0.0, 1.0)
    return adv, grad_calls
