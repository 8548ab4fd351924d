"""Gradient estimation from logits-only access (score-based black box).

Both estimators draw `n` direction vectors per estimate and evaluate the
loss antithetically at x + sigma*u and x - sigma*u, so one estimate costs
exactly 2n loss queries.
"""

from __future__ import annotations

import numpy as np

from ..data import Image
from .config import AttackConfig, project_ball


def nes_gradient(loss_fn, x: np.ndarray, n: int, sigma: float, rng):
    """Antithetic Gaussian smoothing estimate of the loss gradient."""
    if n < 2 or n % 2:
        raise ValueError(f"sample count must be even and >= 2, got {n}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g = np.zeros_like(x)
    for _ in range(n):
        u = rng.standard_normal(x.shape)
        g += (loss_fn(x + sigma * u) - loss_fn(x - sigma * u)) * u
    return g / (2.0 * sigma * n), 2 * n


def spsa_gradient(loss_fn, x: np.ndarray, n: int, sigma: float, rng):
    """Simultaneous-perturbation estimate with Rademacher directions.

    Per pair the per-coordinate estimate is
    [L(x + sigma*d) - L(x - sigma*d)] / (2*sigma*d_i); with d_i = +-1 the
    division is a multiplication. The mean over n pairs is returned.
    """
    if n < 2 or n % 2:
        raise ValueError(f"sample count must be even and >= 2, got {n}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g = np.zeros_like(x)
    for _ in range(n):
        d = rng.choice([-1.0, 1.0], size=x.shape)
        g += (loss_fn(x + sigma * d) - loss_fn(x - sigma * d)) / (2.0 * sigma) * d
    return g / n, 2 * n


_ESTIMATORS = {"nes": nes_gradient, "spsa": spsa_gradient}


def model_loss_fn(model, label: int):
    """Loss closure for estimators; probe points are clipped into [0, 1]."""

    def fn(x):
        return model.loss(Image(np.clip(x, 0.0, 1.0)), label)

    return fn


def estimate_gradient(model, image: Image, label: int, config: AttackConfig, rng):
    """One gradient estimate for the configured black-box method."""
    estimator = _ESTIMATORS[config.method]
    return estimator(model_loss_fn(model, label), image.data,
                     config.resolved_samples(), config.est_sigma, rng)


def black_box_attack(model, example, config: AttackConfig, rng):
    """BIM-style update loop fed by the estimated gradient.

    The reported query count covers estimator loss evaluations only:
    steps * n * 2 exactly.
    """
    estimator = _ESTIMATORS[config.method]
    loss_fn = model_loss_fn(model, example.label)
    x = example.image.data
    adv = x.copy()
    steps = config.resolved_steps()
    alpha = config.resolved_step_size()
    queries = 0
    for _ in range(steps):
        g, cost = estimator(loss_fn, adv, config.resolved_samples(),
                            config.est_sigma, rng)
        queries += cost
        adv = project_ball(adv + alpha * np.sign(g), x, config.epsilon)
    return adv, queries
