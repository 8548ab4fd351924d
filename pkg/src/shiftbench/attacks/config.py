"""Attack configuration and per-sample outcome records."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..data import Image

WHITE_BOX_METHODS = ("fgsm", "bim", "mim", "dim", "deepfool")
BLACK_BOX_METHODS = ("nes", "spsa")
METHODS = WHITE_BOX_METHODS + BLACK_BOX_METHODS

#: iteration defaults per (method kind, strategy); deepfool always caps at 50
_DEFAULT_STEPS = {
    ("iterative", "budgeted"): 12,
    ("iterative", "min_perturbation"): 20,
    ("transfer", "budgeted"): 12,
    ("transfer", "min_perturbation"): 10,
    ("estimated", "budgeted"): 12,
    ("estimated", "min_perturbation"): 20,
}

_DEFAULT_EST_SAMPLES = {"nes": 50, "spsa": 64}


def default_steps(method: str, mode: str, transfer: bool = False) -> int:
    if method == "deepfool":
        return 50
    if method == "fgsm":
        return 1
    if method in BLACK_BOX_METHODS:
        return _DEFAULT_STEPS[("estimated", mode)]
    kind = "transfer" if transfer else "iterative"
    return _DEFAULT_STEPS[(kind, mode)]


@dataclass
class AttackConfig:
    """Knobs for one attack run. Only the l-inf threat model is supported."""

    method: str = "fgsm"
    mode: str = "budgeted"                # or "min_perturbation"
    epsilon: float = 8.0 / 255.0
    steps: int | None = None              # None -> per-method default
    step_size: float | None = None        # None -> max(eps/steps, 1/255)
    momentum_decay: float = 1.0
    diversity_prob: float = 0.5
    est_samples: int | None = None        # direction draws per step (NES/SPSA)
    est_sigma: float = 0.01
    overshoot: float = 0.02
    seed: int = 0
    norm: str = "linf"

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.mode not in ("budgeted", "min_perturbation"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.norm != "linf":
            raise ValueError("only the linf norm is supported")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1]")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (0.0 <= self.diversity_prob <= 1.0):
            raise ValueError("diversity_prob must be in [0, 1]")
        if self.est_sigma <= 0:
            raise ValueError("estimator smoothing sigma must be positive")
        n = self.resolved_samples()
        if n < 2 or n % 2:
            raise ValueError(f"estimator sample count must be even and >= 2, got {n}")

    def resolved_steps(self, transfer: bool = False) -> int:
        return self.steps if self.steps is not None else default_steps(
            self.method, self.mode, transfer)

    def resolved_step_size(self, transfer: bool = False) -> float:
        if self.step_size is not None:
            return self.step_size
        return max(self.epsilon / max(self.resolved_steps(transfer), 1), 1.0 / 255.0)

    def resolved_samples(self) -> int:
        if self.est_samples is not None:
            return self.est_samples
        return _DEFAULT_EST_SAMPLES.get(self.method, 2)

    def at_epsilon(self, eps: float) -> "AttackConfig":
        return replace(self, epsilon=eps)


@dataclass
class AttackOutcome:
    """Per-sample adversarial result."""

    success: bool
    adversarial: Image
    linf_distance: float
    queries: int
    found_min: bool | None = None         # set in min_perturbation mode
    error: str | None = None              # flagged failure, e.g. non-finite grad

    def check(self, clean: Image, config: AttackConfig) -> None:
        """Enforce the box/budget invariants on this outcome."""
        adv = self.adversarial.data
        delta = float(np.max(np.abs(adv - clean.data))) if adv.size else 0.0
        if abs(delta - self.linf_distance) > 1e-6:
            raise AssertionError(
                f"linf mismatch: recorded {self.linf_distance}, actual {delta}")
        if adv.min() < 0.0 or adv.max() > 1.0:
            raise AssertionError("adversarial image leaves [0, 1]")
        if config.mode == "budgeted" and delta > config.epsilon + 1e-6:
            raise AssertionError(
                f"budgeted perturbation {delta} exceeds epsilon {config.epsilon}")


def project_ball(adv: np.ndarray, clean: np.ndarray, epsilon: float) -> np.ndarray:
    """Project onto the linf ball around `clean`, intersected with [0, 1]."""
    return np.clip(np.clip(adv, clean - epsilon, clean + epsilon), 0.0, 1.0)
