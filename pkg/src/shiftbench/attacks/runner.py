"""Attack dispatch, minimum-perturbation search and dataset evaluation."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..data import Dataset, Image, LabeledExample
from ..errors import NonFiniteError, UnsupportedCapabilityError
from ..rng import substream
from .blackbox import black_box_attack
from .config import (BLACK_BOX_METHODS, WHITE_BOX_METHODS, AttackConfig,
                     AttackOutcome, project_ball)
from .whitebox import deepfool, fgsm, iterative_sign

MIN_PERTURBATION_BISECTIONS = 12
EPS_MAX = 1.0


def _attack_rng(config: AttackConfig, sample_index: int):
    return substream(config.seed, sample_index, "attack")


def _finish(model, example, adv: np.ndarray, queries: int,
            config: AttackConfig, found_min=None) -> AttackOutcome:
    img = Image(adv)
    success = model.predict(img) != example.label
    linf = float(np.max(np.abs(adv - example.image.data)))
    outcome = AttackOutcome(success=success, adversarial=img, linf_distance=linf,
                            queries=queries, found_min=found_min)
    outcome.check(example.image, config)  # box/budget invariants, every outcome
    return outcome


def _flagged(example, queries: int, message: str) -> AttackOutcome:
    return AttackOutcome(success=False, adversarial=example.image.copy(),
                         linf_distance=0.0, queries=queries, error=message)


def run_white_box_attack(model, example: LabeledExample, config: AttackConfig,
                         sample_index: int = 0, transfer: bool = False) -> AttackOutcome:
    """Craft an adversarial example with full gradient access."""
    if config.method not in WHITE_BOX_METHODS:
        raise ValueError(f"{config.method} is not a white-box method")
    if not model.has_input_gradient:
        raise UnsupportedCapabilityError(
            "white-box attack needs input gradients; "
            "use a transfer or black-box configuration instead")
    model.check_input(example.image)
    rng = _attack_rng(config, sample_index)
    try:
        if config.method == "fgsm":
            adv, calls = fgsm(model, example, config, rng)
        elif config.method == "bim":
            adv, calls = iterative_sign(model, example, config, rng,
                                        momentum=False, diversity=False,
                                        transfer=transfer)
        elif config.method == "mim":
            adv, calls = iterative_sign(model, example, config, rng,
                                        momentum=True, diversity=False,
                                        transfer=transfer)
        elif config.method == "dim":
            adv, calls = iterative_sign(model, example, config, rng,
                                        momentum=False, diversity=True,
                                        transfer=transfer)
        else:  # deepfool
            adv, calls = deepfool(model, example, config, rng)
            if config.mode == "budgeted":
                # the method minimizes natively; cap it at the budget
                adv = project_ball(adv, example.image.data, config.epsilon)
    except NonFiniteError as exc:
        return _flagged(example, 0, str(exc))
    return _finish(model, example, adv, calls, config)


def run_black_box_attack(model, example: LabeledExample, config: AttackConfig,
                         sample_index: int = 0) -> AttackOutcome:
    if config.method not in BLACK_BOX_METHODS:
        raise ValueError(f"{config.method} is not a black-box method")
    model.check_input(example.image)
    rng = _attack_rng(config, sample_index)
    adv, queries = black_box_attack(model, example, config, rng)
    return _finish(model, example, adv, queries, config)


def run_attack(model, example: LabeledExample, config: AttackConfig,
               sample_index: int = 0, transfer: bool = False) -> AttackOutcome:
    if config.method in BLACK_BOX_METHODS:
        return run_black_box_attack(model, example, config, sample_index)
    return run_white_box_attack(model, example, config, sample_index, transfer)


def run_transfer_attack(substitute, target, example: LabeledExample,
                        config: AttackConfig, sample_index: int = 0) -> AttackOutcome:
    """Craft on the substitute, judge success on the target."""
    if substitute.n_classes != target.n_classes:
        raise ValueError(
            f"class count mismatch: substitute {substitute.n_classes}, "
            f"target {target.n_classes}")
    if substitute.input_hwc != target.input_hwc:
        raise ValueError("substitute and target input specs differ")
    crafted = run_white_box_attack(substitute, example, config, sample_index,
                                   transfer=True)
    if crafted.error:
        return crafted
    success = target.predict(crafted.adversarial) != example.label
    return AttackOutcome(success=success, adversarial=crafted.adversarial,
                         linf_distance=crafted.linf_distance,
                         queries=crafted.queries, found_min=crafted.found_min)


def find_min_perturbation(model, example: LabeledExample, config: AttackConfig,
                          sample_index: int = 0) -> AttackOutcome:
    """Smallest successful epsilon via bisection over [0, EPS_MAX].

    Already-misclassified inputs return distance 0. DeepFool minimizes
    natively and bypasses the bisection. When even EPS_MAX fails, the
    outcome is flagged found_min=False with the distance recorded at
    EPS_MAX.
    """
    cfg = config if config.mode == "min_perturbation" else AttackConfig(
        **{**config.__dict__, "mode": "min_perturbation"})
    if model.predict(example.image) != example.label:
        return AttackOutcome(success=True, adversarial=example.image.copy(),
                             linf_distance=0.0, queries=1, found_min=True)

    if cfg.method == "deepfool":
        out = run_attack(model, example, cfg, sample_index)
        out.found_min = out.success
        if not out.success:
            out.linf_distance = EPS_MAX
        return out

    total_queries = 0
    hi = EPS_MAX
    best = run_attack(model, example, cfg.at_epsilon(hi), sample_index)
    total_queries += best.queries
    if best.error:
        return best
    if not best.success:
        best.found_min = False
        best.linf_distance = EPS_MAX
        best.queries = total_queries
        return best
    lo = 0.0
    for _ in range(MIN_PERTURBATION_BISECTIONS):
        mid = 0.5 * (lo + hi)
        out = run_attack(model, example, cfg.at_epsilon(mid), sample_index)
        total_queries += out.queries
        if out.error:
            out.queries = total_queries
            return out
        if out.success:
            hi, best = mid, out
        else:
            lo = mid
    best.found_min = True
    best.queries = total_queries
    return best


@dataclass
class AttackSummary:
    robust_accuracy: float | None
    median_min_linf: float | None
    unfound_count: int
    clean_accuracy: float


def evaluate_under_attack(model, dataset: Dataset, config: AttackConfig,
                          workers: int = 1, substitute=None):
    """Attack every sample; aggregate robust accuracy / median min distance.

    Per-sample RNG streams derive from (seed, sample index), so results are
    identical for any worker count. Flagged per-sample failures propagate
    into the outcome list without aborting the run.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an attack on an empty dataset")

    def one(idx: int) -> AttackOutcome:
        ex = dataset.examples[idx]
        if config.mode == "min_perturbation":
            if substitute is not None:
                raise ValueError("min-perturbation transfer runs are not supported")
            return find_min_perturbation(model, ex, config, idx)
        if substitute is not None:
            return run_transfer_attack(substitute, model, ex, config, idx)
        return run_attack(model, ex, config, idx)

    if workers <= 1:
        outcomes = [one(i) for i in range(len(dataset))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(len(dataset))))

    clean_acc = model.accuracy(dataset)
    if config.mode == "min_perturbation":
        distances = [o.linf_distance for o in outcomes]
        unfound = sum(1 for o in outcomes if o.found_min is False)
        summary = AttackSummary(robust_accuracy=None,
                                median_min_linf=float(np.median(distances)),
                                unfound_count=unfound, clean_accuracy=clean_acc)
    else:
        robust = float(np.mean([not o.success for o in outcomes]))
        summary = AttackSummary(robust_accuracy=robust, median_min_linf=None,
                                unfound_count=0, clean_accuracy=clean_acc)
    return outcomes, summary


def outcome_records(outcomes, config: AttackConfig):
    """JSON-lines-ready dicts for streaming per-sample outcomes."""
    for i, o in enumerate(outcomes):
        yield {"index": i, "method": config.method, "mode": config.mode,
               "epsilon": config.epsilon, "success": o.success,
               "linf": o.linf_distance, "queries": o.queries,
               "found_min": o.found_min, "error": o.error}


def write_outcomes_jsonl(path, outcomes, config: AttackConfig) -> None:
    with open(path, "w") as f:
        for rec in outcome_records(outcomes, config):
            f.write(json.dumps(rec, sort_keys=True) + "\n")
