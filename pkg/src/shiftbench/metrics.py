"""Evaluation metrics: accuracy, baseline-trend robustness, attack and
stability aggregates.

The baseline trend is a least-squares line in probit-transformed accuracy
coordinates (accuracies clamped away from {0, 1} before transforming);
effective robustness is accuracy above that trend, relative robustness is
the raw accuracy difference between two models on the same test set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .data import Dataset
from .errors import ShiftbenchError

ACC_CLAMP = 1e-4
RECORD_KINDS = ("standard", "shift", "attack")


class MetricError(ShiftbenchError):
    pass


@dataclass
class EvalRecord:
    model_id: str
    dataset_id: str
    accuracy: float
    kind: str = "standard"

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}")


def evaluate_accuracy(model, dataset: Dataset, kind: str = "standard") -> EvalRecord:
    """Fraction of argmax predictions equal to labels (ties -> lowest index)."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    return EvalRecord(model_id=model.snapshot_id, dataset_id=dataset.identity,
                      accuracy=model.accuracy(dataset), kind=kind)


def probit(acc) -> np.ndarray:
    return ndtri(np.clip(acc, ACC_CLAMP, 1.0 - ACC_CLAMP))


@dataclass
class BaselineTrend:
    """Linear fit in transformed-accuracy space; beta maps [0,1] -> [0,1]."""

    slope: float
    intercept: float
    transform: str = "probit"
    source: list[tuple[float, float]] = field(default_factory=list)

    def beta(self, acc1: float) -> float:
        return float(ndtr(self.slope * probit(acc1) + self.intercept))


def fit_baseline_trend(records: list[tuple[float, float]]) -> BaselineTrend:
    """Least-squares probit-space fit of (standard acc, shifted acc) pairs."""
    if len(records) < 2:
        raise MetricError("trend fitting needs at least 2 records")
    a1 = probit([r[0] for r in records])
    a2 = probit([r[1] for r in records])
    if np.allclose(a1, a1[0]):
        raise MetricError("degenerate fit: all standard accuracies identical")
    slope, intercept = np.polyfit(a1, a2, 1)
    return BaselineTrend(float(slope), float(intercept),
                         source=[tuple(map(float, r)) for r in records])


def compute_robustness_gaps(record_std: EvalRecord, record_shift: EvalRecord,
                            trend: BaselineTrend,
                            other_shift: EvalRecord | None = None) -> dict:
    """Effective (vs trend) and optional relative robustness, in points.

    `other_shift` is the comparison model's record on the same shifted set;
    relative robustness is other_shift.accuracy - record_shift.accuracy.
    """
    if record_std.model_id != record_shift.model_id:
        raise MetricError("standard and shifted records come from different models")
    effective = 100.0 * (record_shift.accuracy - trend.beta(record_std.accuracy))
    out = {"effective": effective, "relative": None}
    if other_shift is not None:
        if other_shift.dataset_id != record_shift.dataset_id:
            raise MetricError(
                f"relative robustness needs matching datasets: "
                f"{other_shift.dataset_id} vs {record_shift.dataset_id}")
        out["relative"] = 100.0 * (other_shift.accuracy - record_shift.accuracy)
    return out


def targeted_success_rate(predictions, targets) -> float:
    """Fraction of predictions equal to the attack targets."""
    predictions = list(predictions)
    targets = list(targets)
    if len(predictions) != len(targets):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, "
                         f"{len(targets)} targets")
    if not predictions:
        raise ValueError("empty prediction list")
    return float(np.mean([p == t for p, t in zip(predictions, targets)]))


def summarize_attack_outcomes(outcomes) -> dict:
    """Median minimum distance, robust accuracy and unfound count.

    Unfound minimum perturbations stay in the median at their recorded
    eps_max distance and are counted separately (dropping them silently
    would bias the median).
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no outcomes to summarize")
    distances = [o.linf_distance for o in outcomes]
    return {
        "median_min_linf": float(np.median(distances)),
        "robust_accuracy": float(np.mean([not o.success for o in outcomes])),
        "unfound_count": sum(1 for o in outcomes if o.found_min is False),
    }


def format_attack_cell(median_linf: float, accuracy_pct: float) -> str:
    """Paired "median / accuracy" report cell, e.g. "0.003 / 8.30"."""
    return f"{median_linf:.3f} / {accuracy_pct:.2f}"


def format_accuracy_pct(accuracy: float) -> str:
    """Two-decimal percent display, e.g. 0.7613 -> "76.13"."""
    return f"{100.0 * accuracy:.2f}"


def corruption_summary(acc_grid: dict[str, list[float]]) -> dict:
    """Per-corruption severity averages plus the overall average."""
    per = {}
    for kind, row in acc_grid.items():
        if len(row) != 5:
            raise MetricError(f"corruption {kind!r} has {len(row)} severities, need 5")
        per[kind] = float(np.mean(row))
    if not per:
        raise MetricError("empty accuracy grid")
    return {"per_corruption": per,
            "average": float(np.mean(list(per.values())))}


# -- prediction-stability metrics over perturbation sequences ----------------

TOP_K = 5
_OUTSIDE_RANK = 6


def _top_list(logits, k=TOP_K):
    order = np.argsort(-np.asarray(logits), kind="stable")
    return [int(c) for c in order[:k]]


def top_rank_distance(a, b) -> int:
    """Rank-displacement distance between two top-k lists (clamped to 6
    outside the lists)."""
    union = set(a) | set(b)
    ra = {c: i + 1 for i, c in enumerate(a)}
    rb = {c: i + 1 for i, c in enumerate(b)}
    return sum(abs(ra.get(c, _OUTSIDE_RANK) - rb.get(c, _OUTSIDE_RANK))
               for c in union)


def _sequence_scores(model, sequences):
    from .shifts.sequences import NOISE_SEQUENCE_KINDS
    by_kind: dict[str, list] = {}
    for seq in sequences:
        by_kind.setdefault(seq.kind, []).append(seq)
    fr_raw, t5d_raw = {}, {}
    for kind, seqs in by_kind.items():
        flips, flips_n, dists, dists_n = 0, 0, 0, 0
        for seq in seqs:
            if len(seq) < 2:
                raise MetricError("stability needs sequences of length >= 2")
            logits = [model.logits(f) for f in seq.frames]
            preds = [int(np.argmax(z)) for z in logits]
            tops = [_top_list(z) for z in logits]
            for j in range(1, len(preds)):
                ref = 0 if kind in NOISE_SEQUENCE_KINDS else j - 1
                flips += preds[j] != preds[ref]
                flips_n += 1
                dists += top_rank_distance(tops[j - 1], tops[j])
                dists_n += 1
        fr_raw[kind] = flips / flips_n
        t5d_raw[kind] = dists / dists_n
    return fr_raw, t5d_raw


def sequence_stability(model, sequences, reference_model=None) -> dict:
    """Flip-rate and top-k distance per perturbation kind.

    Noise kinds compare each frame to the clean frame; geometric kinds
    compare consecutive frames. With a reference model, per-kind scores are
    normalized to 100 * raw / reference_raw and averaged into mFR / mT5D.
    """
    fr_raw, t5d_raw = _sequence_scores(model, sequences)
    out = {"fr_raw": fr_raw, "t5d_raw": t5d_raw,
           "fr_normalized": None, "t5d_normalized": None,
           "mfr": None, "mt5d": None, "reference_id": None}
    if reference_model is not None:
        ref_fr, ref_t5d = _sequence_scores(reference_model, sequences)
        fr_norm, t5d_norm = {}, {}
        for kind in fr_raw:
            if ref_fr[kind] == 0 or ref_t5d[kind] == 0:
                raise MetricError(
                    f"reference raw score is zero for kind {kind!r}; "
                    f"normalization undefined")
            fr_norm[kind] = 100.0 * fr_raw[kind] / ref_fr[kind]
            t5d_norm[kind] = 100.0 * t5d_raw[kind] / ref_t5d[kind]
        out.update(fr_normalized=fr_norm, t5d_normalized=t5d_norm,
                   mfr=float(np.mean(list(fr_norm.values()))),
                   mt5d=float(np.mean(list(t5d_norm.values()))),
                   reference_id=reference_model.snapshot_id)
    return out


def scatter_rows(records: list[tuple[EvalRecord, EvalRecord, str]]):
    """Plot-ready rows (acc1, acc2, probit(acc1), probit(acc2), tag)."""
    rows = []
    for std, shift, tag in records:
        rows.append({"acc1": std.accuracy, "acc2": shift.accuracy,
                     "probit_acc1": float(probit(std.accuracy)),
                     "probit_acc2": float(probit(shift.accuracy)),
                     "tag": tag})
    return rows
