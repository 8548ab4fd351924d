"""Report assembly and plot-data emission (JSON, CSV, scatter axes)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..metrics import fit_baseline_trend, format_attack_cell, probit

REPORT_VERSION = 1
_TREND_GRID = 25


def _scatter_block(runs: list[dict]):
    """Scatter points plus trend/identity series from the stored runs.

    Points pair each model's standard accuracy with its shifted accuracy;
    the trend is fitted to those pairs when at least two distinct standard
    accuracies exist.
    """
    std = {r["model"]: r["accuracy"] for r in runs if r["kind"] == "standard"}
    pairs = []
    for r in runs:
        if r["kind"] == "shift" and r["model"] in std:
            pairs.append((r["model"], std[r["model"]], r["accuracy"]))
    points = [{"tag": m, "acc1": a1, "acc2": a2,
               "probit_acc1": float(probit(a1)), "probit_acc2": float(probit(a2))}
              for m, a1, a2 in pairs]
    trend = None
    acc1s = sorted({a1 for _, a1, _ in pairs})
    if len(acc1s) >= 2:
        fitted = fit_baseline_trend([(a1, a2) for _, a1, a2 in pairs])
        grid = sorted(set(np.linspace(0.05, 0.95, _TREND_GRID)) | set(acc1s))
        trend = {"transform": fitted.transform, "slope": fitted.slope,
                 "intercept": fitted.intercept,
                 "samples": [{"acc1": float(a), "acc2": fitted.beta(float(a))}
                             for a in grid]}
    identity = [{"acc1": float(a), "acc2": float(a)}
                for a in np.linspace(0.0, 1.0, 21)]
    return {"points": points, "trend": trend, "identity": identity}


def build_report(config: dict, runs: list[dict], attack_rows: list[dict],
                 typo_success: dict, datasets: dict, models: dict) -> dict:
    attacks = [dict(row) for row in attack_rows]
    # paired "median / accuracy" cells combine the min-perturbation and
    # budgeted runs of the same method on the same target
    cells = {}
    for row in attacks:
        key = f"{row['target']}:{row['method']}"
        slot = cells.setdefault(key, {"median": None, "accuracy": None})
        if row["mode"] == "min_perturbation":
            slot["median"] = row["median_min_linf"]
        else:
            slot["accuracy"] = row["robust_accuracy"]
    attack_cells = {
        key: format_attack_cell(v["median"], 100.0 * v["accuracy"])
        for key, v in cells.items()
        if v["median"] is not None and v["accuracy"] is not None
    }
    derived = {}
    if "supervised" in typo_success and "zero_shot" in typo_success:
        sup, zs = typo_success["supervised"], typo_success["zero_shot"]
        typo_accs = {r["model"]: r["accuracy"] for r in runs
                     if r["dataset"] == "typographic"}
        derived["typographic"] = {
            "supervised_success_rate": sup,
            "zero_shot_success_rate": zs,
            "success_rate_gap": zs - sup,
            "zero_shot_more_vulnerable": zs > sup,
            "relative_robustness_points":
                100.0 * (typo_accs.get("zero_shot", 0.0)
                         - typo_accs.get("supervised", 0.0)),
        }
    # worker count and output paths are execution machinery, not experiment
    # semantics; stripping them keeps reports byte-identical across setups
    semantic_config = {k: v for k, v in config.items()
                       if k not in ("workers", "output_dir")}
    return {
        "version": REPORT_VERSION,
        "config": semantic_config,
        "datasets": datasets,
        "models": models,
        "runs": runs,
        "attacks": attacks,
        "attack_cells": attack_cells,
        "derived": derived,
        "scatter": _scatter_block(runs),
    }


def emit_report(report: dict, formats, out_dir) -> list[str]:
    """Write the requested formats; returns the emitted relative paths."""
    out_dir = Path(out_dir)
    emitted = []
    for fmt in formats:
        if fmt == "json":
            (out_dir / "report.json").write_text(
                json.dumps(report, indent=1, sort_keys=True))
            emitted.append("report.json")
        elif fmt == "csv":
            with open(out_dir / "runs.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["model", "model_id", "dataset", "dataset_id",
                            "kind", "accuracy", "targeted_success_rate"])
                for r in report["runs"]:
                    w.writerow([r["model"], r["model_id"], r["dataset"],
                                r["dataset_id"], r["kind"], repr(r["accuracy"]),
                                repr(r.get("targeted_success_rate", ""))])
            with open(out_dir / "attacks.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["target", "method", "mode", "epsilon",
                            "robust_accuracy", "median_min_linf",
                            "unfound_count", "cell"])
                for a in report["attacks"]:
                    key = f"{a['target']}:{a['method']}"
                    w.writerow([a["target"], a["method"], a["mode"],
                                repr(a["epsilon"]), repr(a["robust_accuracy"]),
                                repr(a["median_min_linf"]), a["unfound_count"],
                                report["attack_cells"].get(key, "")])
            emitted.extend(["runs.csv", "attacks.csv"])
        elif fmt == "scatter":
            with open(out_dir / "scatter.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["series", "tag", "acc1", "acc2",
                            "probit_acc1", "probit_acc2"])
                sc = report["scatter"]
                for p in sc["points"]:
                    w.writerow(["point", p["tag"], repr(p["acc1"]), repr(p["acc2"]),
                                repr(p["probit_acc1"]), repr(p["probit_acc2"])])
                if sc["trend"]:
                    for s in sc["trend"]["samples"]:
                        w.writerow(["trend", "", repr(s["acc1"]), repr(s["acc2"]),
                                    repr(float(probit(s["acc1"]))),
                                    repr(float(probit(s["acc2"])))])
                for s in sc["identity"]:
                    w.writerow(["identity", "", repr(s["acc1"]), repr(s["acc2"]),
                                "", ""])
            emitted.append("scatter.csv")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return emitted


def read_runs_csv(path) -> list[dict]:
    """Re-import runs.csv rows with numeric fields restored."""
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rec["accuracy"] = float(rec["accuracy"])
            tsr = rec["targeted_success_rate"]
            rec["targeted_success_rate"] = float(tsr) if tsr not in ("", "''") else None
            rows.append(rec)
    return rows
