"""Experiment pipeline: config validation, ledger semantics, report emission."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from shiftbench.errors import ConfigError
from shiftbench.harness import (read_runs_csv, run_experiment, validate_config)
from shiftbench.harness.pipeline import hash_file

SMALL_CONFIG = {
    "version": 1,
    "seed": 7,
    "dataset": {"classes": ["ring", "disk"], "n_train_per_class": 30,
                "n_test_per_class": 8, "image_size": 16},
    "supervised": {"epochs": 10, "hidden": [16], "pool": 2},
    "dual_encoder": {"epochs": 10, "batch_size": 16, "embed_dim": 16,
                     "hidden": [32], "pool": 2, "learning_rate": 0.01},
    "typographic": {"k_coords": 2},
    "attacks": [
        {"method": "fgsm", "mode": "budgeted", "epsilon": 8 / 255},
        {"method": "fgsm", "mode": "min_perturbation"},
    ],
}


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="invalid experiment config"):
        validate_config({"version": 1, "seed": 0, "dataset": {}, "bogus": 1})
    with pytest.raises(ConfigError):
        validate_config({"version": 1, "seed": 0, "dataset": {"unknown_knob": 2}})
    with pytest.raises(ConfigError):
        validate_config({"version": 2, "seed": 0, "dataset": {}})


def test_defaults_filled():
    cfg = validate_config({"version": 1, "seed": 3, "dataset": {}})
    assert cfg["workers"] == 1
    assert cfg["zero_shot"]["prompts"] == ["a photo of a {label}"]
    assert cfg["typographic"]["k_coords"] == 4
    assert cfg["attacks"] == []


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    config = validate_config(SMALL_CONFIG)
    report, ledger = run_experiment(config, out)
    return config, report, ledger, out


def test_report_structure(small_run):
    _, report, _, out = small_run
    assert {r["model"] for r in report["runs"]} == {"supervised", "zero_shot"}
    assert {r["dataset"] for r in report["runs"]} == {"test", "typographic"}
    assert len(report["attacks"]) == 2
    cells = report["attack_cells"]
    assert "supervised:fgsm" in cells and " / " in cells["supervised:fgsm"]
    assert (out / "report.json").exists()
    assert (out / "scatter.csv").exists()
    # derived values recomputable from stored primitives
    typo = report["derived"]["typographic"]
    accs = {r["model"]: r["accuracy"] for r in report["runs"]
            if r["dataset"] == "typographic"}
    assert typo["relative_robustness_points"] == pytest.approx(
        100 * (accs["zero_shot"] - accs["supervised"]))


def test_rerun_is_noop_and_byte_identical(small_run):
    config, report, ledger, out = small_run
    before = (out / "report.json").read_bytes()
    stamps = {name: st["wall_clock_s"] for name, st in ledger.doc["stages"].items()}
    report2, ledger2 = run_experiment(config, out)
    after = (out / "report.json").read_bytes()
    assert before == after
    # training stages were skipped: their ledger entries are untouched
    for name in ("train-classifier", "train-encoder"):
        assert ledger2.doc["stages"][name]["wall_clock_s"] == stamps[name]


def test_deleted_artifact_detected_and_regenerated(small_run):
    config, _, ledger2, out = small_run
    before = (out / "report.json").read_bytes()
    (out / "classifier.rozm").unlink()
    report3, ledger3 = run_experiment(config, out)
    assert (out / "classifier.rozm").exists()
    assert (out / "report.json").read_bytes() == before


def test_ledger_references_every_output(small_run):
    _, _, ledger, out = small_run
    referenced = {}
    for stage in ledger.doc["stages"].values():
        referenced.update(stage["outputs"])
    for rel, digest in referenced.items():
        assert (out / rel).exists(), rel
        assert hash_file(out / rel) == digest, rel
    names = set(referenced)
    assert {"classifier.rozm", "encoder.rozm", "report.json"} <= names


def test_worker_count_independence(tmp_path):
    cfg1 = validate_config({**SMALL_CONFIG, "workers": 1})
    cfg8 = validate_config({**SMALL_CONFIG, "workers": 8})
    r1, _ = run_experiment(cfg1, tmp_path / "w1")
    r8, _ = run_experiment(cfg8, tmp_path / "w8")
    # worker count is execution machinery: reports are byte-identical
    assert ((tmp_path / "w1" / "report.json").read_bytes()
            == (tmp_path / "w8" / "report.json").read_bytes())


def test_empty_attack_list_reports_accuracies_only(tmp_path):
    config = validate_config({**SMALL_CONFIG, "attacks": []})
    report, _ = run_experiment(config, tmp_path / "noattack")
    assert report["attacks"] == []
    assert report["attack_cells"] == {}
    assert any(r["kind"] == "standard" for r in report["runs"])


def test_scatter_trend_contains_its_source_points(small_run):
    _, report, _, _ = small_run
    sc = report["scatter"]
    if sc["trend"] is None:
        pytest.skip("degenerate trend on this toy run")
    samples = {round(s["acc1"], 12): s["acc2"] for s in sc["trend"]["samples"]}
    for p in sc["points"]:
        assert round(p["acc1"], 12) in samples


def test_scatter_fit_consistency_on_synthetic_runs(tmp_path):
    from shiftbench.harness.report import build_report
    runs = []
    for model, a_std, a_shift in [("m1", 0.6, 0.45), ("m2", 0.8, 0.68)]:
        runs.append({"model": model, "model_id": model, "dataset": "test",
                     "dataset_id": "d", "kind": "standard", "accuracy": a_std})
        runs.append({"model": model, "model_id": model, "dataset": "typographic",
                     "dataset_id": "t", "kind": "shift", "accuracy": a_shift})
    report = build_report({"seed": 0}, runs, [], {}, {}, {})
    trend = report["scatter"]["trend"]
    samples = {s["acc1"]: s["acc2"] for s in trend["samples"]}
    for p in report["scatter"]["points"]:
        assert abs(samples[p["acc1"]] - p["acc2"]) <= 1e-6
    assert any(abs(s["acc1"] - s["acc2"]) < 1e-12 for s in report["scatter"]["identity"])


def test_runs_csv_reimport_reproduces_relative_gap(small_run):
    _, report, _, out = small_run
    rows = read_runs_csv(out / "runs.csv")
    accs = {r["model"]: r["accuracy"] for r in rows if r["dataset"] == "typographic"}
    expect = report["derived"]["typographic"]["relative_robustness_points"]
    assert 100 * (accs["zero_shot"] - accs["supervised"]) == pytest.approx(expect)


# -- CLI ----------------------------------------------------------------------

def test_cli_workflow_and_exit_codes(tmp_path, capsys):
    from shiftbench.cli import main
    ds = tmp_path / "data"
    assert main(["gen-toy", "--out", str(ds), "--n-per-class", "3",
                 "--image-size", "16"]) == 0
    model = tmp_path / "model.rozm"
    assert main(["train", "--dataset", str(ds), "--out", str(model),
                 "--epochs", "3", "--hidden", "8"]) == 0
    assert main(["eval", "--model", str(model), "--dataset", str(ds)]) == 0
    typo = tmp_path / "typo"
    assert main(["typo-gen", "--dataset", str(ds), "--out", str(typo),
                 "--k-coords", "2"]) == 0
    assert main(["eval", "--model", str(model), "--dataset", str(typo)]) == 0
    out = capsys.readouterr().out
    assert "targeted success rate" in out
    assert main(["attack", "--model", str(model), "--dataset", str(ds),
                 "--method", "fgsm", "--out", str(tmp_path / "o.jsonl")]) == 0
    lines = (tmp_path / "o.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    assert {"index", "method", "mode", "epsilon", "success", "linf",
            "queries", "found_min"} <= set(rec)
    corrupted = tmp_path / "corr"
    assert main(["corrupt", "--dataset", str(ds), "--out", str(corrupted),
                 "--kind", "brightness", "--severity", "3"]) == 0

    encoder = tmp_path / "encoder.rozm"
    assert main(["train", "--dataset", str(ds), "--arch", "dual-encoder",
                 "--out", str(encoder), "--epochs", "2", "--hidden", "12",
                 "--embed-dim", "8", "--batch-size", "6",
                 "--learning-rate", "0.01"]) == 0
    prompts = tmp_path / "prompts.json"
    assert main(["promptsearch", "--encoder", str(encoder), "--dataset", str(ds),
                 "--out", str(prompts), "--steps", "2", "--top-k", "4",
                 "--beam-size", "2", "--template", "[T][T][C]",
                 "--init-text", "a photo", "--validation-size", "4"]) == 0
    doc = json.loads(prompts.read_text())
    assert doc["sequences"] and doc["config"]["template"] == "[T][T][C]"
    assert main(["dedup", "--encoder", str(encoder), "--test", str(ds),
                 "--train", str(ds), "--out", str(tmp_path / "sweep"),
                 "--thresholds", "0.9", "0.999"]) == 0
    sweep = json.loads((tmp_path / "sweep.json").read_text())
    assert sweep[0]["overlap_pct"] == 100.0  # identical sets fully overlap
    assert (tmp_path / "sweep.csv").exists()

    # exit code 2: configuration problems
    assert main(["report"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "seed": 0, "dataset": {}, "oops": 1}))
    assert main(["--config", str(bad), "report"]) == 2
    # exit code 3: stage/runtime failures
    assert main(["corrupt", "--dataset", str(ds), "--out", str(corrupted),
                 "--kind", "warp", "--severity", "3"]) == 3
    assert main(["eval", "--model", str(model),
                 "--dataset", str(tmp_path / "missing")]) == 3


def test_cli_bridge_check_echo_peer(capsys):
    from shiftbench.cli import main
    peer = Path(__file__).parent / "peers" / "echo_peer.py"
    code = main(["bridge-check", "--endpoint", f"cmd:{sys.executable} {peer}"])
    out = capsys.readouterr().out
    assert code == 0
    assert "conformance checks passed" in out
