"""Experiment orchestration: composable stages with a hashed run ledger.

Every stage's input hash covers its config slice plus upstream artifact
hashes; re-running a completed stage with identical hashes is a no-op
(training stages reload their snapshots). All randomness flows from the
master seed through named substreams, so reports are byte-identical
across repeated runs and worker counts.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..attacks import AttackConfig, evaluate_under_attack, write_outcomes_jsonl
from ..data import Dataset
from ..errors import StageError
from ..metrics import evaluate_accuracy, targeted_success_rate
from ..models import (TrainConfig, load_classifier, load_encoder,
                      save_classifier, save_encoder,
                      synthesize_zero_shot_classifier, train_classifier,
                      train_dual_encoder)
from ..shifts import (TypographicSpec, build_caption_corpus,
                      generate_typographic_dataset, generate_toy_dataset)
from ..dataio import save_dataset, load_dataset
from .report import build_report, emit_report


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def hash_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunLedger:
    """Per-stage status, hashes and wall-clock, persisted as JSON."""

    def __init__(self, path):
        self.path = Path(path)
        if self.path.exists():
            self.doc = json.loads(self.path.read_text())
        else:
            self.doc = {"version": 1, "stages": {}}

    def can_skip(self, name: str, input_hash: str) -> bool:
        stage = self.doc["stages"].get(name)
        if not stage or stage["status"] != "ok" or stage["input_hash"] != input_hash:
            return False
        for rel, digest in stage["outputs"].items():
            path = self.path.parent / rel
            if not path.exists() or hash_file(path) != digest:
                return False
        return True

    def record(self, name: str, input_hash: str, outputs: dict, wall: float,
               status: str = "ok", error: str | None = None) -> None:
        self.doc["stages"][name] = {
            "status": status, "input_hash": input_hash,
            "outputs": outputs, "wall_clock_s": round(wall, 4), "error": error,
        }
        self.save()

    def save(self) -> None:
        self.path.write_text(json.dumps(self.doc, indent=1, sort_keys=True))


def _stage(ledger: RunLedger, name: str, input_hash: str, out_dir: Path,
           produce, reload):
    """Run or skip one stage; `produce` returns (value, output relpaths)."""
    if ledger.can_skip(name, input_hash):
        return reload()
    start = time.monotonic()
    try:
        value, outputs = produce()
    except Exception as exc:
        ledger.record(name, input_hash, {}, time.monotonic() - start,
                      status="failed", error=f"{type(exc).__name__}: {exc}")
        raise StageError(f"stage {name!r} failed: {exc}") from exc
    digests = {rel: hash_file(out_dir / rel) for rel in outputs}
    ledger.record(name, input_hash, digests, time.monotonic() - start)
    return value


def _predictions(model, dataset: Dataset, workers: int) -> list[int]:
    if workers <= 1:
        return [model.predict(ex.image) for ex in dataset]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ex: model.predict(ex.image), dataset.examples))


def run_experiment(config: dict, out_dir) -> tuple[dict, RunLedger]:
    """Execute the configured pipeline; returns (report, ledger)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger = RunLedger(out_dir / "ledger.json")
    seed = config["seed"]
    workers = config.get("workers", 1)

    # datasets regenerate deterministically from the seed (not persisted)
    ds_cfg = config["dataset"]
    train = generate_toy_dataset(ds_cfg["classes"], ds_cfg["n_train_per_class"],
                                 ds_cfg["image_size"], "none", seed)
    test = generate_toy_dataset(ds_cfg["classes"], ds_cfg["n_test_per_class"],
                                ds_cfg["image_size"], ds_cfg["shift_variant"],
                                seed + 1)

    co = config["corpus"]
    pairs = build_caption_corpus(train, co["template"], co["word_overlay_prob"],
                                 co["text_only_prob"], co["overlays_per_image"],
                                 font_scale=1, seed=seed)
    corpus_hash = hash_text(canonical_json(
        [[p[0].to_u8().tobytes().hex()[:64], p[1]] for p in pairs[:8]]
        + [len(pairs), train.content_hash()]))

    sup_cfg = config["supervised"]
    sup_hash = hash_text(canonical_json([sup_cfg, seed, train.content_hash()]))

    def produce_supervised():
        model = train_classifier(
            train, arch=sup_cfg["arch"],
            config=TrainConfig(epochs=sup_cfg["epochs"],
                               batch_size=sup_cfg["batch_size"],
                               learning_rate=sup_cfg["learning_rate"], seed=seed),
            hidden=tuple(sup_cfg["hidden"]), pool=sup_cfg["pool"])
        save_classifier(out_dir / "classifier.rozm", model)
        # adopt the snapshot as the model of record (f32 weights), so a
        # fresh run and a skipped-stage reload behave identically
        return load_classifier(out_dir / "classifier.rozm"), ["classifier.rozm"]

    supervised = _stage(ledger, "train-classifier", sup_hash, out_dir,
                        produce_supervised,
                        lambda: load_classifier(out_dir / "classifier.rozm"))

    de_cfg = config["dual_encoder"]
    de_hash = hash_text(canonical_json([de_cfg, co, seed, corpus_hash]))

    def produce_encoder():
        enc = train_dual_encoder(
            pairs,
            TrainConfig(epochs=de_cfg["epochs"], batch_size=de_cfg["batch_size"],
                        learning_rate=de_cfg["learning_rate"], seed=seed,
                        temperature_init=de_cfg["temperature_init"],
                        embed_dim=de_cfg["embed_dim"]),
            hidden=tuple(de_cfg["hidden"]), pool=de_cfg["pool"])
        save_encoder(out_dir / "encoder.rozm", enc)
        return load_encoder(out_dir / "encoder.rozm"), ["encoder.rozm"]

    encoder = _stage(ledger, "train-encoder", de_hash, out_dir, produce_encoder,
                     lambda: load_encoder(out_dir / "encoder.rozm"))

    prompts = config["zero_shot"]["prompts"]
    zero_shot = synthesize_zero_shot_classifier(
        encoder, [prompts] * len(train.class_names), train.class_names)

    ty_cfg = config["typographic"]
    ty_hash = hash_text(canonical_json([ty_cfg, seed, test.content_hash()]))

    def produce_typo():
        typo, manifest = generate_typographic_dataset(
            test, TypographicSpec(k_coords=ty_cfg["k_coords"],
                                  font_scale=ty_cfg["font_scale"], seed=seed))
        save_dataset(out_dir / "typographic", typo, generator=manifest)
        outputs = [f"typographic/{p.name}"
                   for p in sorted((out_dir / "typographic").iterdir())]
        return (typo, manifest), outputs

    def reload_typo():
        typo, manifest = load_dataset(out_dir / "typographic")
        return typo, manifest["generator"]

    typo, typo_manifest = _stage(ledger, "typographic", ty_hash, out_dir,
                                 produce_typo, reload_typo)

    # evaluations (cheap; always recomputed)
    runs = []
    models = {"supervised": supervised, "zero_shot": zero_shot}
    for name, model in models.items():
        rec = evaluate_accuracy(model, test)
        runs.append({"model": name, "model_id": model.snapshot_id,
                     "dataset": "test", "dataset_id": rec.dataset_id,
                     "kind": "standard", "accuracy": rec.accuracy})
    typo_success = {}
    for name, model in models.items():
        preds = _predictions(model, typo, workers)
        acc = float(np.mean([p == ex.label for p, ex in zip(preds, typo)]))
        success = targeted_success_rate(preds, typo_manifest["targets"])
        typo_success[name] = success
        runs.append({"model": name, "model_id": model.snapshot_id,
                     "dataset": "typographic", "dataset_id": typo.identity,
                     "kind": "shift", "accuracy": acc,
                     "targeted_success_rate": success})

    # attacks
    attack_rows = []
    attack_dir = out_dir / "attacks"
    for i, atk in enumerate(config["attacks"]):
        target_name = atk.get("target", "supervised")
        model = models[target_name]
        cfg = AttackConfig(method=atk["method"],
                           mode=atk.get("mode", "budgeted"),
                           epsilon=atk.get("epsilon", 8 / 255),
                           steps=atk.get("steps"),
                           est_samples=atk.get("est_samples"),
                           seed=seed)
        a_hash = hash_text(canonical_json([atk, seed, test.content_hash(),
                                           model.snapshot_id]))
        rel = f"attacks/{i:02d}-{cfg.method}.jsonl"

        def produce_attack(model=model, cfg=cfg, rel=rel):
            outcomes, summary = evaluate_under_attack(model, test, cfg,
                                                      workers=workers)
            attack_dir.mkdir(exist_ok=True)
            write_outcomes_jsonl(out_dir / rel, outcomes, cfg)
            return summary, [rel]

        def reload_attack(cfg=cfg, rel=rel):
            from ..attacks.runner import AttackSummary
            recs = [json.loads(line)
                    for line in (out_dir / rel).read_text().splitlines()]
            if cfg.mode == "min_perturbation":
                return AttackSummary(
                    robust_accuracy=None,
                    median_min_linf=float(np.median([r["linf"] for r in recs])),
                    unfound_count=sum(1 for r in recs if r["found_min"] is False),
                    clean_accuracy=float("nan"))
            return AttackSummary(
                robust_accuracy=float(np.mean([not r["success"] for r in recs])),
                median_min_linf=None, unfound_count=0, clean_accuracy=float("nan"))

        summary = _stage(ledger, f"attack-{i:02d}-{cfg.method}", a_hash, out_dir,
                         produce_attack, reload_attack)
        row = {"target": target_name, "method": cfg.method, "mode": cfg.mode,
               "epsilon": cfg.epsilon, "outcomes_file": rel,
               "robust_accuracy": summary.robust_accuracy,
               "median_min_linf": summary.median_min_linf,
               "unfound_count": summary.unfound_count}
        attack_rows.append(row)

    report = build_report(config, runs, attack_rows, typo_success,
                          datasets={"train": train.content_hash(),
                                    "test": test.content_hash(),
                                    "typographic": typo.content_hash()},
                          models={k: m.snapshot_id for k, m in models.items()})
    emitted = emit_report(report, config["report"]["formats"], out_dir)
    ledger.record("report", hash_text(canonical_json(report)),
                  {rel: hash_file(out_dir / rel) for rel in emitted}, 0.0)
    return report, ledger
