"""Command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 stage/runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attacks import AttackConfig, evaluate_under_attack, write_outcomes_jsonl
from .bridgecheck import run_conformance
from .dataio import load_dataset, save_dataset
from .dedup import (DEFAULT_THRESHOLD_GRID, build_embedding_index,
                    overlap_sweep_report, save_index)
from .errors import ConfigError, ShiftbenchError
from .harness.config import load_config
from .harness.pipeline import run_experiment
from .metrics import targeted_success_rate
from .models import (TrainConfig, load_classifier, load_encoder,
                     load_snapshot, save_classifier, save_encoder,
                     synthesize_zero_shot_classifier, train_classifier,
                     train_dual_encoder)
from .rng import substream
from .promptsearch import (PromptTemplate, SearchConfig, ZeroShotPromptObjective,
                           beam_search_prompts, save_prompt_set,
                           select_prompt_ensemble)
from .shifts import (CorruptionSpec, TypographicSpec, build_caption_corpus,
                     corrupt_dataset, generate_typographic_dataset,
                     generate_toy_dataset)

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _load_model(path, dataset=None, prompt="a photo of a {label}"):
    """Classifier from a snapshot; dual-encoder snapshots become zero-shot
    classifiers over the dataset's class names."""
    manifest, _ = load_snapshot(path)
    if manifest["kind"] == "feed_forward":
        return load_classifier(path)
    if dataset is None:
        raise ConfigError("a dual-encoder snapshot needs a dataset for class names")
    encoder = load_encoder(path)
    return synthesize_zero_shot_classifier(
        encoder, [[prompt]] * dataset.n_classes, dataset.class_names)


def cmd_gen_toy(args):
    ds = generate_toy_dataset(args.classes, args.n_per_class, args.image_size,
                              args.shift, args.seed)
    save_dataset(args.out, ds, generator={"kind": "toy_shapes",
                                          "shift_variant": args.shift,
                                          "seed": args.seed})
    print(f"wrote {len(ds)} images to {args.out} ({ds.identity})")


def cmd_typo_gen(args):
    ds, _ = load_dataset(args.dataset)
    typo, manifest = generate_typographic_dataset(
        ds, TypographicSpec(k_coords=args.k_coords, font_scale=args.font_scale,
                            seed=args.seed))
    save_dataset(args.out, typo, generator=manifest)
    print(f"wrote {len(typo)} typographic images to {args.out}")


def cmd_corrupt(args):
    ds, _ = load_dataset(args.dataset)
    out = corrupt_dataset(ds, CorruptionSpec(args.kind, args.severity), args.seed)
    save_dataset(args.out, out, generator={"kind": args.kind,
                                           "severity": args.severity,
                                           "seed": args.seed})
    print(f"wrote {len(out)} corrupted images to {args.out}")


def cmd_train(args):
    ds, _ = load_dataset(args.dataset)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.learning_rate, seed=args.seed,
                      embed_dim=args.embed_dim)
    if args.arch == "dual-encoder":
        pairs = build_caption_corpus(ds, seed=args.seed)
        encoder = train_dual_encoder(pairs, cfg, hidden=tuple(args.hidden),
                                     pool=args.pool)
        save_encoder(args.out, encoder)
        print(f"wrote dual encoder {encoder.snapshot_id} to {args.out}")
    else:
        model = train_classifier(ds, arch=args.arch, config=cfg,
                                 hidden=tuple(args.hidden), pool=args.pool)
        save_classifier(args.out, model)
        acc = model.accuracy(ds)
        print(f"wrote classifier {model.snapshot_id} to {args.out} "
              f"(train accuracy {acc:.3f})")


def cmd_promptsearch(args):
    ds, _ = load_dataset(args.dataset)
    encoder = load_encoder(args.encoder)
    cfg = SearchConfig(top_k=args.top_k, beam_size=args.beam_size,
                       steps=args.steps, template=args.template,
                       init_text=args.init_text,
                       scoring_batch_size=args.batch_size,
                       ensemble_size=args.ensemble_size, seed=args.seed)
    template = PromptTemplate.parse(cfg.template)
    # seeded holdout: search scores on one split, selection validates on the other
    n_val = min(args.validation_size, max(1, len(ds) // 4))
    order = substream(cfg.seed, "promptsearch-holdout").permutation(len(ds))
    val = ds.subset(sorted(order[:n_val]), name=f"{ds.name}-val")
    scoring = ds.subset(sorted(order[n_val:]), name=f"{ds.name}-scoring")
    objective = ZeroShotPromptObjective(encoder, scoring, template,
                                        batch_size=cfg.scoring_batch_size,
                                        seed=cfg.seed)
    init = encoder.tokenizer.encode(cfg.init_text)
    if len(init) != template.trigger_count:
        raise ConfigError(f"init text tokenizes to {len(init)} tokens; template "
                          f"has {template.trigger_count} trigger slots")
    result = beam_search_prompts(objective, init, cfg)
    candidates = result.per_step_best + [seq for _, seq in result.ranked]
    ensemble = select_prompt_ensemble(candidates, encoder, val,
                                      cfg.ensemble_size, template)
    save_prompt_set(args.out, ensemble, cfg)
    print(f"wrote {len(ensemble.sequences)} prompts to {args.out}; "
          f"best validation accuracy {max(ensemble.validation_accuracy):.3f}")


def cmd_attack(args):
    ds, _ = load_dataset(args.dataset)
    model = _load_model(args.model, ds, args.prompt)
    cfg = AttackConfig(method=args.method, mode=args.mode, epsilon=args.epsilon,
                       steps=args.steps, est_samples=args.est_samples,
                       seed=args.seed)
    outcomes, summary = evaluate_under_attack(model, ds, cfg, workers=args.workers)
    if args.out:
        write_outcomes_jsonl(args.out, outcomes, cfg)
    if cfg.mode == "budgeted":
        print(f"robust accuracy at eps={cfg.epsilon:.5f}: {summary.robust_accuracy:.4f} "
              f"(clean {summary.clean_accuracy:.4f})")
    else:
        print(f"median minimum linf distance: {summary.median_min_linf:.6f} "
              f"({summary.unfound_count} unfound)")


def cmd_dedup(args):
    test_ds, _ = load_dataset(args.test)
    train_ds, _ = load_dataset(args.train)
    encoder = load_encoder(args.encoder)
    test_idx = build_embedding_index(encoder, test_ds)
    train_idx = build_embedding_index(encoder, train_ds)
    if args.index_out:
        save_index(args.index_out, test_idx)
    model = _load_model(args.model, test_ds, args.prompt) if args.model else None
    thresholds = args.thresholds or list(DEFAULT_THRESHOLD_GRID)
    if model is None:
        from .dedup import detect_overlaps
        rows = [{"threshold": t,
                 "overlap_pct": 100.0 * len(detect_overlaps(test_idx, train_idx, t))
                 / len(test_ds)} for t in thresholds]
    else:
        reports = overlap_sweep_report(model, test_ds, test_idx, train_idx,
                                       thresholds)
        rows = [{"threshold": r.threshold,
                 "overlap_pct": 100.0 * r.overlap_fraction,
                 "acc_full": r.accuracy_full,
                 "acc_clean": r.accuracy_cleaned} for r in reports]
    doc = json.dumps(rows, indent=1, sort_keys=True)
    if args.out:
        base = Path(args.out)
        if base.suffix:
            base = base.with_suffix("")
        base.with_suffix(".json").write_text(doc)
        import csv as _csv
        with open(base.with_suffix(".csv"), "w", newline="") as f:
            w = _csv.DictWriter(f, fieldnames=sorted({k for r in rows for k in r}))
            w.writeheader()
            w.writerows(rows)
    print(doc)


def cmd_eval(args):
    ds, _ = load_dataset(args.dataset)
    model = _load_model(args.model, ds, args.prompt)
    acc = model.accuracy(ds)
    line = f"accuracy: {acc:.4f}"
    targets = [ex.target for ex in ds]
    if all(t is not None for t in targets):
        preds = [model.predict(ex.image) for ex in ds]
        line += f"  targeted success rate: {targeted_success_rate(preds, targets):.4f}"
    print(line)


def cmd_report(args):
    if not args.config:
        raise ConfigError("report needs --config pointing to an experiment document")
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.workers is not None:
        config["workers"] = args.workers
    out_dir = args.out or config.get("output_dir") or "run-output"
    report, _ = run_experiment(config, out_dir)
    derived = report.get("derived", {})
    print(f"report written to {Path(out_dir) / 'report.json'}")
    if "typographic" in derived:
        t = derived["typographic"]
        print(f"typographic success: zero-shot {t['zero_shot_success_rate']:.3f} "
              f"vs supervised {t['supervised_success_rate']:.3f}")


def cmd_bridge_check(args):
    endpoint = args.endpoint
    results = run_conformance(endpoint, snapshot=args.snapshot,
                              timeout=args.timeout)
    failed = [r for r in results if not r.ok]
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        print(f"[{mark}] {r.name}" + (f": {r.detail}" if r.detail else ""))
    if failed:
        raise ShiftbenchError(f"{len(failed)} conformance checks failed")
    print(f"all {len(results)} conformance checks passed")


def _common(sp: argparse.ArgumentParser) -> argparse.ArgumentParser:
    # the global flags are accepted after the subcommand too; SUPPRESS keeps
    # a root-level value when the subcommand omits the flag
    sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--config", type=str, default=argparse.SUPPRESS)
    sp.add_argument("--out", type=str, default=argparse.SUPPRESS)
    return sp


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shiftbench",
                                description="desk-scale robustness evaluation toolkit")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    sub = p.add_subparsers(dest="command", required=True)

    g = _common(sub.add_parser("gen-toy", help="generate the toy shapes dataset"))
    g.add_argument("--classes", nargs="+", default=["ring", "cross", "disk", "bars"])
    g.add_argument("--n-per-class", type=int, default=100)
    g.add_argument("--image-size", type=int, default=32)
    g.add_argument("--shift", default="none",
                   choices=["none", "background", "texture"])
    g.set_defaults(fn=cmd_gen_toy)

    g = _common(sub.add_parser("typo-gen", help="render typographic attack targets"))
    g.add_argument("--dataset", required=True)
    g.add_argument("--k-coords", type=int, default=4)
    g.add_argument("--font-scale", type=int, default=None)
    g.set_defaults(fn=cmd_typo_gen)

    g = _common(sub.add_parser("corrupt", help="apply one corruption at one severity"))
    g.add_argument("--dataset", required=True)
    g.add_argument("--kind", required=True)
    g.add_argument("--severity", type=int, required=True)
    g.set_defaults(fn=cmd_corrupt)

    g = _common(sub.add_parser("train", help="train a classifier or dual encoder"))
    g.add_argument("--dataset", required=True)
    g.add_argument("--arch", default="mlp", choices=["linear", "mlp", "dual-encoder"])
    g.add_argument("--hidden", type=int, nargs="*", default=[64])
    g.add_argument("--pool", type=int, default=2)
    g.add_argument("--epochs", type=int, default=30)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--learning-rate", type=float, default=0.05)
    g.add_argument("--embed-dim", type=int, default=32)
    g.set_defaults(fn=cmd_train)

    g = _common(sub.add_parser("promptsearch", help="gradient-guided trigger token search"))
    g.add_argument("--encoder", required=True)
    g.add_argument("--dataset", required=True)
    g.add_argument("--top-k", type=int, default=20)
    g.add_argument("--beam-size", type=int, default=5)
    g.add_argument("--steps", type=int, default=4)
    g.add_argument("--template", default="[T][T][T][T][C]")
    g.add_argument("--init-text", default="A photo of a")
    g.add_argument("--batch-size", type=int, default=512)
    g.add_argument("--ensemble-size", type=int, default=5)
    g.add_argument("--validation-size", type=int, default=1000)
    g.set_defaults(fn=cmd_promptsearch)

    g = _common(sub.add_parser("attack", help="run one attack over a dataset"))
    g.add_argument("--model", required=True)
    g.add_argument("--dataset", required=True)
    g.add_argument("--method", required=True)
    g.add_argument("--mode", default="budgeted",
                   choices=["budgeted", "min_perturbation"])
    g.add_argument("--epsilon", type=float, default=8 / 255)
    g.add_argument("--steps", type=int, default=None)
    g.add_argument("--est-samples", type=int, default=None)
    g.add_argument("--prompt", default="a photo of a {label}")
    g.set_defaults(fn=cmd_attack)

    g = _common(sub.add_parser("dedup", help="embedding-similarity overlap sweep"))
    g.add_argument("--encoder", required=True)
    g.add_argument("--test", required=True)
    g.add_argument("--train", required=True)
    g.add_argument("--model", default=None)
    g.add_argument("--prompt", default="a photo of a {label}")
    g.add_argument("--thresholds", type=float, nargs="*", default=None)
    g.add_argument("--index-out", default=None)
    g.set_defaults(fn=cmd_dedup)

    g = _common(sub.add_parser("eval", help="clean accuracy (+ targeted success rate)"))
    g.add_argument("--model", required=True)
    g.add_argument("--dataset", required=True)
    g.add_argument("--prompt", default="a photo of a {label}")
    g.set_defaults(fn=cmd_eval)

    g = _common(sub.add_parser("report", help="run the configured experiment pipeline"))
    g.set_defaults(fn=cmd_report)

    g = _common(sub.add_parser("bridge-check", help="protocol conformance against a peer"))
    g.add_argument("--endpoint", required=True,
                   help="tcp:HOST:PORT or cmd:'<command>'")
    g.add_argument("--snapshot", default=None,
                   help="native snapshot for parity checks")
    g.add_argument("--timeout", type=float, default=30.0)
    g.set_defaults(fn=cmd_bridge_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    if args.seed is None:
        args.seed = 0
    if getattr(args, "workers", None) is None and args.fn is not cmd_report:
        args.workers = 1
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShiftbenchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
