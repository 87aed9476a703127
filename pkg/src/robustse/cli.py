"""Command-line surface: synth / train / eval / bench / analyze.

Every command takes `--config FILE` (YAML, all sections optional) plus
repeatable `--set key=value` overrides; flags like `--seed`, `--scheme`,
`--loss`, and `--distance` are shorthand for the corresponding overrides
and win over both. Exit codes: 0 success, 1 usage or config problems,
2 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench as bench_mod
from . import config as config_mod
from .data import analyze_corpus, build_corpus, load_manifest, manifest_lines, plan_corpus, MANIFEST_NAME
from .errors import (
    CheckpointError,
    ConfigError,
    ManifestError,
    RecipeError,
    RobustSEError,
    TrainingDiverged,
)
from .evaluate import evaluate_checkpoint, render_table, write_report
from .train import train

USAGE_ERRORS = (ConfigError, RecipeError, ManifestError)


def _load_config(args) -> config_mod.ToolkitConfig:
    cfg = config_mod.load_config(getattr(args, "config", None))
    cfg = config_mod.apply_overrides(cfg, getattr(args, "set", None) or [])
    if getattr(args, "paper_scale", False):
        cfg = config_mod.apply_paper_scale(cfg)
    extra = []
    if getattr(args, "seed", None) is not None:
        extra += [f"train.seed={args.seed}", f"data.seed={args.seed}"]
    if getattr(args, "scheme", None):
        extra.append(f"train.scheme={args.scheme}")
    if getattr(args, "loss", None):
        extra.append(f"train.aggregation={args.loss}")
    if getattr(args, "distance", None):
        extra.append(f"train.distance={args.distance}")
    return config_mod.apply_overrides(cfg, extra)


def _manifest_path(corpus: str) -> str:
    if os.path.isdir(corpus):
        return os.path.join(corpus, MANIFEST_NAME)
    return corpus


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        for line in manifest_lines(plan_corpus(cfg.data)):
            print(line)
        return 0
    manifest = build_corpus(args.out, cfg.data)
    counts = {}
    for e in manifest.entries:
        counts[e.spec.category] = counts.get(e.spec.category, 0) + 1
    print(f"wrote {len(manifest.entries)} clips to {args.out} ({counts})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(_manifest_path(args.corpus))
    record = train(cfg, manifest, args.run_dir, resume=args.resume)
    print(
        f"done: best val {record.best_val:.6f} at epoch {record.best_epoch}, "
        f"stopped at {record.stopped_epoch}"
        f"{' (early)' if record.stopped_early else ''}"
    )
    print(f"best checkpoint: {record.best_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(_manifest_path(args.corpus))
    report = evaluate_checkpoint(args.checkpoint, manifest, split=args.split)
    print(render_table(report))
    if args.out:
        write_report(report, args.out)
        print(f"report written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    suite = bench_mod.load_suite(args.suite)
    result = bench_mod.run_suite(suite, cfg, args.out)
    print(bench_mod.render_suite_table(result))
    return 0 if result.ok else 2


def cmd_analyze(args) -> int:
    manifest = load_manifest(_manifest_path(args.corpus))
    reports = analyze_corpus(manifest)
    headers = ["clip", "split", "declared", "silence", "pure_noise", "clicks", "est_snr_db"]
    rows = []
    for r in reports:
        if r.error:
            rows.append([r.clip_id, r.split, r.category or "-", "error: " + r.error, "", "", ""])
            continue
        rows.append(
            [
                r.clip_id,
                r.split,
                r.category or "-",
                str(r.silence).lower(),
                str(r.pure_noise).lower(),
                str(r.click_count),
                "-" if r.est_snr_db is None else f"{r.est_snr_db:.1f}",
            ]
        )
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    print("  ".join(headers[i].ljust(widths[i]) for i in range(len(headers))))
    print("  ".join("-" * w for w in widths))
    for r in rows:
        print("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    if args.json:
        payload = [
            {
                "clip_id": r.clip_id,
                "split": r.split,
                "category": r.category,
                "silence": r.silence,
                "pure_noise": r.pure_noise,
                "click_count": r.click_count,
                "est_snr_db": r.est_snr_db,
                "error": r.error,
            }
            for r in reports
        ]
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="config override, e.g. train.lr=0.0005 (repeatable)",
    )
    p.add_argument("--seed", type=int, help="override train.seed and data.seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustse",
        description="Speech enhancement training with noise-robust losses and "
        "mixture-invariant schemes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--dry-run", action="store_true", help="print the manifest, write nothing")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="corpus directory or manifest path")
    p.add_argument("--run-dir", required=True, help="output directory for this run")
    p.add_argument("--scheme", choices=config_mod.SCHEMES, help="training scheme")
    p.add_argument("--loss", help="aggregation name, e.g. sample_median_tf_mean")
    p.add_argument("--distance", choices=("mse", "sdr"), help="per-bin distance")
    p.add_argument("--paper-scale", action="store_true", help="full-size regime")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--out", help="directory for report.json/report.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run an experiment suite and compare")
    _add_common(p)
    p.add_argument("--suite", required=True, help="suite YAML file")
    p.add_argument("--out", required=True, help="suite output directory")
    p.add_argument("--paper-scale", action="store_true", help="full-size regime")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="triage a corpus: silence/noise/clicks")
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", help="also write the report as JSON to this path")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; remap to the documented code 1.
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, CheckpointError, RobustSEError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
