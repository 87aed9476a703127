"""Experiment suites: several training runs on one corpus, compared.

A suite file is YAML:

    corpus:            # overrides for the `data` config section
      n_clips: 200
    runs:
      - name: mean_mse
        config:        # nested config overrides for this run
          train: {aggregation: sample_tf_mean}
      - name: median_mse
        config:
          train: {aggregation: sample_median_tf_mean}
    seeds: [0, 1, 2]   # optional; each run is repeated per seed and averaged
    assertions:
      - {type: ge_by, metric: mean_improvement, run: median_mse,
         than: mean_mse, margin: 0.5}
      - {type: lt, metric: leak_x3, run: mixit_aug, than: mixit}

Each (run, seed) trains into its own directory and is scored on the test
split; per-run metrics are means over seeds. A run that fails to train is
marked failed and the others continue. Assertions compare per-run means
and print PASS/FAIL; any FAIL or failed run makes the suite unsuccessful.
"""

from __future__ import annotations

import os
import traceback
from dataclasses import dataclass, field

import numpy as np
import yaml

from .config import ToolkitConfig, apply_overrides, from_dict, to_dict
from .data import build_corpus, load_manifest, MANIFEST_NAME
from .errors import ConfigError, RobustSEError
from .evaluate import evaluate_checkpoint
from .train import train

METRICS = ("mean_improvement", "mean_si_sdr", "mean_seg_snr", "leak_x1", "leak_x2", "leak_x3")


@dataclass(frozen=True)
class SuiteRun:
    name: str
    config: dict


@dataclass(frozen=True)
class Assertion:
    type: str  # "ge_by" or "lt"
    metric: str
    run: str
    than: str
    margin: float = 0.0

    def __post_init__(self):
        if self.type not in ("ge_by", "lt"):
            raise ConfigError(f"unknown assertion type {self.type!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown assertion metric {self.metric!r}")


@dataclass(frozen=True)
class ExperimentSuite:
    runs: tuple
    corpus_overrides: dict
    seeds: tuple = (0,)
    assertions: tuple = ()

    def __post_init__(self):
        names = [r.name for r in self.runs]
        if len(set(names)) != len(names):
            raise ConfigError(f"run names must be unique, got {names}")
        if not self.runs:
            raise ConfigError("a suite needs at least one run")


@dataclass
class RunResult:
    name: str
    failed: bool = False
    error: str = ""
    metrics: dict = field(default_factory=dict)  # metric -> mean over seeds
    per_seed: list = field(default_factory=list)


@dataclass
class SuiteResult:
    runs: list
    assertion_lines: list
    ok: bool


def load_suite(path) -> ExperimentSuite:
    try:
        with open(str(path)) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read suite {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"suite {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict) or "runs" not in raw:
        raise ConfigError(f"suite {path} must be a mapping with a 'runs' list")
    runs = []
    for item in raw["runs"]:
        if not isinstance(item, dict) or "name" not in item:
            raise ConfigError(f"each suite run needs a name, got {item!r}")
        runs.append(SuiteRun(name=str(item["name"]), config=item.get("config") or {}))
    assertions = tuple(
        Assertion(
            type=a["type"],
            metric=a["metric"],
            run=a["run"],
            than=a["than"],
            margin=float(a.get("margin", 0.0)),
        )
        for a in raw.get("assertions") or []
    )
    seeds = tuple(int(s) for s in raw.get("seeds") or [0])
    suite = ExperimentSuite(
        runs=tuple(runs),
        corpus_overrides=raw.get("corpus") or {},
        seeds=seeds,
        assertions=assertions,
    )
    run_names = {r.name for r in suite.runs}
    for a in assertions:
        if a.run not in run_names or a.than not in run_names:
            raise ConfigError(f"assertion references unknown run: {a}")
    return suite


def _metric_value(report, metric: str):
    if metric.startswith("leak_x"):
        if report.mean_leak is None:
            return None
        return report.mean_leak[int(metric[-1]) - 1]
    return getattr(report, metric)


def run_suite(suite: ExperimentSuite, base_cfg: ToolkitConfig, out_dir) -> SuiteResult:
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)

    corpus_cfg_dict = to_dict(base_cfg)
    for k, v in suite.corpus_overrides.items():
        if k not in corpus_cfg_dict["data"]:
            raise ConfigError(f"unknown corpus key data.{k}")
        corpus_cfg_dict["data"][k] = v
    corpus_cfg = from_dict(corpus_cfg_dict)
    corpus_dir = os.path.join(out_dir, "corpus")
    manifest_path = os.path.join(corpus_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        manifest = load_manifest(manifest_path)
    else:
        manifest = build_corpus(corpus_dir, corpus_cfg.data)

    results = []
    for run in suite.runs:
        result = RunResult(name=run.name)
        per_seed_metrics = []
        for seed in suite.seeds:
            run_dir = os.path.join(out_dir, run.name, f"seed{seed}")
            try:
                cfg_dict = to_dict(corpus_cfg)
                for section, values in (run.config or {}).items():
                    if section not in cfg_dict:
                        raise ConfigError(f"unknown config section {section!r} in run {run.name}")
                    _deep_update(cfg_dict[section], values, section)
                cfg = from_dict(cfg_dict)
                cfg = apply_overrides(cfg, [f"train.seed={seed}"])
                record = train(cfg, manifest, run_dir, quiet=True)
                report = evaluate_checkpoint(record.best_checkpoint, manifest, split="test")
                per_seed_metrics.append(
                    {m: _metric_value(report, m) for m in METRICS}
                )
            except RobustSEError as exc:
                result.failed = True
                result.error = str(exc)
                break
            except Exception as exc:  # keep other runs alive
                result.failed = True
                result.error = f"{type(exc).__name__}: {exc}"
                traceback.print_exc()
                break
        if not result.failed:
            result.per_seed = per_seed_metrics
            for m in METRICS:
                vals = [s[m] for s in per_seed_metrics if s[m] is not None]
                result.metrics[m] = float(np.mean(vals)) if vals else None
        results.append(result)

    lines, ok = _check_assertions(suite, results)
    if any(r.failed for r in results):
        ok = False
    return SuiteResult(runs=results, assertion_lines=lines, ok=ok)


def _deep_update(dst: dict, src: dict, prefix: str) -> None:
    if not isinstance(src, dict):
        raise ConfigError(f"suite config section {prefix!r} must be a mapping")
    for k, v in src.items():
        if k not in dst:
            raise ConfigError(f"unknown config key {prefix}.{k}")
        if isinstance(dst[k], dict):
            _deep_update(dst[k], v, f"{prefix}.{k}")
        else:
            dst[k] = v


def _check_assertions(suite: ExperimentSuite, results: list) -> tuple[list, bool]:
    by_name = {r.name: r for r in results}
    lines = []
    ok = True
    for a in suite.assertions:
        lhs_run, rhs_run = by_name[a.run], by_name[a.than]
        if lhs_run.failed or rhs_run.failed:
            lines.append(f"FAIL  {_describe(a)} (a run failed)")
            ok = False
            continue
        lhs = lhs_run.metrics.get(a.metric)
        rhs = rhs_run.metrics.get(a.metric)
        if lhs is None or rhs is None:
            lines.append(f"FAIL  {_describe(a)} (metric unavailable)")
            ok = False
            continue
        if a.type == "ge_by":
            passed = lhs >= rhs + a.margin
        else:
            passed = lhs < rhs
        lines.append(
            f"{'PASS' if passed else 'FAIL'}  {_describe(a)}  [{lhs:.4f} vs {rhs:.4f}]"
        )
        ok = ok and passed
    return lines, ok


def _describe(a: Assertion) -> str:
    if a.type == "ge_by":
        return f"{a.metric}({a.run}) >= {a.metric}({a.than}) + {a.margin}"
    return f"{a.metric}({a.run}) < {a.metric}({a.than})"


def render_suite_table(result: SuiteResult) -> str:
    """One row per run; the best value per metric column gets a '*'."""
    headers = ["run", "status"] + list(METRICS)
    best = {}
    for m in METRICS:
        vals = [
            (r.metrics.get(m), r.name)
            for r in result.runs
            if not r.failed and r.metrics.get(m) is not None
        ]
        if vals:
            # Leak is better small; everything else better large.
            pick = min(vals)[1] if m.startswith("leak") else max(vals)[1]
            best[m] = pick
    rows = []
    for r in result.runs:
        if r.failed:
            rows.append([r.name, "failed"] + ["-"] * len(METRICS))
            continue
        row = [r.name, "ok"]
        for m in METRICS:
            v = r.metrics.get(m)
            cell = "-" if v is None else f"{v:.4f}"
            if best.get(m) == r.name:
                cell += "*"
            row.append(cell)
        rows.append(row)
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    out = ["  ".join(headers[i].ljust(widths[i]) for i in range(len(headers)))]
    out.append("  ".join("-" * w for w in widths))
    for r in rows:
        out.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    for r in result.runs:
        if r.failed:
            out.append(f"run {r.name} failed: {r.error}")
    out.extend(result.assertion_lines)
    return "\n".join(out)
