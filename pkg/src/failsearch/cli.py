"""File-based command-line workflow: gen-data, train, search, analyze, campaign.

Every command writes its primary outputs plus a ``*.manifest.json`` holding the
resolved configuration, seed, input digests and timestamps. Primary outputs are
byte-identical for identical inputs and seed; timestamps live only in manifests.

Exit codes: 0 success, 1 validation error (including usage errors), 2 runtime error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys
import tempfile
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analysis, search, surrogate, testbed
from .errors import FailSearchError, ParseError, ValidationError
from .scenario import BUILTIN_SCHEMAS, FeatureSchema, config_from_json, config_to_json, load_schema

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default; usage problems are validation errors here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# file helpers -----------------------------------------------------------------------


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    except OSError as exc:
        raise OSError(exc.errno, exc.strerror, str(path)) from exc
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) or math.isinf(obj) else float(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def manifest_path(out) -> Path:
    out = Path(out)
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def write_manifest(out, command: str, config: dict, seed, inputs, started: str, outputs) -> Path:
    doc = {
        "tool": "failsearch",
        "version": tool_version(),
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): sha256_of(p) for p in inputs},
        "outputs": {str(p): sha256_of(p) for p in outputs},
        "started": started,
        "finished": _timestamp(),
    }
    path = manifest_path(out)
    atomic_write(path, dump_json(doc))
    return path


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _read_text(path) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: file not found") from exc


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def _resolve_schema(args) -> FeatureSchema:
    if getattr(args, "schema", None):
        return load_schema(args.schema)
    return testbed.make_env(args.env).schema


def _ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


# training logs ---------------------------------------------------------------------


def training_log_to_jsonl(log: testbed.TrainingLog, schema: FeatureSchema) -> str:
    return "".join(json.dumps({"config": config_to_json(c, schema), "failed": int(y)}) + "\n"
                   for c, y in zip(log.configs, log.labels))


def training_log_from_jsonl(text: str, schema: FeatureSchema) -> testbed.TrainingLog:
    configs, labels = [], []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {n}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict) or "config" not in doc or "failed" not in doc:
            raise ParseError(f"line {n}: expected an object with 'config' and 'failed'")
        configs.append(config_from_json(doc["config"], schema))
        labels.append(int(bool(doc["failed"])))
    return testbed.TrainingLog(configs, np.asarray(labels, dtype=int))


def _seed_configs(text: str, schema: FeatureSchema) -> list:
    """Failing configs from a training log; bare config lines count as failing seeds."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {n}: invalid JSON ({exc})") from exc
        if isinstance(doc, dict) and "config" in doc:
            if doc.get("failed", 1):
                out.append(config_from_json(doc["config"], schema))
        else:
            out.append(config_from_json(doc, schema))
    return out


# commands ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    started = _timestamp()
    env = testbed.make_env(args.env)
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    log = testbed.generate_training_log(env, args.n, args.seed)
    atomic_write(args.out, training_log_to_jsonl(log, env.schema))
    write_manifest(args.out, "gen-data", {"env": args.env, "n": args.n}, args.seed, [],
                   started, [args.out])
    print(f"wrote {args.n} records ({int(log.labels.sum())} failing) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = _timestamp()
    schema = _resolve_schema(args)
    log = training_log_from_jsonl(_read_text(args.log), schema)
    cfg = surrogate.TrainConfig(hidden=tuple(args.hidden), learning_rate=args.learning_rate,
                                epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    X = log.encoded(schema)
    model = surrogate.train(X, log.labels, cfg)
    acc = surrogate.accuracy(model, X, log.labels)
    atomic_write(args.out, surrogate.save_model(model))
    config = {"schema": schema.to_json(), "hidden": list(cfg.hidden),
              "learning_rate": cfg.learning_rate, "epochs": cfg.epochs,
              "batch_size": cfg.batch_size, "train_accuracy": acc}
    write_manifest(args.out, "train", config, args.seed, [args.log], started, [args.out])
    print(f"train accuracy {acc:.4f}; model written to {args.out}")
    return EXIT_OK


def _search_config(args) -> search.SearchConfig:
    return search.SearchConfig(
        test_runs=args.test_runs, generations=args.generations, population_size=args.population_size,
        crossover_rate=args.crossover_rate, tol=args.tol, n_last=args.n_last,
        reference_point=tuple(args.reference_point), algorithm=args.algorithm,
        diversity=args.diversity, strategy=args.select, seed=args.seed,
        mutation_breadth=args.mutation_breadth)


def cmd_search(args) -> int:
    started = _timestamp()
    schema = _resolve_schema(args)
    cfg = _search_config(args)
    model = surrogate.load_model(_read_text(args.model))
    seeds = _seed_configs(_read_text(args.seeds), schema)
    runner = search.run_baseline_ga if args.baseline else search.run_search
    result = runner(cfg, model, schema, seeds)
    out = _ensure_dir(args.out_dir)
    archive_path, log_path = out / "archive.jsonl", out / "search_log.csv"
    atomic_write(archive_path, search.archive_to_jsonl(result.archive, schema))
    atomic_write(log_path, result.log.to_csv())
    config = search.config_as_dict(cfg)
    config.update(baseline=bool(args.baseline), schema=schema.to_json())
    write_manifest(out, "search", config, args.seed, [args.model, args.seeds], started,
                   [archive_path, log_path])
    label = "baseline GA" if args.baseline else f"{cfg.algorithm}/{cfg.diversity}/{cfg.strategy}"
    print(f"{label}: archived {len(result.archive)} scenarios in {out}")
    return EXIT_OK


def analyze_archive(archive, env, seed=0) -> tuple[list, dict]:
    """Execute archived entries; return per-scenario rows and the metric summary."""
    records = testbed.execute_archive(env, [e.config for e in archive],
                                      [e.evaluations for e in archive])
    rows = [{"index": i, "config": config_to_json(r.config, env.schema), "failed": bool(r.failed),
             "reason": r.reason, "evaluations": r.evaluations, "trace_length": len(r.trajectory)}
            for i, r in enumerate(records)]
    if records:
        metrics = analysis.run_metrics(records, env.schema, seed=seed)
    else:
        metrics = {"total_failures": 0, "unique_failures": 0, "output_entropy": 0.0,
                   "unique_input_clusters": 0, "input_entropy": 0.0,
                   "ttf_evaluations": math.nan}
    # execution wall-clock is not recorded in archives, so seconds are not reported
    metrics.pop("ttf_seconds", None)
    metrics["scenarios"] = len(records)
    return rows, metrics


def cmd_analyze(args) -> int:
    started = _timestamp()
    env = testbed.make_env(args.env)
    archive = search.archive_from_jsonl(_read_text(args.archive), env.schema)
    rows, metrics = analyze_archive(archive, env, args.seed)
    out = _ensure_dir(args.out_dir)
    rec_path, met_path = out / "records.jsonl", out / "metrics.json"
    atomic_write(rec_path, "".join(json.dumps(_json_safe(r)) + "\n" for r in rows))
    atomic_write(met_path, dump_json(metrics))
    write_manifest(out, "analyze", {"env": args.env}, args.seed, [args.archive], started,
                   [rec_path, met_path])
    print(f"{metrics['total_failures']} of {len(rows)} scenarios failed; "
          f"{metrics['unique_failures']} unique failures")
    return EXIT_OK


def cmd_campaign(args) -> int:
    started = _timestamp()
    plan = testbed.CampaignPlan.from_json(_read_json(args.plan))
    report = testbed.run_campaign(plan)
    out = _ensure_dir(args.out_dir)
    csv_path, json_path = out / "campaign.csv", out / "summary.json"
    atomic_write(csv_path, report.to_csv())
    atomic_write(json_path, dump_json(report.to_json()))
    config = {k: list(v) if isinstance(v, tuple) else v for k, v in plan.__dict__.items()}
    write_manifest(out, "campaign", config, list(plan.seeds), [args.plan], started,
                   [csv_path, json_path])
    print(f"{len(report.rows)} campaign rows written to {out}")
    return EXIT_OK


# parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="failsearch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    envs = sorted(BUILTIN_SCHEMAS)

    g = sub.add_parser("gen-data", help="sample and execute scenarios into a training log")
    g.add_argument("--env", default="parking", choices=("parking", "walker"))
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="fit the surrogate classifier on a training log")
    t.add_argument("--log", required=True)
    t.add_argument("--env", default="parking", choices=envs)
    t.add_argument("--schema", help="schema JSON (overrides --env)")
    t.add_argument("--hidden", type=int, nargs="+", default=[64])
    t.add_argument("--learning-rate", type=float, default=0.1)
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    d = search.SearchConfig()
    s = sub.add_parser("search", help="run the restart-based search (or the GA baseline)")
    s.add_argument("--model", required=True)
    s.add_argument("--seeds", required=True, help="training log or JSON-lines of seed configs")
    s.add_argument("--env", default="parking", choices=envs)
    s.add_argument("--schema", help="schema JSON (overrides --env)")
    s.add_argument("--test-runs", type=int, default=d.test_runs)
    s.add_argument("--generations", type=int, default=d.generations)
    s.add_argument("--population-size", type=int, default=d.population_size)
    s.add_argument("--crossover-rate", type=float, default=d.crossover_rate)
    s.add_argument("--tol", type=float, default=d.tol)
    s.add_argument("--n-last", type=int, default=d.n_last)
    s.add_argument("--reference-point", type=float, nargs=2, default=list(d.reference_point))
    s.add_argument("--algorithm", choices=search.ALGORITHMS, default=d.algorithm)
    s.add_argument("--diversity", choices=search.DIVERSITY_METRICS, default=d.diversity)
    s.add_argument("--select", choices=search.STRATEGIES, default=d.strategy)
    s.add_argument("--mutation-breadth", type=float, default=d.mutation_breadth)
    s.add_argument("--baseline", action="store_true", help="single-objective GA instead")
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_search)

    a = sub.add_parser("analyze", help="execute an archive and report failure metrics")
    a.add_argument("--archive", required=True)
    a.add_argument("--env", default="parking", choices=("parking", "walker"))
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("campaign", help="approaches x seeds comparison at equal budget")
    c.add_argument("--plan", required=True)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_campaign)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValidationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FailSearchError, OSError, RuntimeError, ArithmeticError) as exc:
        where = f" ({exc.filename})" if isinstance(exc, OSError) and exc.filename else ""
        print(f"runtime error{where}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
