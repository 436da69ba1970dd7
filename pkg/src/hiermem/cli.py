"""Command-line interface.

Subcommands: `cv` (cross-validation), `sweep contamination|memory|ablation`
(experiment protocols), `gradcheck` (gradient verification). Every value is
resolved as flag > config file > built-in default, and every run writes a
manifest recording the resolved configuration with per-field provenance plus
a `resolved.cfg` that replays the run bit-identically (wall-clock aside) when
passed back through --config.

Human-readable text goes to stdout, diagnostics to stderr, reports only to
files. Exit codes: 0 success, 1 failed checks or runtime errors, 2 bad
configuration or unreadable data.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import __version__
from .data import (dataset_checksum, export_folds_csv, make_er_dataset,
                   make_folds, parse_tudataset)
from .errors import (CheckpointError, ConfigurationError, DatasetParseError,
                     StructuralError, TrainingDiverged)
from .evaluation import (EvalReport, run_ablation, run_contamination_sweep,
                         run_cv, run_memory_sweep, write_history_csv,
                         write_report_csv, write_report_json)
from .gradcheck import DEFAULT_TOL, check_suite
from .model import VARIANTS
from .training import TrainConfig

MANIFEST_SCHEMA_VERSION = 1


def parse_int_list(text: str) -> list[int]:
    """Comma-separated integers, each token optionally a 'lo..hi' range."""
    out: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if ".." in token:
            lo_s, hi_s = token.split("..", 1)
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                raise ConfigurationError(f"bad range {token!r}") from None
            if hi < lo:
                raise ConfigurationError(f"empty range {token!r}")
            out.extend(range(lo, hi + 1))
        else:
            try:
                out.append(int(token))
            except ValueError:
                raise ConfigurationError(f"bad integer {token!r}") from None
    if not out:
        raise ConfigurationError("empty integer list")
    return out


def parse_float_list(text: str) -> list[float]:
    try:
        values = [float(t.strip()) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise ConfigurationError(f"bad number list {text!r}") from None
    if not values:
        raise ConfigurationError("empty number list")
    return values


def parse_str_list(text: str) -> list[str]:
    values = [t.strip() for t in text.split(",") if t.strip()]
    if not values:
        raise ConfigurationError("empty list")
    return values


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"bad boolean {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(_fmt(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class Field:
    name: str                      # flag spelling, without leading dashes
    parse: Callable[[str], object]
    default: object
    help: str
    is_flag: bool = False          # boolean presence flag


FIELDS: dict[str, Field] = {f.name: f for f in [
    Field("dataset", str, None, "dataset name (TUDataset directory name)"),
    Field("data-dir", str, "data", "directory holding dataset directories"),
    Field("folds", int, 5, "number of cross-validation folds"),
    Field("seed", int, 0, "run seed; fold f trains under seed+f"),
    Field("epochs", int, 100, "training epochs per fold"),
    Field("lr", float, 1e-3, "Adam learning rate"),
    Field("batch-size", int, 300, "training batch size"),
    Field("alpha", float, 0.01, "entropy term weight in the training loss"),
    Field("shrink-lambda", float, 0.01, "attention hard-shrink threshold"),
    Field("p", parse_int_list, [3], "node memory block count(s), e.g. 3 or 1..6"),
    Field("q", parse_int_list, [3], "graph memory block count(s)"),
    Field("tau", parse_float_list, [0.0], "contamination rate(s) in percent"),
    Field("variant", parse_str_list, ["full"],
          "model variant(s): " + ", ".join(VARIANTS)),
    Field("jobs", int, 1, "worker processes for fold-parallel training"),
    Field("out-dir", str, "runs", "directory for run outputs"),
    Field("eps", float, 1e-5, "finite-difference step (gradcheck)"),
    Field("seeds", int, 10, "number of random seeds (gradcheck)"),
    Field("unmasked-losses", None, False,
          "include padded entries in reconstruction losses", True),
    Field("normalize-losses", None, False,
          "divide loss terms by their entry counts", True),
]}

_COMMON = ["dataset", "data-dir", "folds", "seed", "epochs", "lr",
           "batch-size", "alpha", "shrink-lambda", "p", "q", "tau", "variant",
           "jobs", "out-dir", "unmasked-losses", "normalize-losses"]
_GRADCHECK = ["eps", "seeds", "seed", "out-dir"]


def _attr(name: str) -> str:
    return name.replace("-", "_")


def read_config_file(path, allowed: list[str]) -> dict[str, str]:
    """Flat `key=value` lines; keys mirror flag names; # starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    values: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{p}:{lineno}: expected key=value")
        key, _, raw = stripped.partition("=")
        key = key.strip().lstrip("-")
        if key not in FIELDS:
            raise ConfigurationError(f"{p}:{lineno}: unknown key {key!r}")
        if key not in allowed:
            raise ConfigurationError(
                f"{p}:{lineno}: key {key!r} does not apply to this command")
        values[key] = raw.strip()
    return values


def resolve_fields(args: argparse.Namespace,
                   names: list[str]) -> tuple[dict, dict]:
    """Apply flag > config-file > default; returns (values, provenance)."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = read_config_file(args.config, names)
    values: dict[str, object] = {}
    provenance: dict[str, str] = {}
    for name in names:
        field = FIELDS[name]
        flag_val = getattr(args, _attr(name), None)
        if flag_val is not None:
            values[name] = flag_val if field.is_flag else field.parse(flag_val)
            provenance[name] = "flag"
        elif name in file_values:
            raw = file_values[name]
            values[name] = _parse_bool(raw) if field.is_flag else field.parse(raw)
            provenance[name] = "config"
        else:
            values[name] = field.default
            provenance[name] = "default"
    return values, provenance


def _add_flags(parser: argparse.ArgumentParser, names: list[str]) -> None:
    parser.add_argument("--config", default=None,
                        help="flat key=value config file (flags still win)")
    for name in names:
        field = FIELDS[name]
        if field.is_flag:
            parser.add_argument(f"--{name}", action="store_const", const=True,
                                default=None, help=field.help)
        else:
            parser.add_argument(f"--{name}", type=str, default=None,
                                help=field.help + f" (default: {_fmt(field.default)})")


def _single(values: dict, key: str):
    v = values[key]
    if len(v) != 1:
        raise ConfigurationError(
            f"--{key} takes a single value here, got {_fmt(v)}")
    return v[0]


def build_train_config(values: dict, p: int, q: int, variant: str) -> TrainConfig:
    return TrainConfig(
        epochs=values["epochs"], batch_size=values["batch-size"],
        learning_rate=values["lr"], alpha=values["alpha"],
        shrink_lambda=values["shrink-lambda"], num_node_memory=p,
        num_graph_memory=q, seed=values["seed"], variant=variant,
        masked_losses=not values["unmasked-losses"],
        normalize_losses=values["normalize-losses"])


def load_dataset(values: dict):
    name = values["dataset"]
    if not name:
        raise ConfigurationError("--dataset is required")
    if name == "synthetic-er":
        ds = make_er_dataset(100, 40, seed=values["seed"])
        checksum = f"synthetic-er:normal=100,anomalous=40,seed={values['seed']}"
        return ds, checksum
    ds = parse_tudataset(values["data-dir"], name)
    return ds, dataset_checksum(values["data-dir"], name)


def write_resolved_cfg(path: Path, values: dict) -> None:
    lines = [f"{name}={_fmt(val)}" for name, val in values.items()]
    path.write_text("\n".join(lines) + "\n")


def write_manifest(out_dir: Path, command: str, values: dict, provenance: dict,
                   checksum: str, outputs: list[str]) -> None:
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "command": command,
        "version": __version__,
        "seed": values.get("seed"),
        "dataset": values.get("dataset"),
        "dataset_checksum": checksum,
        "resolved_config": {k: v for k, v in values.items()},
        "provenance": provenance,
        "outputs": sorted(outputs),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _report_files(out_dir: Path, stem: str, report: EvalReport) -> list[str]:
    paths = [out_dir / f"{stem}.json", out_dir / f"{stem}.csv",
             out_dir / f"history-{stem}.csv"]
    write_report_json(report, paths[0])
    write_report_csv(report, paths[1])
    write_history_csv(report, paths[2])
    return [p.name for p in paths]


def _run_dir(values: dict, command: str) -> Path:
    d = Path(values["out-dir"]) / f"{command}-{values['dataset']}-s{values['seed']}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_cv(args: argparse.Namespace) -> int:
    values, provenance = resolve_fields(args, _COMMON)
    p = _single(values, "p")
    q = _single(values, "q")
    variant = _single(values, "variant")
    tau = _single(values, "tau")
    config = build_train_config(values, p, q, variant)
    dataset, checksum = load_dataset(values)
    report = run_cv(dataset, config, k=values["folds"], seed=values["seed"],
                    tau=tau, jobs=values["jobs"])
    out_dir = _run_dir(values, "cv")
    outputs = _report_files(out_dir, "report", report)
    folds_path = out_dir / "folds.csv"
    export_folds_csv(make_folds(dataset, values["folds"], values["seed"]),
                     folds_path)
    outputs.append(folds_path.name)
    write_resolved_cfg(out_dir / "resolved.cfg", values)
    outputs.append("resolved.cfg")
    write_manifest(out_dir, "cv", values, provenance, checksum, outputs)
    print(f"cv {dataset.name}: mean AUC {report.mean_auc:.4f} "
          f"+/- {report.std_auc:.4f} over {values['folds']} folds")
    for f, auc in enumerate(report.per_fold_auc):
        print(f"  fold {f}: auc={auc:.4f}")
    print(f"outputs: {out_dir}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    values, provenance = resolve_fields(args, _COMMON)
    dataset, checksum = load_dataset(values)
    k, seed, jobs = values["folds"], values["seed"], values["jobs"]
    out_dir = _run_dir(values, f"sweep-{args.protocol}")
    outputs: list[str] = []
    index: list[dict] = []

    if args.protocol == "contamination":
        p, q = _single(values, "p"), _single(values, "q")
        variant = _single(values, "variant")
        config = build_train_config(values, p, q, variant)
        reports = run_contamination_sweep(dataset, config, values["tau"],
                                          k, seed, jobs=jobs)
        for tau, report in zip(values["tau"], reports):
            stem = f"report-tau{_fmt(tau)}"
            outputs += _report_files(out_dir, stem, report)
            index.append({"tau": tau, "mean_auc": report.mean_auc,
                          "std_auc": report.std_auc, "report": f"{stem}.json"})
            print(f"tau={_fmt(tau)}%: mean AUC {report.mean_auc:.4f} "
                  f"+/- {report.std_auc:.4f}")
    elif args.protocol == "memory":
        variant = _single(values, "variant")
        config = build_train_config(values, values["p"][0], values["q"][0],
                                    variant)
        grid = run_memory_sweep(dataset, config, values["p"], values["q"],
                                k, seed, jobs=jobs)
        for (p, q), report in grid.items():
            stem = f"report-p{p}-q{q}"
            outputs += _report_files(out_dir, stem, report)
            index.append({"p": p, "q": q, "mean_auc": report.mean_auc,
                          "std_auc": report.std_auc, "report": f"{stem}.json"})
            print(f"p={p} q={q}: mean AUC {report.mean_auc:.4f} "
                  f"+/- {report.std_auc:.4f}")
    else:  # ablation
        p, q = _single(values, "p"), _single(values, "q")
        config = build_train_config(values, p, q, "full")
        for variant in values["variant"]:
            report = run_ablation(dataset, config, variant, k, seed, jobs=jobs)
            stem = f"report-{variant}"
            outputs += _report_files(out_dir, stem, report)
            index.append({"variant": variant, "mean_auc": report.mean_auc,
                          "std_auc": report.std_auc, "report": f"{stem}.json"})
            print(f"variant={variant}: mean AUC {report.mean_auc:.4f} "
                  f"+/- {report.std_auc:.4f}")

    with open(out_dir / "index.json", "w") as fh:
        json.dump({"protocol": args.protocol, "cells": index}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")
    outputs.append("index.json")
    write_resolved_cfg(out_dir / "resolved.cfg", values)
    outputs.append("resolved.cfg")
    write_manifest(out_dir, f"sweep {args.protocol}", values, provenance,
                   checksum, outputs)
    print(f"outputs: {out_dir}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    values, provenance = resolve_fields(args, _GRADCHECK)
    base = values["seed"]
    results = check_suite(seeds=range(base, base + values["seeds"]),
                          eps=values["eps"])
    cases: dict[str, dict] = {}
    for r in results:
        entry = cases.setdefault(r.name, {"max_rel_err": 0.0, "passed": True,
                                          "per_param": {}})
        entry["max_rel_err"] = max(entry["max_rel_err"], r.max_rel_err)
        entry["passed"] = entry["passed"] and r.passed
        for pname, err in r.per_param.items():
            entry["per_param"][pname] = max(entry["per_param"].get(pname, 0.0),
                                            err)
    payload = {"eps": values["eps"], "seeds": values["seeds"],
               "base_seed": base, "tolerance": DEFAULT_TOL, "cases": cases,
               "all_passed": all(c["passed"] for c in cases.values())}
    print(json.dumps(payload, sort_keys=True, indent=2))
    out_dir = Path(values["out-dir"]) / f"gradcheck-s{base}"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_cfg(out_dir / "resolved.cfg", values)
    write_manifest(out_dir, "gradcheck", values, provenance, "",
                   ["resolved.cfg"])
    if not payload["all_passed"]:
        offenders = [n for n, c in cases.items() if not c["passed"]]
        print("FAILED: " + ", ".join(sorted(offenders)), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiermem",
        description="Graph-level anomaly detection with a memory-augmented "
                    "graph autoencoder")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_cv = sub.add_parser("cv", help="k-fold cross-validation on one dataset")
    _add_flags(p_cv, _COMMON)
    p_cv.set_defaults(func=cmd_cv)

    p_sweep = sub.add_parser("sweep", help="experiment protocols")
    p_sweep.add_argument("protocol",
                         choices=["contamination", "memory", "ablation"])
    _add_flags(p_sweep, _COMMON)
    p_sweep.set_defaults(func=cmd_sweep)

    p_gc = sub.add_parser("gradcheck",
                          help="verify gradients against finite differences")
    _add_flags(p_gc, _GRADCHECK)
    p_gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DatasetParseError, StructuralError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (TrainingDiverged, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
