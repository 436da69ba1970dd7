"""AUC scoring, cross-validation, and the sweep protocols.

Every fold owns its seed (run seed + fold index), parameters, and optimizer
state, so folds can train in separate processes without changing any result:
reports are bit-identical for any --jobs value.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import FoldSplit, GraphDataset, inject_contamination, make_folds
from .errors import ConfigurationError
from .model import VARIANTS
from .training import (HISTORY_FIELDS, TrainConfig, make_model_config,
                       score_graphs, train)

SCHEMA_VERSION = 1


@dataclass
class EvalReport:
    dataset: str
    variant: str
    num_node_memory: int
    num_graph_memory: int
    tau: float
    folds: int
    seed: int
    per_fold_auc: list[float]
    mean_auc: float
    std_auc: float
    per_graph_scores: list[tuple[int, float, int]]
    config: dict
    wall_clock_seconds: float
    fold_histories: list[list[dict]]


def evaluate_auc(scores, labels) -> float:
    """Area under the ROC curve by the rank statistic.

    Equals (#pairs where an anomaly outscores a normal + 0.5 per tied pair)
    divided by the number of anomaly/normal pairs; average ranks make the
    result exactly equal to that pairwise count.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigurationError("scores and labels must be equal-length vectors")
    n = scores.size
    n_pos = int((labels == 1).sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigurationError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(n)
    sorted_scores = scores[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0  # 1-based average rank
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# cross-validation

def _run_fold(split: FoldSplit, config: TrainConfig, tau: float,
              feature_dim: int, n_max: int) -> dict:
    fold_cfg = dataclasses.replace(config, seed=config.seed + split.fold_index)
    split = inject_contamination(split, split.contamination_pool, tau,
                                 seed=fold_cfg.seed)
    params, history = train(split.train_graphs, fold_cfg,
                            feature_dim=feature_dim, max_nodes=n_max)
    cfg = make_model_config(fold_cfg, feature_dim, n_max)
    scores = score_graphs(params, cfg, split.test_graphs,
                          batch_size=config.batch_size)
    labels = [g.label for g in split.test_graphs]
    auc = evaluate_auc(scores, labels)
    triples = [(g.graph_id, float(s), g.label)
               for g, s in zip(split.test_graphs, scores)]
    return {"fold_index": split.fold_index, "auc": auc,
            "scores": triples, "history": history}


def _fold_worker(args):
    return _run_fold(*args)


def run_cv(dataset: GraphDataset, config: TrainConfig, k: int, seed: int,
           tau: float = 0.0, jobs: int = 1) -> EvalReport:
    """k-fold cross-validation: train on normals, score the mixed test fold.

    `seed` drives the fold split; fold f trains under seed + f. With tau > 0
    each fold's training set is contaminated from its own anomaly pool.
    """
    t0 = time.perf_counter()
    base_cfg = dataclasses.replace(config, seed=seed)
    folds = make_folds(dataset, k, seed)
    args = [(split, base_cfg, tau, dataset.attribute_dim, dataset.n_max)
            for split in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_worker, args))
    else:
        results = [_run_fold(*a) for a in args]
    results.sort(key=lambda r: r["fold_index"])

    per_fold = [r["auc"] for r in results]
    per_graph = [t for r in results for t in r["scores"]]
    snapshot = dataclasses.asdict(base_cfg)
    snapshot.update({"dataset": dataset.name, "folds": k, "seed": seed,
                     "tau": tau})
    return EvalReport(
        dataset=dataset.name, variant=config.variant,
        num_node_memory=config.num_node_memory,
        num_graph_memory=config.num_graph_memory,
        tau=tau, folds=k, seed=seed,
        per_fold_auc=per_fold,
        mean_auc=float(np.mean(per_fold)),
        std_auc=float(np.std(per_fold)),
        per_graph_scores=per_graph,
        config=snapshot,
        wall_clock_seconds=time.perf_counter() - t0,
        fold_histories=[r["history"] for r in results],
    )


def run_contamination_sweep(dataset: GraphDataset, config: TrainConfig,
                            rates: list[float], k: int, seed: int,
                            jobs: int = 1) -> list[EvalReport]:
    """One cross-validation report per contamination rate, in given order."""
    for tau in rates:
        if not 0.0 <= tau <= 100.0:
            raise ConfigurationError(f"tau must be in [0, 100], got {tau}")
    return [run_cv(dataset, config, k, seed, tau=tau, jobs=jobs)
            for tau in rates]


def run_memory_sweep(dataset: GraphDataset, config: TrainConfig,
                     p_values: list[int], q_values: list[int], k: int,
                     seed: int, jobs: int = 1) -> dict[tuple[int, int], EvalReport]:
    """Vary one memory bank while the other stays at a single block.

    Cells are (p, 1) for each p then (1, q) for each q, de-duplicated.
    """
    if not p_values or not q_values:
        raise ConfigurationError("memory sweep needs nonempty p and q lists")
    for v in list(p_values) + list(q_values):
        if v < 1:
            raise ConfigurationError(f"memory sizes must be >= 1, got {v}")
    cells: list[tuple[int, int]] = []
    for p in p_values:
        if (p, 1) not in cells:
            cells.append((p, 1))
    for q in q_values:
        if (1, q) not in cells:
            cells.append((1, q))
    grid: dict[tuple[int, int], EvalReport] = {}
    for p, q in cells:
        cell_cfg = dataclasses.replace(config, num_node_memory=p,
                                       num_graph_memory=q)
        grid[(p, q)] = run_cv(dataset, cell_cfg, k, seed, jobs=jobs)
    return grid


def run_ablation(dataset: GraphDataset, config: TrainConfig, variant: str,
                 k: int, seed: int, jobs: int = 1) -> EvalReport:
    if variant not in VARIANTS:
        raise ConfigurationError(
            f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return run_cv(dataset, dataclasses.replace(config, variant=variant),
                  k, seed, jobs=jobs)


# ---------------------------------------------------------------------------
# serialization

def report_to_dict(report: EvalReport) -> dict:
    d = dataclasses.asdict(report)
    d["per_graph_scores"] = [list(t) for t in report.per_graph_scores]
    d["schema_version"] = SCHEMA_VERSION
    return d


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_report_csv(report: EvalReport, path) -> None:
    """Per-fold summary: dataset, variant, p, q, tau, fold, auc."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "variant", "p", "q", "tau", "fold", "auc"])
        for f, auc in enumerate(report.per_fold_auc):
            writer.writerow([report.dataset, report.variant,
                             report.num_node_memory, report.num_graph_memory,
                             report.tau, f, repr(auc)])


def write_history_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold"] + list(HISTORY_FIELDS))
        for f, history in enumerate(report.fold_histories):
            for row in history:
                writer.writerow([f] + [repr(row[k]) if k != "epoch" else row[k]
                                       for k in HISTORY_FIELDS])
