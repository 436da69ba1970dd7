"""Graph dataset handling.

Reads TUDataset-format collections (edge list, graph indicator, graph labels,
optional node attributes), derives anomaly labels by the minority-class rule,
builds stratified cross-validation folds with a held-out contamination pool,
and zero-pads graphs into dense batches.
"""

from __future__ import annotations

import csv
import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DatasetParseError, StructuralError


@dataclass(eq=False)
class Graph:
    """One undirected graph: binary adjacency, node attributes, anomaly label."""
    adjacency: np.ndarray
    attributes: np.ndarray
    label: int
    node_count: int
    graph_id: int

    def __post_init__(self):
        a = self.adjacency
        n = self.node_count
        if n <= 0:
            raise StructuralError(f"graph {self.graph_id}: empty graph")
        if a.shape != (n, n):
            raise StructuralError(f"graph {self.graph_id}: adjacency shape "
                                  f"{a.shape} for {n} nodes")
        if not np.array_equal(a, a.T):
            raise StructuralError(f"graph {self.graph_id}: adjacency not symmetric")
        if np.any(np.diagonal(a) != 0):
            raise StructuralError(f"graph {self.graph_id}: self-loop present")
        if self.attributes.shape[0] != n:
            raise StructuralError(f"graph {self.graph_id}: {self.attributes.shape[0]} "
                                  f"attribute rows for {n} nodes")
        if not np.all(np.isfinite(self.attributes)):
            raise StructuralError(f"graph {self.graph_id}: non-finite attribute")
        if self.label not in (0, 1):
            raise StructuralError(f"graph {self.graph_id}: label {self.label} "
                                  "not in {0, 1}")


@dataclass(eq=False)
class GraphDataset:
    graphs: list[Graph]
    attribute_dim: int
    n_max: int
    name: str

    def __post_init__(self):
        for g in self.graphs:
            if g.attributes.shape[1] != self.attribute_dim:
                raise StructuralError(f"graph {g.graph_id}: attribute dim "
                                      f"{g.attributes.shape[1]} != {self.attribute_dim}")
            if g.node_count > self.n_max:
                raise StructuralError(f"graph {g.graph_id}: {g.node_count} nodes "
                                      f"exceeds n_max {self.n_max}")

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=int)


@dataclass(eq=False)
class GraphBatch:
    adjacency_padded: np.ndarray
    attributes_padded: np.ndarray
    node_mask: np.ndarray
    node_counts: np.ndarray
    labels: np.ndarray
    graph_ids: np.ndarray


@dataclass(eq=False)
class FoldSplit:
    """One cross-validation fold.

    train_graphs holds normal graphs only (until contamination is injected);
    contamination_pool holds the anomalous graphs excluded from this fold's
    test set, kept so contamination experiments reuse the same split.
    """
    train_graphs: list[Graph]
    test_graphs: list[Graph]
    contamination_pool: list[Graph]
    fold_index: int
    seed: int


# ---------------------------------------------------------------------------
# parsing

def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DatasetParseError(f"missing dataset file: {path}")
    return path.read_text().splitlines()


def _parse_int_pair(line: str, path: Path, lineno: int) -> tuple[int, int]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != 2:
        raise DatasetParseError(f"{path}:{lineno}: expected 'i, j', got {line!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise DatasetParseError(f"{path}:{lineno}: non-numeric token in {line!r}") from None


def degree_features(graph: Graph) -> np.ndarray:
    """Per-node degree as a single-column attribute matrix."""
    return graph.adjacency.sum(axis=0, dtype=float)[:, None]


def label_anomalies(raw_labels: list[int]) -> list[int]:
    """Map raw class labels to {0 normal, 1 anomalous} by strict minority.

    Tie on class counts: the class with the smaller raw value is anomalous.
    """
    counts = Counter(raw_labels)
    if len(counts) < 2:
        raise ConfigurationError("dataset has a single class; anomaly labeling "
                                 "needs at least two")
    anomalous = min(counts, key=lambda c: (counts[c], c))
    return [1 if lbl == anomalous else 0 for lbl in raw_labels]


def parse_tudataset(root_dir, name: str) -> GraphDataset:
    """Load `<name>_*.txt` files from `root_dir/name/`or `root_dir` itself.

    Node ids in the files are global and 1-indexed; each graph gets local
    0-indexed nodes in file order. Edges are symmetrized and de-duplicated.
    Without a node-attribute file, node degree becomes the sole attribute.
    """
    root = Path(root_dir)
    base = root / name if (root / name).is_dir() else root
    indicator_path = base / f"{name}_graph_indicator.txt"
    edges_path = base / f"{name}_A.txt"
    labels_path = base / f"{name}_graph_labels.txt"
    attrs_path = base / f"{name}_node_attributes.txt"

    indicator = []
    for i, line in enumerate(_read_lines(indicator_path), 1):
        if not line.strip():
            continue
        try:
            indicator.append(int(line.strip()))
        except ValueError:
            raise DatasetParseError(
                f"{indicator_path}:{i}: non-numeric token {line!r}") from None
    if not indicator:
        raise DatasetParseError(f"{indicator_path}: no nodes listed")

    raw_labels = []
    for i, line in enumerate(_read_lines(labels_path), 1):
        if not line.strip():
            continue
        try:
            raw_labels.append(int(line.strip()))
        except ValueError:
            raise DatasetParseError(
                f"{labels_path}:{i}: non-numeric token {line!r}") from None

    num_graphs = len(raw_labels)
    if sorted(set(indicator)) != list(range(1, num_graphs + 1)):
        raise DatasetParseError(
            f"{indicator_path}: graph ids must cover 1..{num_graphs} "
            "(one label line per graph)")

    num_nodes = len(indicator)
    node_graph = np.asarray(indicator) - 1
    # local index of each global node within its graph, preserving file order
    local_index = np.zeros(num_nodes, dtype=int)
    counts = np.zeros(num_graphs, dtype=int)
    for v, g in enumerate(node_graph):
        local_index[v] = counts[g]
        counts[g] += 1

    attributes = None
    if attrs_path.is_file():
        rows = []
        width = None
        for i, line in enumerate(_read_lines(attrs_path), 1):
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split(",")]
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DatasetParseError(
                    f"{attrs_path}:{i}: expected {width} values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DatasetParseError(
                    f"{attrs_path}:{i}: non-numeric token in {line!r}") from None
        if len(rows) != num_nodes:
            raise DatasetParseError(
                f"{attrs_path}: {len(rows)} attribute rows for {num_nodes} nodes")
        attributes = np.asarray(rows, dtype=float)

    adjacencies = [np.zeros((c, c)) for c in counts]
    for i, line in enumerate(_read_lines(edges_path), 1):
        if not line.strip():
            continue
        u, v = _parse_int_pair(line, edges_path, i)
        if not (1 <= u <= num_nodes and 1 <= v <= num_nodes):
            raise StructuralError(
                f"{edges_path}:{i}: node id outside 1..{num_nodes}")
        gu, gv = node_graph[u - 1], node_graph[v - 1]
        if gu != gv:
            raise StructuralError(f"{edges_path}:{i}: edge joins graphs "
                                  f"{gu + 1} and {gv + 1}")
        if u == v:
            raise StructuralError(f"{edges_path}:{i}: self-loop on node {u}")
        lu, lv = local_index[u - 1], local_index[v - 1]
        adjacencies[gu][lu, lv] = 1.0
        adjacencies[gu][lv, lu] = 1.0

    labels = label_anomalies(raw_labels)
    graphs = []
    for g in range(num_graphs):
        n = counts[g]
        if n == 0:
            raise DatasetParseError(f"{indicator_path}: graph {g + 1} has no nodes")
        if attributes is not None:
            global_ids = np.flatnonzero(node_graph == g)
            attr = attributes[global_ids]
        else:
            attr = adjacencies[g].sum(axis=0, dtype=float)[:, None]
        graphs.append(Graph(adjacency=adjacencies[g], attributes=attr,
                            label=labels[g], node_count=int(n), graph_id=g))

    return GraphDataset(graphs=graphs,
                        attribute_dim=graphs[0].attributes.shape[1],
                        n_max=int(counts.max()), name=name)


def write_tudataset(dataset: GraphDataset, root_dir) -> None:
    """Write the four TUDataset files (both edge directions, repr floats).

    Reparsing yields an identical dataset as long as the anomalous class is a
    strict minority (the tie-break rule would otherwise relabel a balanced
    collection).
    """
    base = Path(root_dir) / dataset.name
    base.mkdir(parents=True, exist_ok=True)
    name = dataset.name
    edge_lines = []
    indicator_lines = []
    label_lines = []
    attr_lines = []
    offset = 0
    for gid, g in enumerate(dataset.graphs, 1):
        rows, cols = np.nonzero(g.adjacency)
        for r, c in zip(rows, cols):
            edge_lines.append(f"{offset + r + 1}, {offset + c + 1}")
        indicator_lines.extend([str(gid)] * g.node_count)
        label_lines.append(str(g.label))
        for row in g.attributes:
            attr_lines.append(", ".join(repr(float(v)) for v in row))
        offset += g.node_count
    (base / f"{name}_A.txt").write_text("\n".join(edge_lines) + "\n")
    (base / f"{name}_graph_indicator.txt").write_text("\n".join(indicator_lines) + "\n")
    (base / f"{name}_graph_labels.txt").write_text("\n".join(label_lines) + "\n")
    (base / f"{name}_node_attributes.txt").write_text("\n".join(attr_lines) + "\n")


def dataset_checksum(root_dir, name: str) -> str:
    """SHA-256 over the dataset files, in a fixed order."""
    root = Path(root_dir)
    base = root / name if (root / name).is_dir() else root
    h = hashlib.sha256()
    for suffix in ("_A.txt", "_graph_indicator.txt", "_graph_labels.txt",
                   "_node_attributes.txt"):
        p = base / f"{name}{suffix}"
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# folds and contamination

def make_folds(dataset: GraphDataset, k: int, seed: int) -> list[FoldSplit]:
    """Stratified k-fold split under a fixed seed.

    Each class is shuffled and dealt into k contiguous chunks; remainder
    chunks rotate across classes so fold sizes stay balanced. Training sets
    hold the non-test normal graphs; non-test anomalies form the fold's
    contamination pool.
    """
    if k < 2:
        raise ConfigurationError(f"need k >= 2 folds, got {k}")
    by_class: dict[int, list[Graph]] = {0: [], 1: []}
    for g in dataset.graphs:
        by_class[g.label].append(g)
    for label, members in by_class.items():
        if len(members) < k:
            raise ConfigurationError(
                f"class {label} has {len(members)} graphs, fewer than k={k}")

    rng = np.random.default_rng(seed)
    test_sets: list[list[Graph]] = [[] for _ in range(k)]
    offset = 0
    for label in (0, 1):
        members = by_class[label]
        order = rng.permutation(len(members))
        base, rem = divmod(len(members), k)
        start = 0
        for f in range(k):
            size = base + (1 if (f - offset) % k < rem else 0)
            for idx in order[start:start + size]:
                test_sets[f].append(members[idx])
            start += size
        offset += rem

    folds = []
    for f in range(k):
        test_ids = {g.graph_id for g in test_sets[f]}
        train = [g for g in by_class[0] if g.graph_id not in test_ids]
        pool = [g for g in by_class[1] if g.graph_id not in test_ids]
        folds.append(FoldSplit(train_graphs=train, test_graphs=test_sets[f],
                               contamination_pool=pool, fold_index=f, seed=seed))
    return folds


def inject_contamination(split: FoldSplit, anomaly_pool: list[Graph],
                         tau_percent: float, seed: int) -> FoldSplit:
    """Move floor(tau% of the pool) anomalies into the training set.

    Sampling is without replacement under `seed`; the test set is untouched.
    """
    if not 0.0 <= tau_percent <= 100.0:
        raise ConfigurationError(f"tau must be in [0, 100], got {tau_percent}")
    test_ids = {g.graph_id for g in split.test_graphs}
    if any(g.graph_id in test_ids for g in anomaly_pool):
        raise StructuralError("contamination pool overlaps the test set")
    count = math.floor(tau_percent * len(anomaly_pool) / 100.0)
    if count == 0:
        return split
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(anomaly_pool), size=count, replace=False)
    picked = [anomaly_pool[i] for i in chosen]
    picked_ids = {g.graph_id for g in picked}
    remaining = [g for g in anomaly_pool if g.graph_id not in picked_ids]
    return FoldSplit(train_graphs=list(split.train_graphs) + picked,
                     test_graphs=split.test_graphs,
                     contamination_pool=remaining,
                     fold_index=split.fold_index, seed=split.seed)


def export_folds_csv(folds: list[FoldSplit], path) -> None:
    """Audit file: one row per (graph, fold) membership."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph_id", "fold", "role"])
        for split in folds:
            for role, graphs in (("train", split.train_graphs),
                                 ("test", split.test_graphs),
                                 ("pool", split.contamination_pool)):
                for g in graphs:
                    writer.writerow([g.graph_id, split.fold_index, role])


# ---------------------------------------------------------------------------
# batching

def pad_batch(graphs: list[Graph], n_max: int) -> GraphBatch:
    """Zero-pad graphs to a common width and record the real-node mask."""
    for g in graphs:
        if g.node_count > n_max:
            raise StructuralError(f"graph {g.graph_id}: {g.node_count} nodes "
                                  f"exceed batch width {n_max}")
    b = len(graphs)
    d = graphs[0].attributes.shape[1] if graphs else 0
    adj = np.zeros((b, n_max, n_max))
    attr = np.zeros((b, n_max, d))
    mask = np.zeros((b, n_max))
    for i, g in enumerate(graphs):
        n = g.node_count
        adj[i, :n, :n] = g.adjacency
        attr[i, :n, :] = g.attributes
        mask[i, :n] = 1.0
    return GraphBatch(adjacency_padded=adj, attributes_padded=attr,
                      node_mask=mask,
                      node_counts=np.array([g.node_count for g in graphs], dtype=int),
                      labels=np.array([g.label for g in graphs], dtype=int),
                      graph_ids=np.array([g.graph_id for g in graphs], dtype=int))


# ---------------------------------------------------------------------------
# synthetic data

def make_er_dataset(num_normal: int, num_anomalous: int, seed: int,
                    p_normal: float = 0.3, p_anomalous: float = 0.7,
                    n_range: tuple[int, int] = (10, 14),
                    name: str = "synthetic-er") -> GraphDataset:
    """Random-graph collection where anomalies differ by edge density.

    Every graph gets degree features, matching the plain-graph convention.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    specs = [(p_normal, 0)] * num_normal + [(p_anomalous, 1)] * num_anomalous
    for gid, (p, label) in enumerate(specs):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        upper = np.triu(rng.random((n, n)) < p, k=1)
        adj = (upper | upper.T).astype(float)
        attr = adj.sum(axis=0, dtype=float)[:, None]
        graphs.append(Graph(adjacency=adj, attributes=attr, label=label,
                            node_count=n, graph_id=gid))
    return GraphDataset(graphs=graphs, attribute_dim=1,
                        n_max=max(g.node_count for g in graphs), name=name)
