"""Dataset files, random splits and a stochastic block model generator.

On-disk layout of a dataset (all UTF-8):

``edges.tsv``
    one undirected edge per line, ``i<TAB>j``; lines starting with ``#`` are comments
``features.csv``
    no header, row ``i`` holds node ``i``'s features
``labels.csv``
    header ``node_id,label``; one row per node, ids dense ``0..n-1``; an
    empty label field marks an unlabeled node

An explicit split can be stored as ``mask.csv`` with header ``node_id,role``
and roles ``train``, ``val`` or ``test``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import ABSENT, Graph, LabelSet, NodeFeatures, Role, SplitMask, build_graph

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: NodeFeatures
    labels: LabelSet
    name: str = "dataset"

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.num_nodes != n or len(self.labels.labels) != n:
            raise ValueError("graph, features and labels disagree on node count")

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_classes(self) -> int:
        return self.labels.num_classes


def _read_labels(path: Path, num_classes: int | None):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["node_id", "label"]:
        raise DatasetFormatError(f"{path}:1: expected header 'node_id,label'")
    ids, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DatasetFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            labels.append(int(row[1]) if row[1].strip() else ABSENT)
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: malformed row {row!r}") from None
        if labels[-1] < ABSENT:
            raise DatasetFormatError(f"{path}:{lineno}: negative label {labels[-1]}")
    if sorted(ids) != list(range(len(ids))):
        raise DatasetFormatError(f"{path}: node ids must be dense 0..n-1 with no gaps or repeats")
    y = np.full(len(ids), ABSENT, dtype=np.int64)
    y[ids] = labels
    c = int(y.max()) + 1 if num_classes is None else num_classes
    if y.max() >= c:
        bad = ids[int(np.argmax(np.asarray(labels) >= c))]
        raise DatasetFormatError(f"{path}: node {bad} has label >= declared {c} classes")
    return LabelSet(y, max(c, 2))


def _read_edges(path: Path, num_nodes: int) -> np.ndarray:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                i, j = (int(p) for p in parts)
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: expected two tab-separated ids") from None
            if not (0 <= i < num_nodes and 0 <= j < num_nodes):
                raise DatasetFormatError(f"{path}:{lineno}: node id out of range [0, {num_nodes})")
            pairs.append((i, j))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _read_features(path: Path, num_nodes: int) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric feature value") from None
            if len(rows[-1]) != len(rows[0]):
                raise DatasetFormatError(
                    f"{path}:{lineno}: {len(rows[-1])} columns, expected {len(rows[0])}")
    if len(rows) != num_nodes:
        raise DatasetFormatError(f"{path}: {len(rows)} feature rows for {num_nodes} nodes")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(edges_path, features_path, labels_path, name: str | None = None,
                 num_classes: int | None = None) -> Dataset:
    """Read the three dataset files; node count comes from the labels file."""
    labels = _read_labels(Path(labels_path), num_classes)
    n = len(labels.labels)
    graph = build_graph(_read_edges(Path(edges_path), n), n)
    features = NodeFeatures(_read_features(Path(features_path), n))
    return Dataset(graph, features, labels, name or Path(labels_path).parent.name)


def load_dataset_dir(directory, **kw) -> Dataset:
    d = Path(directory)
    return load_dataset(d / EDGES_FILE, d / FEATURES_FILE, d / LABELS_FILE, **kw)


def save_dataset(ds: Dataset, directory) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"edges": d / EDGES_FILE, "features": d / FEATURES_FILE, "labels": d / LABELS_FILE}
    with open(paths["edges"], "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# {ds.name}: {ds.num_nodes} nodes, {ds.graph.num_edges} edges\n")
        for i, j in ds.graph.edge_list():
            f.write(f"{i}\t{j}\n")
    with open(paths["features"], "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for row in ds.features.matrix:
            w.writerow([repr(float(v)) for v in row])
    with open(paths["labels"], "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["node_id", "label"])
        for i, y in enumerate(ds.labels.labels):
            w.writerow([i, "" if y == ABSENT else int(y)])
    return paths


def make_splits(num_nodes: int, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> SplitMask:
    """Random TRAIN/VAL/TEST partition with largest-remainder rounding of the sizes."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or not np.isclose(fr.sum(), 1.0):
        raise ValueError("fractions must be three positive numbers summing to 1")
    exact = fr * num_nodes
    sizes = np.floor(exact).astype(np.int64)
    short = num_nodes - sizes.sum()
    # stable sort keeps TRAIN before VAL before TEST on equal remainders
    sizes[np.argsort(-(exact - sizes), kind="stable")[:short]] += 1
    if np.any(sizes == 0):
        raise ValueError(f"split sizes {sizes.tolist()} leave a role empty")
    perm = np.random.default_rng(seed).permutation(num_nodes)
    roles = np.empty(num_nodes, dtype=np.int8)
    roles[perm] = np.repeat([Role.TRAIN, Role.VAL, Role.TEST], sizes)
    return SplitMask(roles)


def save_mask(mask: SplitMask, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["node_id", "role"])
        for i, r in enumerate(mask.roles):
            w.writerow([i, Role(r).name.lower()])


def load_mask(path, num_nodes: int) -> SplitMask:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["node_id", "role"]:
        raise DatasetFormatError(f"{path}:1: expected header 'node_id,role'")
    roles = np.full(num_nodes, -1, dtype=np.int8)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            i, role = int(row[0]), Role[row[1].strip().upper()]
        except (ValueError, KeyError, IndexError):
            raise DatasetFormatError(f"{path}:{lineno}: malformed row {row!r}") from None
        if not 0 <= i < num_nodes or roles[i] != -1:
            raise DatasetFormatError(f"{path}:{lineno}: node id {i} out of range or repeated")
        roles[i] = role
    if np.any(roles == -1):
        raise DatasetFormatError(f"{path}: no role for node {int(np.argmax(roles == -1))}")
    return SplitMask(roles)


@dataclass(frozen=True)
class SbmConfig:
    nodes_per_class: int = 50
    num_classes: int = 4
    p_in: float = 0.1
    p_out: float = 0.01
    feature_dim: int = 16
    feature_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.nodes_per_class <= 0:
            raise ValueError("nodes_per_class must be positive (a class would be empty)")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError(f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        if self.feature_dim < self.num_classes:
            raise ValueError("feature_dim must be at least num_classes for orthogonal class means")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be non-negative")

    @classmethod
    def from_json(cls, text: str) -> "SbmConfig":
        doc = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        if not isinstance(doc, dict) or set(doc) != names:
            raise ValueError(f"SBM config must have exactly the fields {sorted(names)}")
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


def generate_sbm(cfg: SbmConfig) -> Dataset:
    """Sample a planted-partition graph with Gaussian features around one-hot class means.

    Nodes are laid out class by class, so node ``i`` belongs to class
    ``i // nodes_per_class``.
    """
    rng = np.random.default_rng(cfg.seed)
    m, C = cfg.nodes_per_class, cfg.num_classes
    n = m * C
    y = np.repeat(np.arange(C), m)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(y[iu] == y[ju], cfg.p_in, cfg.p_out)
    keep = rng.random(len(p)) < p
    graph = build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)
    means = np.eye(C, cfg.feature_dim)
    x = means[y] + cfg.feature_noise * rng.standard_normal((n, cfg.feature_dim))
    name = f"sbm-c{C}-m{m}-s{cfg.seed}"
    return Dataset(graph, NodeFeatures(x), LabelSet(y, C), name)
