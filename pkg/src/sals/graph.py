"""Immutable graph containers: CSR adjacency, node features, labels, split roles."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

ABSENT = -1


class Role(IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph in compressed sparse row form.

    Every undirected edge is stored in both endpoint rows; neighbor lists are
    sorted ascending and never contain the row's own node.
    """

    num_nodes: int
    row_offsets: np.ndarray
    neighbor_ids: np.ndarray

    @property
    def num_edges(self) -> int:
        return len(self.neighbor_ids) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with i < j, lexicographically sorted."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = src < self.neighbor_ids
        return np.stack([src[keep], self.neighbor_ids[keep]], axis=1)

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def build_graph(edge_pairs, num_nodes: int) -> Graph:
    """Build a symmetric, deduplicated, self-loop-free CSR graph.

    Parameters
    ----------
    edge_pairs : array_like of shape (E, 2)
        Node index pairs; direction and multiplicity are ignored.
    num_nodes : int
        Number of nodes; every index must be below it.
    """
    if num_nodes <= 0:
        raise ValueError("num_nodes must be positive")
    pairs = np.asarray(edge_pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        raise IndexError(f"edge endpoint out of range for num_nodes={num_nodes}")
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
    # unique over the flattened key also sorts by (row, col)
    keys = np.unique(both[:, 0] * num_nodes + both[:, 1])
    rows, cols = np.divmod(keys, num_nodes)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return Graph(num_nodes, _frozen(offsets), _frozen(cols.astype(np.int64)))


def neighbors(graph: Graph, i: int) -> np.ndarray:
    if not 0 <= i < graph.num_nodes:
        raise IndexError(f"node {i} out of range [0, {graph.num_nodes})")
    return graph.neighbor_ids[graph.row_offsets[i]:graph.row_offsets[i + 1]]


@dataclass(frozen=True)
class NodeFeatures:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(m)):
            raise ValueError("feature matrix contains non-finite entries")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LabelSet:
    """Per-node class ids in ``[0, num_classes)``; ``ABSENT`` (-1) marks unlabeled nodes."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        y = np.array(self.labels, dtype=np.int64)
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        bad = (y != ABSENT) & ((y < 0) | (y >= self.num_classes))
        if bad.any():
            raise ValueError(f"label out of range at node {int(np.flatnonzero(bad)[0])}")
        object.__setattr__(self, "labels", _frozen(y))

    @property
    def present(self) -> np.ndarray:
        return self.labels != ABSENT

    def check_against(self, mask: "SplitMask") -> None:
        """Raise if a TRAIN node is unlabeled or a class has no TRAIN node."""
        train = mask.train
        if np.any(self.labels[train] == ABSENT):
            raise ValueError("every TRAIN node must carry a label")
        seen = np.bincount(self.labels[train], minlength=self.num_classes)
        if np.any(seen == 0):
            missing = np.flatnonzero(seen == 0).tolist()
            raise ValueError(f"classes {missing} have no TRAIN node")


@dataclass(frozen=True)
class SplitMask:
    roles: np.ndarray

    def __post_init__(self):
        r = np.array(self.roles, dtype=np.int8)
        if r.size and not np.isin(r, [Role.TRAIN, Role.VAL, Role.TEST]).all():
            raise ValueError("roles must be TRAIN, VAL or TEST")
        object.__setattr__(self, "roles", _frozen(r))

    def of(self, role: Role) -> np.ndarray:
        return self.roles == role

    @property
    def train(self) -> np.ndarray:
        return self.roles == Role.TRAIN

    @property
    def num_nodes(self) -> int:
        return len(self.roles)
