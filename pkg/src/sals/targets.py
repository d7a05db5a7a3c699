"""Training target distributions: hard, uniform-smoothed and structure-aware.

A structure-aware target mixes the node's one-hot label with the empirical
label distribution of its labeled training neighbours and a uniform floor::

    q(c|i) = (1 - eps) * onehot(y_i)[c] + eps * (gamma * eta_i[c] + (1 - gamma) / C)

where ``eta_i`` is the class histogram of ``i``'s TRAIN neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import ABSENT, Graph, LabelSet, SplitMask


class TargetKind(str, Enum):
    HARD = "hard"
    LS = "ls"
    SALS = "sals"


@dataclass(frozen=True)
class SmoothingConfig:
    epsilon: float = 0.4
    gamma: float = 0.8
    fallback: str = "uniform"

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.fallback != "uniform":
            raise ValueError(f"unsupported fallback policy {self.fallback!r}")


@dataclass(frozen=True)
class NeighborhoodStats:
    """Per-node class ratios over labeled TRAIN neighbours.

    ``ratios[i, c]`` is the fraction of ``i``'s TRAIN neighbours with label
    ``c``; rows of nodes with no such neighbour are zero.
    """

    ratios: np.ndarray
    labeled_degree: np.ndarray

    def own_class_ratio(self, labels: LabelSet) -> np.ndarray:
        """``r_{y_i}(i)`` per node; 0 for unlabeled nodes and empty neighbourhoods."""
        y = labels.labels
        out = np.zeros(len(y))
        has = y != ABSENT
        out[has] = self.ratios[np.flatnonzero(has), y[has]]
        return out


@dataclass(frozen=True)
class TargetDistribution:
    matrix: np.ndarray
    kind: TargetKind

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[1]


def compute_ratios(graph: Graph, labels: LabelSet, mask: SplitMask) -> NeighborhoodStats:
    n, C = graph.num_nodes, labels.num_classes
    if len(labels.labels) != n or mask.num_nodes != n:
        raise ValueError("graph, labels and mask disagree on node count")
    src = np.repeat(np.arange(n), graph.degrees())
    dst = graph.neighbor_ids
    keep = mask.train[dst] & (labels.labels[dst] != ABSENT)
    counts = np.zeros((n, C))
    np.add.at(counts, (src[keep], labels.labels[dst[keep]]), 1.0)
    deg = counts.sum(axis=1)
    ratios = np.divide(counts, deg[:, None], out=np.zeros_like(counts), where=deg[:, None] > 0)
    return NeighborhoodStats(ratios, deg.astype(np.int64))


def _onehot(labels: LabelSet, mask: SplitMask) -> np.ndarray:
    y = labels.labels
    if np.any(y[mask.train] == ABSENT):
        raise ValueError("every TRAIN node must carry a label")
    out = np.zeros((len(y), labels.num_classes))
    has = y != ABSENT
    out[np.flatnonzero(has), y[has]] = 1.0
    return out


def hard_targets(labels: LabelSet, mask: SplitMask) -> TargetDistribution:
    return TargetDistribution(_onehot(labels, mask), TargetKind.HARD)


def _finish(onehot: np.ndarray, smoothed: np.ndarray, mask: SplitMask, kind) -> TargetDistribution:
    # non-TRAIN rows keep the hard label (or zeros when unlabeled)
    out = np.where(mask.train[:, None], smoothed, onehot)
    return TargetDistribution(out, kind)


def ls_targets(labels: LabelSet, mask: SplitMask, epsilon: float) -> TargetDistribution:
    SmoothingConfig(epsilon, 0.0)
    onehot = _onehot(labels, mask)
    uniform = np.full_like(onehot, 1.0 / labels.num_classes)
    smoothed = (1 - epsilon) * onehot + epsilon * uniform
    return _finish(onehot, smoothed, mask, TargetKind.LS)


def sals_targets(labels: LabelSet, mask: SplitMask, stats: NeighborhoodStats,
                 cfg: SmoothingConfig) -> TargetDistribution:
    """Structure-aware smoothed targets.

    Nodes with no labeled TRAIN neighbour use the uniform distribution in
    place of the neighbourhood label, which makes their row the plain
    label-smoothing row.
    """
    onehot = _onehot(labels, mask)
    if stats.ratios.shape != onehot.shape:
        raise ValueError(f"stats shape {stats.ratios.shape} does not match labels {onehot.shape}")
    eps, gamma = cfg.epsilon, cfg.gamma
    uniform = np.full_like(onehot, 1.0 / labels.num_classes)
    eta = np.where(stats.labeled_degree[:, None] > 0, stats.ratios, uniform)
    smoothed = (1 - eps) * onehot + eps * (gamma * eta + (1 - gamma) * uniform)
    return _finish(onehot, smoothed, mask, TargetKind.SALS)


def make_targets(kind, labels: LabelSet, mask: SplitMask, graph: Graph | None = None,
                 cfg: SmoothingConfig | None = None) -> TargetDistribution:
    kind = TargetKind(kind)
    cfg = cfg or SmoothingConfig()
    if kind is TargetKind.HARD:
        return hard_targets(labels, mask)
    if kind is TargetKind.LS:
        return ls_targets(labels, mask, cfg.epsilon)
    if graph is None:
        raise ValueError("structure-aware targets need the graph")
    return sals_targets(labels, mask, compute_ratios(graph, labels, mask), cfg)


def optimum_logit_gap(epsilon: float, gamma: float, r_c: float, num_classes: int,
                      r_true: float | None = None) -> float:
    """Logit gap between the true class and class ``c`` at the CE optimum.

    The soft cross-entropy is minimised when the softmax equals the target,
    so the gap is the log ratio of the two target masses. ``r_true`` is the
    neighbour ratio of the true class and defaults to ``r_c``.

    Returns ``math.inf`` when class ``c`` gets zero target mass.
    """
    if not 0.0 <= epsilon <= 1.0 or not 0.0 <= gamma <= 1.0 or not 0.0 <= r_c <= 1.0:
        raise ValueError("epsilon, gamma and r_c must lie in [0, 1]")
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    r_true = r_c if r_true is None else r_true
    floor = epsilon * (1 - gamma) / num_classes
    other = epsilon * gamma * r_c + floor
    if other <= 0.0:
        return math.inf
    return math.log((1 - epsilon + epsilon * gamma * r_true + floor) / other)
