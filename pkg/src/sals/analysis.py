"""Diagnostics for trained models and smoothed targets.

Calibration (reliability bins and ECE), loss/gradient profiles ordered by
neighbour agreement, the cross-entropy decomposition of structure-aware
targets, (epsilon, gamma) sweeps and penultimate-layer embedding export.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gnn import (TrainConfig, TrainingDiverged, evaluate, forward, node_logit_gradients,
                  normalize_adjacency, per_node_cross_entropy, train)
from .graph import Graph, LabelSet, Role, SplitMask, neighbors
from .targets import (NeighborhoodStats, SmoothingConfig, TargetKind, compute_ratios,
                      hard_targets, ls_targets, sals_targets)

log = logging.getLogger(__name__)


def _entropy(q: np.ndarray, log_p: np.ndarray) -> float:
    return float(-(q * log_p).sum())


def verify_ce_decomposition(graph: Graph, labels: LabelSet, mask: SplitMask,
                            stats: NeighborhoodStats, cfg: SmoothingConfig,
                            p: np.ndarray) -> float:
    """Max ``|LHS - RHS|`` of the cross-entropy decomposition over TRAIN nodes.

    The left side is the CE between the structure-aware target row and ``p``;
    the right side rebuilds it from the hard-label CE, the CE against each
    labeled neighbour's one-hot label, and the CE against the uniform
    distribution. Nodes without labeled TRAIN neighbours are skipped.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (graph.num_nodes, labels.num_classes):
        raise ValueError(f"prediction shape {p.shape} does not match the graph/labels")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError("degenerate prediction rows")
    log_p = np.log(np.clip(p, 1e-12, None))
    eps, gamma = cfg.epsilon, cfg.gamma
    C = labels.num_classes
    y = labels.labels
    q = sals_targets(labels, mask, stats, cfg).matrix
    eye = np.eye(C)
    uniform = np.full(C, 1.0 / C)
    train = mask.train
    worst = 0.0
    for i in np.flatnonzero(train & (stats.labeled_degree > 0)):
        nl = [j for j in neighbors(graph, i) if train[j]]
        lhs = _entropy(q[i], log_p[i])
        neigh = sum(_entropy(eye[y[j]], log_p[i]) for j in nl)
        rhs = ((1 - eps) * _entropy(eye[y[i]], log_p[i])
               + eps * (gamma / len(nl) * neigh + (1 - gamma) * _entropy(uniform, log_p[i])))
        worst = max(worst, abs(lhs - rhs))
    return worst


@dataclass
class ReliabilityBin:
    confidence_low: float
    confidence_high: float
    mean_confidence: float
    empirical_accuracy: float
    count: int


@dataclass
class ReliabilityReport:
    bins: list[ReliabilityBin]
    ece: float

    @property
    def total(self) -> int:
        return sum(b.count for b in self.bins)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bin", "confidence_low", "confidence_high", "mean_confidence",
                        "empirical_accuracy", "count"])
            for k, b in enumerate(self.bins):
                w.writerow([k, repr(b.confidence_low), repr(b.confidence_high),
                            repr(b.mean_confidence), repr(b.empirical_accuracy), b.count])


def expected_calibration_error(confidence: np.ndarray, correct: np.ndarray,
                               num_bins: int = 10) -> ReliabilityReport:
    """Equal-width binning of confidences; bin ``b`` is ``(b/B, (b+1)/B]``, 0 goes to bin 0.

    Empty bins report zero confidence and accuracy.
    """
    confidence = np.asarray(confidence, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    if confidence.size == 0:
        raise ValueError("nothing to evaluate")
    edges = np.arange(num_bins + 1) / num_bins
    idx = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, num_bins - 1)
    total = confidence.size
    bins, ece = [], 0.0
    for b in range(num_bins):
        sel = idx == b
        count = int(sel.sum())
        conf = float(confidence[sel].mean()) if count else 0.0
        acc = float(correct[sel].mean()) if count else 0.0
        ece += count / total * abs(acc - conf)
        bins.append(ReliabilityBin(float(edges[b]), float(edges[b + 1]), conf, acc, count))
    return ReliabilityReport(bins, ece)


def reliability(probabilities: np.ndarray, labels: LabelSet, mask: SplitMask,
                role: Role = Role.TEST, num_bins: int = 10) -> ReliabilityReport:
    sel = mask.of(role) & labels.present
    if not sel.any():
        raise ValueError(f"no labeled nodes with role {Role(role).name}")
    probs = np.asarray(probabilities)[sel]
    pred = np.argmax(probs, axis=1)
    return expected_calibration_error(probs.max(axis=1), pred == labels.labels[sel], num_bins)


@dataclass
class RatioProfile:
    order: np.ndarray
    ratios: np.ndarray            # r_{y_i}(i) along ``order``
    cumulative_loss: np.ndarray
    buckets: list[np.ndarray]     # node ids per bucket
    bucket_grad_norms: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bucket", "size", "ratio_low", "ratio_high", "mean_grad_norm",
                        "cumulative_loss_end"])
            pos = 0
            for k, (ids, g) in enumerate(zip(self.buckets, self.bucket_grad_norms)):
                r = self.ratios[pos:pos + len(ids)]
                pos += len(ids)
                w.writerow([k, len(ids), repr(float(r[0])), repr(float(r[-1])), repr(float(g)),
                            repr(float(self.cumulative_loss[pos - 1]))])

    def cumulative_to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["position", "node_id", "ratio", "cumulative_loss"])
            for k, (i, r, c) in enumerate(zip(self.order, self.ratios, self.cumulative_loss)):
                w.writerow([k, int(i), repr(float(r)), repr(float(c))])


def ratio_profile(per_node_loss: np.ndarray, grad_norms: np.ndarray, stats: NeighborhoodStats,
                  labels: LabelSet, mask: SplitMask, num_buckets: int = 6) -> RatioProfile:
    """Order TRAIN nodes by own-class neighbour ratio and profile loss and gradient mass.

    ``per_node_loss`` and ``grad_norms`` are indexed by node id. Ties in the
    ratio are broken by node id; buckets are as even as possible.
    """
    train_ids = np.flatnonzero(mask.train)
    if train_ids.size == 0:
        raise ValueError("empty TRAIN set")
    r = stats.own_class_ratio(labels)[train_ids]
    order = train_ids[np.lexsort((train_ids, r))]
    losses = np.asarray(per_node_loss, dtype=np.float64)[order]
    total = losses.sum()
    if total > 0:
        cum = np.cumsum(losses) / total
    else:
        cum = np.arange(1, len(losses) + 1) / len(losses)
    buckets = np.array_split(order, num_buckets)
    g = np.asarray(grad_norms, dtype=np.float64)
    means = np.array([g[b].mean() if len(b) else 0.0 for b in buckets])
    return RatioProfile(order, stats.own_class_ratio(labels)[order], cum, buckets, means)


def gini(values) -> float:
    """Gini coefficient of non-negative values (0 = perfectly even)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0 or v.sum() == 0:
        return 0.0
    n = v.size
    k = np.arange(1, n + 1)
    return float(2 * (k * v).sum() / (n * v.sum()) - (n + 1) / n)


@dataclass
class RunOutcome:
    """Everything the diagnostics need from one trained model."""
    kind: TargetKind
    seed: int
    test_acc: float
    val_acc: float
    ece: float
    loss_gini: float
    probabilities: np.ndarray
    per_node_loss: np.ndarray
    grad_norms: np.ndarray
    model: object = None
    history: object = None


def build_targets(kind, dataset, mask: SplitMask, cfg: SmoothingConfig, stats=None):
    kind = TargetKind(kind)
    if kind is TargetKind.HARD:
        return hard_targets(dataset.labels, mask)
    if kind is TargetKind.LS:
        return ls_targets(dataset.labels, mask, cfg.epsilon)
    stats = compute_ratios(dataset.graph, dataset.labels, mask) if stats is None else stats
    return sals_targets(dataset.labels, mask, stats, cfg)


def run_once(dataset, mask: SplitMask, kind, smoothing: SmoothingConfig, cfg: TrainConfig,
             adj=None) -> RunOutcome:
    """Train one model and collect accuracy, calibration and per-node diagnostics.

    Per-node losses are measured against the hard labels so runs with
    different target kinds are comparable.
    """
    adj = normalize_adjacency(dataset.graph) if adj is None else adj
    targets = build_targets(kind, dataset, mask, smoothing)
    model, history = train(dataset.graph, dataset.features, dataset.labels, targets, mask, cfg, adj=adj)
    cache = forward(model, adj, dataset.features)
    probs = cache.probabilities
    hard = hard_targets(dataset.labels, mask)
    loss = per_node_cross_entropy(cache, hard)
    norms = np.linalg.norm(node_logit_gradients(cache, targets), axis=1)
    rel = reliability(probs, dataset.labels, mask, Role.TEST)
    return RunOutcome(
        kind=TargetKind(kind), seed=cfg.seed,
        test_acc=evaluate(model, adj, dataset.features, dataset.labels, mask, Role.TEST),
        val_acc=evaluate(model, adj, dataset.features, dataset.labels, mask, Role.VAL),
        ece=rel.ece, loss_gini=gini(loss[mask.train]),
        probabilities=probs, per_node_loss=loss, grad_norms=norms,
        model=model, history=history)


@dataclass
class SweepGrid:
    epsilon_values: list[float]
    gamma_values: list[float]
    accuracy: np.ndarray   # (len(eps), len(gamma)) mean test accuracy, NaN for invalid cells
    stddev: np.ndarray
    runs: np.ndarray       # successful runs per cell
    failures: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epsilon", "gamma", "mean_test_acc", "std_test_acc", "runs", "failed"])
            for a, e in enumerate(self.epsilon_values):
                for b, g in enumerate(self.gamma_values):
                    w.writerow([repr(e), repr(g), repr(float(self.accuracy[a, b])),
                                repr(float(self.stddev[a, b])), int(self.runs[a, b]),
                                len(self.failures.get((a, b), []))])

    def matrix_to_csv(self, path) -> None:
        """Wide layout: header names the gamma values, first column the epsilon values."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epsilon\\gamma"] + [repr(g) for g in self.gamma_values])
            for a, e in enumerate(self.epsilon_values):
                w.writerow([repr(e)] + [repr(float(v)) for v in self.accuracy[a]])


def sweep(dataset, mask: SplitMask, epsilon_values, gamma_values, seeds, cfg: TrainConfig,
          kind=TargetKind.SALS) -> SweepGrid:
    """Train one model per (epsilon, gamma, seed) and aggregate test accuracy.

    ``seeds`` is an iterable of training seeds, or an int meaning ``range(seeds)``.
    A cell with any diverged run keeps the successful ones; a cell with none
    is NaN.
    """
    eps_vals, gamma_vals = list(epsilon_values), list(gamma_values)
    if not eps_vals or not gamma_vals:
        raise ValueError("sweep grids must be non-empty")
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    adj = normalize_adjacency(dataset.graph)
    stats = compute_ratios(dataset.graph, dataset.labels, mask)
    acc = np.full((len(eps_vals), len(gamma_vals)), np.nan)
    std = np.full_like(acc, np.nan)
    runs = np.zeros(acc.shape, dtype=np.int64)
    failures = {}
    for a, e in enumerate(eps_vals):
        for b, g in enumerate(gamma_vals):
            targets = build_targets(kind, dataset, mask, SmoothingConfig(e, g), stats)
            scores = []
            for s in seeds:
                try:
                    model, _ = train(dataset.graph, dataset.features, dataset.labels, targets,
                                     mask, replace(cfg, seed=s), adj=adj)
                except TrainingDiverged as err:
                    log.warning("cell eps=%g gamma=%g seed=%d failed: %s", e, g, s, err)
                    failures.setdefault((a, b), []).append((s, str(err)))
                    continue
                scores.append(evaluate(model, adj, dataset.features, dataset.labels, mask, Role.TEST))
            if scores:
                acc[a, b] = np.mean(scores)
                std[a, b] = np.std(scores)
                runs[a, b] = len(scores)
    return SweepGrid(eps_vals, gamma_vals, acc, std, runs, failures)


@dataclass
class EmbeddingTable:
    node_ids: np.ndarray
    ratios: np.ndarray
    labels: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return len(self.node_ids)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["node_id", "r_value", "label"] + [f"h{k}" for k in range(self.vectors.shape[1])])
            for i, r, y, v in zip(self.node_ids, self.ratios, self.labels, self.vectors):
                w.writerow([int(i), repr(float(r)), int(y)] + [repr(float(x)) for x in v])


def export_embeddings(model, adj, features, labels: LabelSet, mask: SplitMask,
                      stats: NeighborhoodStats, threshold: float = 0.0) -> EmbeddingTable:
    """Penultimate activations of TRAIN nodes whose own-class ratio is ``>= threshold``."""
    if model.num_layers < 2:
        raise ValueError("a 1-layer model has no penultimate layer")
    h = forward(model, adj, features).penultimate
    r = stats.own_class_ratio(labels)
    sel = np.flatnonzero(mask.train & (r >= threshold))
    return EmbeddingTable(sel, r[sel], labels.labels[sel], h[sel])


def median_ratio(stats: NeighborhoodStats, labels: LabelSet, mask: SplitMask) -> float:
    """Own-class ratio splitting TRAIN nodes into halves, for the upper-half export."""
    return float(np.median(stats.own_class_ratio(labels)[mask.train]))


def summarize(values) -> tuple[float, float]:
    v = np.asarray(list(values), dtype=np.float64)
    return (float(v.mean()), float(v.std())) if v.size else (math.nan, math.nan)
