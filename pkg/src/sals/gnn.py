"""Full-batch GCN / ResGCN in numpy with hand-written backpropagation.

Layer rule, for layer ``l`` with input ``H``::

    Z = A_hat @ H @ W + b
    H_next = relu(Z) (+ H when the layer is residual), then dropout

The last layer has no activation; its output are the logits. ``A_hat`` is the
symmetrically normalised adjacency with self loops.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, LabelSet, NodeFeatures, Role, SplitMask
from .targets import TargetDistribution

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "sals-gcn-v1"


class TrainingDiverged(RuntimeError):
    pass


class StaleCacheError(RuntimeError):
    pass


def normalize_adjacency(graph: Graph) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` as a CSR matrix, degrees counted with the self loop."""
    n = graph.num_nodes
    deg = graph.degrees() + 1
    rows = np.concatenate([np.repeat(np.arange(n), graph.degrees()), np.arange(n)])
    cols = np.concatenate([graph.neighbor_ids, np.arange(n)])
    vals = 1.0 / np.sqrt(deg[rows].astype(np.float64) * deg[cols])
    adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    adj.sort_indices()
    return adj


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    residual: list[bool]
    version: int = 0

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.residual)):
            raise ValueError("weights, biases and residual flags must have equal length")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ValueError(f"layer {l}: bias shape {b.shape} does not match weight {w.shape}")
            if l and self.weights[l - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {l}: input width {w.shape[0]} does not chain")
            if self.residual[l] and (w.shape[0] != w.shape[1] or l == len(self.weights) - 1):
                raise ValueError(f"layer {l}: residual needs an equal-width hidden layer")

    @classmethod
    def init(cls, in_dim: int, num_classes: int, hidden_dim: int = 64, num_layers: int = 3,
             residual: bool = False, rng: np.random.Generator | None = None) -> "GcnModel":
        """Glorot-uniform weights, zero biases.

        With ``residual=True`` every hidden layer whose input and output
        widths match gets an identity skip connection.
        """
        if num_layers < 1:
            raise ValueError("num_layers must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [num_classes]
        weights = [_glorot(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(b) for b in dims[1:]]
        flags = [residual and l < num_layers - 1 and dims[l] == dims[l + 1]
                 for l in range(num_layers)]
        return cls(weights, biases, flags)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "GcnModel":
        return copy.deepcopy(self)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]          # H_l fed to layer l
    pre: list[np.ndarray]             # Z_l
    hidden: list[np.ndarray]          # activation of hidden layer l before dropout
    masks: list[np.ndarray | None]    # inverted-dropout multipliers
    logits: np.ndarray
    log_probs: np.ndarray
    version: int

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def penultimate(self) -> np.ndarray:
        if not self.hidden:
            raise ValueError("a 1-layer model has no penultimate representation")
        return self.hidden[-1]


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _as_matrix(features) -> np.ndarray:
    return features.matrix if isinstance(features, NodeFeatures) else np.asarray(features, dtype=np.float64)


def forward(model: GcnModel, adj, features, training: bool = False,
            rng: np.random.Generator | None = None, dropout: float = 0.0) -> ForwardCache:
    h = _as_matrix(features)
    if h.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"feature width {h.shape[1]} != model input width {model.weights[0].shape[0]}")
    if h.shape[0] != adj.shape[0]:
        raise ValueError("feature rows do not match the adjacency")
    use_dropout = training and dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout in training mode needs an rng")
    inputs, pre, hidden, masks = [], [], [], []
    last = model.num_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(h)
        z = adj @ (h @ w) + b
        pre.append(z)
        if l == last:
            break
        a = np.maximum(z, 0.0)
        if model.residual[l]:
            a = a + h
        hidden.append(a)
        if use_dropout:
            m = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            masks.append(m)
            h = a * m
        else:
            masks.append(None)
            h = a
    logits = pre[-1]
    return ForwardCache(inputs, pre, hidden, masks, logits, log_softmax(logits), model.version)


def per_node_cross_entropy(cache: ForwardCache, targets: TargetDistribution) -> np.ndarray:
    """Unreduced ``-sum_c q(c|i) log p(c|i)`` for every node."""
    q = targets.matrix if isinstance(targets, TargetDistribution) else targets
    return -(q * cache.log_probs).sum(axis=1)


def soft_cross_entropy(cache: ForwardCache, targets: TargetDistribution, mask: SplitMask) -> float:
    train = mask.train
    if not train.any():
        raise ValueError("empty TRAIN set")
    return float(per_node_cross_entropy(cache, targets)[train].mean())


def l2_penalty(model: GcnModel, weight_decay: float) -> float:
    return 0.5 * weight_decay * sum(float((w * w).sum()) for w in model.weights)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    logits: np.ndarray   # d loss / d logits, already scaled by 1/|TRAIN|

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


def node_logit_gradients(cache: ForwardCache, targets: TargetDistribution) -> np.ndarray:
    """Per-node ``p - q`` rows: the gradient of each node's own CE w.r.t. its logits."""
    q = targets.matrix if isinstance(targets, TargetDistribution) else targets
    return cache.probabilities - q


def backward(model: GcnModel, cache: ForwardCache, targets: TargetDistribution, mask: SplitMask,
             adj, weight_decay: float = 0.0) -> Gradients:
    """Exact gradients of ``mean_TRAIN CE + 0.5 * weight_decay * sum ||W||^2``.

    Biases are not decayed.
    """
    if cache.version != model.version:
        raise StaleCacheError("forward cache was produced by an older model state")
    train = mask.train
    n_train = int(train.sum())
    if n_train == 0:
        raise ValueError("empty TRAIN set")
    d_logits = np.where(train[:, None], node_logit_gradients(cache, targets), 0.0) / n_train
    gw: list = [None] * model.num_layers
    gb: list = [None] * model.num_layers
    dz = d_logits
    skip = None  # gradient reaching the input of layer l through layer l's residual
    for l in range(model.num_layers - 1, -1, -1):
        a_dz = adj.T @ dz
        gw[l] = cache.inputs[l].T @ a_dz + weight_decay * model.weights[l]
        gb[l] = dz.sum(axis=0)
        if l == 0:
            break
        dh = a_dz @ model.weights[l].T
        if skip is not None:
            dh = dh + skip
        m = cache.masks[l - 1]
        da = dh * m if m is not None else dh
        dz = da * (cache.pre[l - 1] > 0)
        skip = da if model.residual[l - 1] else None
    return Gradients(gw, gb, d_logits)


class Adam:
    """Adam with bias correction; updates the given arrays in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 0.01,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 300
    hidden_dim: int = 64
    num_layers: int = 3
    seed: int = 0
    early_stop_patience: int = 50
    residual: bool = False

    def __post_init__(self):
        for name in ("epochs", "hidden_dim", "num_layers", "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive and weight_decay non-negative")


@dataclass
class TrainHistory:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_acc"])
            for row in zip(self.epoch, self.train_loss, self.val_acc):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def predict_proba(model: GcnModel, adj, features) -> np.ndarray:
    return forward(model, adj, features).probabilities


def accuracy(probabilities: np.ndarray, labels: LabelSet, mask: SplitMask, role: Role = Role.TEST) -> float:
    sel = mask.of(role) & labels.present
    if not sel.any():
        raise ValueError(f"no labeled nodes with role {Role(role).name}")
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return float(np.mean(np.argmax(probabilities[sel], axis=1) == labels.labels[sel]))


def evaluate(model: GcnModel, adj, features, labels: LabelSet, mask: SplitMask,
             role: Role = Role.TEST) -> float:
    return accuracy(predict_proba(model, adj, features), labels, mask, role)


def train(graph: Graph, features, labels: LabelSet, targets: TargetDistribution,
          mask: SplitMask, cfg: TrainConfig = TrainConfig(), adj=None,
          callback=None) -> tuple[GcnModel, TrainHistory]:
    """Full-batch Adam training with early stopping on validation accuracy.

    Returns the parameters from the epoch with the best validation accuracy
    (the latest one on ties, i.e. the most trained). ``callback(epoch, cache, node_grads)``, if given, is
    invoked before every update with the unscaled per-node logit gradients of
    the TRAIN nodes.
    """
    adj = normalize_adjacency(graph) if adj is None else adj
    x = _as_matrix(features)
    rng = np.random.default_rng(cfg.seed)
    model = GcnModel.init(x.shape[1], labels.num_classes, cfg.hidden_dim, cfg.num_layers,
                          cfg.residual, rng)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    has_val = bool((mask.of(Role.VAL) & labels.present).any())
    history = TrainHistory()
    best, best_acc, since_best = model.copy(), -1.0, 0
    for epoch in range(1, cfg.epochs + 1):
        cache = forward(model, adj, x, training=True, rng=rng, dropout=cfg.dropout)
        loss = soft_cross_entropy(cache, targets, mask)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at epoch {epoch} (seed {cfg.seed})")
        grads = backward(model, cache, targets, mask, adj, cfg.weight_decay)
        if callback is not None:
            callback(epoch, cache, node_logit_gradients(cache, targets)[mask.train])
        opt.step(grads.parameters())
        model.version += 1
        val_acc = evaluate(model, adj, x, labels, mask, Role.VAL) if has_val else float("nan")
        history.epoch.append(epoch)
        history.train_loss.append(loss)
        history.val_acc.append(val_acc)
        if not has_val or val_acc >= best_acc:
            best, best_acc, since_best = model.copy(), val_acc, 0
            history.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                log.debug("early stop at epoch %d, best %d", epoch, history.best_epoch)
                break
    return best, history


def save_model(model: GcnModel, path) -> None:
    """JSON checkpoint: header fields then row-major float64 weights."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "num_layers": model.num_layers,
        "dims": model.dims,
        "residual": [bool(r) for r in model.residual],
        "weights": [w.ravel(order="C").tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_model(path) -> GcnModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    dims = doc["dims"]
    if len(dims) != doc["num_layers"] + 1:
        raise ValueError(f"{path}: dims do not match num_layers")
    weights = [np.asarray(w, dtype=np.float64).reshape(a, b)
               for w, a, b in zip(doc["weights"], dims[:-1], dims[1:])]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    return GcnModel(weights, biases, list(doc["residual"]))


def train_select_depth(graph: Graph, features, labels: LabelSet, targets: TargetDistribution,
                       mask: SplitMask, cfg: TrainConfig, depths, adj=None):
    """Train one model per depth and keep the one with the best validation accuracy.

    Returns ``(model, history, depth)``; ties go to the shallower model.
    """
    adj = normalize_adjacency(graph) if adj is None else adj
    best = None
    for depth in depths:
        run_cfg = TrainConfig(**{**cfg.__dict__, "num_layers": depth})
        model, history = train(graph, features, labels, targets, mask, run_cfg, adj=adj)
        val = evaluate(model, adj, features, labels, mask, Role.VAL)
        if best is None or val > best[0]:
            best = (val, model, history, depth)
    return best[1:]
