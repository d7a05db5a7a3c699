"""Structure-aware label smoothing for transductive node classification."""

from .graph import ABSENT, Graph, LabelSet, NodeFeatures, Role, SplitMask, build_graph, neighbors
from .targets import (NeighborhoodStats, SmoothingConfig, TargetDistribution, TargetKind,
                      compute_ratios, hard_targets, ls_targets, make_targets, optimum_logit_gap,
                      sals_targets)
from .gnn import (Adam, GcnModel, TrainConfig, TrainHistory, TrainingDiverged, backward,
                  evaluate, forward, load_model, normalize_adjacency, save_model,
                  soft_cross_entropy, train)
from .data import Dataset, SbmConfig, generate_sbm, load_dataset, make_splits, save_dataset

__version__ = "0.1.0"
