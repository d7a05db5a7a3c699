"""Where do the loss and gradient mass sit, relative to neighbourhood agreement?

TRAIN nodes are sorted by the fraction of their TRAIN neighbours that share
their label and cut into six buckets.
"""
# %%
import numpy as np

from sals import SbmConfig, SmoothingConfig, TargetKind, TrainConfig, compute_ratios, generate_sbm
from sals import make_splits
from sals.analysis import ratio_profile, run_once

ds = generate_sbm(SbmConfig(nodes_per_class=50, num_classes=4, p_in=0.10, p_out=0.01,
                            feature_dim=4, feature_noise=16.0, seed=1))
mask = make_splits(ds.num_nodes, seed=1)
stats = compute_ratios(ds.graph, ds.labels, mask)

# %%
for kind in (TargetKind.HARD, TargetKind.SALS):
    r = run_once(ds, mask, kind, SmoothingConfig(), TrainConfig(seed=1))
    prof = ratio_profile(r.per_node_loss, r.grad_norms, stats, ds.labels, mask)
    print(kind.value, "mean grad norm per bucket:", np.round(prof.bucket_grad_norms, 3))
    # share of the total loss carried by the lowest-ratio third of the nodes
    third = len(prof.cumulative_loss) // 3
    print("   loss share of lowest third:", round(float(prof.cumulative_loss[third - 1]), 3))
