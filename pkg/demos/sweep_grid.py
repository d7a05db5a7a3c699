"""Small (epsilon, gamma) grid on an SBM, printed as a matrix."""
# %%
import numpy as np

from sals import SbmConfig, TrainConfig, generate_sbm, make_splits
from sals.analysis import sweep

ds = generate_sbm(SbmConfig(nodes_per_class=50, num_classes=4, p_in=0.10, p_out=0.01,
                            feature_dim=4, feature_noise=16.0, seed=2))
mask = make_splits(ds.num_nodes, seed=2)

grid = sweep(ds, mask, [0.1, 0.3, 0.5], [0.5, 0.7, 0.9], seeds=3, cfg=TrainConfig(epochs=200))

# %%
print("rows: epsilon, columns: gamma")
print("      " + "  ".join(f"{g:5.1f}" for g in grid.gamma_values))
for e, row in zip(grid.epsilon_values, grid.accuracy):
    print(f"{e:5.1f} " + "  ".join(f"{a:5.3f}" for a in row))
