"""Walk a Voronoi-constrained attack across a tiny two-class problem.

Two rows of training points sit at y = 0 and y = 2.  The attack climbs the
loss of a small trained network but is never allowed to leave the Voronoi
cell of its anchor, so it stops on (or just short of) the bisector y = 1
instead of crossing into the other class.

    python demos/voronoi_step_by_step.py
"""

import numpy as np

from voronoi_adv import (
    AttackConfig,
    LabeledDataset,
    NeighborIndex,
    TrainConfig,
    constraint_set,
    in_voronoi_cell,
    train,
    voronoi_pgd,
)

xs = np.linspace(-2, 2, 9)
points = np.vstack([np.c_[xs, np.zeros(9)], np.c_[xs, np.full(9, 2.0)]])
labels = np.repeat([1, 2], 9)
data = LabeledDataset(points, labels)

(model,) = train(data, TrainConfig(epochs=200, batch_size=None, lr=0.05))
index = NeighborIndex(points, labels, p=2)

anchor = 4  # the point (0, 0)
cs = constraint_set(index, anchor, m=3)
print(f"anchor {points[anchor]}, nearest rivals:\n{cs.rivals}")

for step in (0.05, 0.25, 0.6):
    cfg = AttackConfig("voronoi_pgd", 2, step=step, iters=40)
    adv = voronoi_pgd(model, points[anchor], labels[anchor] - 1, cs, cfg)
    inside = in_voronoi_cell(points[anchor], adv, cs, p=2)
    print(f"step {step:4}: stopped at {np.round(adv, 3)}  (inside cell: {inside})")
