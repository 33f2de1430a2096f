"""Why norm balls struggle in high codimension, in three small tables.

1. Certificates: a grid on two parallel planes is a delta-cover; 1-NN is safe
   on a thicker tube than ball-based training for the same delta.
2. Covering gap: the number of samples ball-based training needs grows
   like 2^(k/2) relative to 1-NN.
3. Volume: the fraction of the eps-tube covered by eps-balls at the samples
   collapses as the ambient dimension grows.

    python demos/sampling_and_volume.py
"""

import numpy as np

from voronoi_adv import (
    certify_ball_cover,
    certify_nn_cover,
    coverage_ratio_bound,
    coverage_ratio_mc,
    covering_gap,
    make_planes,
)

train, _ = make_planes(1.0, 1)
delta, reach = 1.0101525445522108, train.spec.reach_decision_axis
print(f"planes grid: {len(train)} points, cover radius {delta:.4f}, reach {reach}")
for eps in (0.0, 0.25, 0.45, 0.6):
    nn = certify_nn_cover(delta, reach, eps)
    ball = certify_ball_cover(delta, reach, eps)
    print(f"  eps {eps:4}: 1-NN certified {bool(nn)!s:5}  ball certified {bool(ball)}")

print("\ncovering gap (k = manifold dimension)")
for k in (1, 2, 4, 8):
    d_nn, d_ball, ratio = covering_gap(k, 0.25)
    print(f"  k={k}: delta_nn {d_nn:.3f}  delta_ball {d_ball:.3f}  sample ratio >= {ratio:.2f}")

print("\ncoverage of the 0.5-tube by 0.5-balls")
for codim in (1, 10, 100):
    lifted, _ = make_planes(1.0, codim)
    spec = lifted.spec
    bound = coverage_ratio_bound(spec.d, spec.k, 0.5, len(lifted), spec.vol_k)
    est = coverage_ratio_mc(lifted, 0.5, 20_000, seed=codim)
    print(f"  d={spec.d:4}: bound {min(bound, 1.0):.4g}  Monte Carlo {est.value:.4f} +- {est.stderr:.4f}")
