"""Train Natural, ball-adversarial and Voronoi-adversarial models on the
planes data and compare their robustness curves.

This is a shortened run (few retrainings, fewer epochs) that finishes in a
few minutes; use the CLI ``run`` command for the full-length version.

    python demos/planes_training.py [codim]
"""

import sys

from voronoi_adv import AttackConfig, TrainConfig, aggregate, make_planes, robustness_curve, train_runs
from voronoi_adv.evaluation import default_eps_grid, default_suite

codim = int(sys.argv[1]) if len(sys.argv) > 1 else 10
train_set, test_set = make_planes(1.0, codim)
reach = train_set.spec.reach_decision_axis
grid = default_eps_grid(reach)

attacks = {
    "natural": None,
    "ball": AttackConfig("ball_pgd", 2, 0.5),
    "voronoi": AttackConfig("voronoi_pgd", 2, step=0.05 * reach),
}
for mode, attack in attacks.items():
    runs = train_runs(train_set, TrainConfig(mode, epochs=60, attack=attack, retrainings=3))
    curves = [robustness_curve(r.model, test_set, default_suite(2), grid) for r in runs]
    agg = aggregate(curves)
    print(f"codim {codim:4} {mode:8}: NAUC {agg.nauc_mean:.3f} +- {agg.nauc_std:.3f}")
