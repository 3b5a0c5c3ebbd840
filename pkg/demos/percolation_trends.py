"""Crossing of the Hex board: duality, decay under complete-graph exclusion, switch growth."""
from xsense.percolation import (complete_graph_crossing, crossing_probability, crossing_switches,
                                medium_range_experiment, rhombus)

SEED = 3
dual = crossing_probability(rhombus(32), 20_000, SEED)
print(f"P(crossing) on 32x32: {dual.estimate:.4f} +- {dual.stderr:.4f}")

for row in complete_graph_crossing([8, 16, 32], 1.0, 20_000, SEED):
    print(f"complete-graph exclusion n={row['n']:3d}: corr={row['estimate']:.4f} +- {row['stderr']:.4f}")

for n in (8, 16, 32):
    sw = crossing_switches(n, 1.0, 100, SEED)
    print(f"switches during [0,1] n={n:3d}: {sw.estimate:.2f} +- {sw.stderr:.2f}")

for row in medium_range_experiment([16, 32], 0.5, 1.0, 10_000, SEED, baseline=False):
    print(f"medium range alpha=0.5 n={row['n']:3d}: corr={row['estimate']:.4f} +- {row['stderr']:.4f}")
