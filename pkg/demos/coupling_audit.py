"""Audit the resampling/exclusion triple coupling on the complete graph."""
import math

from xsense import graph_build
from xsense.couplings import hamming_audit, lemma3_check, n01_statistics
from xsense.core import SubsetMask

SEED = 2
for n in (10, 100):
    rep = hamming_audit(n, 1.0, 50_000, SEED)
    print(f"n={n}: Hamming identity violations={rep['violations']}  "
          f"disagreement {rep['disagreement_mean']:.3f} vs {rep['disagreement_expected']:.3f}")

(b,) = n01_statistics(graph_build("complete", n=10), math.log(2), 50_000, SEED, fixed_ones=5)
print(f"N01 mean at |omega|=5, t=log 2: {b.mean:.4f} +- {b.mean_stderr:.4f} (expected {b.expected_mean})")

g = graph_build("complete", n=60)
for t in (0.5, 1.0, 2.0):
    rep = lemma3_check(g, SubsetMask.from_positions(60, range(18)), t, 50_000, SEED)
    print(f"domination t={t}: {rep.record()}")
