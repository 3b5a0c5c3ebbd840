"""Fourier-Walsh spectra of a few zoo functions and their i.i.d. noise correlations."""
import numpy as np

from xsense import level_energies, noise_correlation, transform, zoo_build

FUNCTIONS = [
    ("majority", {"n": 9}),
    ("tribes", {"b": 3, "k": 4}),
    ("iterated_majority", {"depth": 2}),
    ("parity", {"n": 8}),
    ("crossing", {"shape": "rhombus", "n": 4}),
]

np.set_printoptions(precision=4, suppress=True)
for family, params in FUNCTIONS:
    f = zoo_build(family, **params)
    sp = transform(f)
    energy = level_energies(sp)
    mean_level = float(np.arange(f.n + 1) @ energy)
    print(f"{f.describe()}: parseval={sp.parseval():.12f}  E|S|={mean_level:.3f}")
    print("  level energies", energy)
    for eps in (0.05, 0.2, 0.5):
        print(f"  eps={eps:<4}  noise correlation {noise_correlation(sp, eps):.5f}")
