"""Noise and exclusion sensitivity of Boolean functions.

Exact Fourier-Walsh spectra, exclusion-process simulation, exact level-k
exclusion kernels, Monte Carlo estimators, the resampling/exclusion coupling
and triangular-lattice percolation experiments.
"""
from .core import (CapError, Configuration, BooleanFunction, SubsetMask, TabulationError,
                   bias_profile, flip, influences, is_monotone, jointly_pivotal,
                   read_truth_table, write_truth_table, zoo_build)
from .dynamics import (DynamicsGraph, PermutationPath, count_switches, evolve, graph_build,
                       sample_path, snps, transport)
from .spectral import (Spectrum, disjoint_mass, flip_conjugate, inverse_transform, level_energies,
                       level_energy, noise_correlation, sample_spectral, superset_mass, transform)

__version__ = "0.1.0"

__all__ = [
    "BooleanFunction", "CapError", "Configuration", "DynamicsGraph", "PermutationPath",
    "Spectrum", "SubsetMask", "TabulationError", "bias_profile", "count_switches",
    "disjoint_mass", "evolve", "flip", "flip_conjugate", "graph_build", "influences",
    "inverse_transform", "is_monotone", "jointly_pivotal", "level_energies", "level_energy",
    "noise_correlation", "read_truth_table", "sample_path", "sample_spectral", "snps",
    "superset_mass", "transform", "transport", "write_truth_table", "zoo_build",
]
