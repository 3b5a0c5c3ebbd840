import math

import numpy as np
import pytest

import oracles
from xsense.core import CapError, SubsetMask, zoo_build
from xsense.dynamics import graph_build
from xsense.kernel import (exact_absolute_correlation, exact_exclusion_correlation, kernel_at,
                           kernel_entry, level_eigen, level_generator, min_restricted_eigenvalue,
                           phi_mass, singularity_diagnostic, write_eigen_csv, write_kernel_csv)
from xsense.spectral import transform


def edges_of(g):
    return [(int(u), int(v), float(r)) for (u, v), r in zip(g.edges, g.rates)]


def test_generator_examples():
    L = level_generator(graph_build("complete", n=2), 1).dense()
    assert np.array_equal(L, [[-0.5, 0.5], [0.5, -0.5]])
    P = level_generator(graph_build("path", n=3), 1).dense()
    assert np.array_equal(P, [[-0.5, 0.5, 0], [0.5, -1.0, 0.5], [0, 0.5, -0.5]])
    for g in (graph_build("grid2d", side=3), graph_build("complete", n=6)):
        for k in (1, 2, 3):
            M = level_generator(g, k).dense()
            assert np.allclose(M.sum(axis=1), 0, atol=1e-15)
            assert np.array_equal(M, M.T)


def test_generator_errors():
    g = graph_build("complete", n=4)
    with pytest.raises(ValueError):
        level_generator(g, 5)
    with pytest.raises(CapError, match="cap of 10"):
        level_generator(graph_build("complete", n=8), 4, cap=10)


@pytest.mark.parametrize("family,n", [("complete", 6), ("path", 7), ("isolated_edges", 6)])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_kernel_matches_matrix_exponential(family, n, k):
    g = graph_build(family, n=n) if family != "isolated_edges" else graph_build(family, m=n // 2)
    states, ref = oracles.level_kernel(n, edges_of(g), k, 1.3)
    K = kernel_at(level_generator(g, k), 1.3)
    assert np.array_equal(K.states, states)
    assert np.allclose(K.matrix, ref, atol=1e-12)


def test_kernel_closed_forms():
    g2 = graph_build("complete", n=2)
    for t in (0.0, 0.4, 2.0):
        K = kernel_at(level_generator(g2, 1), t).matrix
        assert K[0, 0] == pytest.approx((1 + math.exp(-t)) / 2, abs=1e-13)
    g5 = graph_build("complete", n=5)
    K = kernel_at(level_generator(g5, 1), 1.0).matrix
    assert np.allclose(np.diag(K), 0.2 + 0.8 * math.exp(-1), atol=1e-13)
    assert np.array_equal(kernel_at(level_generator(g5, 2), 0.0).matrix, np.eye(10))
    with pytest.raises(ValueError):
        kernel_at(level_generator(g5, 1), -1.0)


def test_kernel_structure_invariants():
    for g in (graph_build("complete", n=7), graph_build("path", n=7), graph_build("grid2d", side=3)):
        for k in (1, 2, 3):
            P = kernel_at(level_generator(g, k), 0.9).matrix
            assert np.max(np.abs(P - P.T)) <= 1e-10
            assert np.max(np.abs(P.sum(axis=1) - 1)) <= 1e-12
            assert np.linalg.eigvalsh(P).min() >= -1e-10


def test_exact_correlation_matches_brute_force():
    for g in (graph_build("complete", n=5), graph_build("path", n=5)):
        f = zoo_build("majority", n=5)
        ref = oracles.exclusion_correlation(f.table, g.n, edges_of(g), 0.8)
        assert exact_exclusion_correlation(transform(f), g, 0.8) == pytest.approx(ref, abs=1e-12)


def test_exact_correlation_examples():
    g = graph_build("path", n=6)
    p = transform(zoo_build("parity", n=6))
    assert exact_exclusion_correlation(p, g, 3.0) == 1.0
    f = transform(zoo_build("tribes", b=2, k=3))
    assert exact_exclusion_correlation(f, g, 0.0) == pytest.approx(1 - f[0] ** 2, abs=1e-14)


def test_exact_correlation_nonincreasing_in_time():
    grid = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
    for name, params in [("majority", {"n": 7}), ("tribes", {"b": 2, "k": 3}),
                         ("count_band", {"n": 8, "width": 2}), ("dictator", {"n": 6})]:
        f = transform(zoo_build(name, **params))
        for g in (graph_build("complete", n=f.n), graph_build("path", n=f.n)):
            vals = [exact_exclusion_correlation(f, g, t) for t in grid]
            assert all(v >= -1e-12 for v in vals)
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_absolute_correlation_examples():
    g = graph_build("complete", n=5)
    d = transform(zoo_build("dictator", n=5, i=2))
    K = kernel_at(level_generator(g, 1), 1.0).matrix
    assert exact_absolute_correlation(d, g, 1.0) == pytest.approx(K[1, 1], abs=1e-13)
    m = transform(zoo_build("majority", n=5))
    assert exact_absolute_correlation(m, g, 1.0) >= exact_exclusion_correlation(m, g, 1.0)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_flipped_pair_cancellation(m):
    g = graph_build("isolated_edges", m=m)
    f = transform(zoo_build("count_band", n=2 * m, width=2))
    h = transform(zoo_build("flipped_pairs", edges=m))
    assert exact_exclusion_correlation(h, g, 1.0) < exact_exclusion_correlation(f, g, 1.0)
    assert abs(exact_absolute_correlation(h, g, 1.0) - exact_absolute_correlation(f, g, 1.0)) < 1e-10


def test_flipped_pair_values_frozen():
    # three edges at t = 1, from the matrix-exponential oracle
    g = graph_build("isolated_edges", m=3)
    f = zoo_build("count_band", n=6, width=2)
    h = zoo_build("flipped_pairs", edges=3)
    ref_f = oracles.exclusion_correlation(f.table, 6, edges_of(g), 1.0)
    ref_h = oracles.exclusion_correlation(h.table, 6, edges_of(g), 1.0)
    assert exact_exclusion_correlation(transform(f), g, 1.0) == pytest.approx(ref_f, abs=1e-12)
    assert exact_exclusion_correlation(transform(h), g, 1.0) == pytest.approx(ref_h, abs=1e-12)


def test_eigen_examples():
    E = level_eigen(level_generator(graph_build("complete", n=2), 1))
    assert np.allclose(E.rates, [0, 1], atol=1e-12)
    E5 = level_eigen(level_generator(graph_build("complete", n=5), 1))
    assert np.allclose(E5.rates, [0, 1, 1, 1, 1], atol=1e-12)
    for g in (graph_build("path", n=6), graph_build("isolated_edges", m=3)):
        for k in (1, 2, 3):
            E = level_eigen(level_generator(g, k))
            assert E.rates[0] == 0.0 and np.all(np.diff(E.rates) >= 0)
            assert np.allclose(E.vectors[:, 0], 1 / math.sqrt(E.states.size))
            assert np.allclose(E.vectors.T @ E.vectors, np.eye(E.states.size), atol=1e-10)


def test_eigen_cap():
    with pytest.raises(CapError, match="eigendecomposition cap of 5"):
        level_eigen(level_generator(graph_build("complete", n=6), 2), cap=5)


def test_phi_mass_examples():
    g = graph_build("path", n=6)
    f = transform(zoo_build("tribes", b=2, k=3))
    assert phi_mass(f, g, math.inf) == pytest.approx(1 - f[0] ** 2)
    p = transform(zoo_build("parity", n=6))
    for C in (0.0, 0.5, 10.0):
        assert phi_mass(p, g, C) == pytest.approx(1.0)
    assert phi_mass(p, g, 0.0, exclude_level_uniform=True) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name,params", [("majority", {"n": 7}), ("tribes", {"b": 2, "k": 4}),
                                         ("count_band", {"n": 8, "width": 2}),
                                         ("iterated_majority", {"depth": 1})])
def test_phi_mass_sandwich(name, params):
    f = transform(zoo_build(name, **params))
    g = graph_build("complete", n=f.n)
    var = 1 - f[0] ** 2
    for C in (0.3, 1.0, 2.0):
        phi = phi_mass(f, g, C)
        for t in (0.5, 1.0, 3.0):
            N = exact_exclusion_correlation(f, g, t)
            assert math.exp(-C * t) * phi <= N + 1e-12
            assert N <= phi + math.exp(-C * t) * var + 1e-12


def test_restricted_eigenvalue_bound():
    for g in (graph_build("complete", n=8), graph_build("path", n=8), graph_build("grid2d", side=2)):
        for k in (1, 2, 3):
            t = math.log(4 / 3) / k
            assert min_restricted_eigenvalue(g, t, k) >= 0.5


def test_singularity_examples():
    g = graph_build("complete", n=8)
    f = zoo_build("count_band", n=8, width=2)
    sp = transform(f)
    everything = singularity_diagnostic(sp, g, 1.0, lambda m: m > 0)
    assert everything.mass_outside == 0.0 and everything.max_return == pytest.approx(1.0)
    nothing = singularity_diagnostic(sp, g, 1.0, set())
    assert nothing.mass_outside == pytest.approx(1 - sp[0] ** 2)

    sizes = np.bitwise_count(np.arange(256, dtype=np.uint64))
    rep = singularity_diagnostic(sp, g, 1.0, lambda m: (sizes[m] >= 3) & (sizes[m] <= 5))
    coef = oracles.fourier(f.table)
    outside = sum(coef[s] ** 2 for s in range(1, 256) if not 3 <= bin(s).count("1") <= 5)
    assert rep.mass_outside == pytest.approx(outside, abs=1e-14)
    # complete-graph chains stay on their level, so every A-row returns to A with probability 1
    assert rep.max_return == pytest.approx(1.0)

    band = {s for s in range(256) if bin(s).count("1") == 3 and s & 1}
    rep = singularity_diagnostic(sp, g, 1.0, band)
    states, P = oracles.level_kernel(8, edges_of(g), 3, 1.0)
    idx = [states.index(s) for s in sorted(band)]
    assert rep.max_return == pytest.approx(P[np.ix_(idx, idx)].sum(axis=1).max(), abs=1e-12)


def test_kernel_entry_and_csv(tmp_path):
    g = graph_build("path", n=4)
    S, S2 = SubsetMask(4, 0b0011), SubsetMask(4, 0b0101)
    states, P = oracles.level_kernel(4, edges_of(g), 2, 0.7)
    assert kernel_entry(g, S, S2, 0.7) == pytest.approx(P[states.index(3), states.index(5)])
    assert kernel_entry(g, S, SubsetMask(4, 1), 0.7) == 0.0
    L = level_generator(g, 2)
    write_kernel_csv(kernel_at(L, 0.7), tmp_path / "k.csv", header_rows=["seed=0"])
    write_eigen_csv(level_eigen(L), tmp_path / "e.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "# seed=0" and len(lines) == 2 + 36
