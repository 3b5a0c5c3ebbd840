import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

import oracles
from xsense.core import Configuration, SubsetMask, zoo_build
from xsense.dynamics import (PermutationPath, count_switches, evolve, evolve_batch, graph_build,
                             sample_path, snps, snps_batch, snps_trajectory_batch, transport,
                             uniform_states)
from xsense.kernel import kernel_entry
from xsense.rng import stream


def test_graph_family_examples():
    g = graph_build("complete", n=4)
    assert len(g.edges) == 6 and np.allclose(g.rates, 0.25)
    p = graph_build("path", n=3)
    assert [tuple(e) for e in p.edges] == [(0, 1), (1, 2)] and np.allclose(p.rates, 0.5)
    iso = graph_build("isolated_edges", m=2)
    assert iso.n == 4 and len(iso.edges) == 2 and np.allclose(iso.rates, 1.0)
    grid = graph_build("grid2d", side=3)
    assert grid.n == 9 and len(grid.edges) == 12 and np.allclose(grid.rates, 0.25)


def test_graph_errors_and_assumption():
    with pytest.raises(ValueError):
        graph_build("torus", n=4)
    with pytest.raises(ValueError):
        graph_build("complete", n=0)
    for g in (graph_build("complete", n=7), graph_build("path", n=5),
              graph_build("grid2d", side=4), graph_build("isolated_edges", m=3)):
        assert g.assumption_ok
        assert np.all(g.vertex_rates <= 1.0 + 1e-12)


def test_edges_are_simple():
    g = graph_build("grid2d", side=5)
    e = g.edges
    assert np.all(e[:, 0] != e[:, 1])
    assert len({tuple(sorted(x)) for x in e.tolist()}) == len(e)


def test_medium_range_neighbour_counts():
    side = 40
    ij = np.array([(i, j) for j in range(side) for i in range(side)], dtype=float)
    coords = np.column_stack([ij[:, 0] - ij[:, 1] / 2, ij[:, 1] * math.sqrt(3) / 2])
    g = graph_build("medium_range", coords=coords, n=25, alpha=0.5)
    deg = np.bincount(g.edges.ravel(), minlength=g.n)
    centre = np.argmin(np.sum((coords - coords.mean(axis=0)) ** 2, axis=1))
    # disk of radius 5 at site density 2/sqrt(3)
    expect = math.pi * 25 * 2 / math.sqrt(3)
    assert abs(deg[centre] - expect) < 0.15 * expect
    assert g.vertex_rates.max() * 1.0 < 4.0
    assert not g.assumption_ok


def test_zero_time_path_is_empty():
    assert len(sample_path(graph_build("complete", n=5), 0.0, rng=1)) == 0
    with pytest.raises(ValueError):
        sample_path(graph_build("complete", n=5), -1.0, rng=1)


def test_event_count_mean_complete100():
    g = graph_build("complete", n=100)
    rng = stream(11, 0)
    counts = np.array([len(sample_path(g, 1.0, rng)) for _ in range(10_000)])
    assert g.total_rate == pytest.approx(49.5)
    assert abs(counts.mean() - 49.5) < 3 * math.sqrt(49.5 / 10_000)


def test_single_edge_no_event_probability():
    g = graph_build("path", n=2)
    rng = stream(12, 0)
    none = np.mean([len(sample_path(g, 1.0, rng)) == 0 for _ in range(20_000)])
    p = math.exp(-0.5)
    assert abs(none - p) < 3 * math.sqrt(p * (1 - p) / 20_000)


def test_evolve_examples():
    empty = PermutationPath(2, 1.0, np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64))
    assert evolve(Configuration.parse("10"), empty) == Configuration.parse("10")
    one = PermutationPath(2, 1.0, np.array([0.5]), np.array([0]), np.array([1]))
    assert str(evolve(Configuration.parse("10"), one)) == "01"
    with pytest.raises(ValueError):
        evolve(Configuration.parse("101"), one)


def test_transport_examples():
    g = graph_build("complete", n=6)
    path = sample_path(g, 2.0, rng=3)
    assert transport(SubsetMask(6, 0), path).mask == 0
    assert transport(SubsetMask.full(6), path).mask == 63


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 10 - 1), st.integers(0, 2 ** 32))
def test_evolve_transport_consistency_and_conservation(S, seed):
    g = graph_build("path", n=10)
    path = sample_path(g, 3.0, rng=seed)
    out = evolve(Configuration(10, S), path)
    assert out.ones() == bin(S).count("1")
    assert out.bits == transport(SubsetMask(10, S), path).mask


def test_stationarity_chi_square():
    g = graph_build("complete", n=4)
    rng = stream(13, 0)
    states = uniform_states(4, 100_000, rng)
    out = evolve_batch(states, g, 0.7, rng)
    masks = out @ (1 << np.arange(4))
    counts = np.bincount(masks, minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_transport_law_is_symmetric():
    g = graph_build("path", n=5)
    S, S2 = SubsetMask(5, 0b00011), SubsetMask(5, 0b01010)
    rng = stream(14, 0)
    N = 40_000
    a = np.mean([transport(S, sample_path(g, 1.5, rng)).mask == S2.mask for _ in range(N)])
    b = np.mean([transport(S2, sample_path(g, 1.5, rng)).mask == S.mask for _ in range(N)])
    exact = kernel_entry(g, S, S2, 1.5)
    se = math.sqrt(2 * exact * (1 - exact) / N)
    assert abs(a - b) < 3 * se


def test_path_sampler_matches_per_edge_clocks():
    # law of |{x in S: pi(x) = x}| style check via a fixed function of the final state
    g = graph_build("path", n=4)
    edges = oracles.path_edges(4)
    rng_a, rng_b = stream(15, 0), np.random.default_rng(15)
    N = 20_000
    a = np.bincount([evolve(Configuration(4, 0b0011), sample_path(g, 1.0, rng_a)).bits
                     for _ in range(N)], minlength=16)
    b = np.bincount([oracles.simulate_exclusion(0b0011, 4, edges, 1.0, rng_b)
                     for _ in range(N)], minlength=16)
    keep = (a + b) > 0
    assert stats.chi2_contingency(np.vstack([a[keep], b[keep]])).pvalue > 1e-3


def test_snps_examples():
    w = Configuration(12, 0b101101110001)
    assert snps(w, 0.0, rng=1) == w
    with pytest.raises(ValueError):
        snps(w, 1.2, rng=1)
    rng = stream(16, 0)
    n = 10_000
    diffs = [np.count_nonzero(snps_batch(np.zeros((1, n), np.uint8), 0.3, rng)) for _ in range(30)]
    sigma = math.sqrt(n * 0.15 * 0.85 / 30)
    assert abs(np.mean(diffs) - 1500) < 3 * sigma


def test_snps_full_refresh_is_uniform():
    rng = stream(17, 0)
    out = snps_batch(np.ones((50_000, 3), np.uint8), 1.0, rng)
    counts = np.bincount(out @ np.array([1, 2, 4]), minlength=8)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_snps_trajectory_time_change():
    # disagreement rate of the refresh process at time t is (1 - e^-t)/2
    rng = stream(18, 0)
    out = snps_trajectory_batch(np.zeros((200_000, 1), np.uint8), 1.0, rng)
    p = (1 - math.exp(-1)) / 2
    assert abs(out.mean() - p) < 3 * math.sqrt(p * (1 - p) / 200_000)


def test_count_switches_examples():
    g = graph_build("complete", n=8)
    assert count_switches(zoo_build("constant", n=8), g, 5.0, rng=1).switches == 0
    assert count_switches(zoo_build("parity", n=8), g, 5.0, rng=1).switches == 0


def test_dictator_switches_follow_tracked_bit():
    g = graph_build("complete", n=6)
    f = zoo_build("dictator", n=6, i=1)
    for seed in range(20):
        stats_ = count_switches(f, g, 3.0, rng=stream(seed))
        rng = stream(seed)
        state = uniform_states(6, 1, rng)[0]
        path = sample_path(g, 3.0, rng)
        trace = [state[0]]
        for u, v in zip(path.us, path.vs):
            state[[u, v]] = state[[v, u]]
            trace.append(state[0])
        trace = np.array(trace)
        assert stats_.switches == np.count_nonzero(trace[1:] != trace[:-1])
