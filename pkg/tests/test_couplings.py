import math

import numpy as np
import pytest
from scipy import stats

import oracles
from xsense.core import Configuration, SubsetMask, zoo_build
from xsense.couplings import (boundary_hit_experiment, dkw_band, hamming_audit, lemma3_check,
                              lemma_epsilon, n01_statistics, triple_batch, triple_sample,
                              updown_path)
from xsense.dynamics import graph_build
from xsense.rng import stream


def test_triple_sample_invariants():
    g = graph_build("complete", n=12)
    rng = stream(1, 0)
    for _ in range(200):
        s = triple_sample(12, 0.7, g, rng)
        assert s.hamming() == s.predicted_hamming()
        assert s.eta_t.ones() == s.omega.ones()
        if s.n01_eps == s.n10_eps == s.n01_t:
            assert s.omega_eps == s.eta_t


def test_triple_requires_complete_graph():
    with pytest.raises(ValueError):
        triple_sample(6, 1.0, graph_build("path", n=6), rng=1)


@pytest.mark.parametrize("n", [10, 100])
def test_hamming_identity_audit(n):
    rep = hamming_audit(n, 1.0, 50_000, seed=2)
    assert rep["violations"] == 0
    assert abs(rep["disagreement_mean"] - rep["disagreement_expected"]) <= 3 * rep["disagreement_stderr"]


def test_disagreement_law_n100():
    rep = hamming_audit(100, 1.0, 100_000, seed=3)
    p = (1 - math.exp(-1)) / 2
    assert rep["disagreement_expected"] == pytest.approx(100 * p)
    se = math.sqrt(100 * p * (1 - p) / 100_000)
    assert abs(rep["disagreement_mean"] - 100 * p) <= 3 * se


def test_coupled_exclusion_marginal_matches_direct_simulation():
    # law of f(eta_0) f(eta_t) for a non-symmetric function on nine sites
    f = zoo_build("tribes", b=3, k=3)
    g = graph_build("complete", n=9)
    N = 40_000
    b = triple_batch(g, 0.8, N, stream(4, 0))
    coupled = np.mean(f.evaluate(b.omega) * f.evaluate(b.eta_t).astype(np.int64))
    rng = np.random.default_rng(4)
    edges = oracles.complete_edges(9)
    direct = []
    for _ in range(N):
        w = int(rng.integers(0, 512))
        direct.append(int(f.table[w]) * int(f.table[oracles.simulate_exclusion(w, 9, edges, 0.8, rng)]))
    direct = np.mean(direct)
    se = math.sqrt((1 - coupled ** 2) / N + (1 - direct ** 2) / N)
    assert abs(coupled - direct) <= 3 * se


def test_changed_positions_are_exchangeable():
    g = graph_build("complete", n=8)
    b = triple_batch(g, 1.0, 60_000, stream(5, 0))
    # condition on four ones
    keep = b.omega.sum(axis=1) == 4
    changed = (b.omega != b.eta_t)[keep]
    zeros = (b.omega == 0)[keep]
    # among zeros, each position equally likely to be the changed one given |omega|
    counts = np.array([np.sum(changed[:, i] & zeros[:, i]) for i in range(8)])
    opportunities = np.array([np.sum(zeros[:, i]) for i in range(8)])
    expected = opportunities * counts.sum() / opportunities.sum()
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_n01_mean_frozen_example():
    g = graph_build("complete", n=10)
    rows = n01_statistics(g, math.log(2), 100_000, seed=6, fixed_ones=5)
    (r,) = rows
    assert r.ones == 5 and r.expected_mean == pytest.approx(1.25)
    assert abs(r.mean - 1.25) <= 3 * r.mean_stderr


def test_n01_zero_time():
    rows = n01_statistics(graph_build("complete", n=10), 0.0, 5000, seed=7)
    assert all(r.mean == 0 and r.variance == 0 for r in rows)


def test_n01_variance_bound_n100():
    rows = n01_statistics(graph_build("complete", n=100), 1.0, 50_000, seed=8, min_bucket=200)
    assert rows
    for r in rows:
        assert r.variance <= r.variance_bound + 3 * r.variance_stderr


def test_lemma_epsilon_examples():
    assert lemma_epsilon(100, 10, 1.0) == pytest.approx(0.52749, abs=5e-6)
    assert lemma_epsilon(100, 10, 1.0) == pytest.approx(oracles.lemma3_epsilon(100, 10, 1.0))
    assert dkw_band(100_000) == pytest.approx(math.sqrt(math.log(100) / 200_000))


def test_domination_examples():
    g = graph_build("complete", n=60)
    zero = lemma3_check(g, SubsetMask.from_positions(60, range(20)), 0.0, 1000, seed=9)
    assert zero.eps == 0.0 and zero.verdict
    rep = lemma3_check(g, SubsetMask.from_positions(60, range(20)), 2.0, 100_000, seed=9)
    assert rep.verdict and rep.record()["verdict"] == "pass"
    with pytest.raises(ValueError):
        lemma3_check(g, SubsetMask.from_positions(60, range(30)), 1.0, 100, seed=9)
    with pytest.raises(ValueError):
        lemma3_check(graph_build("path", n=10), SubsetMask(10, 1), 1.0, 100, seed=9)


def test_updown_examples():
    p = updown_path(Configuration.parse("0110"), 0, 0, rng=1)
    assert p.visited().shape == (1, 4)
    up = updown_path(Configuration.parse("0000"), 4, 0, rng=1)
    assert str(up.end()) == "1111"
    with pytest.raises(ValueError):
        updown_path(Configuration.parse("0011"), 3, 0, rng=1)


def test_updown_path_structure():
    rng = stream(11, 0)
    start = Configuration.parse("0110100110")
    for _ in range(100):
        p = updown_path(start, 3, 2, rng)
        rows = p.visited().astype(int)
        weights = rows.sum(axis=1)
        assert list(np.diff(weights)) == [1, 1, 1, -1, -1]
        changed = np.concatenate([p.up, p.down])
        assert len(set(changed.tolist())) == changed.size
        assert np.all(start.to_array()[p.down] == 1)
        assert p.end().ones() == start.ones() + 1


def test_updown_law_is_permutation_invariant():
    rng = stream(12, 0)
    start = Configuration.parse("001011")
    perm = np.array([5, 3, 0, 1, 4, 2])
    relabelled = Configuration.from_array(start.to_array()[perm])
    N = 20_000
    a = np.bincount([updown_path(start, 2, 1, rng).end().bits for _ in range(N)], minlength=64)
    ends = []
    for _ in range(N):
        e = updown_path(relabelled, 2, 1, rng).end().to_array()
        back = np.empty(6, dtype=np.uint8)
        back[perm] = e
        ends.append(Configuration.from_array(back).bits)
    b = np.bincount(ends, minlength=64)
    keep = (a + b) > 0
    assert stats.chi2_contingency(np.vstack([a[keep], b[keep]])).pvalue > 1e-3


def test_boundary_hit_report():
    rep = boundary_hit_experiment(zoo_build("majority", n=9), 0.5, 2000, seed=13)
    assert 0 < rep["hit_rate"] < 1
    assert rep["ii"] == pytest.approx(9 * (70 / 256) ** 2)
    assert math.isfinite(rep["fitted_constant"])
