import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from xsense.core import (CapError, Configuration, SubsetMask, TabulationError, bias_profile,
                         flip, influences, is_monotone, jointly_pivotal, read_truth_table,
                         write_truth_table, zoo_build)


def test_configuration_parse_and_width():
    w = Configuration.parse("1010")
    assert w.bits == 0b0101 and w.ones() == 2 and str(w) == "1010"
    with pytest.raises(ValueError):
        Configuration(2, 0b100)
    with pytest.raises(ValueError):
        Configuration(0, 0)


def test_subset_mask_vertices():
    S = SubsetMask.from_vertices(4, [1, 3])
    assert S.mask == 0b101 and S.positions() == [0, 2] and len(S) == 2
    with pytest.raises(ValueError):
        SubsetMask.from_vertices(4, [5])


def test_parity_full_is_plus_one_at_zero():
    f = zoo_build("parity", n=4, support="all")
    assert f(Configuration.parse("0000")) == 1
    assert f(Configuration.parse("1000")) == -1


def test_parity_first_half_depends_on_first_two_bits():
    f = zoo_build("parity", n=4, support="first-half")
    for w in range(16):
        expect = 1 if bin(w & 0b11).count("1") % 2 == 0 else -1
        assert f.table[w] == expect


def test_count_band_width_two():
    f = zoo_build("count_band", n=8, width=2)
    assert f(Configuration.parse("00000000")) == 1
    for w in range(256):
        expect = 1 if (bin(w).count("1") // 2) % 2 == 0 else -1
        assert f.table[w] == expect


def test_unknown_family_and_bad_params():
    with pytest.raises(ValueError):
        zoo_build("nope", n=3)
    with pytest.raises(ValueError):
        zoo_build("majority", n=4)
    with pytest.raises(ValueError):
        zoo_build("majority", size=3)


def test_wide_members_are_predicates():
    f = zoo_build("parity", n=40, support="first-half")
    assert not f.tabulated
    rows = np.zeros((2, 40), dtype=np.uint8)
    rows[1, 3] = 1
    assert list(f.evaluate(rows)) == [1, -1]
    with pytest.raises(TabulationError):
        f.values()
    with pytest.raises(CapError):
        zoo_build("iterated_majority", depth=3)


@pytest.mark.parametrize("name,params", [
    ("parity", {"n": 30, "support": "first-half"}),
    ("majority", {"n": 31}),
    ("tribes", {"b": 5, "k": 6}),
    ("count_band", {"n": 30, "width": 3, "centered": True, "window": 29}),
    ("flipped_pairs", {"edges": 13}),
    ("dictator", {"n": 30, "i": 7}),
])
def test_predicate_rules_match_small_tables(name, params):
    # same rule at a tabulated width, compared row by row
    small = {"parity": {"n": 8, "support": "first-half"}, "majority": {"n": 9},
             "tribes": {"b": 2, "k": 3}, "flipped_pairs": {"edges": 4}, "dictator": {"n": 8, "i": 7},
             "count_band": {"n": 8, "width": 3, "centered": True, "window": 7}}[name]
    f = zoo_build(name, **small)
    from xsense.core import RowRule
    kind_params = {"parity": {"positions": list(range(small.get("n", 0) // 2))},
                   "majority": {}, "tribes": {"b": 2, "k": 3}, "flipped_pairs": {},
                   "dictator": {"i": 7},
                   "count_band": {"width": 3, "centered": True, "window": 7}}[name]
    rule = RowRule(name, f.n, **kind_params)
    rows = np.array([oracles.bits(w, f.n) for w in range(1 << f.n)], dtype=np.uint8)
    assert np.array_equal(rule(rows), f.table)
    assert not zoo_build(name, **params).tabulated


@pytest.mark.parametrize("n,name,expect,ii", [
    (3, "dictator", [1, 0, 0], 1.0),
    (4, "parity", [1, 1, 1, 1], 4.0),
    (3, "majority", [0.5, 0.5, 0.5], 0.75),
])
def test_influences_examples(n, name, expect, ii):
    f = zoo_build(name, n=n)
    rep = influences(f)
    assert np.allclose(rep.influences, expect)
    assert rep.ii == pytest.approx(ii)
    assert rep.edge_boundary == (1 << (n - 1)) * rep.total


def test_influences_against_brute_force():
    f = zoo_build("tribes", b=2, k=3)
    assert np.allclose(influences(f).influences, oracles.influences(f.table, f.n))


def test_influences_monte_carlo_for_predicates():
    f = zoo_build("majority", n=31)
    rep = influences(f, samples=20000, rng=5)
    assert rep.stderr is not None
    # exact value C(30,15)/2^30
    from math import comb
    exact = comb(30, 15) / 2 ** 30
    assert np.all(np.abs(rep.influences - exact) < 4 * rep.stderr + 1e-12)


@pytest.mark.parametrize("w,B,out", [("0000", "0000", "0000"), ("1010", "1111", "0101"),
                                     ("1100", "0110", "1010")])
def test_flip_examples(w, B, out):
    B = Configuration.parse(B)
    assert str(flip(Configuration.parse(w), SubsetMask(B.n, B.bits))) == out


@given(st.integers(0, 255), st.integers(0, 255))
def test_flip_is_an_involution(w, b):
    omega, B = Configuration(8, w), SubsetMask(8, b)
    assert flip(flip(omega, B), B) == omega


def test_monotonicity_examples():
    assert is_monotone(zoo_build("majority", n=3))
    assert not is_monotone(zoo_build("parity", n=2))
    assert is_monotone(zoo_build("dictator", n=4, i=2))
    assert is_monotone(zoo_build("tribes", b=2, k=2))


def test_jointly_pivotal_examples():
    d = zoo_build("dictator", n=3, i=1)
    assert jointly_pivotal(d, [0]) == 1.0
    assert jointly_pivotal(d, [1]) == 0.0
    # majority of 3: fixing bit 3 leaves AND or OR of the other two, both depend on each
    assert jointly_pivotal(zoo_build("majority", n=3), SubsetMask.from_vertices(3, [1, 2])) == 1.0
    # majority of 5 on {1,2}: needs exactly one of the other three ones... brute force
    f = zoo_build("majority", n=5)
    hits = 0
    for rest in range(8):
        vals = set()
        for a in range(4):
            w = a | (rest << 2)
            vals.add((a, f.table[w]))
        tab = dict(vals)
        dep1 = tab[0] != tab[1] or tab[2] != tab[3]
        dep2 = tab[0] != tab[2] or tab[1] != tab[3]
        hits += dep1 and dep2
    assert jointly_pivotal(f, [0, 1]) == hits / 8


def test_bias_profile_examples():
    f = zoo_build("majority", n=3)
    assert bias_profile(f, 0.5) == pytest.approx(0.0)
    assert bias_profile(f, 1.0) == 1.0
    d = zoo_build("dictator", n=4, i=2)
    for p in (0.1, 0.3, 0.8):
        assert bias_profile(d, p) == pytest.approx(2 * p - 1)
    with pytest.raises(ValueError):
        bias_profile(f, 1.5)


def test_truth_table_round_trip(tmp_path):
    f = zoo_build("tribes", b=2, k=2)
    path = tmp_path / "f.xsbf"
    write_truth_table(f, path)
    g = read_truth_table(path)
    assert g.n == f.n and np.array_equal(g.table, f.table)
    path.write_bytes(b"junk")
    with pytest.raises(ValueError):
        read_truth_table(path)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 64 - 1))
def test_influence_edge_boundary_identity(n, seed):
    rng = np.random.default_rng(seed)
    from xsense.core import from_indicator
    f = from_indicator(n, rng.integers(0, 2, 1 << n))
    rep = influences(f)
    assert rep.edge_boundary == round((1 << (n - 1)) * rep.total)
    assert np.all((rep.influences >= 0) & (rep.influences <= 1))
