"""Boosted clique weights: exact half-sums, corrections, and sampling."""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations

import pytest

from steinerlab.boost import boost_weights, sample_H
from steinerlab.core import Params, RGraph, canon, is_clique
from steinerlab.decode import decoder, materialize
from steinerlab.util import ConfigError


def complete_minus_matching(n: int) -> RGraph:
    matching = {(2 * i + 1, 2 * i + 2) for i in range(n // 2)}
    edges = [e for e in combinations(range(1, n + 1), 2) if e not in matching]
    return RGraph.from_edges(n, 2, edges)


def three_flap_graph() -> RGraph:
    """Triangle (1,2,3) whose edges each lie in their own 5-clique flap.

    The triangle itself extends to no 5-clique, so its correction term
    must vanish while every edge still has a decoder window.
    """
    flaps = [(1, 2, 4, 5, 6), (2, 3, 7, 8, 9), (1, 3, 10, 11, 12)]
    edges = set()
    for Q in flaps:
        edges |= set(combinations(Q, 2))
    return RGraph.from_edges(12, 2, edges)


def brute_p_double_prime(G: RGraph, p: Params, Q: tuple[int, ...]) -> Fraction:
    """Direct evaluation of the correction from its definition."""
    table = decoder(p)
    full_windows = [
        W for W in combinations(range(1, G.n + 1), p.q + p.r) if is_clique(G, W)
    ]
    zcount = {}
    cnt = {}
    for e in sorted(G.edges):
        zcount[e] = sum(1 for W in full_windows if set(e) <= set(W))
        cnt[e] = sum(
            1
            for S in combinations(range(1, G.n + 1), p.q)
            if set(e) <= set(S) and is_clique(G, S)
        )
    from math import comb

    total = Fraction(0)
    for Z in full_windows:
        if not set(Q) <= set(Z):
            continue
        for e in combinations(Z, p.r):
            c_e = Fraction(comb(G.n, p.q - p.r) - cnt[e], 2 * comb(G.n, p.q - p.r))
            psi = materialize(table, Z, e)
            total += c_e * Fraction(1, p.N * zcount[e]) * psi[Q]
    return total


class TestWeights:
    def test_complete_graph_defect_is_one_over_n(self):
        for n in (8, 12):
            G = RGraph.complete(n, 2)
            w = boost_weights(G, Params(3, 2, n=n))
            assert w.p_prime == Fraction(1, 2 * n)
            assert set(w.defect.values()) == {Fraction(1, n)}
            assert set(w.clique_count.values()) == {n - 2}

    def test_complete_twelve_frozen_values(self):
        G = RGraph.complete(12, 2)
        w = boost_weights(G, Params(3, 2, n=12))
        assert w.z_count((1, 2)) == 120
        for Q in [(1, 2, 3), (2, 5, 9), (10, 11, 12)]:
            assert w.p_double_prime(Q) == Fraction(1, 120)
            assert w.p_total(Q) == Fraction(1, 20)
            assert w.selection_probability(Q) == Fraction(3, 5)

    def test_correction_matches_brute_force(self):
        G = complete_minus_matching(10)
        p = Params(3, 2, n=10)
        w = boost_weights(G, p)
        cliques = [Q for Q in combinations(range(1, 11), 3) if is_clique(G, Q)]
        for Q in cliques[::7]:
            assert w.p_double_prime(Q) == brute_p_double_prime(G, p, Q)

    def test_half_sum_exact_on_minus_matching(self):
        G = complete_minus_matching(14)
        w = boost_weights(G, Params(3, 2, n=14))
        assert set(w.defect.values()) == {Fraction(1, 7)}
        for e in sorted(G.edges):
            assert w.half_sum(e) == Fraction(1, 2)

    def test_half_sum_exact_on_larger_minus_matching(self):
        G = complete_minus_matching(30)
        w = boost_weights(G, Params(3, 2, n=30))
        for e in [(1, 3), (2, 9), (5, 30), (11, 14), (17, 28), (28, 30)]:
            assert e in G.edges
            assert w.half_sum(e) == Fraction(1, 2)

    def test_half_sum_exact_on_asymmetric_graph(self):
        G = three_flap_graph()
        w = boost_weights(G, Params(3, 2, n=12))
        for e in sorted(G.edges):
            assert w.half_sum(e) == Fraction(1, 2)

    def test_correction_vanishes_without_windows(self):
        G = three_flap_graph()
        w = boost_weights(G, Params(3, 2, n=12))
        assert w.p_double_prime((1, 2, 3)) == 0
        assert w.p_total((1, 2, 3)) == w.p_prime
        assert w.p_total((1, 2, 4)) == Fraction(11, 72)

    def test_z_family_materialization(self):
        G = three_flap_graph()
        w = boost_weights(G, Params(3, 2, n=12))
        assert w.z_family((1, 2)) == ((1, 2, 4, 5, 6),)
        assert w.z_count((1, 2)) == 1
        full = boost_weights(RGraph.complete(8, 2), Params(3, 2, n=8))
        fam = full.z_family((1, 2))
        assert len(fam) == full.z_count((1, 2)) == 20
        assert all(set((1, 2)) <= set(Z) for Z in fam)

    def test_decoder_cancellation_inside_window(self):
        table = decoder(Params(3, 2))
        Z = (1, 2, 3, 4, 5)
        psi = materialize(table, Z, (1, 2))
        for e in combinations(Z, 2):
            got = sum(psi[Q] for Q in combinations(Z, 3) if set(e) <= set(Q))
            assert got == (6 if e == (1, 2) else 0)

    def test_empty_window_is_a_construction_error(self):
        G = RGraph.from_edges(5, 2, [(1, 2), (1, 3), (2, 3)])
        with pytest.raises(ConfigError, match=r"1, 2"):
            boost_weights(G, Params(3, 2, n=5))

    def test_shape_validation(self):
        with pytest.raises(ConfigError):
            boost_weights(RGraph.complete(10, 2), Params(3, 2, n=12))
        with pytest.raises(ConfigError):
            boost_weights(RGraph.complete(4, 2), Params(3, 2, n=4))

    def test_positivity_clean_on_complete_graph(self):
        w = boost_weights(RGraph.complete(12, 2), Params(3, 2, n=12))
        rep = w.positivity_report()
        assert rep.ok and rep.mode == "exhaustive" and rep.checked == 220
        assert rep.violations == ()

    def test_positivity_flags_wild_instance(self):
        w = boost_weights(three_flap_graph(), Params(3, 2, n=12))
        rep = w.positivity_report()
        assert not rep.ok
        assert any(Q == (1, 2, 4) for Q, _ in rep.violations)

    def test_positivity_sampled_mode(self):
        w = boost_weights(RGraph.complete(12, 2), Params(3, 2, n=12))
        rep = w.positivity_report(budget=50, seed=1)
        assert rep.mode == "sampled" and rep.checked == 50 and rep.ok


class _StubWeights:
    def __init__(self, G, p, prob):
        self.G = G
        self.params = p
        self._prob = prob

    def selection_probability(self, Q):
        return self._prob


class TestSampleH:
    def test_probability_zero_selects_nothing(self):
        G = RGraph.complete(8, 2)
        w = _StubWeights(G, Params(3, 2, n=8), Fraction(0))
        H, rep = sample_H(w, seed=0)
        assert H == ()
        assert rep.size == 0 and set(rep.degrees.values()) == {0}

    def test_probability_one_selects_everything(self):
        G = RGraph.complete(8, 2)
        w = _StubWeights(G, Params(3, 2, n=8), Fraction(1))
        H, rep = sample_H(w, seed=0)
        assert len(H) == 56
        assert set(rep.degrees.values()) == {6}

    def test_out_of_range_probability_raises(self):
        G = RGraph.complete(8, 2)
        w = _StubWeights(G, Params(3, 2, n=8), Fraction(6, 5))
        with pytest.raises(ConfigError, match="outside"):
            sample_H(w, seed=0)
        wild = boost_weights(three_flap_graph(), Params(3, 2, n=12))
        with pytest.raises(ConfigError, match="outside"):
            sample_H(wild, seed=0)

    def test_complete_twelve_degrees_track_target(self):
        w = boost_weights(RGraph.complete(12, 2), Params(3, 2, n=12))
        H, rep = sample_H(w, seed=3)
        assert rep.target == 6
        assert rep.band == pytest.approx(12 ** (2 / 3))
        assert rep.outside == () and rep.inside == 66
        assert 0 <= rep.max_rounding < 1e-12
        means = []
        for seed in range(5):
            _, r = sample_H(w, seed=seed)
            means.append(r.mean)
        grand = sum(means) / len(means)
        assert abs(grand - 6) <= 0.3

    def test_minus_matching_degrees(self):
        w = boost_weights(complete_minus_matching(14), Params(3, 2, n=14))
        H, rep = sample_H(w, seed=1)
        assert rep.target == 7
        assert abs(rep.mean - 7) <= 1.4
        assert len(rep.degrees) == 84

    def test_determinism(self):
        w = boost_weights(RGraph.complete(10, 2), Params(3, 2, n=10))
        first, _ = sample_H(w, seed=9)
        second, _ = sample_H(w, seed=9)
        assert first == second
