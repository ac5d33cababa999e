"""Absorber construction (splitting, elimination, further elimination)
and the signed solve chain, on cycle and fragment expression bases."""

from __future__ import annotations

import dataclasses
import math
import random
from itertools import combinations

import pytest

from steinerlab import absorber as ab
from steinerlab.core import IntVector, Params, RGraph, boundary, canon, verify_decomposition
from steinerlab.decode import decoder, materialize
from steinerlab.integral import IntegralConfig, StageFailure, clique_edges, edge_multiplicities
from steinerlab.util import ConfigError, DivisibilityError, derive_rng


def leave(*verts):
    L = IntVector()
    for v in verts:
        L.add((v,), 1)
    return L


RESERVE = ((11,), (12,), (13,), (14,))


@pytest.fixture(scope="module")
def book():
    p = Params(2, 1, n=4000)
    R = RGraph.from_edges(4000, 1, RESERVE)
    cfg = ab.AbsorberConfig(strategy="cycle", copies_per_sign=1, seed=5)
    return ab.build_absorber(R, p, cfg)


class TestCycleBase:
    def test_three_vertices(self):
        R = RGraph.from_edges(30, 1, [(11,), (12,), (13,)])
        Q1 = ab.cycle_base(R, Params(2, 1, n=30), 30)
        assert set(Q1) == {(11, 12), (12, 13), (11, 13)}

    def test_padding_to_odd(self):
        R = RGraph.from_edges(30, 1, RESERVE)
        Q1 = ab.cycle_base(R, Params(2, 1, n=30), 30)
        verts = sorted({v for Q in Q1 for v in Q})
        assert len(Q1) == len(verts)
        assert len(Q1) % 2 == 1
        assert {11, 12, 13, 14} <= set(verts)
        mult = edge_multiplicities(Q1, 1)
        assert set(mult.values()) == {2}

    def test_empty_reserve(self):
        R = RGraph.from_edges(30, 1, [])
        assert ab.cycle_base(R, Params(2, 1, n=30), 30) == ()

    def test_wrong_uniformity(self):
        R = RGraph.from_edges(30, 2, [(1, 2)])
        with pytest.raises(ConfigError):
            ab.cycle_base(R, Params(3, 2, n=30), 30)


class TestCycleSolve:
    def ring(self, m, offset=0):
        verts = [offset + i for i in range(1, m + 1)]
        return tuple(
            canon((verts[i], verts[(i + 1) % m])) for i in range(m)
        )

    def test_exact_on_random_even_leaves(self):
        p = Params(2, 1, n=100)
        Q1 = self.ring(9, offset=10)
        rng = random.Random(2)
        for _ in range(25):
            L = IntVector()
            picks = rng.sample(range(11, 20), 2 * rng.randint(1, 4))
            for v in picks:
                L.add((v,), 1)
            phi = ab.cycle_solve(Q1, L)
            assert boundary(phi, p).sorted_items() == L.sorted_items()

    def test_odd_total_fails(self):
        Q1 = self.ring(5)
        with pytest.raises(StageFailure) as exc:
            ab.cycle_solve(Q1, leave(1))
        assert exc.value.stage == "express"

    def test_empty_base(self):
        assert ab.cycle_solve((), IntVector()).abs_sum() == 0
        with pytest.raises(StageFailure):
            ab.cycle_solve((), leave(1, 2))


class TestCenteringLaw:
    def test_representative_range_and_congruence(self):
        for N in (2, 6, 12):
            for x in range(-3 * N, 3 * N + 1):
                c = ((x + N // 2) % N) - N // 2
                assert -N // 2 <= c <= N // 2
                assert (x - c) % N == 0

    def test_residual_values_on_book(self, book):
        p, N = book.p, book.N
        L = leave(11, 12)
        phi = ab.cycle_solve(book.Q1, L)
        phi1 = IntVector()
        for Q, c in phi.items():
            phi1.add(Q, ((c + N // 2) % N) - N // 2)
        J = L.copy()
        J.add_scaled(boundary(phi1, p), -1)
        q1_edges = {f for Q in book.Q1 for f in clique_edges(Q, 1)}
        for e, c in J.items():
            assert c in (-N, 0, N)
            assert e in q1_edges


class TestBuildAbsorber:
    def test_registry_shape(self, book):
        assert book.strategy == "cycle"
        assert len(book.Q1) == 5
        assert book.Qplus and book.Qminus
        assert not (book.Qplus & book.Qminus)
        # every base clique has one copy per sign
        bases = set(book.Q1) | set(book.Q2)
        seen = {(c.base, c.sign) for c in book.copies}
        assert seen == {(b, s) for b in bases for s in (1, -1)}
        for copy in book.copies:
            assert len(copy.records) == 11
            nears = [rec for rec in copy.records if rec.near]
            assert len(nears) == 2
            for rec in nears:
                assert rec.base_edge in clique_edges(copy.base, 1)
                assert rec.coeff == copy.sign

    def test_windows_for_every_base_edge(self, book):
        q1_edges = {f for Q in book.Q1 for f in clique_edges(Q, 1)}
        assert set(book.Zsets) == q1_edges
        for e, Z in book.Zsets.items():
            assert set(e) <= set(Z)
            assert len(Z) == book.p.q + book.p.r
        q2 = {
            canon(c)
            for Z in book.Zsets.values()
            for c in combinations(Z, book.p.q)
        }
        assert set(book.Q2) == q2

    def test_base_multiplicity(self, book):
        mult = edge_multiplicities(book.Q1, 1)
        assert max(mult.values()) <= 2

    def test_audit_negative_far_disjoint(self, book):
        neg_far = [
            rec.clique
            for c in book.copies
            for rec in c.records
            if rec.coeff < 0 and not rec.near
        ]
        mult = edge_multiplicities(neg_far, 1)
        assert all(v == 1 for v in mult.values())

    def test_audit_good_eliminations_clear_of_skeleton(self, book):
        a0 = {
            f
            for Q in list(book.Q1) + list(book.Q2)
            for f in clique_edges(Q, 1)
        }
        bad = {b for m in book.elims for b, _, _ in m.bads}
        good_neg = [
            rec.clique
            for m in book.elims
            for rec in m.records
            if rec.coeff < 0 and rec.clique not in bad
        ]
        neg_far = [
            rec.clique
            for c in book.copies
            for rec in c.records
            if rec.coeff < 0 and not rec.near
        ]
        mult = edge_multiplicities(good_neg + neg_far, 1)
        assert all(v == 1 for v in mult.values())
        assert not set(mult) & a0

    def test_audit_absorber_decomposed_and_clear_of_reserve(self, book):
        mult = edge_multiplicities(sorted(book.Qminus), 1)
        assert all(v == 1 for v in mult.values())
        assert not set(mult) & set(book.R.edges)
        host = RGraph(n=book.p.n, r=1, edges=book.absorber_edges())
        rep = verify_decomposition(host, sorted(book.Qminus), q=2)
        assert rep.ok, rep.reason

    def test_bad_partners_unique_and_far(self, book):
        pos_far = {}
        for c in book.copies:
            for rec in c.records:
                if rec.coeff > 0 and not rec.near:
                    for f in clique_edges(rec.clique, 1):
                        pos_far.setdefault(f, []).append(rec.clique)
        for move in book.elims:
            for bad_clique, e_i, partner in move.bads:
                assert pos_far[e_i] == [partner]
                assert len(set(bad_clique) & set(partner)) == 1

    def test_reduced_copies_caveat(self, book):
        assert any("copies_per_sign" in c for c in book.caveats)

    def test_full_copy_count_default(self):
        eff = ab.AbsorberConfig(strategy="cycle").effective(Params(2, 1, n=100))
        assert eff["copies_per_sign"] == 4
        assert eff["paper_copies_per_sign"] == 4

    def test_small_host_fails_with_stage(self):
        p = Params(2, 1, n=120)
        R = RGraph.from_edges(120, 1, RESERVE)
        with pytest.raises(StageFailure) as exc:
            ab.build_absorber(R, p, ab.AbsorberConfig(copies_per_sign=1, seed=5))
        assert exc.value.stage in {"windows", "split", "eliminate", "further"}

    def test_unknown_strategy(self):
        p = Params(2, 1, n=1000)
        R = RGraph.from_edges(1000, 1, RESERVE)
        with pytest.raises(ConfigError):
            ab.build_absorber(R, p, ab.AbsorberConfig(strategy="mystery"))


class TestAbsorbSolve:
    def test_empty_leave_returns_negative_side(self, book):
        D = ab.absorb_solve(book, IntVector())
        assert set(D) == set(book.Qminus)

    def test_random_divisible_leaves(self, book):
        rng = derive_rng(99, "leaves")
        seen = set()
        for _ in range(6):
            L = ab.random_divisible_leave(book, rng)
            seen.add(tuple(L.sorted_items()))
            D = ab.absorb_solve(book, L)
            host_edges = set(book.absorber_edges()) | {e for e, c in L.items() if c}
            host = RGraph(n=book.p.n, r=1, edges=frozenset(host_edges))
            rep = verify_decomposition(host, list(D), q=2)
            assert rep.ok, rep.reason
        assert len(seen) >= 3

    def test_leave_vertices_consumed_once(self, book):
        L = leave(11, 12)
        D = ab.absorb_solve(book, L)
        count = sum(1 for Q in D if 11 in Q)
        assert count == 1

    def test_rejects_indivisible(self, book):
        with pytest.raises(DivisibilityError):
            ab.absorb_solve(book, leave(11))

    def test_rejects_outside_reserve(self, book):
        with pytest.raises(ConfigError):
            ab.absorb_solve(book, leave(11, 40))

    def test_rejects_multiplicity(self, book):
        L = IntVector()
        L.add((11,), 2)
        with pytest.raises(ConfigError):
            ab.absorb_solve(book, L)

    def test_splitting_shortage_reported(self, book):
        starved = dataclasses.replace(book, copies=(), _index=None)
        with pytest.raises(StageFailure) as exc:
            ab.absorb_solve(starved, leave(11, 12))
        assert exc.value.stage == "splitting"

    def test_stagewise_boundary_replay(self, book):
        """Walk the signed chain by hand from the registries and check the
        boundary after every stage; the solver must land on the same D."""
        p, N = book.p, book.N
        L = leave(11, 12, 13, 14)
        want = L.sorted_items()

        phi = ab.cycle_solve(book.Q1, L)
        assert boundary(phi, p).sorted_items() == want

        phi1 = IntVector()
        for Q, c in phi.items():
            c1 = ((c + N // 2) % N) - N // 2
            assert (c - c1) % N == 0
            phi1.add(Q, c1)
        J = L.copy()
        J.add_scaled(boundary(phi1, p), -1)
        table = decoder(p)
        phit = phi1.copy()
        for e, c in sorted(J.items()):
            assert c % N == 0 and abs(c) <= N
            if c:
                phit.add_scaled(materialize(table, book.Zsets[e], e), c // N)
        assert boundary(phit, p).sorted_items() == want

        idx = book.index()
        phi_p = IntVector()
        for Q, c in sorted(phit.items()):
            if not c:
                continue
            for copy in idx["copies_by_base"][(Q, 1 if c > 0 else -1)][: abs(c)]:
                for rec in copy.records:
                    phi_p.add(rec.clique, rec.coeff)
        assert boundary(phi_p, p).sorted_items() == want
        assert all(abs(c) == 1 for _, c in phi_p.items())

        at_edge = {}
        for Q, c in phi_p.items():
            if Q in idx["near_cliques"]:
                at_edge.setdefault(idx["near_base"][Q], {1: [], -1: []})[c].append(Q)
        phi_pp = phi_p.copy()
        for e in sorted(at_edge):
            poss, negs = sorted(at_edge[e][1]), sorted(at_edge[e][-1])
            assert len(poss) - len(negs) == L[e]
            for pos, neg in zip(poss, negs):
                move = idx["elim_by_pair"][(neg, pos)]
                phi_pp.add(neg, 1)
                phi_pp.add(pos, -1)
                for rec in move.records:
                    phi_pp.add(rec.clique, rec.coeff)
        assert boundary(phi_pp, p).sorted_items() == want

        phi_ppp = phi_pp.copy()
        for Q, c in sorted(phi_pp.items()):
            if c < 0 and Q in idx["further_by_bad"]:
                move = idx["further_by_bad"][Q]
                assert phi_ppp[move.partner] == 1
                phi_ppp.add(Q, 1)
                phi_ppp.add(move.partner, -1)
                for rec in move.records:
                    phi_ppp.add(rec.clique, rec.coeff)
        assert boundary(phi_ppp, p).sorted_items() == want

        d_plus = {Q for Q, c in phi_ppp.items() if c == 1}
        d_minus = {Q for Q, c in phi_ppp.items() if c == -1}
        assert {c for _, c in phi_ppp.items()} <= {-1, 1}
        assert d_plus <= book.Qplus
        assert d_minus <= book.Qminus
        D = sorted(d_plus | (book.Qminus - d_minus))
        assert tuple(D) == ab.absorb_solve(book, L)


class TestRandomDivisibleLeave:
    def test_values_and_support(self, book):
        rng = derive_rng(1, "gen")
        for _ in range(10):
            L = ab.random_divisible_leave(book, rng)
            assert L.abs_sum() > 0
            for e, c in L.items():
                assert c == 1
                assert e in book.R.edges

    def test_needs_cliques(self, book):
        thin = dataclasses.replace(
            book,
            R=RGraph.from_edges(book.p.n, 1, [(11,)]),
            _index=None,
        )
        with pytest.raises(ConfigError):
            ab.random_divisible_leave(thin, random.Random(0))


class TestSerialization:
    def test_round_trip_bytes_and_solves(self, book):
        text = ab.book_to_json(book)
        again = ab.book_from_json(text)
        assert ab.book_to_json(again) == text
        L = leave(11, 12)
        assert ab.absorb_solve(again, L) == ab.absorb_solve(book, L)

    def test_version_gate(self, book):
        text = ab.book_to_json(book).replace('"version": "1"', '"version": "9"')
        with pytest.raises(ConfigError):
            ab.book_from_json(text)


class TestIntegralStrategy:
    def test_build_solve_round_trip(self):
        n = 50000
        p = Params(2, 1, n=n)
        K = RGraph.from_edges(n, 1, [(v,) for v in range(5, 25)])
        R = RGraph.from_edges(n, 1, [(25,), (26,), (27,), (28,)])
        icfg = IntegralConfig(
            sample_from=K,
            colour_count=14,
            colour_style="aligned",
            saturation_threshold=math.inf,
            edge_threshold=math.inf,
            seed=7,
        )
        cfg = ab.AbsorberConfig(
            strategy="integral", copies_per_sign=1, integral=icfg, seed=5
        )
        book = ab.build_absorber(R, p, cfg)
        assert book.fragment is not None
        assert set(book.Q1) == set(book.fragment.Q1)

        L = leave(25, 26)
        D = ab.absorb_solve(book, L)
        host_edges = set(book.absorber_edges()) | {(25,), (26,)}
        host = RGraph(n=n, r=1, edges=frozenset(host_edges))
        rep = verify_decomposition(host, list(D), q=2)
        assert rep.ok, rep.reason

        again = ab.book_from_json(ab.book_to_json(book))
        assert again.fragment is not None
        assert ab.absorb_solve(again, L) == D
