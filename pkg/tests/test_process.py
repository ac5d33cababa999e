"""Extension process, reserve sampling, leave cover, and tail bounds."""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

import pytest
from scipy import stats

from steinerlab.core import IntVector, Params, RGraph, canon
from steinerlab.omega import build_omega
from steinerlab.process import (
    CoverResult,
    ExtensionType,
    admissible,
    chernoff_bound,
    coin_tail_report,
    cover,
    freedman_bound,
    run_process,
    sample_reserve,
    validate_run,
)
from steinerlab.util import ConfigError


def triangle_type() -> ExtensionType:
    return ExtensionType(RGraph.complete(3, 2), (1, 2))


class TestAdmissible:
    @pytest.mark.parametrize("q,r", [(3, 2), (4, 2), (4, 3), (5, 4)])
    def test_clique_rooted_at_edge(self, q, r):
        t = ExtensionType(RGraph.complete(q, r), tuple(range(1, r + 1)))
        assert admissible(t)

    def test_clique_rooted_at_other_edge(self):
        assert admissible(ExtensionType(RGraph.complete(4, 2), (2, 4)))

    def test_gadget_rooted_at_designated_clique(self):
        g = build_omega(Params(3, 2))
        assert admissible(ExtensionType(g.graph, g.qhat_plus))
        assert admissible(ExtensionType(g.graph, g.qhat_minus))

    def test_two_disjoint_edges_not_admissible(self):
        H = RGraph.from_edges(5, 2, [(1, 2), (4, 5)])
        assert not admissible(ExtensionType(H, (1, 2, 4)))

    def test_rooted_and_free_edges(self):
        t = triangle_type()
        assert t.rooted_edges == ((1, 2),)
        assert t.free_edges == ((1, 3), (2, 3))

    def test_rooted_vertex_outside_template(self):
        with pytest.raises(ConfigError):
            ExtensionType(RGraph.complete(3, 2), (1, 9))


class TestRunProcess:
    def test_disjoint_roots_on_large_host(self):
        run = run_process(triangle_type(), [(1, 2), (3, 4), (5, 6)], None, 100, seed=1)
        assert run.completed and run.steps == 3
        seen: set[tuple[int, ...]] = set()
        for res in run.images:
            assert not (res.image_edges & seen)
            seen |= res.image_edges
        assert validate_run(run) == ()

    def test_repeated_root_exhausts_the_host(self):
        run = run_process(triangle_type(), [(1, 2)] * 4, None, 5, seed=3)
        assert run.abort_index == 4
        assert run.steps == 3
        assert {res.map[3] for res in run.images} == {3, 4, 5}
        assert validate_run(run) == ()

    def test_determinism_byte_equal(self):
        roots = [(1, 2), (3, 4), (5, 6), (2, 7), (8, 9), (10, 11)]
        B = IntVector.indicator([(1, 12), (3, 12)])
        runs = [
            run_process(triangle_type(), roots, B, 30, seed=11, theta=Fraction(1, 2))
            for _ in range(2)
        ]
        assert runs[0].report_json() == runs[1].report_json()
        assert [r.map for r in runs[0].images] == [r.map for r in runs[1].images]
        assert runs[0].traces == runs[1].traces
        assert runs[0].running_max == runs[1].running_max

    def test_report_shape(self):
        run = run_process(triangle_type(), [(1, 2)], None, 6, seed=0, theta=1)
        rep = run.report()
        assert set(rep["edges"]) == {"1-2", "1-3", "2-3"}
        assert rep["edges"]["1-2"]["rooted"] is True
        assert rep["edges"]["1-3"]["rooted"] is False
        assert rep["abort_index"] is None
        assert rep["steps_completed"] == 1
        assert all("bounded" in entry for entry in rep["edges"].values())

    def test_forbidden_edges_block_candidates(self):
        B = {(1, v) for v in range(3, 11)}
        run = run_process(triangle_type(), [(1, 2)], B, 10, seed=2)
        assert run.abort_index == 1 and run.steps == 0
        for seed in range(30):
            run = run_process(triangle_type(), [(1, 2)], {(1, 3)}, 10, seed=seed)
            assert run.completed and run.images[0].map[3] != 3

    def test_no_forbidden_edge_post_validation(self):
        rng_edges = sorted(combinations(range(1, 41), 2))
        roots = rng_edges[::137][:10]
        B = set(rng_edges[5::101][:30]) - set(roots)
        for seed in range(3):
            run = run_process(triangle_type(), roots, B, 40, seed=seed)
            assert run.completed
            assert validate_run(run) == ()
            covered: set[tuple[int, ...]] = set()
            for res in run.images:
                for e in ((1, 3), (2, 3)):
                    img = res.image(e)
                    assert img not in B and img not in covered
                covered |= res.image_edges

    def test_root_traces_depend_only_on_roots(self):
        H = RGraph.complete(4, 2)
        t = ExtensionType(H, (1, 2, 3))
        roots = [{1: 4, 2: 9, 3: 2}, {1: 1, 2: 5, 3: 6}, {1: 4, 2: 5, 3: 8}]
        first = run_process(t, roots, None, 20, seed=0)
        second = run_process(t, roots, None, 20, seed=99)
        for e in t.rooted_edges:
            expect = IntVector()
            for m in roots:
                expect.add(canon(m[v] for v in e), 1)
            assert first.traces[e] == expect
            assert second.traces[e] == expect

    def test_first_extension_uniform(self):
        t = triangle_type()
        counts = {3: 0, 4: 0, 5: 0}
        for seed in range(10_000):
            run = run_process(t, [(1, 2)], None, 5, seed=seed)
            assert run.modes == ("exhaustive",)
            counts[run.images[0].map[3]] += 1
        _, pvalue = stats.chisquare(list(counts.values()))
        assert pvalue > 0.01

    def test_theta_instrumentation_is_informational(self):
        run = run_process(triangle_type(), [(1, 2)] * 3, None, 8, seed=4, theta=Fraction(1, 100))
        assert run.completed
        assert run.bound_reports is not None
        assert not run.bound_reports[(1, 2)].ok
        loose = run_process(triangle_type(), [(1, 2)] * 3, None, 8, seed=4, theta=10)
        assert all(rep.ok for rep in loose.bound_reports.values())

    def test_running_max_grows_with_repeated_roots(self):
        run = run_process(triangle_type(), [(1, 2)] * 3, None, 8, seed=4)
        assert run.running_max[(1, 2)] == (1, 2, 3)
        assert run.final_max_degrees()[(1, 2)] == 3

    def test_rejects_bad_inputs(self):
        t = triangle_type()
        with pytest.raises(ConfigError):
            run_process(t, [(1, 2)], None, 2)
        bad = ExtensionType(RGraph.from_edges(5, 2, [(1, 2), (4, 5)]), (1, 2, 4))
        with pytest.raises(ConfigError):
            run_process(bad, [(1, 2, 4)], None, 10)
        with pytest.raises(ConfigError):
            run_process(t, [{1: 3}], None, 10)
        with pytest.raises(ConfigError):
            run_process(t, [(1, 2, 3)], None, 10)
        with pytest.raises(ConfigError):
            run_process(t, [(4, 4)], None, 10)
        with pytest.raises(ConfigError):
            run_process(t, [(1, 99)], None, 10)


class TestSampleReserve:
    def test_rate_one_gives_complete_reserve(self):
        p = Params(3, 2, n=30, rho=Fraction(1, 36))
        R, cert = sample_reserve(p, rate=1.0, sample_cap=40, seed=0)
        assert R.size() == 435
        assert cert.pool == "reserve"
        assert set(cert.counts) == {28}
        assert cert.target == pytest.approx(30.0 ** (11 / 12))
        assert cert.ok and cert.bounded.ok

    def test_rate_zero_fails_certificate(self):
        p = Params(3, 2, n=30, rho=Fraction(1, 36))
        R, cert = sample_reserve(p, rate=0.0, sample_cap=40, seed=0)
        assert R.size() == 0
        assert cert.bounded.ok
        assert cert.pool == "complement"
        assert set(cert.counts) == {0}
        assert not cert.ok

    def test_default_rate_matches_typical_count(self):
        p = Params(3, 2, n=200, rho=Fraction(1, 36))
        rate = 200.0 ** (-1 / 36)
        predicted = rate * rate * 198
        for seed in range(5):
            R, cert = sample_reserve(p, seed=seed, sample_cap=300)
            assert cert.rate == pytest.approx(rate)
            mean = sum(cert.counts) / len(cert.counts)
            assert 0.75 * predicted <= mean <= 1.25 * predicted

    def test_boosted_rate_certifies(self):
        p = Params(3, 2, n=100, rho=Fraction(1, 36))
        R, cert = sample_reserve(p, seed=5, rate=0.95, sample_cap=200)
        assert cert.ok
        assert min(cert.counts) >= cert.target
        assert cert.bounded.ok

    def test_determinism(self):
        p = Params(3, 2, n=40, rho=Fraction(1, 36))
        a = sample_reserve(p, seed=9, sample_cap=50)
        b = sample_reserve(p, seed=9, sample_cap=50)
        assert a[0].edges == b[0].edges
        assert a[1] == b[1]

    def test_rejects_bad_rates_and_hosts(self):
        p = Params(3, 2, n=30)
        with pytest.raises(ConfigError):
            sample_reserve(p, rate=1.5)
        with pytest.raises(ConfigError):
            sample_reserve(Params(3, 2, n=2))


class TestCover:
    def test_single_forced_completion(self):
        p = Params(3, 2, n=10)
        R = RGraph.from_edges(10, 2, [(7, 9), (8, 9)])
        res = cover([(7, 8)], R, p, seed=0)
        assert res.ok
        assert res.cliques == ((7, 8, 9),)
        assert res.mapping()[(7, 8)] == (7, 8, 9)

    def test_roots_sharing_a_vertex_stay_edge_disjoint(self):
        p = Params(3, 2, n=20)
        leave = [(1, 2), (1, 3)]
        R = RGraph.from_edges(
            20, 2, [e for e in combinations(range(1, 21), 2) if e not in set(leave)]
        )
        for seed in range(10):
            res = cover(leave, R, p, seed=seed)
            assert res.ok
            edge_sets = [set(combinations(Q, 2)) for Q in res.cliques]
            assert not (edge_sets[0] & edge_sets[1])
            for root, Q in res.mapping().items():
                assert set(root) <= set(Q)
                for f in combinations(Q, 2):
                    assert f == root or f in R.edges

    def test_empty_reserve_aborts_at_first_step(self):
        p = Params(3, 2, n=10)
        R = RGraph.from_edges(10, 2, [])
        res = cover([(1, 2)], R, p, seed=0)
        assert not res.ok
        assert res.abort_index == 1
        assert res.cliques == ()

    def test_certified_reserve_covers_sparse_leave(self):
        p = Params(3, 2, n=100, rho=Fraction(1, 36))
        R, cert = sample_reserve(p, seed=5, rate=0.95, sample_cap=200)
        assert cert.ok
        complement = [e for e in combinations(range(1, 101), 2) if e not in R.edges]
        leave = complement[:25]
        res = cover(leave, R, p, seed=3)
        assert res.ok
        used: set[tuple[int, ...]] = set()
        for root, Q in res.mapping().items():
            assert set(root) <= set(Q)
            edges = set(combinations(Q, 2))
            assert not (edges & used)
            used |= edges
            for f in edges:
                assert f == root or f in R.edges

    def test_preconditions(self):
        p = Params(3, 2, n=10)
        R = RGraph.from_edges(10, 2, [(1, 2)])
        with pytest.raises(ConfigError):
            cover([(1, 2)], R, p)
        with pytest.raises(ConfigError):
            cover([(1, 2, 3)], RGraph.from_edges(10, 2, []), p)
        with pytest.raises(ConfigError):
            cover([(1, 2)], RGraph.from_edges(9, 2, []), p)

    def test_determinism(self):
        p = Params(3, 2, n=15)
        R = RGraph.from_edges(
            15, 2, [e for e in combinations(range(1, 16), 2) if e not in {(1, 2), (3, 4)}]
        )
        first = cover([(1, 2), (3, 4)], R, p, seed=21)
        second = cover([(1, 2), (3, 4)], R, p, seed=21)
        assert first.cliques == second.cliques
        assert first.run.report_json() == second.run.report_json()


class TestTailBounds:
    def test_freedman_spot_value(self):
        assert freedman_bound(1, 1, 1) == pytest.approx(math.exp(-0.25), rel=1e-12)
        assert freedman_bound(1, 1, 1) == pytest.approx(0.7788, abs=1e-4)

    def test_chernoff_spot_value(self):
        assert chernoff_bound(100, 1, 1) == pytest.approx(2 * math.exp(-100 / 6), rel=1e-12)
        assert chernoff_bound(100, 1, 1) == pytest.approx(1.16e-7, rel=1e-2)

    def test_positive_parameters_required(self):
        for args in [(0, 1, 1), (10, 0, 1), (10, 1, 0), (-5, 1, 1)]:
            with pytest.raises(ValueError):
                chernoff_bound(*args)
        for args in [(0, 1, 1), (1, 0, 1), (1, 1, 0), (1, -1, 1)]:
            with pytest.raises(ValueError):
                freedman_bound(*args)

    def test_monotone_in_the_expected_directions(self):
        mus = [1, 5, 20, 80, 200]
        values = [chernoff_bound(mu, 0.5) for mu in mus]
        assert values == sorted(values, reverse=True)
        cs = [0.1, 0.3, 0.8, 2.0]
        values = [chernoff_bound(50, c) for c in cs]
        assert values == sorted(values, reverse=True)
        avals = [0.5, 1.0, 3.0, 9.0]
        values = [freedman_bound(a, 1, 1) for a in avals]
        assert values == sorted(values, reverse=True)

    def test_fair_coin_tails_stay_under_bound(self):
        for c in (0.3, 0.5, 1.0):
            rep = coin_tail_report(20_000, 100, c, seed=1)
            assert rep.ok
            assert rep.frequency <= rep.bound + 3 * rep.sigma
        assert coin_tail_report(20_000, 100, 1.0, seed=1).exceedances == 0

    def test_biased_coin_uses_slow_path(self):
        rep = coin_tail_report(2000, 30, 1.0, prob=0.3, seed=2)
        assert rep.mu == pytest.approx(9.0)
        assert rep.ok

    def test_tail_report_validation(self):
        with pytest.raises(ValueError):
            coin_tail_report(0, 10, 0.5)
        with pytest.raises(ValueError):
            coin_tail_report(10, 0, 0.5)
        with pytest.raises(ValueError):
            coin_tail_report(10, 10, 0.5, prob=1.0)
