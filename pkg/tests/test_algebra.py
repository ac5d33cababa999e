"""Prime scan, Vandermonde inversion, and Z/N span normal form."""

from __future__ import annotations

import random
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinerlab.algebra import (
    ModSpan,
    PrimeField,
    VandermondeMatrix,
    bertrand_prime,
    invert_mod_p,
    is_prime,
    mat_mul,
    submatrix_invert,
    xgcd,
)
from steinerlab.util import ConfigError


def test_bertrand_values():
    assert bertrand_prime(3) == 3
    assert bertrand_prime(4) == 5
    assert bertrand_prime(8) == 11
    assert bertrand_prime(2) == 2


def test_bertrand_rejects_small():
    with pytest.raises(ConfigError):
        bertrand_prime(1)


def test_prime_field():
    F = PrimeField(7)
    for x in range(1, 7):
        assert F.inv(x) * x % 7 == 1
    with pytest.raises(ConfigError):
        PrimeField(6)


@given(st.integers(-200, 200), st.integers(-200, 200))
def test_xgcd_identity(a, b):
    g, s, t = xgcd(a, b)
    assert s * a + t * b == g
    import math

    assert g == math.gcd(a, b) or g == -math.gcd(a, b)


class TestVandermonde:
    def test_rows_32(self):
        M = VandermondeMatrix.build(3, 2)
        assert M.p == 3
        assert M.rows == ((1, 0), (1, 1), (1, 2))

    def test_known_inverses(self):
        M = VandermondeMatrix.build(3, 2)
        assert M.submatrix((1, 2)) == ((1, 0), (1, 1))
        assert submatrix_invert(M, (1, 2)) == ((1, 0), (2, 1))
        assert M.submatrix((1, 3)) == ((1, 0), (1, 2))
        assert submatrix_invert(M, (1, 3)) == ((1, 0), (1, 2))

    @pytest.mark.parametrize("q,r", [(3, 2), (4, 2), (4, 3), (5, 2), (5, 4), (16, 3)])
    def test_all_submatrices_invert(self, q, r):
        from itertools import combinations

        M = VandermondeMatrix.build(q, r)
        ident = tuple(tuple(int(i == j) for j in range(r)) for i in range(r))
        for I in combinations(range(1, q + 1), r):
            inv = submatrix_invert(M, I)
            assert mat_mul(M.submatrix(I), inv, M.p) == ident

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            invert_mod_p(((1, 1), (1, 1)), 5)


def brute_span(gens, N, dim):
    """All Z/N combinations of the generators, by closure."""
    seen = {tuple([0] * dim)}
    frontier = list(seen)
    while frontier:
        base = frontier.pop()
        for g in gens:
            nxt = tuple((b + x) % N for b, x in zip(base, g))
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


class TestModSpan:
    def test_documented_example(self):
        S = ModSpan(6, 2)
        S.insert((2, 0))
        S.insert((0, 3))
        assert S.member((2, 3))
        assert not S.member((1, 0))
        # {0,2,4} x {0,3}: six elements.
        assert len(brute_span([(2, 0), (0, 3)], 6, 2)) == 6

    def test_empty_span(self):
        S = ModSpan(6, 3)
        assert S.member((0, 0, 0))
        assert not S.member((0, 1, 0))

    def test_bezout_closure(self):
        S = ModSpan(6, 1)
        assert S.insert((2,))
        assert S.insert((3,))
        assert S.member((1,))
        assert S.basis == ((1,),)

    def test_grew_iff_new(self):
        S = ModSpan(6, 2)
        assert S.insert((2, 0))
        assert not S.insert((4, 0))
        assert S.insert((0, 3))
        assert not S.insert((2, 3))

    def test_member_matches_bruteforce(self):
        rng = random.Random(42)
        cases = 0
        while cases < 1000:
            N = rng.choice([2, 3, 4, 5, 6])
            dim = rng.randint(1, 3)
            gens = [tuple(rng.randrange(N) for _ in range(dim)) for _ in range(rng.randint(0, 4))]
            S = ModSpan(N, dim)
            for g in gens:
                S.insert(g)
            full = brute_span(gens, N, dim)
            for v in product(range(N), repeat=dim):
                assert S.member(v) == (v in full), (N, dim, gens, v)
                cases += 1

    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11), st.integers(0, 11)), max_size=6),
        st.randoms(use_true_random=False),
    )
    def test_canonical_under_shuffle(self, gens, rnd):
        a = ModSpan(12, 3)
        for g in gens:
            a.insert(g)
        shuffled = list(gens)
        rnd.shuffle(shuffled)
        b = ModSpan(12, 3)
        for g in shuffled:
            b.insert(g)
        assert a.basis == b.basis

    def test_chain_length_bound(self):
        N, dim = 6, 4
        rng = random.Random(5)
        S = ModSpan(N, dim)
        grew = 0
        for _ in range(2000):
            if S.insert(tuple(rng.randrange(N) for _ in range(dim))):
                grew += 1
        assert grew <= N * dim

    def test_dimension_mismatch(self):
        S = ModSpan(6, 2)
        with pytest.raises(ValueError):
            S.insert((1, 2, 3))

    def test_express_recombines(self):
        rng = random.Random(9)
        for _ in range(200):
            N = rng.choice([2, 6, 12, 24])
            dim = rng.randint(1, 4)
            S = ModSpan(N, dim, track=True)
            gens = []
            for _ in range(rng.randint(1, 5)):
                g = tuple(rng.randrange(N) for _ in range(dim))
                if S.insert(g):
                    gens.append(g)
            coeffs = [rng.randrange(N) for _ in gens]
            v = [0] * dim
            for c, g in zip(coeffs, gens):
                for i in range(dim):
                    v[i] = (v[i] + c * g[i]) % N
            expr = S.express(tuple(v))
            assert expr is not None
            rebuilt = [0] * dim
            for idx, c in expr.items():
                for i in range(dim):
                    rebuilt[i] = (rebuilt[i] + c * gens[idx][i]) % N
            assert rebuilt == v

    def test_express_outside_is_none(self):
        S = ModSpan(6, 2, track=True)
        S.insert((2, 0))
        assert S.express((1, 0)) is None

    def test_express_requires_tracking(self):
        S = ModSpan(6, 2)
        with pytest.raises(ConfigError):
            S.express((0, 0))


def test_is_prime_small():
    assert [m for m in range(2, 30) if is_prime(m)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
