"""Exact regularity boosting via local decoders.

Every q-clique of the host graph gets a base weight of half the
reciprocal of C(n, q-r); decoder corrections supported on (q+r)-clique
windows adjust the weights so that the total over cliques through any
fixed edge is exactly one half, as a rational number.  Sampling then
selects cliques independently, scaling the weights by C(n, q-r) so the
expected number of selected cliques through each edge is half of
C(n, q-r); floats appear only at the Bernoulli draw.

Correction terms are accumulated as integers bucketed by window count
and decoder coefficient, so a single Fraction reduction per bucket
replaces millions of rational operations.  Adjacency is kept as int
bitmasks when r = 2, with a generic clique-stream fallback otherwise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb

from .core import Params, RGraph, canon, cliques_containing, cliques_of
from .decode import DecoderTable, decoder
from .util import ConfigError, derive_rng

__all__ = [
    "BoostWeights",
    "PositivityReport",
    "DegreeReport",
    "boost_weights",
    "sample_H",
]


def _bits(mask: int):
    while mask:
        b = mask & -mask
        yield b.bit_length() - 1
        mask ^= b


def _mask_cliques(mask: int, size: int, adj: tuple[int, ...]) -> int:
    # Number of `size`-cliques inside the vertex set given by mask.
    if size == 0:
        return 1
    if size == 1:
        return mask.bit_count()
    total = 0
    for v in _bits(mask):
        total += _mask_cliques(mask & adj[v] & -(1 << (v + 1)), size - 1, adj)
    return total


@dataclass
class BoostWeights:
    """Clique weights with the exact per-edge half-sum property.

    `p_prime` is the uniform base weight; `defect[e]` is c_e, the exact
    shortfall of the base weights through e; window counts |Z_e| are
    cached lazily since each equals the number of (q+r)-cliques through
    e.  Weight queries are lazy: nothing of size C(n, q) is stored.
    """

    G: RGraph
    params: Params
    p_prime: Fraction
    defect: dict[tuple[int, ...], Fraction]
    clique_count: dict[tuple[int, ...], int]
    table: DecoderTable
    _adj: tuple[int, ...] | None = None
    _zcount: dict[tuple[int, ...], int] = field(default_factory=dict)

    def z_count(self, e: tuple[int, ...]) -> int:
        cached = self._zcount.get(e)
        if cached is None:
            cached = self._count_extensions(e, self.params.q + self.params.r)
            self._zcount[e] = cached
        return cached

    def z_family(self, e: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
        """All (q+r)-cliques through e; materialized on request only."""
        return tuple(self._windows(e, self.params.q + self.params.r))

    def _count_extensions(self, root: tuple[int, ...], s: int) -> int:
        if self._adj is not None:
            common = -1
            for v in root:
                common &= self._adj[v]
            return _mask_cliques(common, s - len(root), self._adj)
        return sum(1 for _ in cliques_containing(self.G, root, s))

    def _windows(self, root: tuple[int, ...], s: int):
        if self._adj is not None and s - len(root) == 2:
            common = -1
            for v in root:
                common &= self._adj[v]
            for u in _bits(common):
                for v in _bits(common & self._adj[u] & -(1 << (u + 1))):
                    yield canon(root + (u, v))
            return
        yield from cliques_containing(self.G, root, s)

    def p_double_prime(self, Q: tuple[int, ...]) -> Fraction:
        """Exact decoder correction at Q, bucketed integer accumulation."""
        p = self.params
        qs = set(Q)
        full = comb(p.n, p.q - p.r)
        coeff = self.table.coeff
        buckets: dict[tuple[int, int], int] = {}
        for Z in self._windows(Q, p.q + p.r):
            for e in combinations(Z, p.r):
                t = p.r - len(qs.intersection(e))
                key = (self.z_count(e), t)
                buckets[key] = buckets.get(key, 0) + (full - self.clique_count[e])
        total = Fraction(0)
        for (z, t), s in buckets.items():
            if s:
                total += Fraction(coeff[t] * s, 2 * full * p.N * z)
        return total

    def p_total(self, Q: tuple[int, ...]) -> Fraction:
        return self.p_prime + self.p_double_prime(Q)

    def selection_probability(self, Q: tuple[int, ...]) -> Fraction:
        """Bernoulli probability used by sampling: C(n, q-r) * p_Q.

        The half-sum normalization makes the weights sum to 1/2 over
        the cliques through each edge; scaling by C(n, q-r) is what
        turns that into the per-edge degree target of the boosted
        family.  Under the positivity condition |p''| <= p' this lies
        in [0, 1].
        """
        return comb(self.params.n, self.params.q - self.params.r) * self.p_total(Q)

    def half_sum(self, e: tuple[int, ...]) -> Fraction:
        """Exact rational sum of p_Q over the cliques through e."""
        if e not in self.G.edges:
            raise ConfigError(f"edge {e} is not in the graph")
        total = Fraction(0)
        for Q in cliques_containing(self.G, e, self.params.q):
            total += self.p_total(Q)
        return total

    def positivity_report(
        self,
        budget: int = 20_000,
        rng: random.Random | None = None,
        *,
        seed: int = 0,
    ) -> PositivityReport:
        cliques = list(cliques_of(self.G, self.params.q))
        if len(cliques) <= budget:
            mode = "exhaustive"
        else:
            rng = rng or derive_rng(seed, "boost-positivity")
            cliques = sorted(rng.sample(cliques, budget))
            mode = "sampled"
        violations = []
        for Q in cliques:
            sel = self.selection_probability(Q)
            if sel < 0 or sel > 1:
                violations.append((Q, sel))
        return PositivityReport(
            ok=not violations,
            checked=len(cliques),
            mode=mode,
            violations=tuple(violations),
        )


@dataclass(frozen=True)
class PositivityReport:
    ok: bool
    checked: int
    mode: str
    violations: tuple[tuple[tuple[int, ...], Fraction], ...]

    def __bool__(self) -> bool:
        return self.ok


def boost_weights(G: RGraph, p: Params) -> BoostWeights:
    """Build the exactly half-summing clique weights for G.

    Every edge must lie in at least one (q+r)-clique, since those are
    the decoder windows carrying the corrections.
    """
    if p.r != G.r or p.n != G.n:
        raise ConfigError("graph shape disagrees with the parameters")
    if p.n < p.q + p.r:
        raise ConfigError(f"need n >= q + r = {p.q + p.r} for decoder windows")

    adj: tuple[int, ...] | None = None
    if G.r == 2:
        masks = [0] * (G.n + 1)
        for a, b in G.edges:
            masks[a] |= 1 << b
            masks[b] |= 1 << a
        adj = tuple(masks)

    w = BoostWeights(
        G=G,
        params=p,
        p_prime=Fraction(1, 2 * comb(p.n, p.q - p.r)),
        defect={},
        clique_count={},
        table=decoder(p),
        _adj=adj,
    )
    full = comb(p.n, p.q - p.r)
    for e in sorted(G.edges):
        cnt = w._count_extensions(e, p.q)
        w.clique_count[e] = cnt
        w.defect[e] = Fraction(full - cnt, 2 * full)
        if w.z_count(e) == 0:
            raise ConfigError(f"edge {e} lies in no (q+r)-clique of the graph")
    return w


@dataclass(frozen=True)
class DegreeReport:
    """Per-edge counts of selected cliques versus the boost target."""

    degrees: dict[tuple[int, ...], int]
    target: Fraction
    band: float
    inside: int
    outside: tuple[tuple[int, ...], ...]
    mean: float
    size: int
    max_rounding: float

    def __bool__(self) -> bool:
        return not self.outside


def sample_H(
    w,
    rng: random.Random | None = None,
    *,
    seed: int = 0,
) -> tuple[tuple[tuple[int, ...], ...], DegreeReport]:
    """Select cliques independently with their boosted probabilities.

    Raises when any evaluated probability falls outside [0, 1]; the
    degree report compares each |H(e)| with (1/2 +- n^(-1/3)) C(n, q-r)
    and records the largest float rounding incurred at the draws.
    """
    rng = rng or derive_rng(seed, "boost-sample")
    p = w.params
    chosen: list[tuple[int, ...]] = []
    degrees = {e: 0 for e in sorted(w.G.edges)}
    max_round = Fraction(0)
    for Q in cliques_of(w.G, p.q):
        prob = w.selection_probability(Q)
        if prob < 0 or prob > 1:
            raise ConfigError(f"selection probability {prob} outside [0, 1] at clique {Q}")
        pf = float(prob)
        max_round = max(max_round, abs(Fraction(pf) - prob))
        if rng.random() < pf:
            chosen.append(Q)
            for e in combinations(Q, p.r):
                degrees[e] += 1

    full = comb(p.n, p.q - p.r)
    target = Fraction(full, 2)
    band = float(p.n) ** (-1 / 3) * full
    outside = tuple(e for e, d in degrees.items() if abs(d - target) > band)
    mean = sum(degrees.values()) / len(degrees) if degrees else 0.0
    report = DegreeReport(
        degrees=degrees,
        target=target,
        band=band,
        inside=len(degrees) - len(outside),
        outside=outside,
        mean=mean,
        size=len(chosen),
        max_rounding=float(max_round),
    )
    return tuple(chosen), report
