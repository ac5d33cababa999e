"""Integral absorption over Z/NZ: generating cliques, colour systems,
focusing cliques, decoder windows, flattening, and the exact solve chain
that turns a divisible leave into a clique expression.

Probabilistic existence arguments are replaced throughout by explicit
bounded searches; a search that exhausts its budget raises StageFailure
naming the stage, which at desk scale is a legitimate outcome.
"""
from __future__ import annotations

import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

from .algebra import ModSpan
from .core import (
    IntVector,
    Params,
    RGraph,
    boundary,
    canon,
    cliques_containing,
    cliques_of,
)
from .decode import DecoderTable, decoder, divisible, integral_decompose, materialize
from .exchange import pair_anchor, split_anchor
from .omega import OmegaGadget, build_omega
from .process import ExtensionType, run_process
from .util import ConfigError, DivisibilityError, SteinerError, binom, derive_rng

Clique = tuple[int, ...]
Edge = tuple[int, ...]


class StageFailure(SteinerError):
    """A pipeline stage could not complete; carries the stage tag."""

    def __init__(self, stage: str, detail: str):
        super().__init__(f"{stage}: {detail}")
        self.stage = stage
        self.detail = detail


def clique_edges(Q: Clique, r: int) -> tuple[Edge, ...]:
    return tuple(combinations(tuple(sorted(Q)), r))


def edge_multiplicities(cliques: Iterable[Clique], r: int) -> Counter:
    """Per-edge count of covering cliques."""
    mult: Counter = Counter()
    for Q in cliques:
        for f in clique_edges(Q, r):
            mult[f] += 1
    return mult


# ---------------------------------------------------------------------------
# generating cliques


@dataclass(frozen=True)
class GeneratorReport:
    """Outcome of the greedy generator selection over Z/NZ.

    The span is indexed by the sorted edges of K; generator index i in
    span expressions corresponds to Gset[i] because every retained
    clique grew the span when inserted.
    """

    K: RGraph
    p: Params
    N: int
    Gset: tuple[Clique, ...]
    span: ModSpan
    edge_index: dict[Edge, int]
    saturated: frozenset[tuple[int, ...]]
    S: frozenset[Clique]
    K0: frozenset[Edge]
    Kstar: RGraph
    saturation_threshold: float
    edge_threshold: float

    def boundary_row(self, Q: Clique) -> list[int]:
        row = [0] * len(self.edge_index)
        for f in clique_edges(Q, self.p.r):
            row[self.edge_index[f]] += 1
        return row

    def vector_row(self, J: IntVector) -> list[int]:
        row = [0] * len(self.edge_index)
        for f, c in J.items():
            row[self.edge_index[f]] += c
        return row

    def member(self, Q: Clique) -> bool:
        return self.span.member(self.boundary_row(Q))

    def express(self, Q: Clique) -> dict[int, int] | None:
        return self.span.express(self.boundary_row(Q))


def generating_cliques(
    K: RGraph,
    p: Params,
    saturation_threshold: float | None = None,
    edge_threshold: float | None = None,
) -> GeneratorReport:
    """Greedy pass over the q-cliques of K in lexicographic order.

    A clique is skipped once it contains a saturated (r-1)-set; otherwise
    it joins the generating set exactly when its boundary grows the span
    over Z/NZ.  Because saturation counts and the span both only grow,
    one deterministic pass realizes the "add some such Q" loop.
    """
    q, r = p.q, p.r
    N = math.factorial(r) * binom(q, r)
    n = K.n
    alpha = float(p.alpha)
    if saturation_threshold is None:
        saturation_threshold = n ** (1 - 0.7 * alpha)
    if edge_threshold is None:
        edge_threshold = n ** ((0.85 - binom(q, r)) * alpha) * binom(n, q - r)

    edges = sorted(K.edges)
    edge_index = {f: i for i, f in enumerate(edges)}
    span = ModSpan(N, len(edges), track=True)
    counts: Counter = Counter()
    gset: list[Clique] = []

    def subs(Q: Clique) -> list[tuple[int, ...]]:
        if r == 1:
            return [()]
        return list(combinations(Q, r - 1))

    for Q in cliques_of(K, q):
        if any(counts[t] >= saturation_threshold for t in subs(Q)):
            continue
        row = [0] * len(edges)
        for f in clique_edges(Q, r):
            row[edge_index[f]] = 1
        if span.insert(row):
            gset.append(Q)
            for t in subs(Q):
                counts[t] += 1

    saturated = frozenset(t for t, c in counts.items() if c >= saturation_threshold)
    S = frozenset(
        Q for Q in cliques_of(K, q) if any(t in saturated for t in subs(Q))
    )
    heavy: Counter = Counter()
    for Q in S:
        for f in clique_edges(Q, r):
            heavy[f] += 1
    K0 = frozenset(f for f, c in heavy.items() if c >= edge_threshold)
    kstar = RGraph(n=K.n, r=K.r, edges=frozenset(K.edges) - K0)
    if len(gset) > N * len(edges):
        raise SteinerError("generator count exceeded N|K|")
    return GeneratorReport(
        K=K,
        p=p,
        N=N,
        Gset=tuple(gset),
        span=span,
        edge_index=edge_index,
        saturated=saturated,
        S=S,
        K0=K0,
        Kstar=kstar,
        saturation_threshold=saturation_threshold,
        edge_threshold=edge_threshold,
    )


# ---------------------------------------------------------------------------
# colour systems


@dataclass(frozen=True)
class ColorSystem:
    """u vertex permutations of [n] with the rotated copies of the base graph."""

    n: int
    u: int
    style: str
    base: RGraph
    sigma: tuple[tuple[int, ...], ...]
    inverse: tuple[tuple[int, ...], ...]
    rotated: tuple[RGraph, ...]

    @classmethod
    def build(
        cls,
        base: RGraph,
        u: int,
        rng: random.Random,
        style: str = "uniform",
        n: int | None = None,
    ) -> "ColorSystem":
        if n is None:
            n = base.n
        if u < 1:
            raise ConfigError(f"colour count must be >= 1, got {u}")
        support = sorted({v for f in base.edges for v in f})
        sigmas = []
        for _ in range(u):
            if style == "uniform":
                perm = list(range(1, n + 1))
                rng.shuffle(perm)
            elif style == "aligned":
                # permutation preserving the base support setwise, so every
                # rotated copy keeps its edges among the same vertices
                rest = [v for v in range(1, n + 1) if v not in set(support)]
                inner = list(support)
                rng.shuffle(inner)
                outer = list(rest)
                rng.shuffle(outer)
                perm = [0] * n
                for src, dst in zip(support, inner):
                    perm[src - 1] = dst
                for src, dst in zip(rest, outer):
                    perm[src - 1] = dst
            else:
                raise ConfigError(f"unknown colour style {style!r}")
            sigmas.append(tuple(perm))
        inverses = []
        for perm in sigmas:
            inv = [0] * n
            for src, dst in enumerate(perm, start=1):
                inv[dst - 1] = src
            inverses.append(tuple(inv))
        rotated = []
        for perm in sigmas:
            rotated.append(
                RGraph(
                    n=n,
                    r=base.r,
                    edges=frozenset(canon(perm[v - 1] for v in f) for f in base.edges),
                )
            )
        return cls(
            n=n,
            u=u,
            style=style,
            base=base,
            sigma=tuple(sigmas),
            inverse=tuple(inverses),
            rotated=tuple(rotated),
        )

    def apply(self, i: int, vs: Iterable[int]) -> tuple[int, ...]:
        perm = self.sigma[i]
        return canon(perm[v - 1] for v in vs)

    def invert(self, i: int, vs: Iterable[int]) -> tuple[int, ...]:
        inv = self.inverse[i]
        return canon(inv[v - 1] for v in vs)

    def colours_of(self, edge: Edge) -> tuple[int, ...]:
        e = canon(edge)
        return tuple(i for i, g in enumerate(self.rotated) if e in g.edges)

    def colored_edges(self) -> frozenset[Edge]:
        out: set[Edge] = set()
        for g in self.rotated:
            out |= g.edges
        return frozenset(out)

    def validate(self) -> bool:
        full = set(range(1, self.n + 1))
        return all(set(perm) == full for perm in self.sigma)


def assign_distinct_colors(palettes: Sequence[Iterable[int]]) -> list[int] | None:
    """System of distinct representatives via augmenting paths, or None."""
    pals = [sorted(set(p)) for p in palettes]
    match: dict[int, int] = {}

    def augment(i: int, seen: set[int]) -> bool:
        for c in pals[i]:
            if c in seen:
                continue
            seen.add(c)
            if c not in match or augment(match[c], seen):
                match[c] = i
                return True
        return False

    for i in range(len(pals)):
        if not augment(i, set()):
            return None
    out = [0] * len(pals)
    for c, i in match.items():
        out[i] = c
    return out


def validate_rainbow(colors: ColorSystem, assignment: Mapping[Edge, int]) -> bool:
    """Each assigned edge lies in its colour and colours are pairwise distinct."""
    seen = set()
    for edge, c in assignment.items():
        if c in seen:
            return False
        seen.add(c)
        if canon(edge) not in colors.rotated[c].edges:
            return False
    return True


# ---------------------------------------------------------------------------
# flattening


def round_multiplicity_law(x: int) -> int:
    """Per-round bound: multiplicity x falls to at most max(isqrt(x)+1, 2)."""
    return max(math.isqrt(max(x, 0)) + 1, 2)


def group_sizes(x: int) -> list[int]:
    """Split x items into groups of size isqrt(x) or isqrt(x)+1."""
    if x <= 0:
        return []
    ell = math.isqrt(x)
    g = -(-x // (ell + 1))
    big = x - g * ell
    return [ell + 1] * big + [ell] * (g - big)


@dataclass(frozen=True)
class FlattenReport:
    Q1: tuple[Clique, ...]
    rounds: int
    removed: tuple[Clique, ...]
    witnesses: dict[Clique, IntVector]
    fresh_vertices: tuple[int, ...]
    max_multiplicity_before: int
    max_multiplicity_after: int
    host_n: int


def flatten(
    Q0prime: Iterable[Clique],
    p: Params,
    rng: random.Random | None = None,
    *,
    host_n: int | None = None,
) -> FlattenReport:
    """Reduce a clique family to edge multiplicity at most 2, keeping its
    integer span.

    Families already at multiplicity <= 2 pass through untouched.  For
    q = 2, r = 1 an overloaded family is replaced by a single odd cycle
    through every covered vertex; each original clique's boundary is then
    witnessed exactly by an alternating arc of cycle cliques (an odd
    cycle admits an odd-length walk between any two of its vertices).
    Other parameters never feed an overloaded family through this code
    at desk scale, and fail loudly if they do.
    """
    fam = sorted(set(canon(Q) for Q in Q0prime))
    if host_n is None:
        host_n = p.n
    mult = edge_multiplicities(fam, p.r)
    before = max(mult.values(), default=0)
    if before <= 2:
        return FlattenReport(
            Q1=tuple(fam),
            rounds=0,
            removed=(),
            witnesses={},
            fresh_vertices=(),
            max_multiplicity_before=before,
            max_multiplicity_after=before,
            host_n=host_n,
        )
    if (p.q, p.r) != (2, 1):
        worst = max(mult, key=lambda f: mult[f])
        raise StageFailure(
            "flatten",
            f"multiplicity {mult[worst]} at edge {worst} has no witness "
            f"construction for (q,r)=({p.q},{p.r})",
        )

    verts = sorted({v for Q in fam for v in Q})
    used = set(verts)
    fresh: list[int] = []
    candidate = 1
    while len(verts) + len(fresh) < 3 or (len(verts) + len(fresh)) % 2 == 0:
        while candidate <= host_n and candidate in used:
            candidate += 1
        if candidate > host_n:
            raise StageFailure("flatten", f"host exhausted at {host_n} vertices")
        fresh.append(candidate)
        used.add(candidate)
    ring = verts + fresh
    m = len(ring)
    pos = {v: i for i, v in enumerate(ring)}
    cycle = [canon((ring[i], ring[(i + 1) % m])) for i in range(m)]

    def arc(a: int, b: int) -> IntVector:
        # odd-length walk a -> b; exactly one direction is odd since m is odd
        span = (pos[b] - pos[a]) % m
        if span % 2 == 1:
            start, steps, step = pos[a], span, 1
        else:
            start, steps, step = pos[a], m - span, -1
        out = IntVector()
        at = start
        for j in range(steps):
            nxt = (at + step) % m
            idx = at if step == 1 else nxt
            out.add(cycle[idx], 1 if j % 2 == 0 else -1)
            at = nxt
        return out

    cycle_set = set(cycle)
    witnesses: dict[Clique, IntVector] = {}
    removed = []
    for Q in fam:
        if Q in cycle_set:
            continue
        a, b = Q
        w = arc(a, b)
        target = boundary(IntVector.indicator([Q]), p)
        if boundary(w, p).sorted_items() != target.sorted_items():
            raise StageFailure("flatten", f"witness replay failed for {Q}")
        witnesses[Q] = w
        removed.append(Q)
    q1 = tuple(sorted(cycle_set))
    after = max(edge_multiplicities(q1, p.r).values(), default=0)
    return FlattenReport(
        Q1=q1,
        rounds=1,
        removed=tuple(removed),
        witnesses=witnesses,
        fresh_vertices=tuple(fresh),
        max_multiplicity_before=before,
        max_multiplicity_after=after,
        host_n=host_n,
    )


# ---------------------------------------------------------------------------
# constrained embedding searches


def _constrained_embedding(
    tverts: Sequence[int],
    tedges: Sequence[tuple[int, ...]],
    anchor: Mapping[int, int],
    host_n: int,
    rng: random.Random,
    budget: int,
    edge_ok: Callable[[tuple[int, ...], Edge], bool],
    final_ok: Callable[[dict[int, int]], object | None],
    banned_vertices: frozenset[int] = frozenset(),
    pool: Sequence[int] | None = None,
):
    """Randomized DFS for an injective vertex map satisfying per-edge and
    whole-map predicates.  Returns (mapping, payload) or None."""
    mapping: dict[int, int] = dict(anchor)
    used = set(mapping.values())
    free = [v for v in tverts if v not in mapping]
    by_vert: dict[int, list[tuple[int, ...]]] = {v: [] for v in tverts}
    for te in tedges:
        for v in te:
            by_vert[v].append(te)
    candidates = list(range(1, host_n + 1)) if pool is None else list(pool)
    rng.shuffle(candidates)
    steps = 0

    def dfs(i: int):
        nonlocal steps
        if i == len(free):
            return final_ok(mapping)
        tv = free[i]
        for hv in candidates:
            if steps >= budget:
                return None
            if hv in used or hv in banned_vertices:
                continue
            steps += 1
            mapping[tv] = hv
            used.add(hv)
            ok = True
            for te in by_vert[tv]:
                if all(w in mapping for w in te):
                    if not edge_ok(te, canon(mapping[w] for w in te)):
                        ok = False
                        break
            if ok:
                payload = dfs(i + 1)
                if payload is not None:
                    return payload
            del mapping[tv]
            used.discard(hv)
        return None

    payload = dfs(0)
    if payload is None:
        return None
    return dict(mapping), payload


def _image_units(
    g: OmegaGadget, mapping: Mapping[int, int]
) -> tuple[list[Clique], list[Clique]]:
    """Images of the two families: (coefficient +1 list, coefficient -1 list)
    for the split identity at the plus hat."""
    plus = [canon(mapping[v] for v in T) for T in g.upsilon_minus]
    minus = [
        canon(mapping[v] for v in T)
        for T in g.upsilon_plus
        if T != g.qhat_plus
    ]
    return plus, minus


class _SolveContext:
    """Shared lookups for one solve run."""

    def __init__(self, frag: "IntegralFragment", rng: random.Random, budget: int):
        self.frag = frag
        self.colors = frag.colors
        self.rng = rng
        self.budget = budget
        self.gadget = build_omega(frag.p)
        self._palette: dict[Edge, tuple[int, ...]] = {}
        self._mid: dict[Edge, int] = {}
        # Every non-anchored image edge of a rainbow configuration must be
        # coloured, so its vertices come from the coloured support.
        self.pool = sorted({v for e in frag.colors.colored_edges() for v in e})

    def palette(self, edge: Edge) -> tuple[int, ...]:
        e = canon(edge)
        if e not in self._palette:
            self._palette[e] = self.colors.colours_of(e)
        return self._palette[e]

    def colored(self, edge: Edge) -> bool:
        return bool(self.palette(edge))

    def rainbow_clique(self, Q: Clique) -> bool:
        pals = [self.palette(f) for f in clique_edges(Q, self.frag.p.r)]
        if any(not pal for pal in pals):
            return False
        return assign_distinct_colors(pals) is not None


def rainbow_split(ctx: _SolveContext, Q: Clique):
    """Split configuration at Q whose non-anchored edges take distinct
    colours, avoiding the colours fixed on Q's own coloured edges."""
    g = ctx.gadget
    anchor = split_anchor(g, Q)
    anchored = set(clique_edges(g.qhat_plus, g.r))
    fixed = {
        ctx.palette(f)[0] for f in clique_edges(Q, ctx.frag.p.r) if ctx.colored(f)
    }

    def edge_ok(te, image):
        if te in anchored:
            return True
        return bool(set(ctx.palette(image)) - fixed)

    def final_ok(mapping):
        free_edges = [te for te in g.graph.edges if te not in anchored]
        pals = [
            [c for c in ctx.palette(canon(mapping[w] for w in te)) if c not in fixed]
            for te in free_edges
        ]
        sdr = assign_distinct_colors(pals)
        if sdr is None:
            return None
        return {
            canon(mapping[w] for w in te): c for te, c in zip(free_edges, sdr)
        }

    found = _constrained_embedding(
        sorted({v for e in g.graph.edges for v in e}),
        sorted(g.graph.edges),
        anchor,
        ctx.frag.p.n,
        ctx.rng,
        ctx.budget,
        edge_ok,
        final_ok,
        pool=ctx.pool,
    )
    if found is None:
        raise StageFailure("rainbow-split", f"no rainbow split at {Q}")
    mapping, assignment = found
    if not validate_rainbow(ctx.colors, assignment):
        raise StageFailure("rainbow-split", f"assignment not rainbow at {Q}")
    return mapping, assignment


def rainbow_pair(ctx: _SolveContext, Qplus: Clique, Qminus: Clique):
    """Pair configuration anchored at two cliques sharing one edge, with
    distinct colours on all non-anchored edges."""
    g = ctx.gadget
    anchor = pair_anchor(g, Qplus, Qminus)
    anchored = set(clique_edges(g.qhat_plus, g.r)) | set(
        clique_edges(g.qhat_minus, g.r)
    )
    fixed = set()
    for base in (Qplus, Qminus):
        for f in clique_edges(base, ctx.frag.p.r):
            if ctx.colored(f):
                fixed.add(ctx.palette(f)[0])

    def edge_ok(te, image):
        if te in anchored:
            return True
        return bool(set(ctx.palette(image)) - fixed)

    def final_ok(mapping):
        free_edges = [te for te in g.graph.edges if te not in anchored]
        pals = [
            [c for c in ctx.palette(canon(mapping[w] for w in te)) if c not in fixed]
            for te in free_edges
        ]
        sdr = assign_distinct_colors(pals)
        if sdr is None:
            return None
        return {
            canon(mapping[w] for w in te): c for te, c in zip(free_edges, sdr)
        }

    found = _constrained_embedding(
        sorted({v for e in g.graph.edges for v in e}),
        sorted(g.graph.edges),
        anchor,
        ctx.frag.p.n,
        ctx.rng,
        ctx.budget,
        edge_ok,
        final_ok,
        pool=ctx.pool,
    )
    if found is None:
        raise StageFailure(
            "rainbow-pair", f"no rainbow pair configuration at {Qplus}/{Qminus}"
        )
    mapping, assignment = found
    if not validate_rainbow(ctx.colors, assignment):
        raise StageFailure("rainbow-pair", "assignment not rainbow")
    return mapping, assignment


def mid_clique(ctx: _SolveContext, e: Edge, banned: frozenset[int]) -> Clique:
    """A clique through e, vertex-disjoint from banned away from e, whose
    other edges take distinct colours."""
    p = ctx.frag.p
    e = canon(e)
    tverts = list(range(1, p.q + 1))
    tedges = list(combinations(tverts, p.r))
    anchor = {i + 1: v for i, v in enumerate(e)}
    root = tuple(range(1, p.r + 1))

    def edge_ok(te, image):
        if te == root:
            return True
        return ctx.colored(image)

    def final_ok(mapping):
        others = [te for te in tedges if te != root]
        pals = [ctx.palette(canon(mapping[w] for w in te)) for te in others]
        if assign_distinct_colors(pals) is None:
            return None
        return dict(mapping)

    found = _constrained_embedding(
        tverts,
        tedges,
        anchor,
        p.n,
        ctx.rng,
        ctx.budget,
        edge_ok,
        final_ok,
        banned_vertices=frozenset(banned) - set(e),
        pool=ctx.pool,
    )
    if found is None:
        raise StageFailure("rainbow-pair", f"no intermediate clique at {e}")
    mapping, _ = found
    return canon(mapping[v] for v in tverts)


def mono_split(ctx: _SolveContext, Q: Clique):
    """Split configuration at Q in which every non-hat image clique is
    monochromatic, colours are distinct across image cliques, and every
    preimage boundary lies in the generator span.

    Returns (mapping, records) where each record is
    (image clique, sign, colour, preimage).
    """
    g = ctx.gadget
    p = ctx.frag.p
    report = ctx.frag.report
    anchor = split_anchor(g, Q)
    minus_family = list(g.upsilon_minus)
    plus_family = [T for T in g.upsilon_plus if T != g.qhat_plus]
    templates = minus_family + plus_family
    signs = [1] * len(minus_family) + [-1] * len(plus_family)
    ring_base = {}
    for f in clique_edges(g.qhat_plus, g.r):
        ring_base[g.ring[f]] = canon(anchor[v] for v in f)
    pals = []
    for T in templates:
        if T in ring_base:
            pals.append(list(ctx.palette(ring_base[T])))
        else:
            pals.append(list(range(ctx.colors.u)))
    sdr = assign_distinct_colors(pals)
    if sdr is None:
        raise StageFailure("rainbow-mono", f"no colour assignment for split at {Q}")
    colour_at = {i: c for i, c in enumerate(sdr)}
    anchored = set(clique_edges(g.qhat_plus, g.r))
    cover: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for i, T in enumerate(templates):
        for te in clique_edges(T, g.r):
            cover[te].append(i)

    def edge_ok(te, image):
        if te in anchored:
            return True
        return all(
            image in ctx.colors.rotated[colour_at[i]].edges for i in cover[te]
        )

    def final_ok(mapping):
        out = []
        for i, T in enumerate(templates):
            img = canon(mapping[v] for v in T)
            c = colour_at[i]
            pre = ctx.colors.invert(c, img)
            if not all(f in report.K.edges for f in clique_edges(pre, p.r)):
                return None
            if not report.member(pre):
                return None
            out.append((img, signs[i], c, pre))
        return out

    found = _constrained_embedding(
        sorted({v for e in g.graph.edges for v in e}),
        sorted(g.graph.edges),
        anchor,
        p.n,
        ctx.rng,
        ctx.budget,
        edge_ok,
        final_ok,
        pool=ctx.pool,
    )
    if found is None:
        raise StageFailure("rainbow-mono", f"no monochromatic split at {Q}")
    return found


# ---------------------------------------------------------------------------
# the integral absorber build


@dataclass(frozen=True)
class IntegralConfig:
    """Knobs for the integral absorber; None picks the formula defaults
    evaluated at the actual n (they degenerate at small n, so tests
    override them)."""

    sample_rate: float | None = None
    sample_from: RGraph | None = None
    colour_count: int | None = None
    colour_style: str = "uniform"
    saturation_threshold: float | None = None
    edge_threshold: float | None = None
    window_budget: int = 3000
    search_budget: int = 60000
    seed: int = 0

    def effective(self, p: Params) -> dict:
        alpha = float(p.alpha)
        gadget_cliques = None
        rate = self.sample_rate
        if rate is None:
            rate = p.n ** (-alpha)
        u = self.colour_count
        if u is None:
            g = build_omega(p)
            gadget_cliques = len(g.upsilon_plus) + len(g.upsilon_minus)
            u = max(1, round(20 * p.q * p.q * (1 / alpha) * gadget_cliques))
        sat = self.saturation_threshold
        if sat is None:
            sat = p.n ** (1 - 0.7 * alpha)
        edge = self.edge_threshold
        if edge is None:
            edge = p.n ** ((0.85 - binom(p.q, p.r)) * alpha) * binom(p.n, p.q - p.r)
        return {
            "sample_rate": rate,
            "explicit_host": self.sample_from is not None,
            "colour_count": u,
            "colour_style": self.colour_style,
            "saturation_threshold": sat,
            "edge_threshold": edge,
            "gadget_cliques": gadget_cliques,
            "window_budget": self.window_budget,
            "search_budget": self.search_budget,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class IntegralFragment:
    """Everything needed to replay solves against a built integral absorber."""

    p: Params
    R: RGraph
    config: IntegralConfig
    effective: dict
    K: RGraph
    report: GeneratorReport
    colors: ColorSystem
    Q0: tuple[Clique, ...]
    q0_sources: dict[Clique, tuple[tuple[int, int], ...]]
    focus: dict[Edge, Clique]
    zsets: dict[Edge, tuple[int, ...]]
    decoder_table: DecoderTable
    Q0prime: tuple[Clique, ...]
    flat: FlattenReport
    Q1: tuple[Clique, ...]


def _sample_host(p: Params, rate: float, rng: random.Random) -> RGraph:
    edges = frozenset(
        canon(f) for f in combinations(range(1, p.n + 1), p.r) if rng.random() < rate
    )
    return RGraph(n=p.n, r=p.r, edges=edges)


def integral_absorber(
    R: RGraph,
    p: Params,
    config: IntegralConfig | None = None,
    rng: random.Random | None = None,
) -> tuple[tuple[Clique, ...], IntegralFragment]:
    """Compose host sampling, generator selection, colours, focusing,
    decoder windows and flattening into a solvable fragment."""
    if config is None:
        config = IntegralConfig()
    if rng is None:
        rng = derive_rng(config.seed, "integral")
    if R.r != p.r:
        raise ConfigError(f"reserve uniformity {R.r} != {p.r}")
    for f in R.edges:
        if max(f) > p.n:
            raise ConfigError(f"reserve edge {f} outside host [{p.n}]")
    eff = config.effective(p)

    if not R.edges:
        # nothing to absorb: only J = 0 is supported in the empty reserve
        K = RGraph(n=p.n, r=p.r, edges=frozenset())
    else:
        K = config.sample_from
        if K is None:
            K = _sample_host(p, eff["sample_rate"], rng)
    report = generating_cliques(
        K, p, eff["saturation_threshold"], eff["edge_threshold"]
    )
    colors = ColorSystem.build(
        report.Kstar, eff["colour_count"], rng, style=eff["colour_style"], n=p.n
    )
    if not colors.validate():
        raise StageFailure("colors", "a sigma is not a permutation")

    q0_sources: dict[Clique, list[tuple[int, int]]] = defaultdict(list)
    for i in range(colors.u):
        for gidx, G in enumerate(report.Gset):
            q0_sources[colors.apply(i, G)].append((i, gidx))
    Q0 = tuple(sorted(q0_sources))

    colored = colors.colored_edges()
    focus: dict[Edge, Clique] = {}
    for e in sorted(R.edges):
        host = RGraph(n=p.n, r=p.r, edges=colored | {e})
        choice = None
        for Q in cliques_containing(host, e, p.q):
            others = [f for f in clique_edges(Q, p.r) if f != e]
            if any(f in R.edges for f in others):
                continue
            if any(f not in colored for f in others):
                continue
            choice = Q
            break
        if choice is None:
            raise StageFailure("focus", f"no focusing clique for {e}")
        focus[e] = choice

    needed = sorted(
        {f for Q in list(Q0) + list(focus.values()) for f in clique_edges(Q, p.r)}
    )
    zsets: dict[Edge, tuple[int, ...]] = {}
    window_cliques: list[Clique] = []
    if needed:
        base = frozenset(
            f
            for Q in list(Q0) + list(focus.values())
            for f in clique_edges(Q, p.r)
        )
        t = ExtensionType(
            H=RGraph(
                n=p.q + p.r,
                r=p.r,
                edges=frozenset(combinations(range(1, p.q + p.r + 1), p.r)),
            ),
            F=tuple(range(1, p.r + 1)),
        )
        run = run_process(
            t,
            needed,
            B=base | R.edges,
            host_n=p.n,
            rng=rng,
            budget=config.window_budget,
        )
        if not run.completed:
            bad = needed[run.abort_index - 1]
            raise StageFailure("windows", f"no decoder window for {bad}")
        for e, image in zip(needed, run.images):
            window = canon(image.map.values())
            zsets[e] = window
            window_cliques.extend(canon(c) for c in combinations(window, p.q))

    q0prime = tuple(sorted(set(Q0) | set(focus.values()) | set(window_cliques)))
    flat = flatten(q0prime, p, rng, host_n=p.n)
    frag = IntegralFragment(
        p=p,
        R=R,
        config=config,
        effective=eff,
        K=K,
        report=report,
        colors=colors,
        Q0=Q0,
        q0_sources={Q: tuple(src) for Q, src in q0_sources.items()},
        focus=focus,
        zsets=zsets,
        decoder_table=decoder(p),
        Q0prime=q0prime,
        flat=flat,
        Q1=flat.Q1,
    )
    return flat.Q1, frag


# ---------------------------------------------------------------------------
# the solve chain


def _lift_representative(x: int, N: int) -> int:
    v = x % N
    return v if v >= 1 else N


def solve_fragment(
    frag: IntegralFragment,
    J: IntVector,
    rng: random.Random | None = None,
    *,
    direct_mono: bool = True,
) -> IntVector:
    """Produce Phi over Q1 with boundary exactly J, for divisible J
    supported in the fragment's reserve.

    Stages: focusing, integral decomposition, rainbow splits, cancelling
    pairs through intermediate cliques, monochromatic conversion, modular
    expression over the rotated generators, representative lift, decoder
    windows, and rewriting through the flattening witnesses.
    """
    p = frag.p
    N = frag.report.N
    if rng is None:
        rng = derive_rng(frag.config.seed, "solve")
    rep = divisible(J, p)
    if not rep.ok:
        raise DivisibilityError(f"leave is not divisible: {rep.witness}")
    for f in J.support():
        if f not in frag.R.edges:
            raise ConfigError(f"leave edge {f} outside the reserve")

    ctx = _SolveContext(frag, rng, frag.config.search_budget)

    phi0 = IntVector()
    for f, c in J.items():
        Qf = frag.focus.get(canon(f))
        if Qf is None:
            raise StageFailure("focus", f"no focusing clique recorded for {f}")
        phi0.add(Qf, c)
    J1 = J.copy()
    J1.add_scaled(boundary(phi0, p), -1)
    for f in J1.support():
        if not ctx.colored(f):
            raise StageFailure("focus", f"focused remainder leaves colours at {f}")

    # Phi^1: any integral expression; its support cliques are scratch.
    phi1 = integral_decompose(J1, p) if J1.abs_sum() else IntVector()

    # Phi^2: rainbow splits leave at most one uncoloured edge per clique.
    pool = IntVector()
    pending: list[tuple[Clique, int]] = []
    for Q, c in sorted(phi1.items()):
        if all(ctx.colored(f) for f in clique_edges(Q, p.r)):
            pool.add(Q, c)
        else:
            pending.append((Q, c))
    stray: dict[Edge, list[tuple[Clique, int]]] = defaultdict(list)

    def classify(img: Clique, c: int):
        uncoloured = [
            f for f in clique_edges(img, p.r) if not ctx.colored(f)
        ]
        if not uncoloured:
            pool.add(img, c)
        elif len(uncoloured) == 1:
            stray[uncoloured[0]].append((img, c))
        else:
            raise StageFailure(
                "rainbow-split", f"image {img} keeps {len(uncoloured)} uncoloured edges"
            )

    for Q, c in pending:
        mapping, _ = rainbow_split(ctx, Q)
        plus, minus = _image_units(ctx.gadget, mapping)
        for img in plus:
            classify(img, c)
        for img in minus:
            classify(img, -c)

    # Phi^3: per uncoloured edge, cancel signed units pairwise through a
    # shared-edge intermediate clique and two pair configurations.
    for e in sorted(stray):
        units: list[tuple[Clique, int]] = []
        for Q, c in stray[e]:
            units.extend((Q, 1 if c > 0 else -1) for _ in range(abs(c)))
        pos = sorted(Q for Q, s in units if s > 0)
        neg = sorted(Q for Q, s in units if s < 0)
        if len(pos) != len(neg):
            raise StageFailure("rainbow-pair", f"unbalanced uncoloured edge {e}")
        for Qp, Qm in zip(pos, neg):
            banned = frozenset(set(Qp) | set(Qm))
            Qmid = mid_clique(ctx, e, banned)
            # the two configurations express Qp - Qmid and Qmid - Qm; their
            # side images replace the unit pair, and Qmid cancels between them
            for map_c in (rainbow_pair(ctx, Qp, Qmid)[0], rainbow_pair(ctx, Qmid, Qm)[0]):
                plus, minus = _image_units(ctx.gadget, map_c)
                hat_minus = canon(map_c[v] for v in ctx.gadget.qhat_minus)
                skipped = False
                for img in plus:
                    if not skipped and img == hat_minus:
                        skipped = True
                        continue
                    pool.add(img, 1)
                for img in minus:
                    pool.add(img, -1)

    # After the pair stage nothing in the pool may keep an uncoloured edge.
    cleaned = IntVector()
    for Q, c in pool.items():
        if c == 0:
            continue
        if any(not ctx.colored(f) for f in clique_edges(Q, p.r)):
            raise StageFailure("rainbow-pair", f"uncoloured support survived at {Q}")
        cleaned.add(Q, c)

    # Phi^4 and Phi^5: convert to monochromatic cliques with expressible
    # preimages, then push span expressions onto the rotated generators.
    phi5: dict[Clique, int] = defaultdict(int)

    def mono_target(Q: Clique) -> tuple[int, Clique] | None:
        for c in ctx.palette(next(iter(clique_edges(Q, p.r)))):
            pre = frag.colors.invert(c, Q)
            if all(f in frag.K.edges for f in clique_edges(pre, p.r)) and frag.report.member(pre):
                return c, pre
        return None

    def absorb_mono(colour: int, pre: Clique, c: int):
        expr = frag.report.express(pre)
        if expr is None:
            raise StageFailure("modular", f"preimage {pre} escapes the span")
        for gidx, coeff in expr.items():
            target = frag.colors.apply(colour, frag.report.Gset[gidx])
            phi5[target] = (phi5[target] + c * coeff) % N

    for Q, c in sorted(cleaned.items()):
        if c == 0:
            continue
        direct = mono_target(Q) if direct_mono else None
        if direct is not None:
            absorb_mono(direct[0], direct[1], c)
            continue
        _, records = mono_split(ctx, Q)
        for _, sign, colour, pre in records:
            absorb_mono(colour, pre, c * sign)

    phi6: dict[Clique, int] = {
        Q: _lift_representative(phi5.get(Q, 0), N) for Q in frag.Q0
    }
    phi6_vec = IntVector()
    for Q, c in phi6.items():
        phi6_vec.add(Q, c)
    J2 = J1.copy()
    J2.add_scaled(boundary(phi6_vec, p), -1)
    for f, c in J2.items():
        if c % N != 0:
            raise StageFailure("lift", f"residue {c} at {f} not divisible by {N}")

    phi7 = IntVector()
    for f, c in sorted(J2.items()):
        if c == 0:
            continue
        window = frag.zsets.get(canon(f))
        if window is None:
            raise StageFailure("lift", f"no decoder window covers {f}")
        phi7.add_scaled(materialize(frag.decoder_table, window, canon(f)), c // N)

    total = IntVector()
    for vec in (phi0, phi6_vec, phi7):
        total.add_scaled(vec, 1)
    q1set = set(frag.Q1)
    out = IntVector()
    for Q, c in total.items():
        if c == 0:
            continue
        if Q in q1set:
            out.add(Q, c)
        else:
            w = frag.flat.witnesses.get(Q)
            if w is None:
                raise StageFailure("assembly", f"no witness for removed clique {Q}")
            out.add_scaled(w, c)
    check = boundary(out, p)
    if check.sorted_items() != J.sorted_items():
        raise StageFailure("assembly", "assembled boundary mismatch")
    return out
