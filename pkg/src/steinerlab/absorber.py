"""Absorber construction and replay.

Build: an integral expression base Q1 (odd cycle or full fragment), local
decoder windows, signed splitting copies of the exchange gadget over
Q1 and the window cliques, elimination moves for every oppositely signed
near pair, and further elimination moves for every bad negative
elimination clique.  All labels (near/far, good/bad) and vertex maps are
persisted so solving is deterministic replay plus arithmetic.

Solve: express a divisible leave over Q1, centre it, correct with decoder
windows, then walk the splitting / pairing / further-elimination chain
down to a decomposition of absorber-plus-leave.
"""
from __future__ import annotations

import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

from .core import (
    IntVector,
    Params,
    RGraph,
    boundary,
    canon,
    verify_decomposition,
)
from .decode import decoder, divisible, materialize
from .exchange import pair_anchor, split_anchor
from .integral import (
    IntegralConfig,
    IntegralFragment,
    StageFailure,
    clique_edges,
    edge_multiplicities,
    integral_absorber,
    solve_fragment,
)
from .omega import build_omega
from .process import ExtensionType, run_process
from .util import ConfigError, DivisibilityError, derive_rng

Clique = tuple[int, ...]
Edge = tuple[int, ...]

BOOK_VERSION = "1"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AbsorberConfig:
    """Build knobs; copies_per_sign None means the paper count 2^q r!."""

    strategy: str = "cycle"
    copies_per_sign: int | None = None
    window_budget: int = 3000
    embed_budget: int = 200000
    integral: IntegralConfig | None = None
    seed: int = 0

    def effective(self, p: Params) -> dict:
        copies = self.copies_per_sign
        full = (2 ** p.q) * math.factorial(p.r)
        if copies is None:
            copies = full
        return {
            "strategy": self.strategy,
            "copies_per_sign": copies,
            "paper_copies_per_sign": full,
            "window_budget": self.window_budget,
            "embed_budget": self.embed_budget,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# registries


@dataclass(frozen=True)
class ImageRecord:
    """One non-anchored gadget image and its coefficient when the owning
    move fires; near records remember the single base edge they straddle."""

    clique: Clique
    coeff: int
    near: bool
    base_edge: Edge | None


@dataclass(frozen=True)
class SplitCopy:
    base: Clique
    sign: int
    map: dict[int, int]
    records: tuple[ImageRecord, ...]

    def fresh_vertices(self) -> frozenset[int]:
        return frozenset(self.map.values()) - set(self.base)


@dataclass(frozen=True)
class ElimMove:
    pos_near: Clique
    neg_near: Clique
    edge: Edge
    map: dict[int, int]
    records: tuple[ImageRecord, ...]
    bads: tuple[tuple[Clique, Edge, Clique], ...]


@dataclass(frozen=True)
class FurtherMove:
    bad: Clique
    partner: Clique
    edge: Edge
    map: dict[int, int]
    records: tuple[ImageRecord, ...]


@dataclass
class AbsorberBook:
    """Everything a solve needs, replayable and serializable."""

    p: Params
    N: int
    R: RGraph
    strategy: str
    config: AbsorberConfig
    effective: dict
    Q1: tuple[Clique, ...]
    fragment: IntegralFragment | None
    Zsets: dict[Edge, tuple[int, ...]]
    Q2: tuple[Clique, ...]
    copies: tuple[SplitCopy, ...]
    elims: tuple[ElimMove, ...]
    furthers: tuple[FurtherMove, ...]
    Qplus: frozenset[Clique]
    Qminus: frozenset[Clique]
    caveats: tuple[str, ...]
    version: str = BOOK_VERSION
    _index: dict | None = field(default=None, repr=False, compare=False)

    def absorber_edges(self) -> frozenset[Edge]:
        out: set[Edge] = set()
        for Q in self.Qminus:
            out.update(clique_edges(Q, self.p.r))
        return frozenset(out)

    def index(self) -> dict:
        if self._index is None:
            self._index = _index_book(self)
        return self._index


def _index_book(book: AbsorberBook) -> dict:
    copies_by_base: dict[tuple[Clique, int], list[SplitCopy]] = defaultdict(list)
    near_base: dict[Clique, Edge] = {}
    near_cliques: set[Clique] = set()
    for copy in book.copies:
        copies_by_base[(copy.base, copy.sign)].append(copy)
        for rec in copy.records:
            if rec.near:
                near_cliques.add(rec.clique)
                near_base[rec.clique] = rec.base_edge
    elim_by_pair = {(m.neg_near, m.pos_near): m for m in book.elims}
    further_by_bad = {m.bad: m for m in book.furthers}
    a0_edges: set[Edge] = set()
    for Q in list(book.Q1) + list(book.Q2):
        a0_edges.update(clique_edges(Q, book.p.r))
    return {
        "copies_by_base": copies_by_base,
        "near_cliques": near_cliques,
        "near_base": near_base,
        "elim_by_pair": elim_by_pair,
        "further_by_bad": further_by_bad,
        "a0_edges": frozenset(a0_edges),
    }


# ---------------------------------------------------------------------------
# greedy embeddings for the build steps


def _greedy_embedding(
    tverts: Sequence[int],
    tedges: Sequence[tuple[int, ...]],
    anchor: Mapping[int, int],
    host_n: int,
    rng: random.Random,
    blocked: set[Edge],
    banned: frozenset[int],
    budget: int,
) -> dict[int, int] | None:
    """DFS with a wrapping cursor over host vertices; non-anchored template
    edges must avoid the blocked set."""
    anchored_t = {v for v in anchor}
    mapping: dict[int, int] = dict(anchor)
    used = set(mapping.values())
    free = [v for v in tverts if v not in mapping]
    by_vert: dict[int, list[tuple[int, ...]]] = {v: [] for v in tverts}
    for te in tedges:
        if all(w in anchored_t for w in te):
            continue
        for v in te:
            by_vert[v].append(te)
    start = rng.randrange(host_n)
    steps = 0

    def dfs(i: int) -> bool:
        nonlocal steps
        if i == len(free):
            return True
        tv = free[i]
        for j in range(host_n):
            if steps >= budget:
                return False
            hv = (start + steps + j) % host_n + 1
            if hv in used or hv in banned:
                continue
            steps += 1
            mapping[tv] = hv
            used.add(hv)
            ok = True
            for te in by_vert[tv]:
                if all(w in mapping for w in te):
                    if canon(mapping[w] for w in te) in blocked:
                        ok = False
                        break
            if ok and dfs(i + 1):
                return True
            del mapping[tv]
            used.discard(hv)
        return False

    if not dfs(0):
        return None
    return mapping


# ---------------------------------------------------------------------------
# the cycle expression base


def cycle_base(R: RGraph, p: Params, host_n: int) -> tuple[Clique, ...]:
    """Odd cycle through the reserve vertices: an exact integral expression
    base at (q,r) = (2,1) with every vertex in exactly two cliques."""
    if (p.q, p.r) != (2, 1):
        raise ConfigError("cycle strategy requires q=2, r=1")
    verts = sorted({v for f in R.edges for v in f})
    if not verts:
        return ()
    used = set(verts)
    candidate = 1
    ring = list(verts)
    while len(ring) < 3 or len(ring) % 2 == 0:
        while candidate <= host_n and candidate in used:
            candidate += 1
        if candidate > host_n:
            raise StageFailure("build", f"host exhausted at {host_n} vertices")
        ring.append(candidate)
        used.add(candidate)
    ring.sort()
    m = len(ring)
    return tuple(canon((ring[i], ring[(i + 1) % m])) for i in range(m))


def cycle_solve(Q1: Sequence[Clique], L: IntVector) -> IntVector:
    """Exact solve over an odd cycle: alternating recurrence around the
    ring, closed by the half of the alternating sum."""
    ring: list[int] = []
    adj: dict[int, list[int]] = defaultdict(list)
    for a, b in Q1:
        adj[a].append(b)
        adj[b].append(a)
    if not Q1:
        if L.abs_sum():
            raise StageFailure("express", "nonzero leave with empty base")
        return IntVector()
    start = min(adj)
    prev, at = None, start
    while True:
        ring.append(at)
        nxt = adj[at][0] if adj[at][0] != prev else adj[at][1]
        prev, at = at, nxt
        if at == start:
            break
    m = len(ring)
    vals = [L[(v,)] for v in ring]
    # x_i = L(v_{i+1}) - x_{i-1} with closure 2 x_0 = L(v_0) - B
    B = 0
    for j in range(1, m):
        B = vals[j] - B
    if (vals[0] - B) % 2 != 0:
        raise StageFailure("express", "leave has odd total on the cycle")
    x0 = (vals[0] - B) // 2
    xs = [x0]
    for j in range(1, m):
        xs.append(vals[j] - xs[-1])
    phi = IntVector()
    for j in range(m):
        phi.add(canon((ring[j], ring[(j + 1) % m])), xs[j])
    return phi


# ---------------------------------------------------------------------------
# the build


def build_absorber(
    R: RGraph,
    p: Params,
    config: AbsorberConfig | None = None,
    rng: random.Random | None = None,
) -> AbsorberBook:
    """Steps: expression base, local decoder windows, signed splitting
    copies, elimination of near pairs, further elimination of bad
    negatives, then assembly and audits."""
    if config is None:
        config = AbsorberConfig()
    if rng is None:
        rng = derive_rng(config.seed, "absorber")
    eff = config.effective(p)
    copies_per_sign = eff["copies_per_sign"]
    caveats: list[str] = []
    if copies_per_sign < eff["paper_copies_per_sign"]:
        caveats.append(
            f"copies_per_sign reduced to {copies_per_sign} from "
            f"{eff['paper_copies_per_sign']}; leaves needing larger "
            f"expression coefficients will fail at the splitting stage"
        )
    N = p.N

    fragment: IntegralFragment | None = None
    if config.strategy == "cycle":
        Q1 = cycle_base(R, p, p.n)
    elif config.strategy == "integral":
        icfg = config.integral if config.integral is not None else IntegralConfig()
        Q1, fragment = integral_absorber(R, p, icfg, rng)
    else:
        raise ConfigError(f"unknown strategy {config.strategy!r}")

    q1_edges: set[Edge] = set()
    for Q in Q1:
        q1_edges.update(clique_edges(Q, p.r))
    missing = [e for e in R.edges if e not in q1_edges]
    if missing:
        raise StageFailure("build", f"reserve edge {missing[0]} not covered by Q1")
    mult = edge_multiplicities(Q1, p.r)
    if any(c > 2 for c in mult.values()):
        raise StageFailure("build", "expression base exceeds multiplicity 2")

    # Step 2: local decoder windows for every edge under Q1
    zsets: dict[Edge, tuple[int, ...]] = {}
    q2: list[Clique] = []
    roots = sorted(q1_edges)
    if roots:
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
            roots,
            B=frozenset(q1_edges) | R.edges,
            host_n=p.n,
            rng=rng,
            budget=config.window_budget,
        )
        if not run.completed:
            bad = roots[run.abort_index - 1]
            raise StageFailure("windows", f"no decoder window for {bad}")
        for e, image in zip(roots, run.images):
            window = canon(image.map.values())
            zsets[e] = window
            q2.extend(canon(c) for c in combinations(window, p.q))
    q2 = sorted(set(q2))

    # Step 3: signed splitting copies of every base clique
    g = build_omega(p)
    gadget_vs = sorted({v for e in g.graph.edges for v in e})
    gadget_edges = sorted(g.graph.edges)
    hat_plus_edges = set(clique_edges(g.qhat_plus, g.r))
    ring_of: dict[Clique, Edge] = {g.ring[f]: f for f in hat_plus_edges}
    minus_templates = [T for T in g.upsilon_minus]
    plus_templates = [T for T in g.upsilon_plus if T != g.qhat_plus]

    a0_edges: set[Edge] = set(q1_edges)
    for Q in q2:
        a0_edges.update(clique_edges(Q, p.r))
    blocked: set[Edge] = set(a0_edges) | set(R.edges)

    share_verts: dict[Edge, set[int]] = defaultdict(set)
    bases = sorted(set(Q1) | set(q2))
    copies: list[SplitCopy] = []
    for base in bases:
        base_edges = list(clique_edges(base, p.r))
        for sign in (1, -1):
            for _ in range(copies_per_sign):
                anchor = split_anchor(g, base)
                banned = frozenset().union(
                    *(share_verts[e] for e in base_edges)
                ) - set(base)
                mapping = _greedy_embedding(
                    gadget_vs,
                    gadget_edges,
                    anchor,
                    p.n,
                    rng,
                    blocked,
                    banned,
                    config.embed_budget,
                )
                if mapping is None:
                    raise StageFailure(
                        "split", f"no splitting embedding for {base} sign {sign:+d}"
                    )
                recs: list[ImageRecord] = []
                for T in minus_templates:
                    img = canon(mapping[v] for v in T)
                    f = ring_of.get(T)
                    recs.append(
                        ImageRecord(
                            clique=img,
                            coeff=sign,
                            near=f is not None,
                            base_edge=canon(anchor[v] for v in f)
                            if f is not None
                            else None,
                        )
                    )
                for T in plus_templates:
                    img = canon(mapping[v] for v in T)
                    recs.append(
                        ImageRecord(clique=img, coeff=-sign, near=False, base_edge=None)
                    )
                copy = SplitCopy(
                    base=base, sign=sign, map=dict(mapping), records=tuple(recs)
                )
                copies.append(copy)
                fresh = copy.fresh_vertices()
                for rec in recs:
                    for e in clique_edges(rec.clique, p.r):
                        if e not in a0_edges:
                            blocked.add(e)
                for e in base_edges:
                    share_verts[e].update(fresh)

    # positive far splitting cliques indexed by edge (partner lookup)
    pos_far_at: dict[Edge, list[Clique]] = defaultdict(list)
    for copy in copies:
        for rec in copy.records:
            if rec.coeff > 0 and not rec.near:
                for e in clique_edges(rec.clique, p.r):
                    pos_far_at[e].append(rec.clique)

    # Step 4: eliminate every oppositely signed near pair
    nears_at: dict[Edge, dict[int, list[Clique]]] = defaultdict(
        lambda: {1: [], -1: []}
    )
    for copy in copies:
        for rec in copy.records:
            if rec.near:
                nears_at[rec.base_edge][1 if rec.coeff > 0 else -1].append(rec.clique)

    qhat_minus_edges = set(clique_edges(g.qhat_minus, g.r))
    root_edge = g.root_edge
    plus_cover: dict[Edge, Clique] = {}
    for f in qhat_minus_edges:
        if f == root_edge:
            continue
        owners = [T for T in plus_templates if set(f) <= set(T)]
        if len(owners) != 1:
            raise StageFailure("eliminate", f"template edge {f} cover not unique")
        plus_cover[f] = owners[0]

    elim_templates_minus = [T for T in g.upsilon_minus if T != g.qhat_minus]
    elim_templates_plus = plus_templates
    elims: list[ElimMove] = []
    for e in sorted(nears_at):
        sides = nears_at[e]
        for pos in sorted(sides[1]):
            for neg in sorted(sides[-1]):
                if len(set(pos) & set(neg)) != p.r:
                    raise StageFailure(
                        "eliminate", f"near pair at {e} shares more than the edge"
                    )
                anchor = pair_anchor(g, pos, neg)
                mapping = _greedy_embedding(
                    gadget_vs,
                    gadget_edges,
                    anchor,
                    p.n,
                    rng,
                    blocked,
                    frozenset(),
                    config.embed_budget,
                )
                if mapping is None:
                    raise StageFailure(
                        "eliminate", f"no elimination embedding for pair at {e}"
                    )
                recs = []
                for T in elim_templates_minus:
                    recs.append(
                        ImageRecord(
                            clique=canon(mapping[v] for v in T),
                            coeff=1,
                            near=False,
                            base_edge=None,
                        )
                    )
                for T in elim_templates_plus:
                    recs.append(
                        ImageRecord(
                            clique=canon(mapping[v] for v in T),
                            coeff=-1,
                            near=False,
                            base_edge=None,
                        )
                    )
                bads: list[tuple[Clique, Edge, Clique]] = []
                for f, T in sorted(plus_cover.items()):
                    bad_clique = canon(mapping[v] for v in T)
                    e_i = canon(mapping[v] for v in f)
                    partners = pos_far_at.get(e_i, [])
                    if len(partners) != 1:
                        raise StageFailure(
                            "eliminate",
                            f"positive splitting clique at {e_i} not unique "
                            f"({len(partners)} found)",
                        )
                    bads.append((bad_clique, e_i, partners[0]))
                seen_bads = {b for b, _, _ in bads}
                if len(seen_bads) != len(bads):
                    raise StageFailure(
                        "eliminate", "an elimination clique is bad for two edges"
                    )
                for rec in recs:
                    for f2 in clique_edges(rec.clique, p.r):
                        if f2 not in a0_edges:
                            blocked.add(f2)
                elims.append(
                    ElimMove(
                        pos_near=pos,
                        neg_near=neg,
                        edge=e,
                        map=dict(mapping),
                        records=tuple(recs),
                        bads=tuple(bads),
                    )
                )

    # Step 5: further eliminate every bad negative elimination clique
    furthers: list[FurtherMove] = []
    for move in elims:
        for bad_clique, e_i, partner in move.bads:
            if len(set(partner) & set(bad_clique)) != p.r:
                raise StageFailure(
                    "further",
                    f"partner and bad clique at {e_i} share more than the edge",
                )
            anchor = pair_anchor(g, partner, bad_clique)
            mapping = _greedy_embedding(
                gadget_vs,
                gadget_edges,
                anchor,
                p.n,
                rng,
                blocked,
                frozenset(),
                config.embed_budget,
            )
            if mapping is None:
                raise StageFailure(
                    "further", f"no further elimination embedding at {e_i}"
                )
            recs = []
            for T in elim_templates_minus:
                recs.append(
                    ImageRecord(
                        clique=canon(mapping[v] for v in T),
                        coeff=1,
                        near=False,
                        base_edge=None,
                    )
                )
            for T in elim_templates_plus:
                recs.append(
                    ImageRecord(
                        clique=canon(mapping[v] for v in T),
                        coeff=-1,
                        near=False,
                        base_edge=None,
                    )
                )
            for rec in recs:
                for f2 in clique_edges(rec.clique, p.r):
                    if f2 not in a0_edges:
                        blocked.add(f2)
            furthers.append(
                FurtherMove(
                    bad=bad_clique,
                    partner=partner,
                    edge=e_i,
                    map=dict(mapping),
                    records=tuple(recs),
                )
            )

    # Step 6: assemble the signed clique sets
    bad_set = {b for m in elims for b, _, _ in m.bads}
    qplus: set[Clique] = set()
    qminus: set[Clique] = set()
    for copy in copies:
        for rec in copy.records:
            if rec.coeff > 0:
                qplus.add(rec.clique)
            elif not rec.near:
                qminus.add(rec.clique)
    for move in elims:
        for rec in move.records:
            if rec.coeff > 0:
                qplus.add(rec.clique)
            elif rec.clique not in bad_set:
                qminus.add(rec.clique)
    for move in furthers:
        for rec in move.records:
            (qplus if rec.coeff > 0 else qminus).add(rec.clique)

    book = AbsorberBook(
        p=p,
        N=N,
        R=R,
        strategy=config.strategy,
        config=config,
        effective=eff,
        Q1=tuple(Q1),
        fragment=fragment,
        Zsets=zsets,
        Q2=tuple(q2),
        copies=tuple(copies),
        elims=tuple(elims),
        furthers=tuple(furthers),
        Qplus=frozenset(qplus),
        Qminus=frozenset(qminus),
        caveats=tuple(caveats),
    )
    audit_book(book)
    return book


def audit_book(book: AbsorberBook) -> None:
    """Re-verify the §-by-§ construction properties; raises on breach."""
    p = book.p
    idx = book.index()
    a0 = idx["a0_edges"]

    neg_far = [
        rec.clique
        for copy in book.copies
        for rec in copy.records
        if rec.coeff < 0 and not rec.near
    ]
    seen: set[Edge] = set()
    for Q in neg_far:
        for e in clique_edges(Q, p.r):
            if e in seen:
                raise StageFailure("audit", f"negative far cliques share edge {e}")
            seen.add(e)

    bad_set = {b for m in book.elims for b, _, _ in m.bads}
    good_neg_elims = [
        rec.clique
        for m in book.elims
        for rec in m.records
        if rec.coeff < 0 and rec.clique not in bad_set
    ]
    seen2: set[Edge] = set(seen)
    for Q in good_neg_elims:
        for e in clique_edges(Q, p.r):
            if e in a0:
                raise StageFailure("audit", f"good negative elimination meets A0 at {e}")
            if e in seen2:
                raise StageFailure("audit", f"good negative eliminations share edge {e}")
            seen2.add(e)
    for Q in neg_far:
        for e in clique_edges(Q, p.r):
            if e in a0:
                raise StageFailure("audit", f"negative far splitting meets A0 at {e}")

    mult = edge_multiplicities(sorted(book.Qminus), p.r)
    heavy = [e for e, c in mult.items() if c > 1]
    if heavy:
        raise StageFailure("audit", f"absorber cliques overlap at {heavy[0]}")
    overlap = set(mult) & set(book.R.edges)
    if overlap:
        raise StageFailure("audit", f"absorber meets the reserve at {sorted(overlap)[0]}")


# ---------------------------------------------------------------------------
# the solve chain


def _centered(phi: IntVector, N: int) -> IntVector:
    out = IntVector()
    for Q, c in phi.items():
        out.add(Q, ((c + N // 2) % N) - N // 2)
    return out


def absorb_solve(book: AbsorberBook, L: IntVector) -> tuple[Clique, ...]:
    """Decompose absorber-plus-leave for a 0/1 divisible leave inside the
    reserve; returns the clique list, raising StageFailure on any breach."""
    p = book.p
    N = book.N
    idx = book.index()
    rep = divisible(L, p)
    if not rep.ok:
        raise DivisibilityError(f"leave is not divisible: {rep.witness}")
    for e, c in L.items():
        if c not in (0, 1):
            raise ConfigError(f"leave must be 0/1-valued, got {c} at {e}")
        if e not in book.R.edges:
            raise ConfigError(f"leave edge {e} outside the reserve")

    ddown = sorted(book.Qminus)
    if not L.abs_sum():
        D = tuple(ddown)
        _verify(book, L, D)
        return D

    # expression over Q1
    if book.strategy == "cycle":
        phi = cycle_solve(book.Q1, L)
    else:
        assert book.fragment is not None
        phi = solve_fragment(book.fragment, L)
    if boundary(phi, p).sorted_items() != L.sorted_items():
        raise StageFailure("express", "expression boundary mismatch")

    phi1 = _centered(phi, N)
    J = L.copy()
    J.add_scaled(boundary(phi1, p), -1)
    phi2 = IntVector()
    table = decoder(p)
    for e, c in sorted(J.items()):
        if c == 0:
            continue
        if c % N != 0 or abs(c) > N:
            raise StageFailure("center", f"residual {c} at {e} not in -N,0,N")
        window = book.Zsets.get(e)
        if window is None:
            raise StageFailure("center", f"no decoder window for {e}")
        phi2.add_scaled(materialize(table, window, e), c // N)
    phit = phi1.copy()
    phit.add_scaled(phi2, 1)
    if boundary(phit, p).sorted_items() != L.sorted_items():
        raise StageFailure("center", "centered boundary mismatch")

    # splitting: consume signed copies
    copies_by_base = idx["copies_by_base"]
    phi_p = IntVector()
    for Q, c in sorted(phit.items()):
        if c == 0:
            continue
        sign = 1 if c > 0 else -1
        avail = copies_by_base.get((Q, sign), [])
        if abs(c) > len(avail):
            raise StageFailure(
                "splitting",
                f"{abs(c)} copies of {Q} sign {sign:+d} needed, {len(avail)} built",
            )
        for copy in avail[: abs(c)]:
            for rec in copy.records:
                phi_p.add(rec.clique, rec.coeff)
    if boundary(phi_p, p).sorted_items() != L.sorted_items():
        raise StageFailure("splitting", "split boundary mismatch")
    for Q, c in phi_p.items():
        if abs(c) > 1:
            raise StageFailure("splitting", f"split support not 0/1 at {Q}")

    # pairing: cancel oppositely signed nears at every covered base edge
    near_cliques = idx["near_cliques"]
    near_base = idx["near_base"]
    elim_by_pair = idx["elim_by_pair"]
    at_edge: dict[Edge, dict[int, list[Clique]]] = defaultdict(
        lambda: {1: [], -1: []}
    )
    for Q, c in phi_p.items():
        if Q in near_cliques and c != 0:
            at_edge[near_base[Q]][c].append(Q)
    phi_pp = phi_p.copy()
    for e in sorted(at_edge):
        poss = sorted(at_edge[e][1])
        negs = sorted(at_edge[e][-1])
        want = L[e]
        if len(poss) - len(negs) != want:
            raise StageFailure(
                "pairing",
                f"near imbalance at {e}: {len(poss)} positive, {len(negs)} "
                f"negative, leave {want}",
            )
        for pos, neg in zip(poss, negs):
            move = elim_by_pair.get((neg, pos))
            if move is None:
                raise StageFailure("pairing", f"no elimination move for pair at {e}")
            phi_pp.add(neg, 1)
            phi_pp.add(pos, -1)
            for rec in move.records:
                phi_pp.add(rec.clique, rec.coeff)
    if boundary(phi_pp, p).sorted_items() != L.sorted_items():
        raise StageFailure("pairing", "pairing boundary mismatch")

    # further elimination of bad negatives
    further_by_bad = idx["further_by_bad"]
    phi_ppp = phi_pp.copy()
    for Q, c in sorted(phi_pp.items()):
        if c >= 0 or Q not in further_by_bad:
            continue
        move = further_by_bad[Q]
        if phi_ppp[move.partner] <= 0:
            raise StageFailure(
                "further", f"partner {move.partner} not positive at {move.edge}"
            )
        phi_ppp.add(Q, 1)
        phi_ppp.add(move.partner, -1)
        for rec in move.records:
            phi_ppp.add(rec.clique, rec.coeff)
    if boundary(phi_ppp, p).sorted_items() != L.sorted_items():
        raise StageFailure("further", "further boundary mismatch")

    d_plus: list[Clique] = []
    d_minus: list[Clique] = []
    for Q, c in phi_ppp.items():
        if c == 1:
            d_plus.append(Q)
        elif c == -1:
            d_minus.append(Q)
        elif c != 0:
            raise StageFailure("assemble", f"final coefficient {c} at {Q}")
    bad_plus = [Q for Q in d_plus if Q not in book.Qplus]
    bad_minus = [Q for Q in d_minus if Q not in book.Qminus]
    if bad_plus:
        raise StageFailure("assemble", f"positive clique {bad_plus[0]} outside Q+")
    if bad_minus:
        raise StageFailure("assemble", f"negative clique {bad_minus[0]} outside Q-")

    minus_set = set(d_minus)
    D = tuple(sorted(d_plus + [Q for Q in ddown if Q not in minus_set]))
    _verify(book, L, D)
    return D


def _verify(book: AbsorberBook, L: IntVector, D: tuple[Clique, ...]) -> None:
    edges = set(book.absorber_edges())
    for e, c in L.items():
        if c:
            edges.add(e)
    host = RGraph(n=book.p.n, r=book.p.r, edges=frozenset(edges))
    rep = verify_decomposition(host, list(D), q=book.p.q)
    if not rep.ok:
        raise StageFailure("verify", f"{rep.reason}: {rep.witness}")


# ---------------------------------------------------------------------------
# leave generation and serialization


def random_divisible_leave(
    book: AbsorberBook,
    rng: random.Random,
    attempts: int = 200,
    allow_empty: bool = False,
) -> IntVector:
    """Boundary of a random clique set drawn inside the reserve, retried
    until it is 0/1-valued (divisibility holds by construction)."""
    p = book.p
    rverts = sorted({v for e in book.R.edges for v in e})
    pool = [
        Q
        for Q in combinations(rverts, p.q)
        if all(e in book.R.edges for e in clique_edges(Q, p.r))
    ]
    if not pool:
        raise ConfigError("reserve contains no cliques to sample")
    for _ in range(attempts):
        chosen = [Q for Q in pool if rng.random() < 0.5]
        L = boundary(IntVector.indicator(chosen), p)
        if not all(c in (0, 1) for _, c in L.items()):
            continue
        if not allow_empty and not L.abs_sum():
            continue
        return L
    raise StageFailure("leave", f"no 0/1 divisible leave found in {attempts} tries")


def _edge_to_json(e: Edge) -> list[int]:
    return list(e)


def _record_to_json(rec: ImageRecord) -> dict:
    return {
        "clique": list(rec.clique),
        "coeff": rec.coeff,
        "near": rec.near,
        "base_edge": list(rec.base_edge) if rec.base_edge is not None else None,
    }


def _record_from_json(d: dict) -> ImageRecord:
    return ImageRecord(
        clique=tuple(d["clique"]),
        coeff=d["coeff"],
        near=d["near"],
        base_edge=tuple(d["base_edge"]) if d["base_edge"] is not None else None,
    )


def _map_to_json(m: Mapping[int, int]) -> list[list[int]]:
    return [[tv, hv] for tv, hv in sorted(m.items())]


def _integral_config_to_json(cfg: IntegralConfig) -> dict:
    return {
        "sample_rate": cfg.sample_rate,
        "sample_from": sorted(map(list, cfg.sample_from.edges))
        if cfg.sample_from is not None
        else None,
        "sample_from_n": cfg.sample_from.n if cfg.sample_from is not None else None,
        "sample_from_r": cfg.sample_from.r if cfg.sample_from is not None else None,
        "colour_count": cfg.colour_count,
        "colour_style": cfg.colour_style,
        "saturation_threshold": _num_to_json(cfg.saturation_threshold),
        "edge_threshold": _num_to_json(cfg.edge_threshold),
        "window_budget": cfg.window_budget,
        "search_budget": cfg.search_budget,
        "seed": cfg.seed,
    }


def _num_to_json(x: float | None):
    if x is None:
        return None
    if x == math.inf:
        return "inf"
    return x


def _num_from_json(x):
    if x == "inf":
        return math.inf
    return x


def _integral_config_from_json(d: dict) -> IntegralConfig:
    sample_from = None
    if d["sample_from"] is not None:
        sample_from = RGraph(
            n=d["sample_from_n"],
            r=d["sample_from_r"],
            edges=frozenset(tuple(e) for e in d["sample_from"]),
        )
    return IntegralConfig(
        sample_rate=d["sample_rate"],
        sample_from=sample_from,
        colour_count=d["colour_count"],
        colour_style=d["colour_style"],
        saturation_threshold=_num_from_json(d["saturation_threshold"]),
        edge_threshold=_num_from_json(d["edge_threshold"]),
        window_budget=d["window_budget"],
        search_budget=d["search_budget"],
        seed=d["seed"],
    )


def book_to_json(book: AbsorberBook) -> str:
    """Versioned snapshot; the integral fragment is replayed from its
    configuration on load rather than serialized wholesale."""
    p = book.p
    payload = {
        "version": book.version,
        "q": p.q,
        "r": p.r,
        "n": p.n,
        "rho": [p.rho.numerator, p.rho.denominator],
        "alpha": [p.alpha.numerator, p.alpha.denominator],
        "N": book.N,
        "strategy": book.strategy,
        "config": {
            "strategy": book.config.strategy,
            "copies_per_sign": book.config.copies_per_sign,
            "window_budget": book.config.window_budget,
            "embed_budget": book.config.embed_budget,
            "integral": _integral_config_to_json(book.config.integral)
            if book.config.integral is not None
            else None,
            "seed": book.config.seed,
        },
        "effective": book.effective,
        "caveats": list(book.caveats),
        "R": sorted(map(list, book.R.edges)),
        "Q1": [list(Q) for Q in book.Q1],
        "Zsets": [[list(e), list(w)] for e, w in sorted(book.Zsets.items())],
        "Q2": [list(Q) for Q in book.Q2],
        "copies": [
            {
                "base": list(c.base),
                "sign": c.sign,
                "map": _map_to_json(c.map),
                "records": [_record_to_json(r) for r in c.records],
            }
            for c in book.copies
        ],
        "elims": [
            {
                "pos_near": list(m.pos_near),
                "neg_near": list(m.neg_near),
                "edge": list(m.edge),
                "map": _map_to_json(m.map),
                "records": [_record_to_json(r) for r in m.records],
                "bads": [
                    [list(b), list(e), list(pt)] for b, e, pt in m.bads
                ],
            }
            for m in book.elims
        ],
        "furthers": [
            {
                "bad": list(m.bad),
                "partner": list(m.partner),
                "edge": list(m.edge),
                "map": _map_to_json(m.map),
                "records": [_record_to_json(r) for r in m.records],
            }
            for m in book.furthers
        ],
        "Qplus": sorted(map(list, book.Qplus)),
        "Qminus": sorted(map(list, book.Qminus)),
    }
    return json.dumps(payload, sort_keys=True)


def book_from_json(text: str) -> AbsorberBook:
    d = json.loads(text)
    if d["version"] != BOOK_VERSION:
        raise ConfigError(f"unsupported book version {d['version']!r}")
    from fractions import Fraction

    p = Params(
        q=d["q"],
        r=d["r"],
        n=d["n"],
        rho=Fraction(*d["rho"]),
        alpha=Fraction(*d["alpha"]),
    )
    icfg = (
        _integral_config_from_json(d["config"]["integral"])
        if d["config"]["integral"] is not None
        else None
    )
    config = AbsorberConfig(
        strategy=d["config"]["strategy"],
        copies_per_sign=d["config"]["copies_per_sign"],
        window_budget=d["config"]["window_budget"],
        embed_budget=d["config"]["embed_budget"],
        integral=icfg,
        seed=d["config"]["seed"],
    )
    R = RGraph(n=p.n, r=p.r, edges=frozenset(tuple(e) for e in d["R"]))
    fragment = None
    if d["strategy"] == "integral":
        rng = derive_rng(config.seed, "absorber")
        _, fragment = integral_absorber(
            R, p, icfg if icfg is not None else IntegralConfig(), rng
        )
    return AbsorberBook(
        p=p,
        N=d["N"],
        R=R,
        strategy=d["strategy"],
        config=config,
        effective=d["effective"],
        Q1=tuple(tuple(Q) for Q in d["Q1"]),
        fragment=fragment,
        Zsets={tuple(e): tuple(w) for e, w in d["Zsets"]},
        Q2=tuple(tuple(Q) for Q in d["Q2"]),
        copies=tuple(
            SplitCopy(
                base=tuple(c["base"]),
                sign=c["sign"],
                map={tv: hv for tv, hv in c["map"]},
                records=tuple(_record_from_json(r) for r in c["records"]),
            )
            for c in d["copies"]
        ),
        elims=tuple(
            ElimMove(
                pos_near=tuple(m["pos_near"]),
                neg_near=tuple(m["neg_near"]),
                edge=tuple(m["edge"]),
                map={tv: hv for tv, hv in m["map"]},
                records=tuple(_record_from_json(r) for r in m["records"]),
                bads=tuple(
                    (tuple(b), tuple(e), tuple(pt)) for b, e, pt in m["bads"]
                ),
            )
            for m in d["elims"]
        ),
        furthers=tuple(
            FurtherMove(
                bad=tuple(m["bad"]),
                partner=tuple(m["partner"]),
                edge=tuple(m["edge"]),
                map={tv: hv for tv, hv in m["map"]},
                records=tuple(_record_from_json(r) for r in m["records"]),
            )
            for m in d["furthers"]
        ),
        Qplus=frozenset(tuple(Q) for Q in d["Qplus"]),
        Qminus=frozenset(tuple(Q) for Q in d["Qminus"]),
        caveats=tuple(d["caveats"]),
        version=d["version"],
    )
