"""The clique-exchange gadget.

A p-blowup of the complete q-clique carries two parallel clique
decompositions cut out by a Vandermonde matrix over F_p.  Gluing
2*C(q,r) copies along designated cliques produces a gadget whose two
decompositions agree everywhere except in a controlled ring of cliques
around one distinguished clique; exchanging one decomposition for the
other is the basic move the absorber builds from.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product

from .algebra import VandermondeMatrix, bertrand_prime, mat_vec, submatrix_invert
from .core import Params, RGraph, canon, verify_decomposition
from .util import ConfigError

Clique = tuple[int, ...]


@dataclass(frozen=True)
class Blowup:
    """p vertices per part, one part per vertex of the base q-clique.

    Cliques are transversals picked by vectors in F_p^q; the two
    decompositions come from the column space of the Vandermonde matrix
    and its shift by the vector that is 1 outside the first r parts.
    """

    q: int
    r: int
    p: int
    matrix: VandermondeMatrix
    parts: tuple[tuple[int, ...], ...]
    graph: RGraph
    upsilon_plus: tuple[Clique, ...]
    upsilon_minus: tuple[Clique, ...]
    qhat_plus: Clique
    qhat_minus: Clique
    root_edge: tuple[int, ...]

    def vertex(self, part: int, element: int) -> int:
        return (part - 1) * self.p + element + 1

    def locate(self, v: int) -> tuple[int, int]:
        return (v - 1) // self.p + 1, (v - 1) % self.p

    def _clique_of_vector(self, vec) -> Clique:
        return tuple(self.vertex(i + 1, vec[i] % self.p) for i in range(self.q))

    def _shift(self) -> tuple[int, ...]:
        return tuple(0 if i < self.r else 1 for i in range(self.q))

    def clique_through(self, edge: tuple[int, ...], sign: int) -> Clique:
        """The unique decomposition clique through a transversal edge.

        sign +1 selects from the plain column-space family, -1 from the
        shifted one.  Solves for the parameter vector through the
        inverse of the r-row submatrix picked by the edge's parts.
        """
        pairs = sorted(self.locate(v) for v in edge)
        I = tuple(i for i, _ in pairs)
        if len(set(I)) != self.r:
            raise ValueError(f"edge {edge} is not transversal")
        shift = self._shift()
        rhs = tuple(
            (a - (shift[i - 1] if sign < 0 else 0)) % self.p for (i, a) in pairs
        )
        inv = submatrix_invert(self.matrix, I)
        u = mat_vec(inv, rhs, self.p)
        vec = mat_vec(self.matrix.rows, u, self.p)
        if sign < 0:
            vec = tuple((x + s) % self.p for x, s in zip(vec, shift))
        return self._clique_of_vector(vec)


def build_blowup(p: Params) -> Blowup:
    q, r = p.q, p.r
    prime = bertrand_prime(q)
    M = VandermondeMatrix.build(q, r, prime)
    parts = tuple(
        tuple(range((i - 1) * prime + 1, i * prime + 1)) for i in range(1, q + 1)
    )
    edges = set()
    for I in combinations(range(1, q + 1), r):
        for elements in product(range(prime), repeat=r):
            edges.add(tuple((i - 1) * prime + a + 1 for i, a in zip(I, elements)))
    shift = tuple(0 if i < r else 1 for i in range(q))
    plus, minus = [], []
    for u in product(range(prime), repeat=r):
        col = mat_vec(M.rows, u, prime)
        plus.append(tuple((i * prime) + col[i] + 1 for i in range(q)))
        minus.append(tuple((i * prime) + (col[i] + shift[i]) % prime + 1 for i in range(q)))
    qhat_plus = tuple(i * prime + 1 for i in range(q))
    qhat_minus = tuple(i * prime + shift[i] + 1 for i in range(q))
    graph = RGraph(q * prime, r, frozenset(edges))
    return Blowup(
        q,
        r,
        prime,
        M,
        parts,
        graph,
        tuple(sorted(plus)),
        tuple(sorted(minus)),
        qhat_plus,
        qhat_minus,
        tuple(qhat_plus[:r]),
    )


@dataclass
class GadgetState:
    """Mutable assembly state while gluing blowup copies."""

    r: int
    next_vertex: int
    edges: set[tuple[int, ...]] = field(default_factory=set)
    plus: set[Clique] = field(default_factory=set)
    minus: set[Clique] = field(default_factory=set)
    minus_cover: dict[tuple[int, ...], Clique] = field(default_factory=dict)
    provenance: dict[tuple[int, ...], int] = field(default_factory=dict)
    copies: int = 0

    @classmethod
    def from_blowup(cls, blow: Blowup) -> "GadgetState":
        st = cls(blow.r, blow.graph.n + 1)
        st.edges = set(blow.graph.edges)
        st.plus = set(blow.upsilon_plus)
        st.minus = set(blow.upsilon_minus)
        for Q in blow.upsilon_minus:
            for e in combinations(Q, blow.r):
                st.minus_cover[e] = Q
        for e in st.edges:
            st.provenance[e] = 0
        return st


def glue(
    state: GadgetState, qminus: Clique, blow: Blowup, bijection: dict[int, int]
) -> dict[int, int]:
    """Glue a fresh blowup copy onto the state.

    Identifies the copy's designated plus-clique with an existing
    minus-clique of the state through the given bijection; every other
    copy vertex receives a fresh id.  The state's plus family gains the
    copy's plus-cliques minus the identified one; its minus family drops
    qminus and gains the copy's minus-cliques.  Returns the full vertex
    relabelling that was applied to the copy.
    """
    if qminus not in state.minus:
        raise ConfigError(f"{qminus} is not a minus-clique of the state")
    if set(bijection) != set(blow.qhat_plus) or set(bijection.values()) != set(qminus):
        raise ConfigError("identification must map the designated clique onto the target")
    if len(set(bijection.values())) != len(bijection):
        raise ConfigError("identification is not a bijection")
    mapping = dict(bijection)
    for v in range(1, blow.graph.n + 1):
        if v not in mapping:
            mapping[v] = state.next_vertex
            state.next_vertex += 1
    state.copies += 1
    idx = state.copies
    added = 0
    for e in blow.graph.edges:
        img = canon(mapping[v] for v in e)
        if img not in state.edges:
            state.edges.add(img)
            state.provenance[img] = idx
            added += 1
    assert added == len(blow.graph.edges) - len(list(combinations(qminus, blow.r)))
    for Q in blow.upsilon_plus:
        if Q != blow.qhat_plus:
            state.plus.add(canon(mapping[v] for v in Q))
    state.minus.discard(qminus)
    for Q in blow.upsilon_minus:
        img = canon(mapping[v] for v in Q)
        state.minus.add(img)
        for e in combinations(img, blow.r):
            state.minus_cover[e] = img
    return mapping


def aligned_bijection(blow: Blowup, target: Clique, edge: tuple[int, ...]) -> dict[int, int]:
    """Canonical identification sending the copy's root edge onto `edge`.

    Root-edge vertices map in sorted order onto the edge's vertices, the
    remaining designated-clique vertices in sorted order onto the rest
    of the target clique.
    """
    if not set(edge) <= set(target):
        raise ConfigError(f"edge {edge} not inside target clique {target}")
    src = sorted(blow.root_edge) + sorted(set(blow.qhat_plus) - set(blow.root_edge))
    dst = sorted(edge) + sorted(set(target) - set(edge))
    return dict(zip(src, dst))


@dataclass(frozen=True)
class OmegaGadget:
    q: int
    r: int
    graph: RGraph
    upsilon_plus: frozenset[Clique]
    upsilon_minus: frozenset[Clique]
    qhat_plus: Clique
    ring: dict[tuple[int, ...], Clique]
    provenance: dict[tuple[int, ...], int]
    copies: int

    @property
    def anchor_vertices(self) -> frozenset[int]:
        """The designated clique's vertices together with all ring clique vertices."""
        out = set(self.qhat_plus)
        for Q in self.ring.values():
            out.update(Q)
        return frozenset(out)

    @property
    def root_edge(self) -> tuple[int, ...]:
        return min(self.ring)

    @property
    def qhat_minus(self) -> Clique:
        """The ring clique at the root edge, the designated negative partner."""
        return self.ring[self.root_edge]

    def size_bound(self) -> int:
        from math import comb

        return 3 * (2 * self.q) ** self.r * comb(self.q, self.r) ** 2


def build_omega(p: Params) -> OmegaGadget:
    """Assemble the exchange gadget from 1 + 2*C(q,r) blowup copies.

    Rounds run over the edges of the designated clique in sorted order;
    each round glues two fresh copies along that edge, leaving a final
    ring clique that meets the start-of-round graph exactly in the edge.
    """
    blow = build_blowup(p)
    state = GadgetState.from_blowup(blow)
    ring: dict[tuple[int, ...], Clique] = {}
    for e in combinations(blow.qhat_plus, p.r):
        for _ in range(2):
            target = state.minus_cover[e]
            glue(state, target, blow, aligned_bijection(blow, target, e))
        ring[e] = state.minus_cover[e]
    gadget = OmegaGadget(
        p.q,
        p.r,
        RGraph(state.next_vertex - 1, p.r, frozenset(state.edges)),
        frozenset(state.plus),
        frozenset(state.minus),
        blow.qhat_plus,
        ring,
        dict(state.provenance),
        state.copies + 1,
    )
    rep = validate_omega(gadget)
    assert rep.ok, f"gadget invariant broken: {rep.failures}"
    return gadget


@dataclass(frozen=True)
class OmegaReport:
    ok: bool
    failures: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_omega(g: OmegaGadget) -> OmegaReport:
    """Exhaustive check of the gadget invariants."""
    fails: list[str] = []
    for name, fam in (("plus", g.upsilon_plus), ("minus", g.upsilon_minus)):
        rep = verify_decomposition(g.graph, fam, g.q)
        if not rep:
            fails.append(f"{name} family is not a decomposition: {rep.reason} at {rep.witness}")
    if g.qhat_plus not in g.upsilon_plus:
        fails.append("designated clique missing from the plus family")
    root_edges = set(combinations(g.qhat_plus, g.r))
    if set(g.ring) != root_edges:
        fails.append("ring is not indexed by the designated clique's edges")
    anchor = set(g.qhat_plus)
    outer: list[set[int]] = []
    for e, Q in sorted(g.ring.items()):
        if Q not in g.upsilon_minus:
            fails.append(f"ring clique at {e} missing from the minus family")
        if set(Q) & anchor != set(e):
            fails.append(f"ring clique at {e} meets the designated clique in {sorted(set(Q) & anchor)}")
        outer.append(set(Q) - anchor)
    for i in range(len(outer)):
        for j in range(i + 1, len(outer)):
            if outer[i] & outer[j]:
                fails.append("ring cliques overlap outside the designated clique")
                break
    zone = set(g.qhat_plus)
    for Q in g.ring.values():
        zone.update(Q)
    ring_sets = [set(Q) for Q in g.ring.values()]
    for e in g.graph.edges:
        cut = set(e) & zone
        if cut <= anchor or any(cut <= s for s in ring_sets):
            continue
        fails.append(f"edge {e} straddles the protected zone")
        break
    if len(g.graph.edges) > g.size_bound():
        fails.append(f"gadget has {len(g.graph.edges)} edges, above the bound {g.size_bound()}")
    return OmegaReport(not fails, tuple(fails))
