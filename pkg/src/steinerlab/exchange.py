"""Exchange moves on integral decompositions.

Embedding the gadget into a host and swapping one of its decompositions
for the other preserves the boundary while shifting clique multiplicities.
The two moves here remove one signed copy of a clique (split) or a
cancelling pair sharing one edge (eliminate).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import IntVector, canon
from .omega import OmegaGadget
from .util import ConfigError


def _edge_filter(allowed) -> "callable | None":
    if allowed is None:
        return None
    if callable(allowed):
        return allowed
    if hasattr(allowed, "edges"):
        edges = allowed.edges
        return lambda e: e in edges
    edges = set(allowed)
    return lambda e: e in edges


def _forbidden_set(forbidden) -> set:
    if forbidden is None:
        return set()
    if isinstance(forbidden, IntVector):
        return set(forbidden.support())
    return set(forbidden)


@dataclass(frozen=True)
class EmbedResult:
    """An injective template-to-host vertex map with cached edge images."""

    map: dict[int, int]
    image_edges: frozenset[tuple[int, ...]]
    new_image_edges: frozenset[tuple[int, ...]]
    mode: str

    def image(self, vs) -> tuple[int, ...]:
        return canon(self.map[v] for v in vs)


@dataclass(frozen=True)
class Embedding(EmbedResult):
    """A gadget embedding; remembers which gadget it places."""

    gadget: OmegaGadget = None  # type: ignore[assignment]


def extend_embedding(
    template_vertices,
    template_edges,
    anchor: dict[int, int],
    host_n: int,
    forbidden=None,
    allowed=None,
    rng: random.Random | None = None,
    budget: int = 3000,
    exhaust_threshold: int = 10**6,
) -> EmbedResult | None:
    """Complete a partial vertex embedding of a template into [host_n].

    Non-anchored template edges (those with at least one unanchored
    endpoint) must image outside `forbidden` and inside `allowed` when
    given; edges fully inside the anchor are the caller's roots and are
    exempt.  When the injective-assignment space is at most
    `exhaust_threshold`, all valid completions are enumerated and one is
    drawn uniformly.  Otherwise up to `budget` rejection samples are
    tried, then a randomized greedy search; the result records which
    mode produced it.  Returns None when no completion is found.
    """
    rng = rng or random.Random(0)
    forbidden = _forbidden_set(forbidden)
    allowed_fn = _edge_filter(allowed)
    free = sorted(v for v in template_vertices if v not in anchor)
    taken = set(anchor.values())
    if len(taken) != len(anchor):
        raise ConfigError("anchor is not injective")
    if any(not 1 <= h <= host_n for h in taken):
        raise ConfigError("anchor leaves the host vertex range")
    pool = [h for h in range(1, host_n + 1) if h not in taken]
    if len(pool) < len(free):
        return None

    # Template edges indexed by the latest-placed free vertex, so a DFS
    # can check each edge exactly once.
    order_pos = {v: i for i, v in enumerate(free)}
    by_last: list[list[tuple[int, ...]]] = [[] for _ in free]
    checkable: list[tuple[int, ...]] = []
    for e in template_edges:
        unanchored = [v for v in e if v in order_pos]
        if unanchored:
            checkable.append(e)
            by_last[max(order_pos[v] for v in unanchored)].append(e)

    def edge_ok(img: tuple[int, ...]) -> bool:
        if img in forbidden:
            return False
        return allowed_fn is None or allowed_fn(img)

    def build(mapping: dict[int, int], mode: str) -> EmbedResult:
        image = frozenset(canon(mapping[v] for v in e) for e in template_edges)
        new = frozenset(canon(mapping[v] for v in e) for e in checkable)
        return EmbedResult(mapping, image, new, mode)

    space = 1
    for i in range(len(free)):
        space *= len(pool) - i
        if space > exhaust_threshold:
            break

    if space <= exhaust_threshold:
        found: list[tuple[int, ...]] = []

        def dfs(idx: int, mapping: dict[int, int], used: set[int]):
            if idx == len(free):
                found.append(tuple(mapping[v] for v in free))
                return
            v = free[idx]
            for h in pool:
                if h in used:
                    continue
                mapping[v] = h
                if all(
                    edge_ok(canon(mapping[u] for u in e))
                    for e in by_last[idx]
                    if all(u in mapping or u in anchor for u in e)
                ):
                    used.add(h)
                    dfs(idx + 1, mapping, used)
                    used.discard(h)
                del mapping[v]

        dfs(0, dict(anchor), set(taken))
        if not found:
            return None
        pick = found[rng.randrange(len(found))]
        mapping = dict(anchor)
        mapping.update(zip(free, pick))
        return build(mapping, "exhaustive")

    for _ in range(budget):
        sample = rng.sample(pool, len(free))
        mapping = dict(anchor)
        mapping.update(zip(free, sample))
        if all(edge_ok(canon(mapping[v] for v in e)) for e in checkable):
            return build(mapping, "rejection")

    # Randomized greedy completion, candidates shuffled per vertex.
    nodes = 0
    cap = max(budget * 30, 100_000)

    def greedy(idx: int, mapping: dict[int, int], used: set[int]):
        nonlocal nodes
        if idx == len(free):
            return dict(mapping)
        cands = [h for h in pool if h not in used]
        rng.shuffle(cands)
        for h in cands:
            nodes += 1
            if nodes > cap:
                return None
            v = free[idx]
            mapping[v] = h
            if all(
                edge_ok(canon(mapping[u] for u in e))
                for e in by_last[idx]
                if all(u in mapping or u in anchor for u in e)
            ):
                used.add(h)
                out = greedy(idx + 1, mapping, used)
                if out is not None:
                    return out
                used.discard(h)
            del mapping[v]
        return None

    mapping = greedy(0, dict(anchor), set(taken))
    return build(mapping, "greedy") if mapping is not None else None


def find_embedding(
    g: OmegaGadget,
    anchor: dict[int, int],
    host_n: int,
    forbidden=None,
    allowed=None,
    rng: random.Random | None = None,
    budget: int = 3000,
) -> EmbedResult | None:
    """Embed the gadget into [host_n] extending the anchor.

    The anchor must injectively place at least the designated clique;
    image edges of non-anchored gadget edges avoid `forbidden` and stay
    inside `allowed` when given.  Returns None when the search space or
    budget is exhausted.
    """
    missing = [v for v in g.qhat_plus if v not in anchor]
    if missing:
        raise ConfigError(f"anchor must place the designated clique, missing {missing}")
    res = extend_embedding(
        range(1, g.graph.n + 1),
        g.graph.edges,
        anchor,
        host_n,
        forbidden,
        allowed,
        rng,
        budget,
    )
    if res is None:
        return None
    return Embedding(res.map, res.image_edges, res.new_image_edges, res.mode, g)


def split_anchor(g: OmegaGadget, Q: tuple[int, ...]) -> dict[int, int]:
    """Canonical anchor mapping the designated clique onto Q."""
    if len(Q) != g.q:
        raise ConfigError(f"clique has {len(Q)} vertices, expected {g.q}")
    return dict(zip(g.qhat_plus, sorted(Q)))


def pair_anchor(
    g: OmegaGadget, Qplus: tuple[int, ...], Qminus: tuple[int, ...]
) -> dict[int, int]:
    """Anchor placing the designated pair onto a cancelling pair.

    The shared edge of the gadget pair lands on the shared edge of the
    host pair; remaining vertices map sorted-to-sorted.
    """
    shared = sorted(set(Qplus) & set(Qminus))
    if len(shared) != g.r:
        raise ConfigError(f"pair shares {len(shared)} vertices, expected {g.r}")
    root = g.root_edge
    anchor = dict(zip(root, shared))
    anchor.update(zip(sorted(set(g.qhat_plus) - set(root)), sorted(set(Qplus) - set(shared))))
    anchor.update(zip(sorted(set(g.qhat_minus) - set(root)), sorted(set(Qminus) - set(shared))))
    return anchor


def exchange_delta(g: OmegaGadget, emb: EmbedResult) -> IntVector:
    """The signed clique vector phi(minus family) - phi(plus family)."""
    delta = IntVector()
    for Q in g.upsilon_minus:
        delta.add(emb.image(Q), 1)
    for Q in g.upsilon_plus:
        delta.add(emb.image(Q), -1)
    return delta


def split(phi: IntVector, Q: tuple[int, ...], sign: int, emb: Embedding) -> IntVector:
    """Remove one signed copy of Q from phi, boundary unchanged.

    sign +1 lowers the multiplicity at Q by one, sign -1 raises it.  The
    embedding must map the designated clique onto Q.
    """
    g = emb.gadget
    Q = canon(Q)
    if sign not in (1, -1):
        raise ConfigError(f"sign must be +1 or -1, got {sign}")
    if emb.image(g.qhat_plus) != Q:
        raise ConfigError("embedding does not place the designated clique on Q")
    out = phi.copy()
    out.add_scaled(exchange_delta(g, emb), sign)
    return out


def eliminate_pair(
    phi: IntVector,
    Qplus: tuple[int, ...],
    Qminus: tuple[int, ...],
    emb: Embedding,
) -> IntVector:
    """Cancel one unit of a +/- clique pair sharing exactly one edge.

    Requires phi positive at Qplus and negative at Qminus; the embedding
    must place the designated pair onto (Qplus, Qminus).  No clique
    gaining weight contains the shared edge.
    """
    g = emb.gadget
    Qplus, Qminus = canon(Qplus), canon(Qminus)
    shared = set(Qplus) & set(Qminus)
    if len(shared) != g.r:
        raise ConfigError(f"cliques share {len(shared)} vertices, expected {g.r}")
    if not (phi[Qplus] > 0 > phi[Qminus]):
        raise ConfigError(
            f"need positive weight at {Qplus} and negative at {Qminus}, "
            f"got {phi[Qplus]} and {phi[Qminus]}"
        )
    if emb.image(g.qhat_plus) != Qplus or emb.image(g.qhat_minus) != Qminus:
        raise ConfigError("embedding does not place the designated pair on the given pair")
    out = phi.copy()
    out.add_scaled(exchange_delta(g, emb), 1)
    return out
