"""Text formats for hosts, decompositions, and signed edge vectors.

Formats are line-oriented and deterministic: writers emit sorted rows,
parsers report 1-based line numbers on malformed input.
"""

from __future__ import annotations

from .core import IntVector, RGraph
from .util import ParseError


def _parse_ints(raw: str, lineno: int) -> list[int]:
    try:
        return [int(tok) for tok in raw.split()]
    except ValueError:
        raise ParseError(f"non-integer token in {raw.strip()!r}", lineno) from None


def _check_sorted(vs: list[int], lineno: int) -> tuple[int, ...]:
    if any(a >= b for a, b in zip(vs, vs[1:])):
        raise ParseError(f"vertices not strictly increasing: {vs}", lineno)
    if vs and vs[0] < 1:
        raise ParseError(f"vertex ids are 1-based, got {vs[0]}", lineno)
    return tuple(vs)


def format_rgraph(G: RGraph) -> str:
    rows = [f"{G.r} {G.n}"]
    rows.extend(" ".join(map(str, e)) for e in sorted(G.edges))
    return "\n".join(rows) + "\n"


def parse_rgraph(text: str) -> RGraph:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing 'r n' header", 1)
    head = _parse_ints(lines[0], 1)
    if len(head) != 2:
        raise ParseError(f"expected header 'r n', got {lines[0].strip()!r}", 1)
    r, n = head
    if r < 1 or n < 0:
        raise ParseError(f"need r >= 1 and n >= 0, got r={r} n={n}", 1)
    edges: set[tuple[int, ...]] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        vs = _parse_ints(raw, lineno)
        if len(vs) != r:
            raise ParseError(f"edge has {len(vs)} vertices, expected {r}", lineno)
        e = _check_sorted(vs, lineno)
        if e[-1] > n:
            raise ParseError(f"vertex {e[-1]} exceeds n={n}", lineno)
        if e in edges:
            raise ParseError(f"duplicate edge {' '.join(map(str, e))}", lineno)
        edges.add(e)
    return RGraph(n, r, frozenset(edges))


def format_decomposition(cliques) -> str:
    rows = [" ".join(map(str, Q)) for Q in sorted(cliques)]
    return "\n".join(rows) + ("\n" if rows else "")


def parse_decomposition(text: str) -> list[tuple[int, ...]]:
    """One clique per line; the clique order is inferred from the first row."""
    out: list[tuple[int, ...]] = []
    q: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        vs = _parse_ints(raw, lineno)
        if q is None:
            q = len(vs)
        if len(vs) != q:
            raise ParseError(f"clique has {len(vs)} vertices, expected {q}", lineno)
        out.append(_check_sorted(vs, lineno))
    return out


def format_intvector(v: IntVector) -> str:
    rows = [f"{val:+d}: " + " ".join(map(str, key)) for key, val in v.sorted_items()]
    return "\n".join(rows) + ("\n" if rows else "")


def parse_intvector(text: str) -> IntVector:
    """Lines of the form '<signed multiplicity>: v1 v2 ... vr'.

    Repeated keys accumulate; entries that cancel to zero are dropped.
    """
    v = IntVector()
    arity: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        head, sep, tail = raw.partition(":")
        if not sep:
            raise ParseError("missing ':' separator", lineno)
        try:
            mult = int(head.strip())
        except ValueError:
            raise ParseError(f"bad multiplicity {head.strip()!r}", lineno) from None
        if mult == 0:
            raise ParseError("zero multiplicity not allowed", lineno)
        vs = _parse_ints(tail, lineno)
        if not vs:
            raise ParseError("empty vertex set", lineno)
        if arity is None:
            arity = len(vs)
        if len(vs) != arity:
            raise ParseError(f"entry has {len(vs)} vertices, expected {arity}", lineno)
        v.add(_check_sorted(vs, lineno), mult)
    return v
