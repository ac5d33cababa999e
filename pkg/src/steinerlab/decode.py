"""Local integral decoders and divisibility.

A decoder is a signed q-clique vector on a (q+r)-vertex window whose
boundary is N times a single target edge, N = r!*C(q,r).  Coefficients
depend only on t = |e \\ Q'|, so one small table serves every placement.
The same machinery yields a constructive decomposition of any divisible
integer edge vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, factorial

from .core import IntVector, Params, canon
from .util import DivisibilityError, falling


@dataclass(frozen=True)
class DecoderTable:
    """Coefficients x(t) for t = |e \\ Q'|, t in 0..r."""

    q: int
    r: int
    N: int
    coeff: tuple[int, ...]

    def max_coeff(self) -> int:
        return max(abs(x) for x in self.coeff)

    def bound(self) -> int:
        return 2**self.q * factorial(self.r)


def decoder(p: Params) -> DecoderTable:
    """Closed-form decoder coefficients for (q, r)."""
    q, r = p.q, p.r
    coeff = tuple(
        sum((-1) ** i * comb(t, i) * falling(q, i) * factorial(r - i) for i in range(t + 1))
        for t in range(r + 1)
    )
    return DecoderTable(q, r, p.N, coeff)


def materialize(table: DecoderTable, window: tuple[int, ...], e: tuple[int, ...]) -> IntVector:
    """The decoder as a signed clique vector on a (q+r)-vertex window.

    Assigns x(|e \\ Q'|) to every q-subset Q' of the window; the boundary
    is N at edge e and zero elsewhere.
    """
    window = canon(window)
    e = canon(e)
    if len(window) != table.q + table.r:
        raise ValueError(f"window needs {table.q + table.r} vertices, got {len(window)}")
    if len(e) != table.r or not set(e) <= set(window):
        raise ValueError(f"target edge {e} not an r-subset of the window")
    es = set(e)
    out = IntVector()
    for Q in combinations(window, table.q):
        out.add(Q, table.coeff[len(es.difference(Q))])
    return out


@dataclass(frozen=True)
class DivReport:
    ok: bool
    witness: tuple[int, tuple[int, ...], int, int] | None = None
    """(i, I, total weight at I, required divisor) for the first failure."""

    def __bool__(self) -> bool:
        return self.ok


def set_weight(J: IntVector, I: tuple[int, ...]) -> int:
    """Signed total of J over edges containing the vertex set I."""
    Is = set(I)
    return sum(val for e, val in J.items() if Is.issubset(e))


def divisible(J: IntVector, p: Params) -> DivReport:
    """Check C(q-i, r-i) | (total weight at I) for all i-sets I, 0 <= i <= r.

    Sets I disjoint from the support carry weight zero and pass
    automatically, so only support vertices are enumerated.
    """
    verts = sorted({v for e in J.support() for v in e})
    for i in range(p.r, -1, -1):
        div = comb(p.q - i, p.r - i)
        if div == 1:
            continue
        for I in combinations(verts, i):
            w = set_weight(J, I)
            if w % div:
                return DivReport(False, (i, I, w, div))
    return DivReport(True)


def _rank0_decompose(m: int, q: int, verts: tuple[int, ...]) -> IntVector:
    # Uniformity zero: a single empty edge of weight m, covered once by
    # any q-clique.
    return IntVector({verts[:q]: m}) if m else IntVector()


def _base_decompose(J: IntVector, q: int, r: int, window: tuple[int, ...]) -> IntVector:
    """Exact solve on a window of exactly q+r vertices.

    The unique solution assigns each q-clique Q' the alternating sum of
    set weights over subsets of the window outside Q', scaled by the
    matching divisor.
    """
    out = IntVector()
    wset = set(window)
    for Q in combinations(window, q):
        outside = sorted(wset.difference(Q))
        total = 0
        for i in range(r + 1):
            div = comb(q - i, r - i)
            for I in combinations(outside, i):
                w = set_weight(J, I)
                if w % div:
                    raise DivisibilityError(f"weight {w} at {I} not divisible by {div}", (i, I, w, div))
                total += (-1) ** i * (w // div)
        out.add(Q, total)
    return out


def integral_decompose(J: IntVector, p: Params) -> IntVector:
    """An integral clique vector with boundary exactly J.

    Works on the first p.n vertices, which must include the support;
    needs n >= q + r.  Coefficients may be large; boundedness is no part
    of this contract.  Raises DivisibilityError when J is not divisible.
    """
    rep = divisible(J, p)
    if not rep:
        i, I, w, div = rep.witness
        raise DivisibilityError(f"weight {w} at level-{i} set {I} not divisible by {div}", rep.witness)
    n = p.n
    top = max((e[-1] for e in J.support()), default=0)
    if n < top:
        raise ValueError(f"support reaches vertex {top}, beyond n={n}")
    if n < p.q + p.r:
        raise ValueError(f"need n >= q + r = {p.q + p.r}, got {n}")
    return _decompose(J, p.q, p.r, n)


def _decompose(J: IntVector, q: int, r: int, n: int) -> IntVector:
    if not J:
        return IntVector()
    # Vertices above the support peel to nothing; jump past them so the
    # recursion depth tracks the support, not the host size.
    top = max(e[-1] for e in J.support())
    if top < n:
        n = max(top, q + r)
    if n == q + r:
        return _base_decompose(J, q, r, tuple(range(1, n + 1)))
    # Peel the top vertex: decode its link one uniformity down, lift the
    # result back through the vertex, subtract, and recurse on n-1.
    link_items = {}
    for e, val in J.items():
        if e[-1] == n:
            link_items[e[:-1]] = val
    phi = IntVector()
    if link_items:
        if r == 1:
            lifted = _rank0_decompose(link_items[()], q - 1, tuple(range(1, n)))
        else:
            lifted = _decompose(IntVector(link_items), q - 1, r - 1, n - 1)
        for Q, val in lifted.items():
            phi.add(Q + (n,), val)
    rest = J.copy()
    for Q, val in phi.items():
        for e in combinations(Q, r):
            rest.add(e, -val)
    assert all(e[-1] != n for e in rest.support())
    phi.add_scaled(_decompose(rest, q, r, n - 1), 1)
    return phi
