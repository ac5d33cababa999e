"""Core types for r-uniform hosts and signed clique/edge vectors.

An edge is a sorted tuple of r distinct positive vertices; a clique is a
sorted tuple of q vertices whose r-subsets all lie in the host.  Integer
vectors over either index set share one sparse container, ``IntVector``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb, factorial
from typing import Iterable, Iterator, Mapping

from .util import ConfigError, binom


def canon(vs: Iterable[int]) -> tuple[int, ...]:
    """Sorted tuple of distinct vertices; rejects repeats."""
    t = tuple(sorted(vs))
    for a, b in zip(t, t[1:]):
        if a == b:
            raise ValueError(f"repeated vertex {a}")
    return t


@dataclass(frozen=True)
class Params:
    """Problem parameters for decomposing r-uniform hosts into q-cliques.

    Derived quantities:
      k     cliques-per-edge count C(q, r)
      N     r! * k = q(q-1)...(q-r+1), the period of the local decoders
      rho   reserve density exponent, default (6k)^-2
      alpha absorber scale exponent, default rho / (2q)^r

    Both exponents are overridable for desk-scale runs; overrides show
    up in run reports.
    """

    q: int
    r: int
    n: int = 0
    rho: Fraction = field(default=None)  # type: ignore[assignment]
    alpha: Fraction = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (self.q > self.r >= 1):
            raise ConfigError(f"need q > r >= 1, got q={self.q} r={self.r}")
        if self.n < 0:
            raise ConfigError(f"vertex count must be nonnegative, got {self.n}")
        if self.rho is None:
            object.__setattr__(self, "rho", Fraction(1, (6 * self.k) ** 2))
        else:
            object.__setattr__(self, "rho", Fraction(self.rho))
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.rho * Fraction(1, (2 * self.q) ** self.r))
        else:
            object.__setattr__(self, "alpha", Fraction(self.alpha))
        if not (0 < self.rho < 1):
            raise ConfigError(f"rho must lie in (0,1), got {self.rho}")
        if not (0 < self.alpha < 1):
            raise ConfigError(f"alpha must lie in (0,1), got {self.alpha}")

    @property
    def k(self) -> int:
        return comb(self.q, self.r)

    @property
    def N(self) -> int:
        return factorial(self.r) * self.k

    def with_n(self, n: int) -> "Params":
        return Params(self.q, self.r, n, self.rho, self.alpha)

    def defaults_overridden(self) -> dict[str, str]:
        """Names and values of exponents that differ from their defaults.

        alpha is judged against the value derived from the *current* rho,
        so overriding rho alone reports only rho.
        """
        out = {}
        if self.rho != Fraction(1, (6 * self.k) ** 2):
            out["rho"] = str(self.rho)
        if self.alpha != self.rho * Fraction(1, (2 * self.q) ** self.r):
            out["alpha"] = str(self.alpha)
        return out

    def sufficient_n_log10(self) -> float:
        """Decimal magnitude of the proven sufficient host size.

        The threshold (4q)^(90q/alpha) is astronomically large for every
        (q, r); it is kept as documentation and never materialized.
        """
        from math import log10

        return 90 * self.q / float(self.alpha) * log10(4 * self.q)


class IntVector:
    """Sparse integer vector keyed by vertex tuples (edges or cliques).

    Zero entries are never stored, so equality and support are exact.
    """

    __slots__ = ("_d",)

    def __init__(self, items: Mapping[tuple[int, ...], int] | None = None):
        self._d: dict[tuple[int, ...], int] = {}
        if items:
            for key, val in items.items():
                if val:
                    self._d[key] = val

    @classmethod
    def indicator(cls, keys: Iterable[tuple[int, ...]], value: int = 1) -> "IntVector":
        v = cls()
        for key in keys:
            v.add(key, value)
        return v

    def __getitem__(self, key: tuple[int, ...]) -> int:
        return self._d.get(key, 0)

    def add(self, key: tuple[int, ...], delta: int) -> None:
        new = self._d.get(key, 0) + delta
        if new:
            self._d[key] = new
        else:
            self._d.pop(key, None)

    def add_scaled(self, other: "IntVector", c: int) -> None:
        if c:
            for key, val in other._d.items():
                self.add(key, c * val)

    def support(self) -> Iterator[tuple[int, ...]]:
        return iter(self._d)

    def items(self):
        return self._d.items()

    def sorted_items(self):
        return sorted(self._d.items())

    def copy(self) -> "IntVector":
        v = IntVector()
        v._d = dict(self._d)
        return v

    def abs_sum(self) -> int:
        return sum(abs(x) for x in self._d.values())

    def values_in(self, allowed: Iterable[int]) -> bool:
        allowed = set(allowed)
        return all(x in allowed for x in self._d.values())

    def __add__(self, other: "IntVector") -> "IntVector":
        v = self.copy()
        v.add_scaled(other, 1)
        return v

    def __sub__(self, other: "IntVector") -> "IntVector":
        v = self.copy()
        v.add_scaled(other, -1)
        return v

    def __neg__(self) -> "IntVector":
        return IntVector({k: -x for k, x in self._d.items()})

    def __rmul__(self, c: int) -> "IntVector":
        return IntVector({k: c * x for k, x in self._d.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, IntVector) and self._d == other._d

    def __bool__(self) -> bool:
        return bool(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __repr__(self) -> str:
        inside = ", ".join(f"{k}: {v:+d}" for k, v in self.sorted_items())
        return f"IntVector({{{inside}}})"


@dataclass(frozen=True)
class RGraph:
    """An r-uniform host on vertex set {1, ..., n}."""

    n: int
    r: int
    edges: frozenset[tuple[int, ...]]

    def __post_init__(self):
        for e in self.edges:
            if len(e) != self.r or list(e) != sorted(set(e)):
                raise ConfigError(f"bad edge {e} for r={self.r}")
            if e[0] < 1 or e[-1] > self.n:
                raise ConfigError(f"edge {e} leaves vertex range 1..{self.n}")

    @classmethod
    def complete(cls, n: int, r: int) -> "RGraph":
        return cls(n, r, frozenset(combinations(range(1, n + 1), r)))

    @classmethod
    def from_edges(cls, n: int, r: int, edges: Iterable[Iterable[int]]) -> "RGraph":
        return cls(n, r, frozenset(canon(e) for e in edges))

    def has(self, e: tuple[int, ...]) -> bool:
        return e in self.edges

    def size(self) -> int:
        return len(self.edges)

    def density(self) -> Fraction:
        total = binom(self.n, self.r)
        return Fraction(len(self.edges), total) if total else Fraction(0)

    def shadow_map(self) -> dict[tuple[int, ...], set[int]]:
        """For each (r-1)-set f, the set of vertices v with f+{v} an edge."""
        out: dict[tuple[int, ...], set[int]] = {}
        for e in self.edges:
            for i in range(self.r):
                f = e[:i] + e[i + 1 :]
                out.setdefault(f, set()).add(e[i])
        return out

    def neighbourhood(self, f: Iterable[int]) -> set[int]:
        """Vertices v completing the (r-1)-set f to an edge."""
        f = canon(f)
        if len(f) != self.r - 1:
            raise ValueError(f"need an (r-1)-set, got {f}")
        out = set()
        for v in range(1, self.n + 1):
            if v not in f and tuple(sorted(f + (v,))) in self.edges:
                out.add(v)
        return out


def boundary(phi: IntVector, p: Params) -> IntVector:
    """Edge multiplicities induced by a signed clique vector.

    Entry at edge e is the signed number of cliques of phi containing e,
    counted with multiplicity.
    """
    out = IntVector()
    for clique, val in phi.items():
        if len(clique) != p.q:
            raise ValueError(f"clique {clique} has arity {len(clique)}, expected {p.q}")
        for e in combinations(clique, p.r):
            out.add(e, val)
    return out


def link(v: IntVector, f: Iterable[int]) -> IntVector:
    """Restriction of an edge vector to edges containing f, re-keyed by e - f."""
    f = canon(f)
    fs = set(f)
    out = IntVector()
    for e, val in v.items():
        if len(f) >= len(e):
            raise ValueError(f"link set {f} not smaller than edge arity {len(e)}")
        if fs.issubset(e):
            out.add(tuple(x for x in e if x not in fs), val)
    return out


@dataclass(frozen=True)
class BoundedReport:
    ok: bool
    theta: Fraction
    n: int
    witness: tuple[tuple[int, ...], int] | None = None

    def __bool__(self) -> bool:
        return self.ok


def bounded_check(v: IntVector, theta, p: Params) -> BoundedReport:
    """Check that every (r-1)-set carries total weight strictly below theta*n.

    The weight at f is the sum of |v_e| over edges e containing f.  The
    comparison is exact over the rationals; a tie fails.
    """
    theta = Fraction(theta)
    n, r = p.n, p.r
    degree: dict[tuple[int, ...], int] = {}
    for e, val in v.items():
        for i in range(r):
            f = e[:i] + e[i + 1 :]
            degree[f] = degree.get(f, 0) + abs(val)
    bound = theta * n
    worst: tuple[tuple[int, ...], int] | None = None
    for f, d in sorted(degree.items()):
        if worst is None or d > worst[1]:
            worst = (f, d)
        if d >= bound:
            return BoundedReport(False, theta, n, (f, d))
    return BoundedReport(True, theta, n, worst)


def is_clique(G: RGraph, vs: tuple[int, ...]) -> bool:
    return all(e in G.edges for e in combinations(vs, G.r))


def cliques_of(G: RGraph, s: int) -> Iterator[tuple[int, ...]]:
    """All s-cliques of G (s >= r), in lexicographic order."""
    if s < G.r:
        raise ValueError(f"clique size {s} below uniformity {G.r}")
    shadow = G.shadow_map()
    universe = list(range(1, G.n + 1))

    def extend(partial: tuple[int, ...], cand: list[int]):
        if len(partial) == s:
            yield partial
            return
        for idx, v in enumerate(cand):
            if len(partial) + 1 >= G.r:
                ok = True
                for f in combinations(partial, G.r - 1):
                    if v not in shadow.get(f, ()):  # noqa: SIM118
                        ok = False
                        break
                if not ok:
                    continue
            yield from extend(partial + (v,), cand[idx + 1 :])

    yield from extend((), universe)


def cliques_containing(G: RGraph, root: tuple[int, ...], s: int) -> Iterator[tuple[int, ...]]:
    """All s-cliques of G containing the given vertex set."""
    root = canon(root)
    if not all(e in G.edges for e in combinations(root, G.r)):
        return
    shadow = G.shadow_map()
    rest = [v for v in range(1, G.n + 1) if v not in root]

    def extend(extra: tuple[int, ...], cand: list[int]):
        if len(root) + len(extra) == s:
            yield canon(root + extra)
            return
        for idx, v in enumerate(cand):
            base = root + extra
            if len(base) + 1 >= G.r:
                ok = True
                for f in combinations(sorted(base), G.r - 1):
                    if v not in shadow.get(f, ()):  # noqa: SIM118
                        ok = False
                        break
                if not ok:
                    continue
            yield from extend(extra + (v,), cand[idx + 1 :])

    if len(root) >= s:
        if len(root) == s:
            yield root
        return
    yield from extend((), rest)


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    reason: str = ""
    witness: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_decomposition(
    G: RGraph, cliques: Iterable[tuple[int, ...]], q: int | None = None
) -> VerifyReport:
    """Check that the cliques partition the edge set of G exactly.

    Every clique must be a q-clique of G, and every edge of G must be
    covered exactly once.  When q is omitted it is taken from the first
    clique.  Returns the first violation found.
    """
    seen = IntVector()
    for Q in cliques:
        Q = canon(Q)
        if q is None:
            q = len(Q)
        if len(Q) != q:
            return VerifyReport(False, f"clique has {len(Q)} vertices, expected {q}", Q)
        if Q[-1] > G.n or Q[0] < 1:
            return VerifyReport(False, "clique leaves vertex range", Q)
        for e in combinations(Q, G.r):
            if e not in G.edges:
                return VerifyReport(False, "clique uses a non-edge", e)
            seen.add(e, 1)
    for e in sorted(G.edges):
        c = seen[e]
        if c != 1:
            return VerifyReport(False, f"edge covered {c} times", e)
    for e in seen.support():
        if e not in G.edges:
            return VerifyReport(False, "covered edge outside host", e)
    return VerifyReport(True)


@dataclass(frozen=True)
class TypicalityReport:
    ok: bool
    density: Fraction
    c: Fraction
    h: int
    mode: str
    checked: int
    witness: tuple[tuple[tuple[int, ...], ...], int] | None = None

    def __bool__(self) -> bool:
        return self.ok


def typicality_check(
    G: RGraph,
    c,
    h: int,
    budget: int = 200_000,
    samples: int = 2000,
    rng=None,
) -> TypicalityReport:
    """Check (c, h)-typicality of the host.

    For every family A of at most h distinct (r-1)-sets, the number of
    vertices completing all of them simultaneously must lie within a
    (1 +- c) factor of d^|A| * n, where d is the edge density.  Families
    are enumerated exhaustively when their count fits the budget and
    sampled otherwise; the report records which mode ran.
    """
    import random as _random

    c = Fraction(c)
    d = G.density()
    ground = list(combinations(range(1, G.n + 1), G.r - 1))
    total = sum(binom(len(ground), j) for j in range(1, h + 1))
    compl: dict[tuple[int, ...], set[int]] = {f: set() for f in ground}
    for e in G.edges:
        for i in range(G.r):
            f = e[:i] + e[i + 1 :]
            compl[f].add(e[i])

    def check_family(A: tuple[tuple[int, ...], ...]) -> bool:
        cut = set.intersection(*(compl[f] for f in A)) if A else set()
        target = d ** len(A) * G.n
        lo, hi = (1 - c) * target, (1 + c) * target
        return lo <= len(cut) <= hi

    checked = 0
    if total <= budget:
        mode = "exhaustive"
        for j in range(1, h + 1):
            for A in combinations(ground, j):
                checked += 1
                if not check_family(A):
                    cut = set.intersection(*(compl[f] for f in A))
                    return TypicalityReport(False, d, c, h, mode, checked, (A, len(cut)))
    else:
        mode = "sampled"
        rng = rng or _random.Random(0)
        for _ in range(samples):
            j = rng.randint(1, h)
            A = tuple(sorted(rng.sample(ground, j)))
            checked += 1
            if not check_family(A):
                cut = set.intersection(*(compl[f] for f in A))
                return TypicalityReport(False, d, c, h, mode, checked, (A, len(cut)))
    return TypicalityReport(True, d, c, h, mode, checked)


__all__ = [
    "BoundedReport",
    "IntVector",
    "Params",
    "RGraph",
    "TypicalityReport",
    "VerifyReport",
    "boundary",
    "bounded_check",
    "canon",
    "cliques_containing",
    "cliques_of",
    "is_clique",
    "link",
    "typicality_check",
    "verify_decomposition",
]
