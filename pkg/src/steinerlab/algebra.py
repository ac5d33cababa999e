"""Exact arithmetic backends.

Prime fields and Vandermonde row-submatrix inversion feed the exchange
gadget; spans over Z/NZ (N composite, so no division anywhere) feed the
absorber's generating-set search.  Exact rationals are handled by
fractions.Fraction throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

from .util import ConfigError


def is_prime(m: int) -> bool:
    if m < 2:
        return False
    d = 2
    while d * d <= m:
        if m % d == 0:
            return False
        d += 1
    return True


def bertrand_prime(q: int) -> int:
    """Smallest prime p with q <= p <= 2q (exists for every q >= 2)."""
    if q < 2:
        raise ConfigError(f"need q >= 2, got {q}")
    for p in range(q, 2 * q + 1):
        if is_prime(p):
            return p
    raise AssertionError("unreachable for q >= 2")


def xgcd(a: int, b: int) -> tuple[int, int, int]:
    """(g, s, t) with g = gcd(a, b) = s*a + t*b."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while b:
        qt, a, b = a // b, b, a % b
        s0, s1 = s1, s0 - qt * s1
        t0, t1 = t1, t0 - qt * t1
    return a, s0, t0


@dataclass(frozen=True)
class PrimeField:
    p: int

    def __post_init__(self):
        if not is_prime(self.p):
            raise ConfigError(f"{self.p} is not prime")

    def inv(self, x: int) -> int:
        return pow(x % self.p, -1, self.p)


@dataclass(frozen=True)
class VandermondeMatrix:
    """q rows over F_p, row i = (1, y_i, y_i^2, ..., y_i^(r-1)), y_i = i-1.

    Distinct y_i make every r-row submatrix invertible.
    """

    p: int
    q: int
    r: int
    rows: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, q: int, r: int, p: int | None = None) -> "VandermondeMatrix":
        if p is None:
            p = bertrand_prime(q)
        if not is_prime(p) or p < q:
            raise ConfigError(f"need a prime p >= q, got p={p} q={q}")
        rows = tuple(tuple(pow(i, j, p) for j in range(r)) for i in range(q))
        return cls(p, q, r, rows)

    def submatrix(self, I: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
        """Rows indexed by the 1-based sorted index set I."""
        if len(set(I)) != self.r:
            raise ValueError(f"need {self.r} distinct rows, got {I}")
        return tuple(self.rows[i - 1] for i in sorted(I))


def mat_vec(A, v, p: int) -> tuple[int, ...]:
    return tuple(sum(a * x for a, x in zip(row, v)) % p for row in A)


def mat_mul(A, B, p: int):
    m = len(B)
    return tuple(
        tuple(sum(row[t] * B[t][j] for t in range(m)) % p for j in range(len(B[0]))) for row in A
    )


def invert_mod_p(A, p: int):
    """Gauss-Jordan inverse of a square matrix over F_p."""
    m = len(A)
    aug = [list(row) + [int(i == j) for j in range(m)] for i, row in enumerate(A)]
    for col in range(m):
        piv = next((i for i in range(col, m) if aug[i][col] % p), None)
        if piv is None:
            raise ValueError("matrix is singular mod p")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = pow(aug[col][col], -1, p)
        aug[col] = [x * inv % p for x in aug[col]]
        for i in range(m):
            if i != col and aug[i][col] % p:
                f = aug[i][col]
                aug[i] = [(x - f * y) % p for x, y in zip(aug[i], aug[col])]
    return tuple(tuple(row[m:]) for row in aug)


def submatrix_invert(M: VandermondeMatrix, I: tuple[int, ...]):
    """Inverse of the r-row submatrix M_I over F_p."""
    return invert_mod_p(M.submatrix(I), M.p)


class ModSpan:
    """Subgroup of (Z/N)^dim generated by inserted vectors.

    The basis is kept in a canonical echelon normal form for modules
    over Z/NZ: leading entries divide N, entries above each pivot are
    reduced below it, and for every pivot row with lead d the row
    scaled by N/d lies in the span of the later rows.  Two generating
    sets of the same subgroup therefore produce identical bases, and a
    greedy left-to-right reduction decides membership exactly.

    With track=True each basis row carries its expression over the
    generators that grew the span, so members can be rewritten as exact
    Z/N combinations of inserted vectors.
    """

    def __init__(self, modulus: int, dim: int, track: bool = False):
        if modulus < 2:
            raise ConfigError(f"modulus must be >= 2, got {modulus}")
        if dim < 0:
            raise ConfigError(f"dimension must be >= 0, got {dim}")
        self.modulus = modulus
        self.dim = dim
        self.track = track
        self.generator_count = 0
        self._pivots: dict[int, tuple[list[int], dict[int, int]]] = {}

    def _check(self, vec) -> list[int]:
        v = [x % self.modulus for x in vec]
        if len(v) != self.dim:
            raise ValueError(f"vector has dimension {len(v)}, expected {self.dim}")
        return v

    @staticmethod
    def _lead(v: list[int]) -> int | None:
        return next((i for i, x in enumerate(v) if x), None)

    def _expr_combine(self, w: dict[int, int], e: dict[int, int], c: int) -> dict[int, int]:
        if not self.track or c % self.modulus == 0:
            return w
        out = dict(w)
        for g, x in e.items():
            nx = (out.get(g, 0) + c * x) % self.modulus
            if nx:
                out[g] = nx
            else:
                out.pop(g, None)
        return out

    def _reduce(self, v: list[int], w: dict[int, int]):
        """Greedy reduction by current pivots; stops at the first stuck column."""
        N = self.modulus
        while True:
            lead = self._lead(v)
            if lead is None:
                return v, w, None
            if lead not in self._pivots:
                return v, w, lead
            prow, pexpr = self._pivots[lead]
            d = prow[lead]
            if v[lead] % d:
                return v, w, lead
            m = v[lead] // d
            v = [(x - m * y) % N for x, y in zip(v, prow)]
            w = self._expr_combine(w, pexpr, -m)

    def member(self, vec) -> bool:
        v = self._check(vec)
        v, _, stuck = self._reduce(v, {})
        return stuck is None

    def express(self, vec) -> dict[int, int] | None:
        """Coefficients {generator index: coefficient} with
        vec = sum coeff * generator (mod N), or None if vec is outside.

        Requires track=True; generator indices count only inserts that
        grew the span, in insertion order.
        """
        if not self.track:
            raise ConfigError("span built without witness tracking")
        v = self._check(vec)
        v, w, stuck = self._reduce(v, {})
        if stuck is not None:
            return None
        return {g: (-c) % self.modulus for g, c in w.items() if c % self.modulus}

    def insert(self, vec) -> bool:
        """Add vec to the span.  Returns True iff the span grew."""
        v = self._check(vec)
        expr = {self.generator_count: 1} if self.track else {}
        v, w, stuck = self._reduce(v, expr)
        if stuck is None:
            return False
        work = [(v, w)]
        while work:
            v, w = work.pop()
            v, w, stuck = self._reduce(v, w)
            if stuck is None:
                continue
            N = self.modulus
            if stuck in self._pivots:
                prow, pexpr = self._pivots[stuck]
                d = prow[stuck]
                g, s, t = xgcd(d, v[stuck])
                new = [(s * x + t * y) % N for x, y in zip(prow, v)]
                new[stuck] = g
                nexpr = self._expr_combine(self._expr_combine({}, pexpr, s), w, t)
                rem_p = [(x - (d // g) * y) % N for x, y in zip(prow, new)]
                rem_v = [(x - (v[stuck] // g) * y) % N for x, y in zip(v, new)]
                rexpr_p = self._expr_combine(pexpr, nexpr, -(d // g))
                rexpr_v = self._expr_combine(w, nexpr, -(v[stuck] // g))
                self._set_pivot(stuck, new, nexpr, work)
                if any(rem_p):
                    work.append((rem_p, rexpr_p))
                if any(rem_v):
                    work.append((rem_v, rexpr_v))
            else:
                self._set_pivot(stuck, v, w, work)
        self._normalize_above()
        if self.track:
            self.generator_count += 1
        return True

    def _set_pivot(self, col: int, row: list[int], expr: dict[int, int], work: list) -> None:
        N = self.modulus
        d = gcd(row[col], N)
        u = next(u for u in range(1, N) if gcd(u, N) == 1 and u * row[col] % N == d)
        row = [u * x % N for x in row]
        expr = self._expr_combine({}, expr, u)
        self._pivots[col] = (row, expr)
        ann = [(N // d) * x % N for x in row]
        if any(ann):
            work.append((ann, self._expr_combine({}, expr, N // d)))

    def _normalize_above(self) -> None:
        """Reduce entries at pivot columns of all earlier rows."""
        N = self.modulus
        cols = sorted(self._pivots)
        for i, c in enumerate(cols):
            prow, pexpr = self._pivots[c]
            d = prow[c]
            for c2 in cols[:i]:
                row, expr = self._pivots[c2]
                m = row[c] // d
                if m:
                    row = [(x - m * y) % N for x, y in zip(row, prow)]
                    expr = self._expr_combine(expr, pexpr, -m)
                    self._pivots[c2] = (row, expr)

    @property
    def basis(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(self._pivots[c][0]) for c in sorted(self._pivots))

    def __len__(self) -> int:
        return len(self._pivots)
