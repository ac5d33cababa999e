"""Uniform random removal of edge-disjoint cliques, with trajectory tracking.

The process repeatedly picks a clique uniformly at random among those still
edge-disjoint from every previous pick, removes it, and discards every
candidate sharing an edge with it.  Alongside the run we keep a sampled
trajectory (surviving candidate counts, per-edge candidate extremes, leave
shadow degrees) that can be compared against the analytic envelopes of the
differential-equation model: with t = i/|G| and p = 1 - kt the predictions
are |H(i)| ~ p^k D|G|/k and |H_e(i)| ~ p^{k-1} D inside explicit error
envelopes, valid up to the horizon i*.

The heavy bookkeeping is vectorized: cliques live in an int32 edge-id
matrix, the per-edge inverted index is a CSR layout built by argsort, and
eliminations are scatter-subtractions on the per-edge survivor counts.
Randomness goes through a single ``random.Random`` stream.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .core import BoundedReport, Params, RGraph, bounded_check
from .util import ConfigError, derive_rng


@dataclass(frozen=True)
class TrajectorySample:
    """State snapshot after step i: survivor counts and leave shadow."""

    i: int
    h_size: int
    he_min: int
    he_max: int
    shadow_max: int
    uncovered: int


@dataclass(frozen=True)
class RemovalRun:
    G: RGraph
    H: tuple[tuple[int, ...], ...]
    q: int
    selected: tuple[tuple[int, ...], ...]
    leave: RGraph
    trajectory: tuple[TrajectorySample, ...]
    seed: int | None
    cadence: int

    @property
    def leave_fraction(self) -> float:
        if not self.G.edges:
            return 0.0
        return len(self.leave.edges) / len(self.G.edges)


def _canon_cliques(H, q_hint: int | None = None) -> tuple[tuple[tuple[int, ...], ...], int]:
    seen = set()
    q = q_hint
    for c in H:
        t = tuple(sorted(c))
        if len(set(t)) != len(t):
            raise ConfigError(f"clique has repeated vertices: {c}")
        if q is None:
            q = len(t)
        elif len(t) != q:
            raise ConfigError(f"cliques of mixed sizes: expected {q}, got {c}")
        seen.add(t)
    if q is None:
        q = 0
    return tuple(sorted(seen)), q


def removal_process(
    G: RGraph,
    H,
    rng=None,
    *,
    seed: int = 0,
    stop: int | None = None,
    cadence: int | None = None,
) -> RemovalRun:
    """Run the removal process until exhaustion or for ``stop`` selections.

    ``H`` is any iterable of q-cliques of G; it is deduplicated and sorted
    so clique identities do not depend on input order.  ``stop=None`` means
    run until no admissible clique survives; an integer stops after that
    many selections.  Snapshots are appended every ``cadence`` steps
    (default one percent of the expected step count) plus at step 0 and at
    termination.
    """
    if stop is not None and stop < 0:
        raise ConfigError(f"stop must be None or >= 0, got {stop}")
    cliques, q = _canon_cliques(H)
    if cliques and q <= G.r:
        raise ConfigError(f"clique size {q} must exceed the edge arity {G.r}")
    recorded_seed = seed if rng is None else None
    rng = rng or derive_rng(seed, "nibble")

    edges_sorted = sorted(G.edges)
    edge_id = {e: i for i, e in enumerate(edges_sorted)}
    m = len(edges_sorted)
    k = comb(q, G.r) if cliques else 1
    if cadence is None:
        cadence = max(1, math.ceil(m / (100 * k)))
    if cadence < 1:
        raise ConfigError(f"cadence must be >= 1, got {cadence}")

    try:
        flat = np.fromiter(
            (edge_id[f] for c in cliques for f in combinations(c, G.r)),
            dtype=np.int32,
            count=len(cliques) * k,
        )
    except KeyError as exc:
        raise ConfigError(f"candidate family contains a non-clique: edge {exc} missing") from exc
    arr = flat.reshape(len(cliques), k) if cliques else np.zeros((0, k), dtype=np.int32)

    order = np.argsort(flat, kind="stable") if cliques else np.zeros(0, dtype=np.int64)
    owner = (order // k).astype(np.int32)
    counts = np.bincount(flat, minlength=m) if cliques else np.zeros(m, dtype=np.int64)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])

    he = counts.astype(np.int64)
    dead = np.zeros(len(cliques), dtype=bool)
    covered = np.zeros(m, dtype=bool)
    live = len(cliques)
    pool = list(range(len(cliques)))

    shadow: Counter = Counter()
    for e in edges_sorted:
        for j in range(G.r):
            shadow[e[:j] + e[j + 1 :]] += 1

    samples: list[TrajectorySample] = []

    def record(i: int) -> None:
        unc = ~covered
        cnt = int(unc.sum())
        if cnt:
            he_min = int(he[unc].min())
            he_max = int(he[unc].max())
        else:
            he_min = he_max = 0
        smax = max(shadow.values(), default=0)
        samples.append(TrajectorySample(i, live, he_min, he_max, smax, cnt))

    selected: list[tuple[int, ...]] = []
    record(0)
    while live > 0 and (stop is None or len(selected) < stop):
        while True:
            idx = rng.randrange(len(pool))
            cid = pool[idx]
            if dead[cid]:
                # lazy deletion: stale entries are evicted on contact
                pool[idx] = pool[-1]
                pool.pop()
                continue
            break
        clique = cliques[cid]
        selected.append(clique)
        eids = arr[cid]
        covered[eids] = True
        for f_edge in combinations(clique, G.r):
            for j in range(G.r):
                shadow[f_edge[:j] + f_edge[j + 1 :]] -= 1
        nbr = np.unique(np.concatenate([owner[indptr[e] : indptr[e + 1]] for e in eids]))
        nbr = nbr[~dead[nbr]]
        dead[nbr] = True
        live -= int(nbr.size)
        np.subtract.at(he, arr[nbr].ravel(), 1)
        if len(selected) % cadence == 0:
            record(len(selected))
    if not samples or samples[-1].i != len(selected):
        record(len(selected))

    leave_edges = [e for e, c in zip(edges_sorted, covered) if not c]
    leave = RGraph.from_edges(G.n, G.r, leave_edges)
    return RemovalRun(
        G=G,
        H=cliques,
        q=q,
        selected=tuple(selected),
        leave=leave,
        trajectory=tuple(samples),
        seed=recorded_seed,
        cadence=cadence,
    )


def validate_removal(run: RemovalRun) -> tuple[str, ...]:
    """Recheck the run's invariants from scratch; returns violation messages."""
    problems: list[str] = []
    family = set(run.H)
    used: set[tuple[int, ...]] = set()
    for c in run.selected:
        if c not in family:
            problems.append(f"selected clique {c} not drawn from the candidate family")
        faces = set(combinations(c, run.G.r))
        if not faces <= run.G.edges:
            problems.append(f"selected clique {c} is not a clique of the host graph")
        if used & faces:
            problems.append(f"selected clique {c} reuses a covered edge")
        used |= faces
    expected_leave = run.G.edges - used
    if run.leave.edges != expected_leave:
        problems.append("leave differs from host edges minus covered edges")
    sizes = [s.h_size for s in run.trajectory]
    if sizes != sorted(sizes, reverse=True):
        problems.append("survivor count is not non-increasing")
    if run.trajectory and run.trajectory[0].h_size != len(run.H):
        problems.append("initial snapshot does not count the whole family")
    return tuple(problems)


@dataclass(frozen=True)
class TrajectoryModel:
    """Analytic trajectory for near-regular candidate families.

    D = theta*C(n, q-r) is the modelled per-edge candidate count at step 0,
    b = n^-eps the relative slack, and the envelopes e_H, e_D, e_F bound
    the family size, the per-edge counts, and the shadow degrees while
    i <= horizon.
    """

    n: int
    q: int
    r: int
    size: int
    theta: float
    eps: float
    c: float = 2.0 / 3.0

    @classmethod
    def for_graph(cls, G: RGraph, q: int, theta, eps: float) -> TrajectoryModel:
        return cls(n=G.n, q=q, r=G.r, size=len(G.edges), theta=float(theta), eps=eps)

    @property
    def k(self) -> int:
        return comb(self.q, self.r)

    @property
    def phi(self) -> float:
        return self.size / comb(self.n, self.r)

    @property
    def D(self) -> float:
        return self.theta * comb(self.n, self.q - self.r)

    @property
    def b(self) -> float:
        return float(self.n) ** -self.eps

    @property
    def horizon(self) -> int:
        frac = 1.0 - float(self.n) ** (-self.eps / (3 * self.k))
        return int(frac * self.size / self.k)

    def p(self, i: int) -> float:
        return 1.0 - self.k * i / self.size

    def e_H(self, i: int) -> float:
        lg = math.log(self.p(i))
        return 6.0 * (1.0 - self.k * lg) ** 2 * self.b * self.D * self.size

    def e_D(self, i: int) -> float:
        lg = math.log(self.p(i))
        return 2.0 * (1.0 - self.k * lg) * self.b**self.c * self.D

    def e_F(self) -> float:
        return 2.0 * self.b ** (self.c / 2.0) * self.n


@dataclass(frozen=True)
class ExpectedPoint:
    i: int
    p: float
    h_size: float
    h_env: float
    he: float
    he_env: float
    shadow_scale: float
    shadow_env: float


def expected_trajectory(m: TrajectoryModel, i: int) -> ExpectedPoint:
    """Evaluate the model at step i; the shadow prediction for an initial
    degree d is shadow_scale*d within shadow_env."""
    if not 0 <= i <= m.horizon:
        raise ConfigError(f"step {i} outside the trajectory horizon [0, {m.horizon}]")
    p = m.p(i)
    return ExpectedPoint(
        i=i,
        p=p,
        h_size=p**m.k * m.D * m.size / m.k,
        h_env=m.e_H(i),
        he=p ** (m.k - 1) * m.D,
        he_env=m.e_D(i),
        shadow_scale=p,
        shadow_env=m.e_F(),
    )


@dataclass(frozen=True)
class AuditReport:
    horizon: int
    initial_shadow: int
    first_exit: int | None
    quantity: str | None
    checked: tuple[tuple[int, tuple[str, ...]], ...]

    @property
    def ok(self) -> bool:
        return self.first_exit is None

    def __bool__(self) -> bool:
        return self.ok


def trajectory_audit(run: RemovalRun, m: TrajectoryModel) -> AuditReport:
    """Compare sampled trajectory points against the model envelopes.

    Only snapshots with i <= horizon are examined.  Per-edge checks are
    vacuous once every host edge is covered; the shadow check compares the
    maximum shadow degree against p*max_f|G(f)| within e_F on both sides.
    """
    if (m.n, m.r, m.size) != (run.G.n, run.G.r, len(run.G.edges)):
        raise ConfigError("model shape does not match the run's host graph")
    if run.H and m.q != run.q:
        raise ConfigError(f"model clique size {m.q} differs from run's {run.q}")
    init_shadow: Counter = Counter()
    for e in sorted(run.G.edges):
        for j in range(run.G.r):
            init_shadow[e[:j] + e[j + 1 :]] += 1
    delta = max(init_shadow.values(), default=0)

    checked: list[tuple[int, tuple[str, ...]]] = []
    first_exit: int | None = None
    quantity: str | None = None
    for s in run.trajectory:
        if s.i > m.horizon:
            continue
        exp = expected_trajectory(m, s.i)
        failures: list[str] = []
        if abs(s.h_size - exp.h_size) > exp.h_env:
            failures.append("H_size")
        if s.uncovered:
            if s.he_max > exp.he + exp.he_env:
                failures.append("He_max")
            if s.he_min < exp.he - exp.he_env:
                failures.append("He_min")
        hi = exp.shadow_scale * delta + exp.shadow_env
        lo = exp.shadow_scale * delta - exp.shadow_env
        if s.shadow_max > hi or s.shadow_max < lo:
            failures.append("shadow")
        checked.append((s.i, tuple(failures)))
        if failures and first_exit is None:
            first_exit = s.i
            quantity = failures[0]
    return AuditReport(
        horizon=m.horizon,
        initial_shadow=delta,
        first_exit=first_exit,
        quantity=quantity,
        checked=tuple(checked),
    )


def leave_shadow_report(run: RemovalRun, theta) -> BoundedReport:
    """Boundedness of the leave, via the same measurement the audit uses."""
    indicator = {e: 1 for e in sorted(run.leave.edges)}
    p = Params(q=run.q if run.H else run.G.r + 1, r=run.G.r, n=run.G.n)
    return bounded_check(indicator, theta, p)


def export_trajectory(run: RemovalRun, model: TrajectoryModel | None = None) -> str:
    """Render the sampled trajectory as CSV text.

    Envelope columns are filled only when a model is supplied, and left
    empty beyond its horizon.
    """
    k = comb(run.q, run.G.r) if run.H else 1
    size = len(run.G.edges)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = ["i", "p", "H_size", "He_min", "He_max", "leave_shadow_max"]
    if model is not None:
        header += ["pred_H", "env_H", "pred_He", "env_He", "shadow_scale", "env_shadow"]
    writer.writerow(header)
    for s in run.trajectory:
        p = 1.0 - k * s.i / size if size else 1.0
        row = [s.i, repr(p), s.h_size, s.he_min, s.he_max, s.shadow_max]
        if model is not None:
            if s.i <= model.horizon:
                exp = expected_trajectory(model, s.i)
                row += [
                    repr(exp.h_size),
                    repr(exp.h_env),
                    repr(exp.he),
                    repr(exp.he_env),
                    repr(exp.shadow_scale),
                    repr(exp.shadow_env),
                ]
            else:
                row += ["", "", "", "", "", ""]
        writer.writerow(row)
    return out.getvalue()
