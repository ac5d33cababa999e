"""Random greedy extension processes on complete hosts.

A rooted template is embedded repeatedly: each step extends a given root
embedding uniformly at random among completions whose non-root image
edges avoid a forbidden set and everything covered by earlier steps.
Aborts are recorded as data, never raised.  The same machinery drives
reserve sampling with its certificate and the leave-cover step, and the
tail bounds used to reason about such processes are exposed as plain
functions.
"""

from __future__ import annotations

import json
import math
import random
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import factorial

from .core import BoundedReport, IntVector, Params, RGraph, bounded_check, canon
from .exchange import EmbedResult, extend_embedding, _forbidden_set
from .util import ConfigError, derive_rng

__all__ = [
    "ExtensionType",
    "ProcessRun",
    "ReserveCertificate",
    "CoverResult",
    "TailReport",
    "admissible",
    "run_process",
    "validate_run",
    "sample_reserve",
    "cover",
    "chernoff_bound",
    "freedman_bound",
    "coin_tail_report",
]


@dataclass(frozen=True)
class ExtensionType:
    """A template r-graph with a rooted vertex subset.

    Roots are template vertices whose host positions are prescribed per
    step; edges lying inside the rooted set are never constrained, all
    other edges are.
    """

    H: RGraph
    F: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "F", canon(self.F))
        for v in self.F:
            if not 1 <= v <= self.H.n:
                raise ConfigError(f"rooted vertex {v} outside the template")

    @property
    def rooted_edges(self) -> tuple[tuple[int, ...], ...]:
        fs = set(self.F)
        return tuple(e for e in sorted(self.H.edges) if set(e) <= fs)

    @property
    def free_edges(self) -> tuple[tuple[int, ...], ...]:
        fs = set(self.F)
        return tuple(e for e in sorted(self.H.edges) if not set(e) <= fs)


def admissible(t: ExtensionType) -> bool:
    """Every free edge's rooted part must sit inside some rooted edge."""
    rooted = [set(f) for f in t.rooted_edges]
    fs = set(t.F)
    for e in t.free_edges:
        part = set(e) & fs
        if not any(part <= f for f in rooted):
            return False
    return True


def _root_map(t: ExtensionType, root, idx: int, host_n: int) -> dict[int, int]:
    if isinstance(root, Mapping):
        m = dict(root)
        if set(m) != set(t.F):
            raise ConfigError(f"root {idx}: domain must equal the rooted vertex set")
    else:
        vs = tuple(root)
        if len(vs) != len(t.F):
            raise ConfigError(f"root {idx}: expected {len(t.F)} host vertices")
        if len(set(vs)) != len(vs):
            raise ConfigError(f"root {idx}: repeated host vertex")
        m = dict(zip(t.F, canon(vs)))
    if len(set(m.values())) != len(m):
        raise ConfigError(f"root {idx}: not injective")
    for h in m.values():
        if not 1 <= h <= host_n:
            raise ConfigError(f"root {idx}: vertex {h} outside the host")
    return m


@dataclass
class ProcessRun:
    """Transcript of one run: images, traces, and degree instrumentation.

    `traces[e]` counts, per template edge e, how often each host edge
    appeared as its image; `running_max[e]` is the maximum (r-1)-set
    degree of that trace after each completed step.  When a theta was
    configured, `bound_reports` compares every final trace against the
    factor 2^(r+1) r! theta; this is informational, aborts and bound
    violations are data rather than errors.
    """

    type: ExtensionType
    host_n: int
    roots: tuple[dict[int, int], ...]
    forbidden: frozenset
    seed: int | None
    theta: Fraction | None
    images: tuple[EmbedResult, ...]
    modes: tuple[str, ...]
    abort_index: int | None
    traces: dict[tuple[int, ...], IntVector]
    running_max: dict[tuple[int, ...], tuple[int, ...]]
    bound_reports: dict[tuple[int, ...], BoundedReport] | None

    @property
    def completed(self) -> bool:
        return self.abort_index is None

    @property
    def steps(self) -> int:
        return len(self.images)

    def final_max_degrees(self) -> dict[tuple[int, ...], int]:
        return {e: (rm[-1] if rm else 0) for e, rm in self.running_max.items()}

    def report(self) -> dict:
        rooted = set(self.type.rooted_edges)
        edges = {}
        for e in sorted(self.type.H.edges):
            entry = {
                "rooted": e in rooted,
                "max_degree": self.running_max[e][-1] if self.running_max[e] else 0,
            }
            if self.bound_reports is not None:
                rep = self.bound_reports[e]
                entry["bounded"] = rep.ok
                entry["bound"] = str(rep.theta * rep.n)
            edges["-".join(map(str, e))] = entry
        return {
            "seed": self.seed,
            "host_n": self.host_n,
            "template_vertices": self.type.H.n,
            "template_r": self.type.H.r,
            "rooted_vertices": list(self.type.F),
            "steps_requested": len(self.roots),
            "steps_completed": self.steps,
            "abort_index": self.abort_index,
            "modes": list(self.modes),
            "theta": str(self.theta) if self.theta is not None else None,
            "edges": edges,
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), sort_keys=True, indent=2)


def run_process(
    t: ExtensionType,
    roots,
    B=None,
    host_n: int = 0,
    candidate_filter=None,
    rng: random.Random | None = None,
    *,
    seed: int = 0,
    theta=None,
    budget: int = 3000,
    exhaust_threshold: int = 10**6,
) -> ProcessRun:
    """Run the greedy extension process over the given root embeddings.

    Each step draws a completion of its root uniformly from those whose
    free-edge images avoid B, everything covered by earlier full images,
    and (when given) the complement of `candidate_filter`.  A step with
    no valid completion aborts the run; the abort step is recorded on
    the returned transcript.
    """
    if not admissible(t):
        raise ConfigError("extension type is not admissible")
    if host_n < t.H.n:
        raise ConfigError(f"host on {host_n} vertices cannot fit the template")
    recorded_seed = seed if rng is None else None
    rng = rng or derive_rng(seed, "process")
    root_maps = tuple(_root_map(t, root, i + 1, host_n) for i, root in enumerate(roots))

    template_vertices = range(1, t.H.n + 1)
    template_edges = sorted(t.H.edges)
    b_set = frozenset(_forbidden_set(B))
    blocked = set(b_set)
    r = t.H.r

    traces = {e: IntVector() for e in template_edges}
    degrees: dict[tuple[int, ...], dict[tuple[int, ...], int]] = {e: {} for e in template_edges}
    running: dict[tuple[int, ...], list[int]] = {e: [] for e in template_edges}
    images: list[EmbedResult] = []
    modes: list[str] = []
    abort_index = None

    for step, anchor in enumerate(root_maps, start=1):
        res = extend_embedding(
            template_vertices,
            template_edges,
            anchor,
            host_n,
            forbidden=blocked,
            allowed=candidate_filter,
            rng=rng,
            budget=budget,
            exhaust_threshold=exhaust_threshold,
        )
        if res is None:
            abort_index = step
            break
        images.append(res)
        modes.append(res.mode)
        blocked |= res.image_edges
        for e in template_edges:
            img = res.image(e)
            traces[e].add(img, 1)
            deg = degrees[e]
            best = running[e][-1] if running[e] else 0
            for i in range(r):
                f = img[:i] + img[i + 1 :]
                deg[f] = deg.get(f, 0) + 1
                if deg[f] > best:
                    best = deg[f]
            running[e].append(best)

    bound_reports = None
    if theta is not None:
        theta = Fraction(theta)
        threshold = Fraction(2 ** (r + 1) * factorial(r)) * theta
        p_host = Params(q=r + 1, r=r, n=host_n)
        bound_reports = {e: bounded_check(traces[e], threshold, p_host) for e in template_edges}

    return ProcessRun(
        type=t,
        host_n=host_n,
        roots=root_maps,
        forbidden=b_set,
        seed=recorded_seed,
        theta=theta,
        images=tuple(images),
        modes=tuple(modes),
        abort_index=abort_index,
        traces=traces,
        running_max={e: tuple(running[e]) for e in template_edges},
        bound_reports=bound_reports,
    )


def validate_run(run: ProcessRun) -> tuple[str, ...]:
    """Re-derive every covered set from scratch and re-check the run.

    Returns human-readable failure strings; empty means the transcript
    is internally consistent.
    """
    fails: list[str] = []
    t = run.type
    template_edges = sorted(t.H.edges)
    free = set(t.free_edges)
    covered: set[tuple[int, ...]] = set()
    for step, (root, res) in enumerate(zip(run.roots, run.images), start=1):
        for v, h in root.items():
            if res.map.get(v) != h:
                fails.append(f"step {step}: image does not extend its root at {v}")
        vals = list(res.map.values())
        if len(set(vals)) != len(vals):
            fails.append(f"step {step}: image is not injective")
        if any(not 1 <= h <= run.host_n for h in vals):
            fails.append(f"step {step}: image leaves the host")
        for e in template_edges:
            img = res.image(e)
            if e in free:
                if img in run.forbidden:
                    fails.append(f"step {step}: free edge image {img} is forbidden")
                if img in covered:
                    fails.append(f"step {step}: free edge image {img} already covered")
        covered |= {res.image(e) for e in template_edges}

    for e in template_edges:
        again = IntVector()
        for res in run.images:
            again.add(res.image(e), 1)
        if again != run.traces[e]:
            fails.append(f"trace at template edge {e} is inconsistent")
        deg: dict[tuple[int, ...], int] = {}
        for img, cnt in run.traces[e].items():
            for i in range(len(img)):
                f = img[:i] + img[i + 1 :]
                deg[f] = deg.get(f, 0) + cnt
        final = max(deg.values(), default=0)
        recorded = run.running_max[e][-1] if run.running_max[e] else 0
        if final != recorded:
            fails.append(f"max degree at template edge {e}: {recorded} recorded, {final} actual")
    return tuple(fails)


@dataclass(frozen=True)
class ReserveCertificate:
    """Boundedness plus sampled clique-count evidence for a reserve."""

    ok: bool
    rate: float
    target: float
    bounded: BoundedReport
    sampled: tuple[tuple[int, ...], ...]
    counts: tuple[int, ...]
    pool: str

    def __bool__(self) -> bool:
        return self.ok


def sample_reserve(
    p: Params,
    rng: random.Random | None = None,
    *,
    seed: int = 0,
    rate: float | None = None,
    sample_cap: int = 1000,
) -> tuple[RGraph, ReserveCertificate]:
    """Sample each host edge independently and certify the result.

    The default rate is n^(-rho).  The certificate checks strict
    2*rate-boundedness of the sample and counts, for up to `sample_cap`
    edges outside the reserve, the q-cliques through each whose other
    edges all fall inside it; every count must reach n^(q-r-k*rho).
    When the reserve is complete the sampled edges come from the
    reserve itself, where the count is exactly C(n-r, q-r).
    """
    n, q, r, k = p.n, p.q, p.r, p.k
    if n < q:
        raise ConfigError(f"reserve sampling needs n >= q, got n={n}")
    rng = rng or derive_rng(seed, "reserve")
    rate = float(n) ** (-float(p.rho)) if rate is None else float(rate)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"rate {rate} outside [0, 1]")

    edges = [e for e in combinations(range(1, n + 1), r) if rng.random() < rate]
    R = RGraph(n=n, r=r, edges=frozenset(edges))

    bounded = bounded_check(IntVector.indicator(R.edges), 2 * Fraction(rate), p)
    complement = [e for e in combinations(range(1, n + 1), r) if e not in R.edges]
    pool, pool_name = (complement, "complement") if complement else (sorted(R.edges), "reserve")
    sampled = tuple(sorted(rng.sample(pool, min(len(pool), sample_cap))))

    counts = []
    vertices = range(1, n + 1)
    for e in sampled:
        es = set(e)
        cnt = 0
        for extra in combinations([v for v in vertices if v not in es], q - r):
            Q = canon(e + extra)
            if all(f == e or f in R.edges for f in combinations(Q, r)):
                cnt += 1
        counts.append(cnt)

    target = float(n) ** (q - r - k * float(p.rho))
    ok = bool(bounded) and bool(counts) and min(counts) >= target
    cert = ReserveCertificate(
        ok=ok,
        rate=rate,
        target=target,
        bounded=bounded,
        sampled=sampled,
        counts=tuple(counts),
        pool=pool_name,
    )
    return R, cert


@dataclass(frozen=True)
class CoverResult:
    roots: tuple[tuple[int, ...], ...]
    cliques: tuple[tuple[int, ...], ...]
    abort_index: int | None
    run: ProcessRun

    @property
    def ok(self) -> bool:
        return self.abort_index is None

    def __bool__(self) -> bool:
        return self.ok

    def mapping(self) -> dict[tuple[int, ...], tuple[int, ...]]:
        return dict(zip(self.roots, self.cliques))


def cover(
    L1,
    R: RGraph,
    p: Params,
    rng: random.Random | None = None,
    *,
    seed: int = 0,
    budget: int = 3000,
) -> CoverResult:
    """Cover each leave edge by a q-clique rooted there, new edges in R.

    The leave must stay outside the reserve.  Cliques are produced by
    the extension process, so they are pairwise edge-disjoint; an abort
    is returned, not raised.
    """
    if R.r != p.r or R.n != p.n:
        raise ConfigError("reserve shape disagrees with the parameters")
    leave = sorted(_forbidden_set(L1))
    for e in leave:
        if len(e) != p.r:
            raise ConfigError(f"leave edge {e} has arity {len(e)}, expected {p.r}")
        if e in R.edges:
            raise ConfigError(f"leave edge {e} lies in the reserve")

    t = ExtensionType(RGraph.complete(p.q, p.r), tuple(range(1, p.r + 1)))
    run = run_process(
        t,
        leave,
        None,
        p.n,
        candidate_filter=lambda f: f in R.edges,
        rng=rng,
        seed=seed,
        budget=budget,
    )
    cliques = tuple(canon(res.map.values()) for res in run.images)
    return CoverResult(
        roots=tuple(leave),
        cliques=cliques,
        abort_index=run.abort_index,
        run=run,
    )


def chernoff_bound(mu: float, c: float, C: float = 1.0) -> float:
    """Tail bound 2 exp(-mu c^2 / (2 (1 + 2c) C)) for pseudo-binomial sums."""
    if mu <= 0 or c <= 0 or C <= 0:
        raise ValueError("chernoff_bound needs positive mu, c, C")
    return 2.0 * math.exp(-mu * c * c / (2.0 * (1.0 + 2.0 * c) * C))


def freedman_bound(a: float, b: float, v: float) -> float:
    """Martingale tail bound exp(-a^2 / (2 (v + a b)))."""
    if a <= 0 or b <= 0 or v <= 0:
        raise ValueError("freedman_bound needs positive a, b, v")
    return math.exp(-a * a / (2.0 * (v + a * b)))


@dataclass(frozen=True)
class TailReport:
    trials: int
    coins: int
    prob: float
    c: float
    mu: float
    bound: float
    exceedances: int
    frequency: float
    sigma: float
    ok: bool

    def __bool__(self) -> bool:
        return self.ok


def coin_tail_report(
    trials: int,
    coins: int,
    c: float,
    prob: float = 0.5,
    rng: random.Random | None = None,
    *,
    seed: int = 0,
) -> TailReport:
    """Measure how often a coin sum strays more than c*mu from its mean.

    The observed frequency is compared against chernoff_bound plus
    three standard errors of the bound itself, so a valid bound passes
    with margin while an invalid one is flagged.
    """
    if trials <= 0 or coins <= 0:
        raise ValueError("trials and coins must be positive")
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must lie strictly between 0 and 1")
    rng = rng or derive_rng(seed, "coin-tail")
    mu = coins * prob
    width = c * mu
    exceed = 0
    if prob == 0.5:
        for _ in range(trials):
            x = rng.getrandbits(coins).bit_count()
            if abs(x - mu) > width:
                exceed += 1
    else:
        for _ in range(trials):
            x = sum(rng.random() < prob for _ in range(coins))
            if abs(x - mu) > width:
                exceed += 1
    bound = chernoff_bound(mu, c, 1.0)
    freq = exceed / trials
    sigma = math.sqrt(bound * max(0.0, 1.0 - bound) / trials)
    return TailReport(
        trials=trials,
        coins=coins,
        prob=prob,
        c=c,
        mu=mu,
        bound=bound,
        exceedances=exceed,
        frequency=freq,
        sigma=sigma,
        ok=freq <= bound + 3.0 * sigma,
    )
