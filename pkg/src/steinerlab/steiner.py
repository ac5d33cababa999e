"""End-to-end construction pipeline for small and desk-scale hosts.

An attempt samples a reserve, packs the free part with the removal
process (boosted clique weights when the host is small enough to carry
exact rationals), covers the leave into the reserve, and finishes:
small mode completes the residual by exact backtracking, full mode
builds an absorber up front and replays it on the final leave.
Attempts fan out across worker threads over consecutive seeds and the
first success in seed order wins.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

from .absorber import AbsorberConfig, absorb_solve, build_absorber
from .boost import boost_weights, sample_H
from .core import IntVector, Params, RGraph, canon, cliques_of, verify_decomposition
from .decode import divisible
from .nibble import removal_process
from .process import cover, sample_reserve
from .util import ConfigError, DivisibilityError, SteinerError, binom, derive_rng

Clique = tuple[int, ...]

# Boosted weights are exact rationals evaluated per clique; above this
# many candidate cliques the front end falls back to uniform selection.
BOOST_CLIQUE_CAP = 200_000


@dataclass(frozen=True)
class StageNote:
    stage: str
    detail: str


@dataclass(frozen=True)
class BuildOutcome:
    ok: bool
    design: tuple[Clique, ...]
    seed: int
    mode: str
    failure: str | None
    stages: tuple[StageNote, ...]

    def stage_map(self) -> dict[str, str]:
        return {s.stage: s.detail for s in self.stages}


@dataclass(frozen=True)
class BuildEnsemble:
    """Outcome of a seed ensemble, merged in seed order."""

    ok: bool
    design: tuple[Clique, ...]
    winner: BuildOutcome | None
    attempts: tuple[BuildOutcome, ...]

    @property
    def failure(self) -> str | None:
        if self.ok or not self.attempts:
            return None
        return self.attempts[-1].failure


def exact_finish(edges, p: Params, *, budget: int = 200_000):
    """Exactly cover a residual edge set by q-cliques, or return None.

    Branches on the lexicographically first uncovered edge.  Removing a
    clique preserves divisibility, so pruning rests on the entry
    divisibility check, dead branch edges, and the node budget.
    Returns (cliques | None, nodes explored).
    """
    residual = {canon(e) for e in edges}
    if not residual:
        return (), 0
    if any(len(e) != p.r for e in residual):
        raise ConfigError("residual edge arity disagrees with the parameters")
    if len(residual) % p.k or not divisible(IntVector.indicator(residual), p).ok:
        return None, 0

    q, r = p.q, p.r
    verts = sorted({v for e in residual for v in e})
    chosen: list[Clique] = []
    nodes = 0

    def dfs() -> bool:
        nonlocal nodes
        if not residual:
            return True
        if nodes >= budget:
            return False
        nodes += 1
        e = min(residual)
        pool = [v for v in verts if v not in e]
        for extra in combinations(pool, q - r):
            Q = canon(e + extra)
            faces = list(combinations(Q, r))
            if any(f not in residual for f in faces):
                continue
            residual.difference_update(faces)
            chosen.append(Q)
            if dfs():
                return True
            chosen.pop()
            residual.update(faces)
        return False

    return (tuple(chosen) if dfs() else None), nodes


def _nibble_front(G_free: RGraph, p: Params, seed: int):
    """Boost-sample candidate cliques when affordable, then run removal."""
    notes = []
    free_verts = {v for e in G_free.edges for v in e}
    H = None
    bound = binom(len(free_verts), p.q)
    if bound <= BOOST_CLIQUE_CAP:
        try:
            w = boost_weights(G_free, p)
            H, _ = sample_H(w, derive_rng(seed, "boost"))
            notes.append(StageNote("boost", f"sampled |H|={len(H)} boosted cliques"))
        except (SteinerError, ValueError) as exc:
            notes.append(StageNote("boost", f"uniform fallback: {exc}"))
    else:
        notes.append(
            StageNote("boost", f"uniform fallback: {bound} candidates exceed cap")
        )
    if H is None:
        H = tuple(cliques_of(G_free, p.q))
    run = removal_process(G_free, H, derive_rng(seed, "nibble"))
    notes.append(
        StageNote(
            "nibble",
            f"selected {len(run.selected)} cliques, leave {len(run.leave.edges)} edges",
        )
    )
    return run, notes


def run_attempt(
    p: Params,
    seed: int,
    *,
    mode: str = "small",
    rate: float | None = None,
    strategy: str = "cycle",
    copies_per_sign: int | None = 1,
    cover_budget: int = 3000,
    finish_budget: int = 200_000,
) -> BuildOutcome:
    """One pipeline pass under a single master seed."""
    if mode not in ("small", "full"):
        raise ConfigError(f"unknown mode {mode!r}")
    notes: list[StageNote] = []
    host = RGraph.complete(p.n, p.r)
    # The certificate is advisory here, so a small extension sample does;
    # simulate-reserve keeps the full-size one.
    R, cert = sample_reserve(p, derive_rng(seed, "reserve"), rate=rate, sample_cap=64)
    notes.append(
        StageNote(
            "reserve",
            f"|R|={len(R.edges)} rate={float(cert.rate):.6g}"
            f" certificate={'ok' if cert.ok else 'weak'}",
        )
    )

    book = None
    blocked = set(R.edges)
    if mode == "full":
        cfg = AbsorberConfig(
            strategy=strategy, copies_per_sign=copies_per_sign, seed=seed
        )
        try:
            book = build_absorber(R, p, cfg)
        except SteinerError as exc:
            notes.append(StageNote("absorber", f"failed: {exc}"))
            stage = getattr(exc, "stage", None) or "absorber"
            return BuildOutcome(False, (), seed, mode, stage, tuple(notes))
        a_edges = set(book.absorber_edges())
        blocked |= a_edges
        notes.append(
            StageNote(
                "absorber",
                f"|Q1|={len(book.Q1)} copies={len(book.copies)} |A|={len(a_edges)}",
            )
        )

    G_free = RGraph(n=p.n, r=p.r, edges=frozenset(host.edges - blocked))
    run, front = _nibble_front(G_free, p, seed)
    notes.extend(front)

    leave_edges = sorted(run.leave.edges)
    got = cover(leave_edges, R, p, derive_rng(seed, "cover"), budget=cover_budget)
    covered = {f for Q in got.cliques for f in combinations(Q, p.r)}
    notes.append(
        StageNote(
            "cover",
            f"covered {len(got.cliques)}/{len(leave_edges)} leave edges"
            + ("" if got.ok else f", aborted at root {got.abort_index}"),
        )
    )

    design = list(run.selected) + list(got.cliques)
    if mode == "small":
        residual = (set(R.edges) | set(leave_edges)) - covered
        finish, nodes = exact_finish(residual, p, budget=finish_budget)
        notes.append(
            StageNote(
                "finish",
                f"residual={len(residual)} edges, dfs nodes={nodes}"
                + ("" if finish is not None else ", no completion"),
            )
        )
        if finish is None:
            return BuildOutcome(False, (), seed, mode, "finish", tuple(notes))
        design.extend(finish)
    else:
        if not got.ok:
            return BuildOutcome(False, (), seed, mode, "cover", tuple(notes))
        L2 = IntVector.indicator(frozenset(R.edges) - covered)
        try:
            absorbed = absorb_solve(book, L2)
        except SteinerError as exc:
            notes.append(StageNote("absorb", f"failed: {exc}"))
            stage = getattr(exc, "stage", None) or "absorb"
            return BuildOutcome(False, (), seed, mode, stage, tuple(notes))
        notes.append(
            StageNote("absorb", f"|D|={len(absorbed)} on leave of {L2.abs_sum()}")
        )
        design.extend(absorbed)

    rep = verify_decomposition(host, design, q=p.q)
    notes.append(
        StageNote("verify", "ok" if rep.ok else f"{rep.reason} at {rep.witness}")
    )
    if not rep.ok:
        return BuildOutcome(False, (), seed, mode, "verify", tuple(notes))
    return BuildOutcome(True, tuple(sorted(design)), seed, mode, None, tuple(notes))


def build_design(
    p: Params,
    *,
    mode: str = "small",
    seed: int = 0,
    attempts: int = 10,
    rate: float | None = None,
    strategy: str = "cycle",
    copies_per_sign: int | None = 1,
    cover_budget: int = 3000,
    finish_budget: int = 200_000,
    workers: int = 4,
) -> BuildEnsemble:
    """Run consecutive-seed attempts until one verifies.

    Rejects non-divisible hosts before any work.  Workers run attempts
    concurrently but the winner is the first success in seed order, so
    the result is independent of scheduling.
    """
    if attempts < 1:
        raise ConfigError("need at least one attempt")
    host = RGraph.complete(p.n, p.r)
    rep = divisible(IntVector.indicator(host.edges), p)
    if not rep.ok:
        raise DivisibilityError(
            f"no decomposition of the complete host can exist for"
            f" n={p.n}, q={p.q}, r={p.r}: witness {rep.witness}"
        )

    outcomes: list[BuildOutcome] = []
    winner = None
    window = max(1, min(workers, attempts))
    with ThreadPoolExecutor(max_workers=window) as pool:
        # Keep at most `window` attempts in flight; examining results in
        # seed order keeps the winner independent of thread scheduling.
        pending = []
        next_seed = 0

        def refill():
            nonlocal next_seed
            while next_seed < attempts and len(pending) < window:
                pending.append(
                    pool.submit(
                        run_attempt,
                        p,
                        seed + next_seed,
                        mode=mode,
                        rate=rate,
                        strategy=strategy,
                        copies_per_sign=copies_per_sign,
                        cover_budget=cover_budget,
                        finish_budget=finish_budget,
                    )
                )
                next_seed += 1

        refill()
        while pending:
            out = pending.pop(0).result()
            outcomes.append(out)
            if out.ok:
                winner = out
                for later in pending:
                    later.cancel()
                break
            refill()
    return BuildEnsemble(
        ok=winner is not None,
        design=winner.design if winner else (),
        winner=winner,
        attempts=tuple(outcomes),
    )
