"""Command-line entry point.

Subcommands build and verify designs, simulate the pipeline stages
(nibble, extension process, reserve sampling), dump decoder tables,
exchange gadgets, and boosted weights, and build or replay absorbers.
Every run prints a report embedding its configuration, seed, artifact
version, effective parameter values, and wall clock; artifact files
written via --out depend only on the seed and flags, so repeat runs are
byte-identical.  Wall clock appears in the stdout report only.

Exit codes: 0 success, 2 divisibility, 3 stage failure, 4 parse,
5 configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from fractions import Fraction
from itertools import combinations, islice

from .absorber import (
    AbsorberConfig,
    absorb_solve,
    book_from_json,
    book_to_json,
    build_absorber,
)
from .boost import boost_weights
from .core import IntVector, Params, RGraph, cliques_of, verify_decomposition
from .decode import decoder, divisible, materialize
from .fileio import (
    format_decomposition,
    parse_decomposition,
    parse_intvector,
    parse_rgraph,
)
from .integral import IntegralConfig, StageFailure
from .nibble import export_trajectory, removal_process
from .omega import build_omega, validate_omega
from .process import ExtensionType, cover, run_process, sample_reserve
from .steiner import build_design
from .util import ConfigError, DivisibilityError, ParseError, derive_rng

ARTIFACT_VERSION = "1"
REPORT_DIR_ENV = "STEINERLAB_REPORT_DIR"

EXIT_OK = 0
EXIT_DIVISIBILITY = 2
EXIT_STAGE = 3
EXIT_PARSE = 4
EXIT_CONFIG = 5


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which collides with the
    # divisibility code; route everything through ConfigError instead.
    def error(self, message):
        raise ConfigError(message)


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a rational number: {text!r}")


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "command", "subcommand"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Fraction) else value
    return out


def _flatten(value, prefix=""):
    if isinstance(value, dict):
        for k in sorted(value):
            yield from _flatten(value[k], f"{prefix}{k}." if prefix else f"{k}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _flatten(item, f"{prefix}{i}.")
    else:
        yield f"{prefix[:-1]}: {value}"


def _emit(args, report: dict, t0: float, *, artifact: str | None = None,
          default_name: str | None = None, csv_text: str | None = None) -> None:
    fmt = getattr(args, "format", "json")
    if fmt == "csv" and csv_text is None:
        raise ConfigError(f"csv output is not defined for {report['command']}")
    if artifact is not None:
        path = getattr(args, "out", None)
        if path is None and default_name and os.environ.get(REPORT_DIR_ENV):
            path = os.path.join(os.environ[REPORT_DIR_ENV], default_name)
        if path:
            parent = os.path.dirname(path)
            if parent:
                os.makedirs(parent, exist_ok=True)
            data = artifact.encode()
            with open(path, "wb") as fh:
                fh.write(data)
            report["artifact"] = {
                "path": path,
                "sha1": hashlib.sha1(data).hexdigest(),
            }
    report["artifact_version"] = ARTIFACT_VERSION
    report["config"] = _config_dict(args)
    report["wall_clock_s"] = round(time.perf_counter() - t0, 3)
    if fmt == "csv":
        sys.stdout.write(csv_text)
    elif fmt == "text":
        sys.stdout.write("\n".join(_flatten(report)) + "\n")
    else:
        sys.stdout.write(json.dumps(report, sort_keys=True, indent=2, default=str) + "\n")


def _params(args) -> Params:
    return Params(
        args.q,
        args.r,
        n=getattr(args, "n", 0) or 0,
        rho=getattr(args, "rho", None),
        alpha=getattr(args, "alpha", None),
    )


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


# ---------------------------------------------------------------- commands


def cmd_build(args, t0) -> int:
    p = _params(args)
    ens = build_design(
        p,
        mode=args.mode,
        seed=args.seed,
        attempts=args.attempts,
        strategy=args.strategy,
        copies_per_sign=args.copies,
        finish_budget=args.budget,
        workers=args.workers,
    )
    report = {
        "command": "build",
        "seed": args.seed,
        "effective": {
            "rho": str(p.rho),
            "alpha": str(p.alpha),
            "reserve_rate": float(p.n) ** (-float(p.rho)),
            "finish_budget": args.budget,
            "attempts": args.attempts,
        },
        "attempts": [
            {
                "seed": a.seed,
                "ok": a.ok,
                "failure": a.failure,
                "stages": [{"stage": s.stage, "detail": s.detail} for s in a.stages],
            }
            for a in ens.attempts
        ],
        "outcome": "ok" if ens.ok else "failed",
        "design_size": len(ens.design),
    }
    if not ens.ok:
        report["failure_stage"] = ens.failure
        _emit(args, report, t0)
        return EXIT_STAGE
    name = f"design-q{args.q}r{args.r}n{args.n}s{args.seed}.txt"
    _emit(args, report, t0, artifact=format_decomposition(ens.design), default_name=name)
    return EXIT_OK


def cmd_verify(args, t0) -> int:
    G = parse_rgraph(_read(args.graph))
    D = parse_decomposition(_read(args.decomposition))
    sizes = {len(Q) for Q in D}
    q = args.q or (sizes.pop() if len(sizes) == 1 else None)
    rep = verify_decomposition(G, D, q=q)
    report = {
        "command": "verify",
        "seed": 0,
        "effective": {"n": G.n, "r": G.r, "q": q, "blocks": len(D)},
        "ok": rep.ok,
        "violation": None if rep.ok else {"reason": rep.reason, "witness": rep.witness},
    }
    if q is not None:
        div = divisible(IntVector.indicator(G.edges), Params(q, G.r, n=G.n))
        report["divisible"] = {"ok": div.ok, "witness": None if div.ok else div.witness}
    _emit(args, report, t0)
    return EXIT_OK if rep.ok else EXIT_STAGE


def cmd_simulate_nibble(args, t0) -> int:
    p = _params(args)
    G = RGraph.complete(p.n, p.r)
    run = removal_process(G, cliques_of(G, p.q), derive_rng(args.seed, "nibble"))
    csv_text = export_trajectory(run)
    report = {
        "command": "simulate nibble",
        "seed": args.seed,
        "effective": {"host_edges": len(G.edges), "cadence": run.cadence},
        "selected": len(run.selected),
        "leave_edges": len(run.leave.edges),
        "leave_fraction": run.leave_fraction,
        "trajectory_points": len(run.trajectory),
    }
    name = f"nibble-q{args.q}r{args.r}n{args.n}s{args.seed}.csv"
    _emit(args, report, t0, artifact=csv_text, default_name=name, csv_text=csv_text)
    return EXIT_OK


def cmd_simulate_process(args, t0) -> int:
    p = _params(args)
    R, cert = sample_reserve(p, derive_rng(args.seed, "reserve"), sample_cap=64)
    roots = list(
        islice(
            (e for e in combinations(range(1, p.n + 1), p.r) if e not in R.edges),
            args.count,
        )
    )
    rng = derive_rng(args.seed, "process")
    if args.type == "cover":
        res = cover(roots, R, p, rng, budget=args.budget)
        images, abort = len(res.cliques), res.abort_index
    else:
        t = ExtensionType(RGraph.complete(p.q + p.r, p.r), tuple(range(1, p.r + 1)))
        run = run_process(t, roots, R.edges | set(roots), p.n, rng=rng, budget=args.budget)
        images, abort = len(run.images), run.abort_index
    payload = {
        "type": args.type,
        "reserve_edges": len(R.edges),
        "reserve_certificate": bool(cert.ok),
        "roots": len(roots),
        "images": images,
        "completed": abort is None,
        "abort_index": abort,
    }
    report = {
        "command": "simulate process",
        "seed": args.seed,
        "effective": {"rate": float(cert.rate), "budget": args.budget},
        **payload,
    }
    name = f"process-{args.type}-q{args.q}r{args.r}n{args.n}s{args.seed}.json"
    artifact = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _emit(args, report, t0, artifact=artifact, default_name=name)
    return EXIT_OK


def cmd_simulate_reserve(args, t0) -> int:
    p = _params(args)
    R, cert = sample_reserve(p, derive_rng(args.seed, "reserve"))
    payload = {
        "ok": cert.ok,
        "rate": float(cert.rate),
        "target": cert.target,
        "bounded": bool(cert.bounded),
        "edges": len(R.edges),
        "pool": cert.pool,
        "extension_counts": {
            "sampled": len(cert.sampled),
            "min": min(cert.counts) if cert.counts else None,
            "max": max(cert.counts) if cert.counts else None,
        },
    }
    report = {
        "command": "simulate reserve",
        "seed": args.seed,
        "effective": {"rho": str(p.rho), "rate": float(cert.rate)},
        **payload,
    }
    name = f"reserve-q{args.q}r{args.r}n{args.n}s{args.seed}.json"
    artifact = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _emit(args, report, t0, artifact=artifact, default_name=name)
    return EXIT_OK


def cmd_decode(args, t0) -> int:
    p = Params(args.q, args.r, n=args.q + args.r)
    table = decoder(p)
    window = tuple(range(1, p.q + p.r + 1))
    root = tuple(range(1, p.r + 1))
    psi = materialize(table, window, root)
    rows = [[list(Q), c] for Q, c in psi.sorted_items()]
    payload = {
        "q": p.q,
        "r": p.r,
        "N": table.N,
        "window": list(window),
        "root": list(root),
        "entries": len(rows),
        "max_coefficient": max(abs(c) for _, c in psi.items()),
        "rows": rows,
    }
    report = {"command": "decode", "seed": 0, "effective": {"N": table.N}, **payload}
    csv_text = "clique,coeff\n" + "\n".join(
        f"{' '.join(map(str, Q))},{c}" for Q, c in psi.sorted_items()
    ) + "\n"
    name = f"decoder-q{args.q}r{args.r}.json"
    artifact = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _emit(args, report, t0, artifact=artifact, default_name=name, csv_text=csv_text)
    return EXIT_OK


def cmd_omega(args, t0) -> int:
    p = Params(args.q, args.r, n=args.q + args.r)
    g = build_omega(p)
    rep = validate_omega(g)
    payload = {
        "q": p.q,
        "r": p.r,
        "vertices": g.graph.n,
        "edges": len(g.graph.edges),
        "upsilon_plus": len(g.upsilon_plus),
        "upsilon_minus": len(g.upsilon_minus),
        "anchor": list(g.qhat_plus),
        "ring": {" ".join(map(str, k)): list(v) for k, v in sorted(g.ring.items())},
        "valid": rep.ok,
        "failures": list(rep.failures),
    }
    report = {"command": "omega", "seed": 0, "effective": {"size": g.graph.n}, **payload}
    name = f"omega-q{args.q}r{args.r}.json"
    artifact = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _emit(args, report, t0, artifact=artifact, default_name=name)
    return EXIT_OK


def cmd_boost(args, t0) -> int:
    p = _params(args)
    G = RGraph.complete(p.n, p.r)
    w = boost_weights(G, p)
    rng = derive_rng(args.seed, "boost")
    sample = rng.sample(sorted(G.edges), min(args.edges, len(G.edges)))
    checks = [
        {"edge": list(e), "half_sum": str(w.half_sum(e)), "exact": w.half_sum(e) == Fraction(1, 2)}
        for e in sample
    ]
    pos = w.positivity_report()
    payload = {
        "p_prime": str(w.p_prime),
        "half_sums": checks,
        "all_exact": all(c["exact"] for c in checks),
        "positivity": {"ok": pos.ok, "checked": pos.checked, "mode": pos.mode},
    }
    report = {"command": "boost", "seed": args.seed, "effective": {"edges_checked": len(checks)}, **payload}
    name = f"boost-q{args.q}r{args.r}n{args.n}s{args.seed}.json"
    artifact = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _emit(args, report, t0, artifact=artifact, default_name=name)
    return EXIT_OK


def cmd_absorber_build(args, t0) -> int:
    p = _params(args)
    R, cert = sample_reserve(p, derive_rng(args.seed, "reserve"), sample_cap=64)
    integral = IntegralConfig(seed=args.seed) if args.strategy == "integral" else None
    cfg = AbsorberConfig(
        strategy=args.strategy,
        copies_per_sign=args.copies,
        integral=integral,
        seed=args.seed,
    )
    book = build_absorber(R, p, cfg)
    artifact = book_to_json(book)
    report = {
        "command": "absorber build",
        "seed": args.seed,
        "effective": cfg.effective(p) | {"reserve_rate": float(cert.rate)},
        "reserve_edges": len(R.edges),
        "base_cliques": len(book.Q1),
        "window_cliques": len(book.Q2),
        "copies": len(book.copies),
        "eliminations": len(book.elims),
        "further_eliminations": len(book.furthers),
        "negative_side": len(book.Qminus),
        "caveats": list(book.caveats),
    }
    name = f"book-q{args.q}r{args.r}n{args.n}s{args.seed}.json"
    _emit(args, report, t0, artifact=artifact, default_name=name)
    return EXIT_OK


def cmd_absorber_solve(args, t0) -> int:
    book = book_from_json(_read(args.book))
    L = parse_intvector(_read(args.leave))
    D = absorb_solve(book, L)
    report = {
        "command": "absorber solve",
        "seed": 0,
        "effective": {"strategy": book.strategy, "N": book.N},
        "leave_edges": L.abs_sum(),
        "design_size": len(D),
        "verified": True,
    }
    name = f"absorb-{os.path.basename(args.book)}-solution.txt"
    _emit(args, report, t0, artifact=format_decomposition(D), default_name=name)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_common(sub, *, n=False, seed=True, fmt=("json", "text")):
    sub.add_argument("--q", type=int, default=3, help="clique size")
    sub.add_argument("--r", type=int, default=2, help="edge arity")
    if n:
        sub.add_argument("--n", type=int, required=True, help="host vertex count")
    if seed:
        sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--rho", type=_fraction, default=None, help="reserve exponent")
    sub.add_argument("--alpha", type=_fraction, default=None, help="absorber exponent")
    sub.add_argument("--out", default=None, help="artifact path")
    sub.add_argument("--format", choices=fmt, default="json", help="report format")


def _build_parser() -> _Parser:
    parser = _Parser(prog="steinerlab", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    b = subs.add_parser("build", help="construct a design and write it out")
    _add_common(b, n=True)
    b.add_argument("--mode", choices=("small", "full"), default="small")
    b.add_argument("--budget", type=int, default=200_000, help="finisher node budget")
    b.add_argument("--attempts", type=int, default=10, help="seed ensemble size")
    b.add_argument("--copies", type=int, default=1, help="absorber copies per sign")
    b.add_argument("--strategy", choices=("cycle", "integral"), default="cycle")
    b.add_argument("--workers", type=int, default=2, help="concurrent attempts")
    b.set_defaults(func=cmd_build)

    v = subs.add_parser("verify", help="check a decomposition against a graph")
    v.add_argument("graph", help="r-graph file")
    v.add_argument("decomposition", help="decomposition file")
    v.add_argument("--q", type=int, default=None, help="expected block size")
    v.add_argument("--out", default=None)
    v.add_argument("--format", choices=("json", "text"), default="json")
    v.set_defaults(func=cmd_verify)

    sim = subs.add_parser("simulate", help="run a pipeline stage by itself")
    sims = sim.add_subparsers(dest="subcommand", required=True)

    sn = sims.add_parser("nibble", help="removal process on the complete host")
    _add_common(sn, n=True, fmt=("json", "text", "csv"))
    sn.set_defaults(func=cmd_simulate_nibble)

    sp = sims.add_parser("process", help="rooted extension process over a reserve")
    _add_common(sp, n=True)
    sp.add_argument("--type", choices=("cover", "window"), default="cover")
    sp.add_argument("--count", type=int, default=10, help="number of roots")
    sp.add_argument("--budget", type=int, default=3000)
    sp.set_defaults(func=cmd_simulate_process)

    sr = sims.add_parser("reserve", help="sample a reserve and certify it")
    _add_common(sr, n=True)
    sr.set_defaults(func=cmd_simulate_reserve)

    d = subs.add_parser("decode", help="dump the local decoder table")
    _add_common(d, seed=False, fmt=("json", "text", "csv"))
    d.set_defaults(func=cmd_decode)

    o = subs.add_parser("omega", help="dump the exchange gadget")
    _add_common(o, seed=False)
    o.set_defaults(func=cmd_omega)

    bo = subs.add_parser("boost", help="exact half-sum clique weights")
    _add_common(bo, n=True)
    bo.add_argument("--edges", type=int, default=12, help="edges to spot check")
    bo.set_defaults(func=cmd_boost)

    a = subs.add_parser("absorber", help="build or replay an absorber")
    asubs = a.add_subparsers(dest="subcommand", required=True)

    ab = asubs.add_parser("build", help="construct an absorber book")
    _add_common(ab, n=True)
    ab.add_argument("--copies", type=int, default=1, help="copies per sign")
    ab.add_argument("--strategy", choices=("cycle", "integral"), default="cycle")
    ab.set_defaults(func=cmd_absorber_build)

    asv = asubs.add_parser("solve", help="absorb a divisible leave")
    asv.add_argument("--book", required=True, help="absorber book file")
    asv.add_argument("--leave", required=True, help="leave vector file")
    asv.add_argument("--out", default=None)
    asv.add_argument("--format", choices=("json", "text"), default="json")
    asv.set_defaults(func=cmd_absorber_solve)

    return parser


def _fail(code: int, kind: str, exc: Exception) -> int:
    sys.stdout.write(
        json.dumps(
            {"error": {"code": code, "kind": kind, "message": str(exc)}},
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    return code


def main(argv=None) -> int:
    t0 = time.perf_counter()
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args, t0)
    except DivisibilityError as exc:
        return _fail(EXIT_DIVISIBILITY, "divisibility", exc)
    except StageFailure as exc:
        return _fail(EXIT_STAGE, f"stage:{exc.stage}", exc)
    except ParseError as exc:
        return _fail(EXIT_PARSE, "parse", exc)
    except OSError as exc:
        return _fail(EXIT_PARSE, "io", exc)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)


if __name__ == "__main__":
    raise SystemExit(main())
