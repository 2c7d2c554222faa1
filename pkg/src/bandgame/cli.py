"""Command line entry point: ``bandgame gen|run|solve-ne|verify|sweep``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

from . import harness
from .centralized import trace_rows
from .core import (
    Allocation,
    InstanceError,
    StrategyProfile,
    as_fraction,
    check_constraints,
    instance_to_dict,
    is_competing_system,
    load_instance,
)
from .distributed import AgentParams, SimNetConfig
from .equilibrium import EnumerationTooLarge, check_followers_ne, check_game_ne, theorem_property_suite
from .scenarios import ScenarioSpec, build_instance


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="bandgame", parents=[common],
                                 description="Stackelberg bandwidth allocation between edge and FL servers.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", parents=[common], help="build an instance from a scenario spec")
    g.add_argument("--spec", required=True, help="scenario JSON (s, e, alpha, beta, ...)")

    r = sub.add_parser("run", parents=[common], help="run one allocation scheme")
    r.add_argument("--scheme", choices=harness.SCHEMES, required=True)
    r.add_argument("--instance", required=True)
    r.add_argument("--stochastic", action="store_true", help="centralized: sample edges by score")
    r.add_argument("--trace", action="store_true", help="emit the grant log / price trace as CSV")
    r.add_argument("--delta", type=float, default=0.9)
    r.add_argument("--tau", type=float, default=0.1)
    r.add_argument("--drop", type=float, default=0.0)
    r.add_argument("--latency", type=int, default=0)
    r.add_argument("--max-rounds", type=int, default=1000)

    n = sub.add_parser("solve-ne", parents=[common], help="minimal-price equilibrium by enumeration")
    n.add_argument("--instance", required=True)
    n.add_argument("--max-enum", type=int, default=None)
    n.add_argument("--no-game-check", action="store_true", help="skip the leader deviation search")

    v = sub.add_parser("verify", parents=[common], help="check a saved outcome against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--solution", required=True, help="JSON with 'allocation' and 'prices' (or 'price')")
    v.add_argument("--max-enum", type=int, default=None)
    v.add_argument("--game", action="store_true", help="also search leader deviations")

    w = sub.add_parser("sweep", parents=[common], help="run schemes over a scenario grid")
    w.add_argument("--grid", required=True, help='JSON {"base": {...}, "grid": {"alpha": [...], ...}}')
    w.add_argument("--schemes", default=",".join(harness.SCHEMES))
    w.add_argument("--seeds", default=None, help="count N (0..N-1) or list like 0,3,7")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--dat", default=None, help="also write gnuplot data here")
    w.add_argument("--dat-keys", default=None, help="grid keys for the .dat x columns (default: grid keys)")
    w.add_argument("--drop", type=float, default=0.0)
    w.add_argument("--latency", type=int, default=0)
    w.add_argument("--max-rounds", type=int, default=1000)
    return ap


# ---------------------------------------------------------------------------


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    return v


def _cmd_gen(args, fmt):
    spec = ScenarioSpec.load(args.spec)
    if args.seed is not None:
        spec = ScenarioSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    inst = build_instance(spec)
    if fmt == "csv":
        rows = [[i, j, int(inst.counts[i, j])] for i in range(inst.s) for j in range(inst.e)]
        return _csv(("fl_server", "edge", "clients"), rows)
    return _json(instance_to_dict(inst))


def _cmd_run(args, fmt):
    inst = load_instance(args.instance)
    seed = args.seed if args.seed is not None else 0
    net = SimNetConfig(latency_ticks=args.latency, drop_probability=args.drop, seed=seed,
                       max_rounds=args.max_rounds)
    params = AgentParams(delta=args.delta, tau=args.tau)
    out = harness.run_scheme(inst, args.scheme, seed=seed, stochastic=args.stochastic, net=net, params=params)
    if args.trace:
        if args.scheme == "centralized":
            from .centralized import CentralizedResult
            res = CentralizedResult(None, out.allocation, out.diagnostics["trace"])
            return _csv(("step", "i", "j", "rb_after", "rank_after"), trace_rows(res))
        if args.scheme == "distributed":
            rows = [(t, j, str(p), d) for t, j, p, d in out.diagnostics["price_trace"]]
            return _csv(("round", "edge", "price", "total_demand"), rows)
        raise InstanceError("the baseline has no trace")
    if fmt == "csv":
        rows = [
            (i, _num(inst.funds[i]), int(inst.units[i]), int(out.clients_acquired[i]),
             int(out.bandwidth_acquired[i]), _num(out.spend[i]))
            for i in range(inst.s)
        ]
        return _csv(("fl_server", "fund", "units", "clients_acquired", "bandwidth_acquired", "spend"), rows)
    return _json(harness.outcome_to_dict(out, inst))


def _cmd_solve(args, fmt):
    inst = load_instance(args.instance)
    rep = theorem_property_suite(inst, max_enum=args.max_enum, check_ne=not args.no_game_check)
    sol = rep.solution
    if fmt == "csv":
        if not sol.feasible:
            return _csv(("fl_server", "edge", "units"), [])
        x = sol.allocation.granted
        return _csv(("fl_server", "edge", "units"),
                    [(i, j, int(x[i, j])) for i in range(inst.s) for j in range(inst.e)])
    doc = {
        "feasible": sol.feasible,
        "price": None if sol.price is None else str(sol.price),
        "saturated": sol.saturated,
        "allocation": None if sol.allocation is None else sol.allocation.to_list(),
        "constraints_ok": rep.constraints_ok,
        "theorems": rep.results,
    }
    if rep.game is not None:
        doc["game"] = _game_doc(rep.game)
    return _json(doc)


def _game_doc(game) -> dict:
    doc = {"is_ne": game.is_ne, "note": game.note}
    if game.follower_witness is not None:
        w = game.follower_witness
        doc["follower_witness"] = {"deviator": w.deviator, "requests": list(w.alternative_requests),
                                   "utility_gain": w.utility_gain}
    if game.leader_witness is not None:
        w = game.leader_witness
        doc["leader_witness"] = {"edge": w.edge, "price": str(w.price),
                                 "requests": w.requests.tolist(),
                                 "revenue_before": str(w.revenue_before),
                                 "revenue_after": str(w.revenue_after)}
    if game.undecided:
        doc["undecided"] = [[j, str(p)] for j, p in game.undecided]
    return doc


def _load_solution(path, inst):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("allocation") is None:
        raise InstanceError("solution has no allocation")
    if "prices" in doc:
        prices = [as_fraction(p) for p in doc["prices"]]
    elif doc.get("price") is not None:
        prices = [as_fraction(doc["price"])] * inst.e
    else:
        raise InstanceError("solution has no prices")
    return prices, Allocation(doc["allocation"])


def _cmd_verify(args, fmt):
    inst = load_instance(args.instance)
    prices, alloc = _load_solution(args.solution, inst)
    if any(p <= 0 for p in prices):
        raise InstanceError("prices must be positive to verify")
    profile = StrategyProfile(tuple(prices), alloc.granted)
    report = check_constraints(inst, profile, alloc)
    if fmt == "csv":
        return _csv(("constraint", "i", "j", "detail"),
                    [(v.constraint, v.i, v.j, v.detail) for v in report.violations]), report.satisfied
    doc = {"constraints_ok": report.satisfied,
           "violations": [{"constraint": v.constraint, "i": v.i, "j": v.j, "detail": v.detail}
                          for v in report.violations]}
    witness = check_followers_ne(inst, profile, args.max_enum)
    doc["followers_ne"] = witness is None
    if witness is not None:
        doc["follower_witness"] = {"deviator": witness.deviator,
                                   "requests": list(witness.alternative_requests),
                                   "utility_gain": witness.utility_gain}
    if args.game and is_competing_system(inst):
        doc["game"] = _game_doc(check_game_ne(inst, profile, max_enum=args.max_enum))
    return _json(doc), report.satisfied


def _parse_seeds(text, seed):
    if text is None:
        return [seed] if seed is not None else list(range(5))
    if "," in text:
        return [int(v) for v in text.split(",") if v]
    n = int(text)
    if n < 1:
        raise ValueError("--seeds count must be at least 1 (use '0,' for seed 0 alone)")
    return list(range(n))


def _cmd_sweep(args, fmt):
    base, grid = harness.load_grid(args.grid)
    schemes = [s for s in args.schemes.split(",") if s]
    for s in schemes:
        if s not in harness.SCHEMES:
            raise InstanceError(f"unknown scheme {s!r}")
    net = {"latency_ticks": args.latency, "drop_probability": args.drop, "max_rounds": args.max_rounds}
    rows = harness.sweep(base, grid, schemes, _parse_seeds(args.seeds, args.seed), net=net, jobs=args.jobs)
    if args.dat:
        keys = tuple(args.dat_keys.split(",")) if args.dat_keys else tuple(grid) or ("seed",)
        with open(args.dat, "w", newline="") as fh:
            fh.write(harness.figure_dat(rows, keys))
    if fmt == "json":
        return _json([dict(zip(harness.FIELDS, (getattr(r, k) for k in harness.FIELDS))) for r in rows]
                     ).replace("NaN", "null")
    return harness.write_csv(rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("seed", "out", "format"):
        if not hasattr(args, name):
            setattr(args, name, None)
    fmt = args.format or ("csv" if args.cmd == "sweep" else "json")
    try:
        if args.cmd == "gen":
            text = _cmd_gen(args, fmt)
        elif args.cmd == "run":
            text = _cmd_run(args, fmt)
        elif args.cmd == "solve-ne":
            text = _cmd_solve(args, fmt)
        elif args.cmd == "verify":
            text, ok = _cmd_verify(args, fmt)
            _emit(text, args.out)
            return 0 if ok else 1
        else:
            text = _cmd_sweep(args, fmt)
    except (InstanceError, EnumerationTooLarge, OSError, ValueError) as exc:
        print(f"bandgame: error: {exc}", file=sys.stderr)
        return 2
    _emit(text, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
