"""Command-line interface: ``l2gls {generate,solve,train,bench,ablate,tsplib}``.

Failures print one JSON line ``{"error": ..., "message": ...}`` on stderr and
exit nonzero (1 for library errors, 2 for bad usage, 3 for I/O).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys

from .errors import L2GLSError
from .harness import BenchmarkSpec, emit_ablation, emit_report, gap_pct, run_ablation, run_benchmark
from .instance import CustomerMode, DepotMode, GenSpec, Kind, generate_cvrp, generate_uniform_tsp, load_instance, write_tsplib
from .policy import Policy
from .search import CATALOG, SearchConfig, solve, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("search")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--steps", type=int, default=40000, help="action budget M")
    g.add_argument("--stall", type=int, default=6, help="non-improving actions before penalizing (I)")
    g.add_argument("--epsilon", type=float, default=0.05)
    g.add_argument("--lambda", dest="lam", type=float, default=0.3)
    g.add_argument("--variant", default="L2GLS", type=str.upper, choices=["L2GLS", "L2GLS2", "L2GLS3", "NO_PENALTY"])
    g.add_argument("--reward", default="advantage", type=str.lower, choices=["binary", "advantage"])
    g.add_argument("--k", type=int, default=None, help="candidate list size")
    g.add_argument("--policy", default=None, help="policy checkpoint")
    g.add_argument("--out", default=None, help="output path (default stdout)")
    g.add_argument("--format", default="json", type=str.lower, choices=["csv", "json"])
    g.add_argument("--trace", default=None, help="write JSON-lines events to this path ('-' for stderr)")
    g.add_argument("--time-limit", type=float, default=None, help="seconds per run")
    g.add_argument("--jobs", type=int, default=1)


def _config(args) -> SearchConfig:
    return SearchConfig(
        max_steps=args.steps,
        stall_threshold=args.stall,
        epsilon=args.epsilon,
        lam=args.lam,
        reward_variant=args.reward.upper(),
        variant=args.variant,
        candidate_k=args.k,
        seed=args.seed,
        time_limit=args.time_limit,
    )


def _policy(args):
    return Policy.load(args.policy) if args.policy else None


@contextlib.contextmanager
def _sink(path, binary=False):
    if path is None or path == "-":
        yield sys.stdout.buffer if binary else sys.stdout
        if not binary:
            sys.stdout.flush()
    else:
        with open(path, "wb" if binary else "w") as fh:
            yield fh


@contextlib.contextmanager
def _trace(path):
    if path is None:
        yield None
    elif path == "-":
        yield sys.stderr
    else:
        with open(path, "w") as fh:
            yield fh


def _write_csv_rows(out, header, rows):
    import csv

    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


# -- subcommands ------------------------------------------------------------------


def cmd_generate(args):
    kind = Kind(args.kind.upper())
    insts = []
    for i in range(args.count):
        seed = args.seed + i
        if kind is Kind.TSP:
            insts.append(generate_uniform_tsp(args.n, seed))
        else:
            spec = GenSpec(args.n, seed, DepotMode(args.depot.upper()), CustomerMode(args.customers.upper()), args.capacity)
            insts.append(generate_cvrp(spec))
    if args.format == "json":
        with _sink(args.out) as out:
            json.dump([inst.to_dict() for inst in insts] if len(insts) > 1 else insts[0].to_dict(), out)
            out.write("\n")
    elif args.out and len(insts) > 1:
        os.makedirs(args.out, exist_ok=True)
        ext = ".tsp" if kind is Kind.TSP else ".vrp"
        for inst in insts:
            with open(os.path.join(args.out, inst.name + ext), "w") as fh:
                fh.write(write_tsplib(inst))
    else:
        with _sink(args.out) as out:
            out.write("".join(write_tsplib(inst) for inst in insts))


def _solve_one(inst, args, policy):
    with _trace(args.trace) as tr:
        return solve(inst, _config(args), policy, trace=tr)


def _result_record(inst, res, reference=None) -> dict:
    rec = {
        "name": inst.name,
        "kind": inst.kind.value,
        "n": inst.n,
        "best_cost": res.best_cost,
        "steps": res.steps_executed,
        "penalty_events": res.penalty_events,
        "seconds": res.wall_time,
        "solution": res.best_solution.to_dict(res.best_cost),
    }
    if reference is not None:
        rec["reference"] = reference
        rec["gap_pct"] = gap_pct(res.best_cost, reference)
    return rec


def cmd_solve(args):
    if args.instance:
        inst = load_instance(args.instance)
    elif args.random:
        kind = Kind(args.kind.upper())
        inst = generate_uniform_tsp(args.random, args.seed) if kind is Kind.TSP else generate_cvrp(GenSpec(args.random, args.seed))
    else:
        raise UsageError("solve needs an instance path or --random N")
    res = _solve_one(inst, args, _policy(args))
    rec = _result_record(inst, res)
    with _sink(args.out) as out:
        if args.format == "csv":
            _write_csv_rows(out, ["name", "n", "best_cost", "steps", "seconds"], [[inst.name, inst.n, repr(res.best_cost), res.steps_executed, repr(res.wall_time)]])
        else:
            json.dump(rec, out)
            out.write("\n")


def cmd_train(args):
    if not args.out:
        raise UsageError("train needs --out <checkpoint>")
    log: list = []
    policy = train(args.kind.upper(), args.n, _config(args), args.episodes, policy=_policy(args), log=log)
    policy.save(args.out)
    for ep, cost, updates in log:
        print(json.dumps({"episode": ep, "best_cost": cost, "updates": updates}), file=sys.stderr)
    print(json.dumps({"checkpoint": args.out, "episodes": len(log), "actions": [a.name for a in CATALOG]}))


def _sizes(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise UsageError(f"bad --sizes {text!r}") from None


def cmd_bench(args):
    spec = BenchmarkSpec(args.kind.upper(), _sizes(args.sizes), args.instances, _config(args), args.seed, exact_reference=not args.no_exact)
    report = run_benchmark(spec, _policy(args), args.jobs)
    with _sink(args.out, binary=True) as out:
        out.write(emit_report(report, args.format, timings=args.timings))
    if report.failures:
        print(json.dumps({"warning": "instance failures", "count": len(report.failures)}), file=sys.stderr)


def cmd_ablate(args):
    table = run_ablation(
        _sizes(args.sizes), args.instances, _config(args), _policy(args), kind=args.kind.upper(), seed=args.seed, jobs=args.jobs
    )
    with _sink(args.out, binary=True) as out:
        out.write(emit_ablation(table, args.format))


def cmd_tsplib(args):
    refs = {}
    for item in args.reference or []:
        name, _, value = item.partition("=")
        try:
            refs[name] = float(value)
        except ValueError:
            raise UsageError(f"bad --reference {item!r}, expected NAME=COST") from None
    policy = _policy(args)
    records = []
    for path in args.paths:
        inst = load_instance(path)
        res = _solve_one(inst, args, policy)
        records.append(_result_record(inst, res, refs.get(inst.name)))
    with _sink(args.out) as out:
        if args.format == "csv":
            rows = [[r["name"], r["n"], repr(r["best_cost"]), r.get("reference", ""), repr(r["gap_pct"]) if "gap_pct" in r else "", repr(r["seconds"])] for r in records]
            _write_csv_rows(out, ["name", "n", "best_cost", "reference", "gap_pct", "seconds"], rows)
        else:
            json.dump(records, out)
            out.write("\n")


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="l2gls", description="Learned operator selection with guided local search for TSP and CVRP.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write random instances")
    _common(g)
    g.add_argument("--kind", default="tsp", choices=["tsp", "cvrp"], type=str.lower)
    g.add_argument("--n", type=int, required=True, help="nodes (TSP) or customers (CVRP)")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--depot", default="random", choices=["random", "central", "eccentric"], type=str.lower)
    g.add_argument("--customers", default="random", choices=["random", "clustered", "random_clustered"], type=str.lower)
    g.add_argument("--capacity", type=int, default=None)
    g.set_defaults(func=cmd_generate, format="tsplib")
    for a in g._actions:
        if a.dest == "format":
            a.choices = ["tsplib", "json"]

    s = sub.add_parser("solve", help="solve one instance")
    _common(s)
    s.add_argument("instance", nargs="?", help=".tsp, .vrp or .json instance")
    s.add_argument("--random", type=int, default=None, metavar="N", help="solve a generated instance instead")
    s.add_argument("--kind", default="tsp", choices=["tsp", "cvrp"], type=str.lower)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train a policy on random instances")
    _common(t)
    t.add_argument("--kind", default="tsp", choices=["tsp", "cvrp"], type=str.lower)
    t.add_argument("--n", type=int, default=20)
    t.add_argument("--episodes", type=int, default=50)
    t.set_defaults(func=cmd_train, steps=2000)

    b = sub.add_parser("bench", help="benchmark on generated instances")
    _common(b)
    b.add_argument("--kind", default="tsp", choices=["tsp", "cvrp"], type=str.lower)
    b.add_argument("--sizes", default="20")
    b.add_argument("--instances", type=int, default=100)
    b.add_argument("--no-exact", action="store_true", help="skip Held-Karp references")
    b.add_argument("--timings", action="store_true", help="fill mean_seconds (makes the CSV run-dependent)")
    b.set_defaults(func=cmd_bench, format="csv", steps=10000)

    a = sub.add_parser("ablate", help="compare the four variants on shared instances")
    _common(a)
    a.add_argument("--kind", default="tsp", choices=["tsp", "cvrp"], type=str.lower)
    a.add_argument("--sizes", default="20,50")
    a.add_argument("--instances", type=int, default=100)
    a.set_defaults(func=cmd_ablate, format="csv", steps=10000)

    lib = sub.add_parser("tsplib", help="solve TSPLIB/CVRPLIB files")
    _common(lib)
    lib.add_argument("paths", nargs="+")
    lib.add_argument("--reference", action="append", metavar="NAME=COST", help="best-known cost for gap reporting")
    lib.set_defaults(func=cmd_tsplib)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except L2GLSError as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except (ValueError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except OSError as exc:
        return _fail(type(exc).__name__, str(exc), 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
