"""Command-line interface.

Exit codes: 0 success, 1 other failure, 2 infeasible, 3 parse error,
4 non-convergence.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, lp
from . import propagation as prop
from .baselines import OracleBudgetError, brute_force_min_abs
from .solver import InfeasibleError, gspa_solve, lower_bound

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_NONCONVERGED = 0, 1, 2, 3, 4


class ParseError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _solver_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("solver")
    g.add_argument("--rho", type=float, help="ADMM step size")
    g.add_argument("--eps-abs", type=float, help="absolute stopping tolerance")
    g.add_argument("--eps-rel", type=float, help="relative stopping tolerance")
    g.add_argument("--max-iters", type=int, help="ADMM iterations per reweighting round")
    g.add_argument("--reweight-rounds", type=int, help="number of reweighting rounds")
    g.add_argument("--seed", type=int, help="GT sampling seed (sweep: master seed)")
    g.add_argument("--threads", type=int, default=1, help="parallel sweep trials")
    return p


def build_parser():
    common = _solver_flags()
    parser = _Parser(prog="absplace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_cmd(name, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.add_argument("scenario", type=Path, help="scenario JSON file ('default' for the bundled one)")
        return p

    p = scenario_cmd("place", "run GSPA and write the placement as JSON")
    p.add_argument("-o", "--output", type=Path)

    p = scenario_cmd("sweep", "Monte Carlo sweep to CSV")
    p.add_argument("--param", required=True, choices=harness.SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--algorithms", default="gspa,kmeans,lower_bound",
                   help=f"comma-separated subset of {','.join(harness.ALGORITHMS)}")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    p.add_argument("-o", "--output", type=Path)

    p = sub.add_parser("bound", help="backhaul lower bound on the ABS count", parents=[common])
    p.add_argument("scenario", type=Path, nargs="?")
    p.add_argument("--num-gts", type=int)
    p.add_argument("--min-rate", type=float)
    p.add_argument("--backhaul", type=float, help="common backhaul capacity (bits/s)")

    p = scenario_cmd("oracle", "exhaustive minimum ABS count (at most 20 grid points)")
    p.add_argument("-o", "--output", type=Path)

    for name, help_ in (("min-connections", "allocation with few GT-ABS links"),
                        ("allocate-served", "allocation maximizing served GTs")):
        p = scenario_cmd(name, help_)
        p.add_argument("--placement", type=Path, help="placement JSON from 'place'")
        p.add_argument("-o", "--output", type=Path)
    sub.choices["min-connections"].add_argument(
        "--connection-rounds", type=int, default=2, help="entrywise reweighting rounds")

    p = scenario_cmd("gain-map", "export GT-candidate x flight-grid gains (dB)")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--model", choices=[m for m in prop.MODELS if m != "ingested"])
    return parser


# ---------------------------------------------------------------- helpers

def _load(path):
    if str(path) == "default":
        return harness.default_scenario()
    if not path.is_file():
        raise ParseError(f"scenario file {str(path)!r} not found")
    return harness.load_scenario(path)


def _config(sc, args):
    return sc.admm_config(rho=args.rho, eps_abs=args.eps_abs, eps_rel=args.eps_rel,
                          max_iters=args.max_iters, reweight_rounds=args.reweight_rounds)


def _instance(sc, args):
    if args.seed is not None:
        sc.gt_seed = args.seed
    return harness.build_instance(sc)


def _emit(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _tolist(a):
    return np.asarray(a).tolist()


def _columns(args, sc, inst):
    if args.placement is None:
        sol = gspa_solve(inst.problem, inst.flight_grid, _config(sc, args))
        return sol.active_columns
    try:
        data = json.loads(Path(args.placement).read_text())
        cols = np.asarray(data["active_columns"], dtype=int)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad placement file: {exc}") from None
    if np.any(cols < 0) or np.any(cols >= inst.problem.shape[1]):
        raise ParseError("placement columns outside the flight grid")
    return cols


# ---------------------------------------------------------------- commands

def cmd_place(args):
    sc = _load(args.scenario)
    inst = _instance(sc, args)
    P = inst.problem
    sol = gspa_solve(P, inst.flight_grid, _config(sc, args))
    lb = lower_bound(P.shape[0], P.min_rate, P.backhaul)
    lb = None if math.isinf(lb) else lb
    _emit({
        "num_abs": sol.num_abs,
        "lower_bound": lb,
        "feasible": sol.feasible,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "active_columns": _tolist(sol.active_columns),
        "positions": _tolist(sol.positions),
        "gt_indices": _tolist(inst.gt_indices),
        "gts": _tolist(inst.gts),
        "rates_bps": _tolist(sol.rates),
    }, args.output)
    print(f"{sol.num_abs} ABSs (lower bound {lb}), feasible={sol.feasible}, "
          f"converged={sol.converged}", file=sys.stderr)
    if not sol.feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def _parse_values(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"bad --values list {text!r}") from None
    if not vals:
        raise ParseError("--values is empty")
    return vals


def cmd_sweep(args):
    sc = _load(args.scenario)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    bad = [a for a in algorithms if a not in harness.ALGORITHMS]
    if bad:
        raise ParseError(f"unknown algorithm {bad[0]!r}")
    spec = harness.SweepSpec(args.param, _parse_values(args.values), args.trials,
                             args.seed if args.seed is not None else 0)
    result = harness.run_sweep(sc, spec, algorithms, _config(sc, args),
                               threads=args.threads, timing=args.timing)
    text = harness.csv_text(result)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text)
    for (value, algo), mean in sorted(result.means().items()):
        print(f"{args.param}={value:g} {algo}: mean {mean:.3f} over {spec.trials} trials",
              file=sys.stderr)
    return EXIT_OK


def cmd_bound(args):
    if args.scenario is not None:
        sc = _load(args.scenario)
        inst = _instance(sc, args)
        M, rmin, cbh = inst.problem.shape[0], inst.problem.min_rate, inst.problem.backhaul
    else:
        if None in (args.num_gts, args.min_rate, args.backhaul):
            raise ParseError("give a scenario or all of --num-gts, --min-rate, --backhaul")
        M, rmin, cbh = args.num_gts, args.min_rate, np.array([args.backhaul])
    lb = lower_bound(M, rmin, cbh)
    print("inf" if math.isinf(lb) else lb)
    return EXIT_INFEASIBLE if math.isinf(lb) else EXIT_OK


def cmd_oracle(args):
    sc = _load(args.scenario)
    inst = _instance(sc, args)
    res = brute_force_min_abs(inst.problem)
    _emit({"min_count": res.min_count, "witness_columns": _tolist(res.witness_columns),
           "explored": res.explored, "rates_bps": _tolist(res.rates)}, args.output)
    return EXIT_OK


def cmd_min_connections(args):
    sc = _load(args.scenario)
    inst = _instance(sc, args)
    cols = _columns(args, sc, inst)
    P = inst.problem
    R, count = lp.min_connections(P.capacity[:, cols], P.backhaul[cols], P.min_rate,
                                  reweight_rounds=args.connection_rounds)
    _emit({"active_columns": _tolist(cols), "connections": count, "rates_bps": _tolist(R)},
          args.output)
    return EXIT_OK


def cmd_allocate_served(args):
    sc = _load(args.scenario)
    inst = _instance(sc, args)
    cols = _columns(args, sc, inst)
    P = inst.problem
    R, y, obj, served = lp.max_served_users(P.capacity[:, cols], P.backhaul[cols], P.min_rate)
    _emit({"active_columns": _tolist(cols), "served": served, "num_gts": P.shape[0],
           "total_shortfall_bps": obj, "shortfall_bps": _tolist(y), "rates_bps": _tolist(R)},
          args.output)
    return EXIT_OK


def cmd_gain_map(args):
    sc = _load(args.scenario)
    if args.model:
        sc.model = args.model
    if sc.model == "ingested":
        raise ParseError("scenario already ingests a gain map; pass --model")
    gts = harness.gt_candidates(sc)
    points = harness.flight_grid(sc)
    gains = harness.gain_table(sc, gts, points)
    prop.save_gain_map(prop.GainMap(gains, sc.model), args.output)
    print(f"wrote {gains.shape[0]} x {gains.shape[1]} gains to {args.output}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "place": cmd_place, "sweep": cmd_sweep, "bound": cmd_bound, "oracle": cmd_oracle,
    "min-connections": cmd_min_connections, "allocate-served": cmd_allocate_served,
    "gain-map": cmd_gain_map,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ParseError, harness.ScenarioError, prop.GainMapParseError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InfeasibleError, lp.LpInfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OracleBudgetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
