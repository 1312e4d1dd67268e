"""Command-line front end.

Subcommands ``solve``, ``invert``, ``simulate``, ``compare`` and ``roots``
read a scenario file (TOML or JSON) and write JSON/CSV results into
``--out``; ``selfcheck`` runs the acceptance suite. Exit codes: 0 success,
1 a check or comparison FAILed, 2 bad input, 3 unsupported model request,
4 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError, UnsupportedCombination, UnsupportedError
from .models import build_system
from .pipeline import (
    canonical_json,
    compare_scenario,
    invert_scenario,
    load_scenario,
    scenario_hash,
    simulate_scenario,
    solve_scenario,
    with_overrides,
)
from .selfcheck import CRITERIA, run_selfcheck

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_UNSUPPORTED, EXIT_NUMERICAL = 0, 1, 2, 3, 4
COMMANDS = ("solve", "invert", "simulate", "compare", "roots", "selfcheck")


def build_parser():
    p = argparse.ArgumentParser(prog="dualrisk", description="Ruin quantities for dual risk models with proportional gains.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", help="scenario file (.toml or .json)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="override the Monte Carlo seed")
    p.add_argument("--mc-n", type=int, help="override the Monte Carlo sample size")
    p.add_argument("--depth-tol", type=float, help="override the lattice truncation tolerance")
    p.add_argument("--terms", type=int, help="override the number of inversion terms")
    p.add_argument("--criteria", type=int, nargs="+", choices=sorted(CRITERIA),
                   help="selfcheck: run only these criteria")
    return p


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _stamp(sc):
    return {"scenario_hash": scenario_hash(sc), "seed": sc.mc.seed, "scenario": json.loads(canonical_json(sc))}


def _cmd_solve(sc, out):
    _, report = solve_scenario(sc)
    _write_json(out / "solve.json", dict(_stamp(sc), **report))
    print(f"solve: {len(report['unknowns'])} unknowns, max residual {report['fe_residual_max']:.2e}")
    return EXIT_OK


def _cmd_invert(sc, out):
    inv = invert_scenario(sc)
    lines = [f"# scenario_hash={scenario_hash(sc)}", f"# seed={sc.mc.seed}", "x,value,raw,error_estimate"]
    for x, v, r, e in zip(inv.x, np.real(inv.value), np.real(inv.raw), inv.error_estimate):
        lines.append(f"{x:.17g},{v:.17g},{r:.17g},{e:.6g}")
    (out / "invert.csv").write_text("\n".join(lines) + "\n")
    print(f"invert: {len(inv.x)} points, max error estimate {float(np.max(inv.error_estimate)):.2e}")
    return EXIT_OK


def _cmd_simulate(sc, out):
    est = simulate_scenario(sc)
    payload = dict(_stamp(sc), estimates=[dict(e.to_dict(), x=x) for x, e in zip(sc.x_grid, est)])
    _write_json(out / "simulate.json", payload)
    print(f"simulate: {len(est)} points, n={sc.mc.n}")
    return EXIT_OK


def _cmd_compare(sc, out):
    rep = compare_scenario(sc)
    _write_json(out / "compare.json", dict(_stamp(sc), **rep.to_dict()))
    print(f"compare: {rep.verdict} ({rep.passed_fraction:.0%} of points with |z| <= 3)")
    return EXIT_OK if rep.verdict == "PASS" else EXIT_FAIL


def _cmd_roots(sc, out):
    system = build_system(sc.model, sc.functional)
    cert = getattr(system, "certificate", None)
    if cert is None:
        raise UnsupportedCombination(f"{type(sc.model).__name__} has no root equations")
    _write_json(out / "roots.json", dict(_stamp(sc), **cert.to_dict()))
    print(f"roots: {len(cert.roots)} right-half-plane roots, winding number {cert.winding_number}")
    return EXIT_OK if cert.ok else EXIT_FAIL


def _cmd_selfcheck(args, out):
    kw = {}
    if args.mc_n is not None:
        kw["mc_n"] = args.mc_n
    results = run_selfcheck(args.criteria, seed=args.seed, echo=print, **kw)
    payload = {"seed": args.seed, "scenario_hash": None, "criteria": [r.to_dict() for r in results],
               "passed": all(r.passed for r in results)}
    _write_json(out / "selfcheck.json", json.loads(json.dumps(payload, default=_jsonable)))
    return EXIT_OK if payload["passed"] else EXIT_FAIL


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


_HANDLERS = {"solve": _cmd_solve, "invert": _cmd_invert, "simulate": _cmd_simulate,
             "compare": _cmd_compare, "roots": _cmd_roots}


def run(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "selfcheck":
        return _cmd_selfcheck(args, out)
    if not args.scenario:
        raise InputError(f"{args.command} needs --scenario")
    sc = load_scenario(args.scenario)
    sc = with_overrides(sc, seed=args.seed, mc_n=args.mc_n, depth_tol=args.depth_tol, terms=args.terms)
    return _HANDLERS[args.command](sc, out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (InputError, UnsupportedError, NumericalError) as exc:
        if isinstance(exc, InputError):
            code = EXIT_INPUT
        elif isinstance(exc, UnsupportedError):
            code = EXIT_UNSUPPORTED
        else:
            code = EXIT_NUMERICAL
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
