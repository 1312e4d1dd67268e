"""Scenarios and the solve / invert / simulate / compare pipeline.

A scenario bundles a model, a target functional, a grid of initial capitals
and the solver, inversion and Monte Carlo settings. It is read from TOML or
JSON and re-emitted as canonical JSON, whose SHA-256 is the scenario hash
stamped on every output.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from .errors import ParseError, UnsupportedCombination
from .feq import MAX_NODES, fe_residual, rho_eval, solve_unknowns
from .inversion import InversionParams, invert
from .models import RuinProbability, RuinTimeLst, build_system, model_to_dict, parse_model
from .simulator import PathCaps, estimate

__all__ = [
    "SolverParams",
    "McParams",
    "Scenario",
    "ComparisonReport",
    "parse_scenario",
    "load_scenario",
    "scenario_to_dict",
    "canonical_json",
    "scenario_hash",
    "solve_scenario",
    "transform_of",
    "invert_scenario",
    "simulate_scenario",
    "compare_scenario",
    "with_overrides",
]

Z_LIMIT = 3.0
PASS_FRACTION = 0.95


@dataclass(frozen=True)
class SolverParams:
    depth_tol: float = 1e-12
    max_nodes: int = MAX_NODES
    jet_order: int = 0

    def __post_init__(self):
        if not self.depth_tol > 0 or self.max_nodes < 1 or self.jet_order < 0:
            raise ParseError("solver needs depth_tol > 0, max_nodes >= 1, jet_order >= 0")


@dataclass(frozen=True)
class McParams:
    n: int = 100_000
    seed: int = 0
    caps: PathCaps = PathCaps()
    workers: int = 1

    def __post_init__(self):
        if self.n < 1000 or self.seed < 0 or self.workers < 1:
            raise ParseError("mc needs n >= 1000, seed >= 0, workers >= 1")


@dataclass(frozen=True)
class Scenario:
    model: object
    functional: object = RuinProbability()
    x_grid: tuple = (0.5, 1.0, 2.0, 4.0)
    solver: SolverParams = field(default_factory=SolverParams)
    inversion: InversionParams = field(default_factory=InversionParams)
    mc: McParams = field(default_factory=McParams)

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        if x.ndim != 1 or not x.size:
            raise ParseError("x_grid must be a non-empty list")
        if np.any(x <= 0) or np.any(np.diff(x) <= 0):
            raise ParseError("x_grid must be positive and strictly increasing")


# ---------------------------------------------------------------------------
# (de)serialisation


def _functional_dict(f):
    if isinstance(f, RuinTimeLst):
        a = complex(f.alpha)
        return {"type": "ruin_time_lst", "alpha": a.real if a.imag == 0 else [a.real, a.imag]}
    return {"type": "ruin_probability"}


def _parse_functional(d):
    if d is None:
        return RuinProbability()
    if not isinstance(d, dict):
        raise ParseError("functional must be a mapping")
    kind = d.get("type")
    if kind == "ruin_probability":
        return RuinProbability()
    if kind == "ruin_time_lst":
        a = d.get("alpha")
        if isinstance(a, list) and len(a) == 2:
            a = complex(a[0], a[1])
        elif isinstance(a, (int, float)):
            a = float(a)
        else:
            raise ParseError("ruin_time_lst needs a real alpha or [re, im]")
        return RuinTimeLst(a)
    raise ParseError(f"unknown functional {kind!r}")


def _checked(d, allowed, what):
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ParseError(f"{what} must be a mapping")
    extra = set(d) - set(allowed)
    if extra:
        raise ParseError(f"unknown {what} keys: {sorted(extra)}")
    return d


def parse_scenario(d):
    """Build a :class:`Scenario` from a parsed TOML/JSON mapping."""
    if not isinstance(d, dict):
        raise ParseError("scenario must be a mapping")
    _checked(d, {"model", "functional", "x_grid", "solver", "inversion", "mc"}, "scenario")
    if "model" not in d:
        raise ParseError("scenario needs a [model] table")
    try:
        s = _checked(d.get("solver"), {"depth_tol", "max_nodes", "jet_order"}, "solver")
        solver = SolverParams(**{k: (float(v) if k == "depth_tol" else int(v)) for k, v in s.items()})
        i = _checked(d.get("inversion"), {"method", "terms", "precision_target", "richardson"}, "inversion")
        inversion = InversionParams(**i)
        m = dict(_checked(d.get("mc"), {"n", "seed", "workers", "t_max", "u_cap", "max_jumps"}, "mc"))
        caps = PathCaps(**{k: m.pop(k) for k in ("t_max", "u_cap", "max_jumps") if k in m})
        mc = McParams(caps=caps, **{k: int(v) for k, v in m.items()})
        x = d.get("x_grid", Scenario.x_grid)
        if not isinstance(x, (list, tuple)) or not all(isinstance(v, (int, float)) for v in x):
            raise ParseError("x_grid must be a list of numbers")
        return Scenario(
            model=parse_model(d["model"]),
            functional=_parse_functional(d.get("functional")),
            x_grid=tuple(float(v) for v in x),
            solver=solver,
            inversion=inversion,
            mc=mc,
        )
    except TypeError as exc:
        raise ParseError(f"bad scenario: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad scenario: {exc}") from exc


def load_scenario(path):
    """Read a scenario from a ``.toml`` or ``.json`` file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            d = json.loads(text)
        else:
            d = tomli.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    return parse_scenario(d)


def scenario_to_dict(sc):
    caps = sc.mc.caps
    mc = {"n": sc.mc.n, "seed": sc.mc.seed, "workers": sc.mc.workers, "t_max": caps.t_max,
          "max_jumps": caps.max_jumps}
    if caps.u_cap is not None:
        mc["u_cap"] = caps.u_cap
    return {
        "model": model_to_dict(sc.model),
        "functional": _functional_dict(sc.functional),
        "x_grid": list(sc.x_grid),
        "solver": {"depth_tol": sc.solver.depth_tol, "max_nodes": sc.solver.max_nodes,
                   "jet_order": sc.solver.jet_order},
        "inversion": sc.inversion.to_dict(),
        "mc": mc,
    }


def canonical_json(sc):
    return json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))


def scenario_hash(sc):
    return hashlib.sha256(canonical_json(sc).encode()).hexdigest()


# ---------------------------------------------------------------------------
# pipeline steps


def _pair(z):
    z = complex(z)
    return [z.real, z.imag]


def solve_scenario(sc):
    """Solve the transform equation; returns ``(solution, report dict)``."""
    system = build_system(sc.model, sc.functional)
    sol = solve_unknowns(system, tol=sc.solver.depth_tol, max_nodes=sc.solver.max_nodes)
    rng = np.random.default_rng(sc.mc.seed)
    pts = rng.uniform(0.1, 5.0, 20) + 1j * rng.uniform(-5.0, 5.0, 20)
    res = fe_residual(sol, pts)
    unknowns = []
    for u, val in zip(system.unknowns, sol.u):
        entry = {"label": u.label, "point": _pair(u.point), "derivative_order": u.derivative_order,
                 "value": _pair(val)}
        if sc.solver.jet_order:
            jet = rho_eval(sol, complex(u.point), order=sc.solver.jet_order)
            entry["taylor"] = [_pair(c) for c in jet]
        unknowns.append(entry)
    cert = getattr(system, "certificate", None)
    report = {
        "unknowns": unknowns,
        "linear_residual": float(sol.residual),
        "tail_bound": float(sol.tail_bound),
        "fe_residual_max": float(res.max()),
        "fe_residual_points": [_pair(z) for z in pts],
        "excision_discs": int(sol.discs.count) if sol.discs is not None else 0,
        "root_certificate": cert.to_dict() if cert is not None else None,
    }
    return sol, report


def transform_of(sol):
    """Batched callable ``s -> rho(s)`` for inversion."""
    return lambda s: rho_eval(sol, s)


def invert_scenario(sc, sol=None):
    if sol is None:
        sol, _ = solve_scenario(sc)
    clamp = isinstance(sc.functional, RuinProbability) or (
        isinstance(sc.functional, RuinTimeLst) and complex(sc.functional.alpha).imag == 0)
    return invert(transform_of(sol), sc.x_grid, sc.inversion, clamp=clamp, seed=sc.mc.seed)


def simulate_scenario(sc):
    if isinstance(sc.functional, RuinTimeLst) and complex(sc.functional.alpha).imag != 0:
        raise UnsupportedCombination("simulation needs a real alpha")
    out = []
    for i, x in enumerate(sc.x_grid):
        out.append(estimate(sc.model, x, sc.functional, n=sc.mc.n, caps=sc.mc.caps,
                            seed=sc.mc.seed + i, workers=sc.mc.workers))
    return out


@dataclass
class ComparisonReport:
    """Transform values against Monte Carlo means, point by point.

    ``z`` is the difference in Monte Carlo standard errors; the verdict is
    PASS iff ``|z| <= 3`` at no fewer than 95% of the points.
    """

    x: list
    transform: list
    inversion_error: list
    mc_mean: list
    mc_half_width: list
    z: list
    censored_fraction: list

    @property
    def passed_fraction(self):
        return float(np.mean(np.abs(self.z) <= Z_LIMIT))

    @property
    def verdict(self):
        return "PASS" if self.passed_fraction >= PASS_FRACTION else "FAIL"

    def within_half_widths(self, k=3.0):
        """Fraction of points with ``|transform - mc| <= k`` half-widths."""
        d = np.abs(np.asarray(self.transform) - np.asarray(self.mc_mean))
        return float(np.mean(d <= k * np.asarray(self.mc_half_width)))

    def to_dict(self):
        return {
            "points": [
                {"x": x, "transform": t, "inversion_error": e, "mc_mean": m, "mc_half_width": h, "z": z,
                 "censored_fraction": c}
                for x, t, e, m, h, z, c in zip(self.x, self.transform, self.inversion_error, self.mc_mean,
                                               self.mc_half_width, self.z, self.censored_fraction)
            ],
            "passed_fraction": self.passed_fraction,
            "verdict": self.verdict,
        }


def _z(diff, half_width):
    sd = half_width / 1.96
    if sd > 0:
        return diff / sd
    return 0.0 if abs(diff) < 1e-12 else float(np.sign(diff) * np.inf)


def compare_scenario(sc, sol=None):
    inv = invert_scenario(sc, sol)
    mc = simulate_scenario(sc)
    vals = [float(v) for v in np.real(inv.value)]
    return ComparisonReport(
        x=list(sc.x_grid),
        transform=vals,
        inversion_error=[float(e) for e in inv.error_estimate],
        mc_mean=[e.mean for e in mc],
        mc_half_width=[e.half_width_95 for e in mc],
        z=[_z(v - e.mean, e.half_width_95) for v, e in zip(vals, mc)],
        censored_fraction=[e.censored_fraction for e in mc],
    )


def with_overrides(sc, seed=None, mc_n=None, depth_tol=None, terms=None):
    """Apply command-line overrides."""
    if seed is not None or mc_n is not None:
        sc = replace(sc, mc=replace(sc.mc, seed=sc.mc.seed if seed is None else seed,
                                    n=sc.mc.n if mc_n is None else mc_n))
    if depth_tol is not None:
        sc = replace(sc, solver=replace(sc.solver, depth_tol=depth_tol))
    if terms is not None:
        sc = replace(sc, inversion=replace(sc.inversion, terms=terms))
    return sc
