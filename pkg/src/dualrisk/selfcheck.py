"""Acceptance suite: eight numbered checks, each returning a :class:`CheckResult`.

The same functions back ``dualrisk selfcheck`` and the test suite, so CI does
not need a test framework to run them.
"""

import inspect
import time
from dataclasses import dataclass, field
from itertools import product
from math import factorial, log

import numpy as np

from .copulas import gz_star, h_star
from .distributions import Deterministic, erlang, exponential
from .errors import ConvergenceGuard
from .feq import (
    AffineMap,
    FeqSystem,
    lattice_coefficients,
    rho_eval,
    solve_unknowns,
    stack,
    system_distance,
    fe_residual,
)
from .inversion import InversionParams
from .models import (
    CausalProportional,
    FgmMixture,
    FgmProportional,
    GfgmMixture,
    GfgmParams,
    GfgmProportional,
    LinearDependence,
    RuinProbability,
    RuinTimeLst,
    TwoSided,
    TwoSidedFgm,
    UniformProportional,
    build_ruin_system,
    build_time_system,
    chi_transforms,
)
from .numerics import Jet
from .pipeline import McParams, Scenario, compare_scenario

__all__ = ["CheckResult", "CRITERIA", "run_selfcheck", "residual_models", "calibration_models",
           "brute_force_coefficients", "takacs_transform"]

X_GRID = (0.5, 1.0, 2.0, 4.0)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    seconds: float
    summary: str
    detail: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number}: {status}  {self.name}  ({self.seconds:.1f}s)  {self.summary}"

    def to_dict(self):
        return {"number": self.number, "name": self.name, "passed": self.passed, "seconds": self.seconds,
                "summary": self.summary, "detail": self.detail}


def _random_points(seed, n=20, lo=0.1, hi=5.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, n) + 1j * rng.uniform(-hi, hi, n)


# ---------------------------------------------------------------------------
# 1. functional-equation residuals


def residual_models():
    e1, e12 = exponential(1.0), exponential(1.2)
    return {
        "causal_proportional": CausalProportional(erlang(2, 2.0), exponential(0.7), 0.25, 0.5, e1, erlang(2, 1.5)),
        "fgm_proportional": FgmProportional(e1, 2, 1.0, 0.5, 0.25),
        "fgm_mixture": FgmMixture(e1, 0.6, 0.25, 2, 1.0, 0.5, 2, 1.3, -0.5),
        "gfgm_proportional": GfgmProportional(e12, 1.0, -0.5, 1, 1, 2, 1, 0.5),
        "gfgm_mixture": GfgmMixture(e1, 0.6, 0.5, GfgmParams(0.5), 1.0, GfgmParams(0.3, 1, 1, 2, 2), 1.4),
        "linear_dependence": LinearDependence(1.0, 1.0, -0.5, 0.25, 0.1),
        "two_sided": TwoSided(e1, 0.7, (0.5, 0.5), (0.25, 0.5), (1.0,), (0.2,), 1.0, 1.5),
        "two_sided_fgm": TwoSidedFgm(erlang(2, 2.0), 0.7, 0.5, 0.2, 1.0, 1.5, 0.0, -0.5),
        "uniform_proportional": UniformProportional(e1, 1.0, 0.25, 0.5),
    }


def criterion_1(seed=1):
    t0 = time.perf_counter()
    pts = _random_points(seed)
    worst = {}
    for name, model in residual_models().items():
        sol = solve_unknowns(build_ruin_system(model))
        worst[name] = float(fe_residual(sol, pts).max())
    sec = time.perf_counter() - t0
    top = max(worst.values())
    ok = top < 1e-6 and sec < 60
    return CheckResult(1, "functional-equation residuals", ok, sec,
                       f"max residual {top:.2e} over {len(worst)} models", worst)


# ---------------------------------------------------------------------------
# 2. transform vs simulation


def calibration_models():
    e1 = exponential(1.0)
    return {
        "fgm_theta_-0.5": FgmProportional(e1, 1, 1.0, -0.5, 0.5),
        "fgm_theta_0": FgmProportional(e1, 1, 1.0, 0.0, 0.5),
        "fgm_theta_0.5": FgmProportional(e1, 1, 1.0, 0.5, 0.5),
        "causal": CausalProportional(e1, exponential(0.7), 0.25, 0.5, e1, erlang(2, 1.5)),
        "two_sided": TwoSided(e1, 0.7, (0.5, 0.5), (0.25, 0.5), (1.0,), (0.2,), 1.0, 1.5),
        "uniform": UniformProportional(e1, 1.0, 0.5, 1.0),
    }


def _agreement(models, functional, mc_n, seed, k=3.0):
    hits, total, detail = 0, 0, {}
    for name, model in models.items():
        sc = Scenario(model, functional, X_GRID, inversion=InversionParams(), mc=McParams(n=mc_n, seed=seed))
        rep = compare_scenario(sc)
        d = np.abs(np.asarray(rep.transform) - np.asarray(rep.mc_mean))
        ok = d <= k * np.asarray(rep.mc_half_width)
        hits += int(ok.sum())
        total += ok.size
        detail[name] = rep.to_dict()
    return hits, total, detail


def criterion_2(mc_n=10**6, seed=2024):
    t0 = time.perf_counter()
    hits, total, detail = _agreement(calibration_models(), RuinProbability(), mc_n, seed)
    sec = time.perf_counter() - t0
    ok = hits >= 0.95 * total and sec < 600
    return CheckResult(2, "transform vs simulation", ok, sec,
                       f"{hits}/{total} points within 3 half-widths (n={mc_n})", detail)


# ---------------------------------------------------------------------------
# 3. ruin-time transforms


def _time_models():
    e1 = exponential(1.0)
    return {
        "fgm_proportional": FgmProportional(e1, 1, 1.0, 0.5, 0.5),
        "linear_dependence": LinearDependence(1.0, 1.0, -0.5, 0.25, 0.1),
    }


def criterion_3(mc_n=10**6, seed=3033):
    t0 = time.perf_counter()
    hits, total, detail = 0, 0, {}
    for alpha in (0.5, 1.0):
        h, t, d = _agreement(_time_models(), RuinTimeLst(alpha), mc_n, seed)
        hits, total = hits + h, total + t
        detail.update({f"{k}_alpha_{alpha}": v for k, v in d.items()})
    pts = _random_points(seed, 10)
    gap = max(system_distance(build_time_system(model, 0.0), build_ruin_system(model), pts)
              for model in _time_models().values())
    sec = time.perf_counter() - t0
    ok = hits == total and gap <= 1e-12
    detail["alpha_zero_gap"] = gap
    return CheckResult(3, "ruin-time transforms", ok, sec,
                       f"{hits}/{total} points within 3 half-widths; alpha=0 gap {gap:.1e}", detail)


# ---------------------------------------------------------------------------
# 4. reduction identities


def takacs_transform(lam, mu, alpha, s):
    """``int e^{-sx} E(e^{-alpha tau_x}) dx`` for exponential gains and no dependence.

    The ruin time from ``x`` is a busy period with initial work ``x``, so the
    integrand is ``e^{-eta x}`` with ``eta`` the positive root of
    ``eta^2 + (mu - alpha - lam) eta - alpha mu = 0``.
    """
    b = mu - alpha - lam
    eta = (-b + np.sqrt(b * b + 4 * alpha * mu)) / 2
    return 1.0 / (np.asarray(s) + eta)


def reduction_pairs():
    B = exponential(1.2)
    e1, er2 = exponential(1.0), erlang(2, 1.0)
    fgm1 = FgmProportional(B, 1, 1.0, 0.3, 0.5)
    return {
        "theta=0 (independent case)": (
            build_ruin_system(FgmProportional(B, 2, 1.0, 0.0, 0.5)),
            build_ruin_system(CausalProportional(B, exponential(0.7), 0.5, 0.5, er2, er2)),
        ),
        "theta=0 (gfgm to fgm)": (
            build_ruin_system(GfgmProportional(B, 1.0, 0.0, 1, 1, 2, 1, 0.5)),
            build_ruin_system(FgmProportional(B, 1, 1.0, 0.0, 0.5)),
        ),
        "p=1 (fgm mixture)": (
            build_ruin_system(FgmMixture(B, 1.0, 0.5, 2, 1.0, 0.3, 2, 1.3, 0.4)),
            build_ruin_system(FgmProportional(B, 2, 1.0, 0.3, 0.5)),
        ),
        "p=1 (gfgm mixture)": (
            build_ruin_system(GfgmMixture(B, 1.0, 0.5, GfgmParams(0.3, 1, 1, 2, 1), 1.0, GfgmParams(0.2, 1, 1, 1, 2), 1.4)),
            build_ruin_system(GfgmProportional(B, 1.0, 0.3, 1, 1, 2, 1, 0.5)),
        ),
        "q=0 (two-sided fgm)": (
            build_ruin_system(TwoSidedFgm(B, 1.0, 0.5, 0.2, 1.0, 1.5, 0.3, 0.4)),
            build_ruin_system(fgm1),
        ),
        "q=0 (two-sided)": (
            build_ruin_system(TwoSided(B, 1.0, (1.0,), (0.5,), (1.0,), (0.2,), 1.0, 1.5)),
            build_ruin_system(FgmProportional(B, 1, 1.0, 0.0, 0.5)),
        ),
        "c=0 (ruin)": (
            build_ruin_system(LinearDependence(1.2, 1.0, 0.3, 0.5, 0.0)),
            build_ruin_system(fgm1),
        ),
        "c=0 (ruin time)": (
            build_time_system(LinearDependence(1.2, 1.0, 0.3, 0.5, 0.0), 0.7),
            build_time_system(fgm1, 0.7),
        ),
        "identical causal branches": (
            build_ruin_system(TwoSided(B, 1.0, (1.0,), (0.5,), (1.0,), (0.2,), 1.0, 1.5)),
            build_ruin_system(CausalProportional(B, e1, 0.5, 0.5, e1, e1)),
        ),
    }


def criterion_4(seed=4):
    t0 = time.perf_counter()
    pts = _random_points(seed, 10)
    gaps = {name: system_distance(a, b, pts) for name, (a, b) in reduction_pairs().items()}
    lam, mu, alpha = 1.0, 1.5, 0.5
    sol = solve_unknowns(build_time_system(LinearDependence(lam, mu, 0.0, 0.0, 0.0), alpha))
    s = np.array([0.5, 1.0, 2.0])
    busy = float(np.abs(rho_eval(sol, s) - takacs_transform(lam, mu, alpha, s)).max())
    sec = time.perf_counter() - t0
    ok = max(gaps.values()) <= 1e-12 and busy <= 1e-8
    detail = dict(gaps, busy_period_error=busy)
    return CheckResult(4, "reduction identities", ok, sec,
                       f"max system gap {max(gaps.values()):.1e}; busy-period error {busy:.1e}", detail)


# ---------------------------------------------------------------------------
# 5. root certificates


def root_cases():
    e1 = exponential(1.0)
    cases = {}
    for m in (1, 2):
        cases[f"fgm mixture m={m}"] = (FgmMixture(e1, 0.6, 0.25, 2, 1.0, 0.5, m, 1.3, -0.5), None, 3 * m - 1)
    for c2 in (1, 2):
        model = GfgmMixture(e1, 0.6, 0.25, GfgmParams(0.5), 1.0, GfgmParams(0.3, 1, 1, c2, 2), 1.4)
        cases[f"gfgm mixture c2={c2}"] = (model, None, c2 + 2)
    cases["busy-period case"] = (LinearDependence(1.0, 1.5, 0.5, 0.0, 0.0), 0.5, 2)
    return cases


def criterion_5():
    t0 = time.perf_counter()
    detail = {}
    ok = True
    for name, (model, alpha, expected) in root_cases().items():
        system = build_ruin_system(model) if alpha is None else build_time_system(model, alpha)
        cert = system.certificate
        good = cert.ok and len(cert.roots) == expected == cert.winding_number
        ok &= good
        detail[name] = dict(cert.to_dict(), required=expected)
    sec = time.perf_counter() - t0
    ok = ok and sec < 30
    counts = ", ".join(f"{k}: {len(v['roots'])}" for k, v in detail.items())
    return CheckResult(5, "root certificates", ok, sec, counts, detail)


# ---------------------------------------------------------------------------
# 6. lattice vs word enumeration


def _toy_system(n_maps):
    scales = [0.5, 0.6 + 0.1j, 0.7][:n_maps]
    maps = [AffineMap(sc, 0.0) for sc in scales]
    rates = [1.0, 1.7, 2.3][:n_maps]

    def coeff_fn(s):
        return stack([(s + r).reciprocal() * (0.3 / (l + 1)) for l, r in enumerate(rates)])

    def forcing_fn(s):
        return stack([(s + 1.0).reciprocal()])

    return FeqSystem(maps=maps, coeff_fn=coeff_fn, forcing_fn=forcing_fn, unknowns=[])


def brute_force_coefficients(system, s, depth):
    """Sum over all words of length ``<= depth``, grouped by map counts."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    L = len(system.maps)
    out = {}
    for d in range(depth + 1):
        for word in product(range(L), repeat=d):
            z = s.copy()
            w = np.ones_like(s)
            for l in word:
                w = w * system.coeff_fn(Jet.variable(z, 0)).c[0, :, l]
                z = system.maps[l](z)
            key = tuple(int(np.sum(np.asarray(word) == l)) for l in range(L))
            out[key] = out.get(key, 0) + w
    return out


def criterion_6(seed=6, depth=6):
    t0 = time.perf_counter()
    s = _random_points(seed, 10)
    worst = {}
    for n_maps in (2, 3):
        system = _toy_system(n_maps)
        lat = lattice_coefficients(system, s, depth)
        ref = brute_force_coefficients(system, s, depth)
        err = 0.0
        for key in set(lat) | set(ref):
            a = lat[key].c[0] if key in lat else 0.0
            err = max(err, float(np.abs(a - ref.get(key, 0.0)).max()))
        worst[f"{n_maps} maps"] = err
    sec = time.perf_counter() - t0
    top = max(worst.values())
    return CheckResult(6, "lattice vs word enumeration", top <= 1e-9, sec,
                       f"max coefficient error {top:.1e} to depth {depth}", worst)


# ---------------------------------------------------------------------------
# 7. derivative collocation


def _five_point(f, x, h, l):
    v = [f(x + k * h) for k in (-2, -1, 0, 1, 2)]
    if l == 1:
        return (v[0] - 8 * v[1] + 8 * v[3] - v[4]) / (12 * h)
    if l == 2:
        return (-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * h * h)
    return (-v[0] + 2 * v[1] - 2 * v[3] + v[4]) / (2 * h**3)


def criterion_7(h=4e-3):
    t0 = time.perf_counter()
    model = FgmProportional(exponential(1.0), 2, 1.0, 0.5, 0.25)
    sol = solve_unknowns(build_ruin_system(model))
    mu = model.mu
    jet = rho_eval(sol, mu, order=3)
    f = lambda z: complex(rho_eval(sol, z))
    rel = {}
    for l in (1, 2, 3):
        d_jet = factorial(l) * jet[l]
        d_fd = _five_point(f, mu, h, l)
        rel[f"order {l}"] = float(abs(d_jet - d_fd) / abs(d_fd))
    sec = time.perf_counter() - t0
    top = max(rel.values())
    return CheckResult(7, "derivative collocation", top <= 1e-4, sec, f"max relative gap {top:.1e}", rel)


# ---------------------------------------------------------------------------
# 8. analytical limits


def _limit_at_depth(system, a, s, depth=30, order=3):
    """Coefficient at the depth-``depth`` point, Taylor-extrapolated to 0."""
    z = np.asarray(s, dtype=complex) / (1 + a) ** depth
    c = system.coeff_fn(Jet.variable(z, order)).c.sum(axis=-1)    # (order+1, S)
    return sum(c[k] * (-z) ** k for k in range(order + 1))


def criterion_8(seed=8):
    t0 = time.perf_counter()
    s = _random_points(seed, 10)
    detail = {}
    a = 0.5
    B = exponential(1.0)
    fgm = build_ruin_system(FgmProportional(B, 2, 1.0, 0.5, a))
    phi0 = 1.0
    detail["fgm_limit"] = float(np.abs(_limit_at_depth(fgm, a, s) - phi0 / (1 + a)).max())
    gfgm = build_ruin_system(GfgmProportional(B, 1.0, 0.3, 1, 1, 2, 1, a))
    detail["gfgm_limit"] = float(np.abs(_limit_at_depth(gfgm, a, s) - 1 / (1 + a)).max())
    guard = {}
    for lo, hi in ((0.1, 3.0), (0.5, np.e * 1.5 - 1 + 1e-9)):
        try:
            UniformProportional(B, 1.0, lo, hi)
            guard[f"{lo},{hi:.4f}"] = False
        except ConvergenceGuard:
            guard[f"{lo},{hi:.4f}"] = True
    try:
        UniformProportional(B, 1.0, 0.5, 1.0)
        guard["0.5,1.0 accepted"] = log(2.0 / 1.5) < 1
    except ConvergenceGuard:
        guard["0.5,1.0 accepted"] = False
    detail["guard"] = guard
    Be = erlang(2, 1.3)
    detail["h_star_0"] = float(abs(h_star(Be, np.array([0.0]), 0).c[0, 0]))
    detail["gz_star_0"] = float(abs(gz_star(Be, 2, 1, np.array([0.0]), 0).c[0, 0] - 1))
    causal = CausalProportional(Be, exponential(0.7), 0.25, 0.5, B, B)
    c0, c1 = chi_transforms(causal, s)
    phi = Be.lst(Jet.variable(s, 0)).c[0]
    detail["chi_sum"] = float(np.abs(c0 + c1 - phi).max())
    causal_det = CausalProportional(Be, Deterministic(0.7), 0.25, 0.5, B, B)
    c0, c1 = chi_transforms(causal_det, s)
    detail["chi_sum_deterministic_threshold"] = float(np.abs(c0 + c1 - phi).max())
    sec = time.perf_counter() - t0
    nums = [v for k, v in detail.items() if k != "guard"]
    ok = max(nums) <= 1e-10 and all(guard.values())
    return CheckResult(8, "analytical limits", ok, sec,
                       f"max identity gap {max(nums):.1e}; guard {'ok' if all(guard.values()) else 'broken'}",
                       detail)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}


def run_selfcheck(numbers=None, mc_n=10**6, seed=None, echo=None):
    """Run the selected checks; ``echo`` receives one line per check."""
    out = []
    for k in sorted(numbers or CRITERIA):
        fn = CRITERIA[k]
        kw = {}
        if k in (2, 3):
            kw["mc_n"] = mc_n
        if seed is not None and "seed" in inspect.signature(fn).parameters:
            kw["seed"] = seed
        res = fn(**kw)
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out
