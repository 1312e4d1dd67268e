"""Monte Carlo simulation of the surplus process for every model variant.

Paths are simulated in fixed-size chunks, each with its own generator
spawned from one ``SeedSequence``; results depend only on the seed and the
chunk size, never on how chunks are distributed over workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .copulas import Fgm, Independent, sample_pair
from .distributions import erlang, exponential
from .errors import DomainError
from .models import (
    CausalProportional,
    FgmMixture,
    FgmProportional,
    GfgmMixture,
    GfgmProportional,
    LinearDependence,
    RuinProbability,
    RuinTimeLst,
    TwoSided,
    TwoSidedFgm,
    UniformProportional,
)

__all__ = ["PathCaps", "McEstimate", "Outcome", "simulate_path", "simulate_paths", "estimate"]

RUINED, SURVIVED, CENSORED = 0, 1, 2
CHUNK = 1 << 16
CENSOR_LIMIT = 0.005


@dataclass(frozen=True)
class PathCaps:
    t_max: float = 1e4
    u_cap: float = None
    max_jumps: int = 100_000

    def resolved(self, x0):
        u_cap = max(10.0 * x0, 50.0) if self.u_cap is None else self.u_cap
        if self.t_max <= 0 or u_cap <= 0 or self.max_jumps <= 0:
            raise DomainError("path caps must be positive")
        return PathCaps(self.t_max, float(u_cap), int(self.max_jumps))

    def to_dict(self):
        return {"t_max": self.t_max, "u_cap": self.u_cap, "max_jumps": self.max_jumps}


@dataclass(frozen=True)
class Outcome:
    kind: str           # "ruined", "survived" or "censored"
    time: float = float("nan")


@dataclass
class McEstimate:
    mean: float
    half_width_95: float
    n: int
    censored_fraction: float
    censoring_excess: bool = False

    def to_dict(self):
        return {
            "mean": self.mean,
            "half_width": self.half_width_95,
            "n": self.n,
            "censored_fraction": self.censored_fraction,
            "censoring_excess": self.censoring_excess,
        }


# ---------------------------------------------------------------------------
# one jump for a batch of paths: returns interarrival, post-jump surplus and a
# flag for downward jumps


def _pair(copula, B, C, rng, n):
    return sample_pair(copula, B, C, rng, n)


def _step_causal(model, u, rng):
    n = u.size
    b = model.B.sample(rng, n)
    t = model.T.sample(rng, n)
    c0 = model.C0.sample(rng, n)
    c1 = model.C1.sample(rng, n)
    v = np.maximum(u - b, 0.0)
    first = t >= b
    new = np.where(first, (1 + model.a0) * v + c0, (1 + model.a1) * v + c1)
    return b, new, None


def _step_fgm(model, u, rng):
    b, c = _pair(Fgm(model.theta), model.B, erlang(model.n, model.mu), rng, u.size)
    return b, (1 + model.a) * np.maximum(u - b, 0.0) + c, None


def _step_fgm_mixture(model, u, rng):
    n = u.size
    up = rng.random(n) < model.p
    b1, c = _pair(Fgm(model.theta1), model.B, erlang(model.n, model.mu), rng, n)
    b2, d = _pair(Fgm(model.theta2), model.B, erlang(model.m, model.nu), rng, n)
    b = np.where(up, b1, b2)
    v = np.maximum(u - b, 0.0)
    return b, np.where(up, (1 + model.a) * v + c, v + d), None


def _step_gfgm(model, u, rng):
    b, c = _pair(model.copula, model.B, exponential(model.mu), rng, u.size)
    return b, (1 + model.a) * np.maximum(u - b, 0.0) + c, None


def _step_gfgm_mixture(model, u, rng):
    n = u.size
    up = rng.random(n) < model.p
    b1, c = _pair(model.gfgm1.copula, model.B, exponential(model.mu), rng, n)
    b2, d = _pair(model.gfgm2.copula, model.B, exponential(model.nu), rng, n)
    b = np.where(up, b1, b2)
    v = np.maximum(u - b, 0.0)
    return b, np.where(up, (1 + model.a) * v + c, v + d), None


def _step_linear(model, u, rng):
    b, c = _pair(Fgm(model.theta), exponential(model.lam), exponential(model.mu), rng, u.size)
    w = model.c * u + b
    return w, (1 + model.a) * np.maximum(u - w, 0.0) + c, None


def _branch(rng, weights, n):
    w = np.asarray(weights, dtype=float)
    return np.minimum(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(n), side="right"), len(w) - 1)


def _step_two_sided(model, u, rng):
    n = u.size
    b = model.B.sample(rng, n)
    up = rng.random(n) < model.p
    v = np.maximum(u - b, 0.0)
    a = np.asarray(model.a)[_branch(rng, model.k, n)]
    c = exponential(model.mu).sample(rng, n)
    new_up = (1 + a) * v + c
    if model.m:
        beta = np.asarray(model.beta)[_branch(rng, model.m, n)]
    else:
        beta = np.zeros(n)
    d = exponential(model.nu).sample(rng, n)
    new_down = np.maximum((1 + beta) * v - d, 0.0)
    return b, np.where(up, new_up, new_down), ~up


def _step_two_sided_fgm(model, u, rng):
    n = u.size
    up = rng.random(n) < model.p
    b1, c = _pair(Fgm(model.theta1), model.B, exponential(model.mu), rng, n)
    b2, d = _pair(Fgm(model.theta2), model.B, exponential(model.nu), rng, n)
    b = np.where(up, b1, b2)
    v = np.maximum(u - b, 0.0)
    new = np.where(up, (1 + model.a) * v + c, np.maximum((1 + model.beta) * v - d, 0.0))
    return b, new, ~up


def _step_uniform(model, u, rng):
    n = u.size
    b = model.B.sample(rng, n)
    vfac = rng.uniform(model.a, model.b, n)
    c = exponential(model.mu).sample(rng, n)
    return b, (1 + vfac) * np.maximum(u - b, 0.0) + c, None


_STEPS = {
    CausalProportional: _step_causal,
    FgmProportional: _step_fgm,
    FgmMixture: _step_fgm_mixture,
    GfgmProportional: _step_gfgm,
    GfgmMixture: _step_gfgm_mixture,
    LinearDependence: _step_linear,
    TwoSided: _step_two_sided,
    TwoSidedFgm: _step_two_sided_fgm,
    UniformProportional: _step_uniform,
}


def simulate_paths(model, x0, rng, caps, n):
    """Simulate ``n`` paths from capital ``x0``; returns status codes and ruin times."""
    step = _STEPS.get(type(model))
    if step is None:
        raise DomainError(f"no simulator for {type(model).__name__}")
    caps = caps.resolved(x0)
    status = np.full(n, -1, dtype=np.int8)
    times = np.full(n, np.nan)
    if x0 <= 0:
        status[:] = RUINED
        times[:] = 0.0
        return status, times
    u = np.full(n, float(x0))
    t = np.zeros(n)
    jumps = np.zeros(n, dtype=np.int64)
    act = np.arange(n)
    while act.size:
        ua = u[act]
        w, new, down = step(model, ua, rng)
        ruin_wait = w >= ua
        ta = t[act]
        idx = act[ruin_wait]
        status[idx] = RUINED
        times[idx] = ta[ruin_wait] + ua[ruin_wait]
        keep = ~ruin_wait
        act, new, ta, w = act[keep], new[keep], ta[keep], w[keep]
        ta = ta + w
        t[act] = ta
        u[act] = new
        jumps[act] += 1
        if down is not None:
            hit = down[keep] & (new <= 0.0)
            status[act[hit]] = RUINED
            times[act[hit]] = ta[hit]
        done = status[act] >= 0
        up = ~done & (new >= caps.u_cap)
        status[act[up]] = SURVIVED
        cens = ~done & ~up & ((ta > caps.t_max) | (jumps[act] >= caps.max_jumps))
        status[act[cens]] = CENSORED
        act = act[status[act] < 0]
    return status, times


def simulate_path(model, x0, rng, caps=PathCaps()):
    """One path: :class:`Outcome` with the ruin time when ruined."""
    status, times = simulate_paths(model, x0, rng, caps, 1)
    kind = {RUINED: "ruined", SURVIVED: "survived", CENSORED: "censored"}[int(status[0])]
    return Outcome(kind, float(times[0]))


def _chunk_sums(args):
    model, x0, alpha, caps, size, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    status, times = simulate_paths(model, x0, rng, caps, size)
    ruined = status == RUINED
    if alpha is None:
        val = ruined.astype(float)
    else:
        val = np.where(ruined, np.exp(-alpha * np.where(ruined, times, 0.0)), 0.0)
    return np.sum(val), np.sum(val * val), int(np.sum(status == CENSORED))


def estimate(model, x0, functional=RuinProbability(), n=10**5, caps=PathCaps(), seed=0, workers=1):
    """Monte Carlo estimate of ``R(x0)`` or ``E(e^{-alpha tau}; tau < inf)``."""
    if n < 1000:
        raise DomainError("need at least 1000 replications")
    if isinstance(functional, RuinTimeLst):
        alpha = complex(functional.alpha)
        if alpha.imag != 0:
            raise DomainError("simulation needs a real alpha")
        alpha = alpha.real
    else:
        alpha = None
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(model, float(x0), alpha, caps, sz, sq) for sz, sq in zip(sizes, seqs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_chunk_sums, jobs))
    else:
        parts = [_chunk_sums(j) for j in jobs]
    s1 = np.sum([p[0] for p in parts])
    s2 = np.sum([p[1] for p in parts])
    cens = sum(p[2] for p in parts)
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
    frac = cens / n
    return McEstimate(float(mean), float(1.96 * np.sqrt(var / n)), n, frac, frac >= CENSOR_LIMIT)
