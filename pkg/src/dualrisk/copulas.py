"""FGM and generalised FGM dependence between an interarrival time and a gain.

For a phase-type interarrival ``B`` the copula tilt of the joint density
splits into products of exponential polynomials in each coordinate, so the
pieces needed by the transform solvers (``h``, ``g_Z``, ``k_C``) are kept as
:class:`ExpPoly` objects.
"""

from dataclasses import dataclass

import numpy as np

from .distributions import Deterministic, ExpPoly
from .errors import DomainError, NoDensityError, ParseError, RejectionBudgetError
from .numerics import Jet

__all__ = [
    "Independent",
    "Fgm",
    "Gfgm",
    "copula_density",
    "copula_cdf",
    "h_poly",
    "h_star",
    "gz_poly",
    "gz_star",
    "kc_poly",
    "kc_rates",
    "gain_tilt_poly",
    "sample_pair",
    "sample_uv",
    "parse_copula",
]


@dataclass(frozen=True)
class Independent:
    def to_dict(self):
        return {"type": "independent"}


@dataclass(frozen=True)
class Fgm:
    theta: float

    def __post_init__(self):
        if not -1.0 < self.theta < 1.0:
            raise DomainError("FGM theta must lie in (-1, 1)")

    def to_dict(self):
        return {"type": "fgm", "theta": self.theta}


def _poly_deriv(u, k, b):
    # d/du u^k (1-u)^b
    return k * u ** (k - 1) * (1 - u) ** b - b * u**k * (1 - u) ** (b - 1)


@dataclass(frozen=True)
class Gfgm:
    """``C(u, v) = uv + theta u^k (1-u)^b v^c (1-v)^d``."""

    theta: float
    k: int = 1
    b: int = 1
    c: int = 1
    d: int = 1

    def __post_init__(self):
        for name in ("k", "b", "c", "d"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"GFGM exponent {name} must be >= 1")
        u = np.linspace(0.0, 1.0, 101)
        pu = _poly_deriv(u, self.k, self.b)
        gv = _poly_deriv(u, self.c, self.d)
        dens = 1.0 + self.theta * np.outer(pu, gv)
        if dens.min() < 0:
            raise DomainError(f"GFGM theta={self.theta} gives a negative density")

    def p_prime(self, u):
        return _poly_deriv(u, self.k, self.b)

    def g_prime(self, v):
        return _poly_deriv(v, self.c, self.d)

    def envelope(self):
        grid = np.linspace(0.0, 1.0, 1001)
        return 1.0 + abs(self.theta) * np.abs(self.p_prime(grid)).max() * np.abs(self.g_prime(grid)).max()

    def to_dict(self):
        return {"type": "gfgm", "theta": self.theta, "k": self.k, "b": self.b, "c": self.c, "d": self.d}


def _check_square(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise DomainError("copula arguments must lie in [0, 1]")
    return u, v


def copula_density(cop, u, v):
    u, v = _check_square(u, v)
    if isinstance(cop, Independent):
        return np.ones(np.broadcast(u, v).shape)
    if isinstance(cop, Fgm):
        return 1.0 + cop.theta * (1 - 2 * u) * (1 - 2 * v)
    return 1.0 + cop.theta * cop.p_prime(u) * cop.g_prime(v)


def copula_cdf(cop, u, v):
    u, v = _check_square(u, v)
    if isinstance(cop, Independent):
        return u * v
    if isinstance(cop, Fgm):
        return u * v + cop.theta * u * v * (1 - u) * (1 - v)
    return u * v + cop.theta * u**cop.k * (1 - u) ** cop.b * v**cop.c * (1 - v) ** cop.d


def _need_density(B):
    if isinstance(B, Deterministic) or not getattr(B, "has_density", False):
        raise NoDensityError("copula transforms need an interarrival law with a density")


def h_poly(B):
    """``f_B (1 - 2 F_B)`` as an exponential polynomial."""
    _need_density(B)
    f, S = B.pdf_poly(), B.sf_poly()
    return f * S * 2.0 - f


def h_star(B, s, order):
    return h_poly(B).laplace(Jet.variable(s, order))


def _pprime_of_cdf(S, k, b):
    # p'(F) with F = 1 - S, p(u) = u^k (1-u)^b
    one_minus_s = 1.0 - S
    return one_minus_s ** (k - 1) * S**b * float(k) - one_minus_s**k * S ** (b - 1) * float(b)


def gz_poly(B, k, b):
    """``f_B - f_B p'(F_B)`` as an exponential polynomial."""
    _need_density(B)
    f = B.pdf_poly()
    return f - f * _pprime_of_cdf(B.sf_poly(), k, b)


def gz_star(B, k, b, s, order):
    return gz_poly(B, k, b).laplace(Jet.variable(s, order))


def kc_poly(mu, c, d):
    """``k_C(y) = g'(1 - e^{-mu y}) mu e^{-mu y}`` for ``g(v) = v^c (1-v)^d``."""
    E = ExpPoly.exp(mu)
    return _pprime_of_cdf(E, c, d) * E * mu


def kc_rates(mu, c, d):
    """Exponential-mixture form of ``k_C``: list of ``(coefficient, rate)``."""
    return sorted(((coef, rate) for (j, rate), coef in kc_poly(mu, c, d).terms.items()), key=lambda t: t[1])


def gain_tilt_poly(C, cop):
    """Gain-side factor of the copula tilt: ``f_C(1-2F_C)`` or ``f_C g'(F_C)``."""
    f, S = C.pdf_poly(), C.sf_poly()
    if isinstance(cop, Fgm):
        return f * S * 2.0 - f
    if isinstance(cop, Gfgm):
        return f * _pprime_of_cdf(S, cop.c, cop.d)
    raise DomainError("independent copula has no tilt")


def sample_uv(cop, rng, size, max_trials=10**6):
    """Draw ``size`` pairs of uniforms with the copula's law."""
    u = rng.random(size)
    if isinstance(cop, Independent):
        return u, rng.random(size)
    if isinstance(cop, Fgm):
        w = rng.random(size)
        A = cop.theta * (1 - 2 * u)
        # conditional cdf v + A v (1 - v) = w, smaller root in [0, 1]
        disc = np.sqrt((1 + A) ** 2 - 4 * A * w)
        v = 2 * w / ((1 + A) + disc)
        return u, v
    M = cop.envelope()
    out_u = np.empty(size)
    out_v = np.empty(size)
    todo = np.arange(size)
    trials = 0
    while todo.size:
        uu = rng.random(todo.size)
        vv = rng.random(todo.size)
        acc = rng.random(todo.size) * M <= copula_density(cop, uu, vv)
        out_u[todo[acc]] = uu[acc]
        out_v[todo[acc]] = vv[acc]
        todo = todo[~acc]
        trials += 1
        if trials > max_trials:
            raise RejectionBudgetError("GFGM rejection sampler exceeded its trial budget")
    return out_u, out_v


def sample_pair(cop, B, C, rng, size=None):
    """Draw ``(t, y)`` with marginals ``B``, ``C`` joined by ``cop``."""
    n = 1 if size is None else size
    if isinstance(cop, Independent):
        t, y = B.sample(rng, n), C.sample(rng, n)
    else:
        _need_density(B)
        u, v = sample_uv(cop, rng, n)
        t, y = B.ppf(u), C.ppf(v)
    if size is None:
        return float(np.asarray(t)[0]), float(np.asarray(y)[0])
    return np.asarray(t), np.asarray(y)


def parse_copula(d):
    if d is None:
        return Independent()
    if not isinstance(d, dict) or "type" not in d:
        raise ParseError(f"dependence must be a mapping with a 'type': {d!r}")
    try:
        kind = d["type"]
        if kind == "independent":
            return Independent()
        if kind == "fgm":
            return Fgm(float(d["theta"]))
        if kind == "gfgm":
            return Gfgm(float(d["theta"]), int(d["k"]), int(d["b"]), int(d["c"]), int(d["d"]))
    except (KeyError, TypeError, DomainError) as exc:
        raise ParseError(f"bad dependence {d!r}: {exc}") from exc
    raise ParseError(f"unknown dependence type {d['type']!r}")

