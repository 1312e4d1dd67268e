"""Mixed-Erlang marginals with closed-form transforms, plus a point mass.

Densities and survival functions of mixed-Erlang laws are finite sums of
``t^j e^{-k t}`` terms. :class:`ExpPoly` stores such sums so that products
(copula tilts, causal thresholds) and Laplace transforms stay exact.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import gammaincinv

from .errors import DomainError, OrderError, PoleError
from .numerics import Jet, compose, inv_power

__all__ = [
    "ExpPoly",
    "Component",
    "PhaseDist",
    "Deterministic",
    "exponential",
    "erlang",
    "hyperexponential",
    "lst_jet",
    "cdf_pdf",
    "sample",
    "lower_moment",
    "parse_distribution",
]

POLE_GUARD = 1e-9


def _key_rate(k):
    return float(f"{float(k):.14g}")


class ExpPoly:
    """Finite sum ``sum coef * t^j * exp(-rate * t)`` keyed by ``(j, rate)``."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        for (j, k), c in (terms or {}).items():
            self._add(j, k, c)

    def _add(self, j, k, c):
        key = (int(j), _key_rate(k))
        v = self.terms.get(key, 0.0) + c
        if v == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = v

    @classmethod
    def one(cls):
        return cls({(0, 0.0): 1.0})

    @classmethod
    def exp(cls, rate, coef=1.0):
        return cls({(0, rate): coef})

    def copy(self):
        return ExpPoly(dict(self.terms))

    def __add__(self, other):
        if not isinstance(other, ExpPoly):
            other = ExpPoly({(0, 0.0): other})
        out = self.copy()
        for (j, k), c in other.terms.items():
            out._add(j, k, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return ExpPoly({key: -c for key, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, ExpPoly):
            return ExpPoly({key: c * other for key, c in self.terms.items()})
        out = ExpPoly()
        for (j1, k1), c1 in self.terms.items():
            for (j2, k2), c2 in other.terms.items():
                out._add(j1 + j2, k1 + k2, c1 * c2)
        return out

    __rmul__ = __mul__

    def __pow__(self, n):
        out = ExpPoly.one()
        for _ in range(n):
            out = out * self
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for (j, k), c in self.terms.items():
            out = out + c * t**j * np.exp(-k * t)
        return out

    def rates(self):
        """Distinct rates with the highest power of ``t`` attached to each."""
        out = {}
        for j, k in self.terms:
            out[k] = max(out.get(k, -1), j)
        return out

    def laplace(self, x):
        """Laplace transform evaluated at a jet argument ``x``."""
        out = None
        for (j, k), c in self.terms.items():
            if np.any(np.abs(x.value + k) <= POLE_GUARD):
                raise PoleError(f"Laplace transform evaluated at its pole {-k}")
            term = inv_power(x + k, j + 1) * (c * factorial(j))
            out = term if out is None else out + term
        if out is None:
            out = x * 0.0
        return out

    def laplace_value(self, s):
        """Laplace transform at complex point(s) ``s`` (order 0)."""
        return self.laplace(Jet.variable(np.asarray(s, dtype=complex), 0)).value

    def integral(self):
        """Integral over ``[0, inf)``; every rate must be positive."""
        total = 0.0
        for (j, k), c in self.terms.items():
            if k <= 0:
                raise DomainError("integral of a non-decaying exponential polynomial")
            total += c * factorial(j) / k ** (j + 1)
        return total

    def pole_terms(self):
        """Partial fractions of the Laplace transform: ``(coef, pole, mult)``."""
        return [(c * factorial(j), -k, j + 1) for (j, k), c in self.terms.items()]

    def __repr__(self):
        return f"ExpPoly({self.terms})"


@dataclass(frozen=True)
class Component:
    weight: float
    rate: float
    stages: int = 1


class PhaseDist:
    """Finite mixture of Erlang components.

    Parameters
    ----------
    components : sequence of (weight, rate, stages)
    """

    def __init__(self, components):
        comps = []
        for item in components:
            if isinstance(item, Component):
                comps.append(item)
            else:
                w, r, n = (tuple(item) + (1,))[:3]
                comps.append(Component(float(w), float(r), int(n)))
        if not comps:
            raise DomainError("a phase distribution needs at least one component")
        if abs(sum(c.weight for c in comps) - 1.0) > 1e-12:
            raise DomainError("component weights must sum to 1")
        for c in comps:
            if c.weight < 0 or c.rate <= 0 or c.stages < 1:
                raise DomainError(f"invalid component {c}")
        self.components = tuple(comps)
        self._pdf = None
        self._sf = None

    def __eq__(self, other):
        return isinstance(other, PhaseDist) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __repr__(self):
        parts = ", ".join(f"({c.weight:g}, {c.rate:g}, {c.stages})" for c in self.components)
        return f"PhaseDist([{parts}])"

    @property
    def has_density(self):
        return True

    @property
    def rates(self):
        return sorted({c.rate for c in self.components})

    @property
    def max_stages(self):
        return max(c.stages for c in self.components)

    def mean(self):
        return sum(c.weight * c.stages / c.rate for c in self.components)

    def second_moment(self):
        return sum(c.weight * c.stages * (c.stages + 1) / c.rate**2 for c in self.components)

    def variance(self):
        return self.second_moment() - self.mean() ** 2

    def pdf_poly(self):
        if self._pdf is None:
            p = ExpPoly()
            for c in self.components:
                p = p + ExpPoly({(c.stages - 1, c.rate): c.weight * c.rate**c.stages / factorial(c.stages - 1)})
            self._pdf = p
        return self._pdf

    def sf_poly(self):
        if self._sf is None:
            p = ExpPoly()
            for c in self.components:
                for l in range(c.stages):
                    p = p + ExpPoly({(l, c.rate): c.weight * c.rate**l / factorial(l)})
            self._sf = p
        return self._sf

    def lst(self, x):
        """LST at a jet argument."""
        return self.pdf_poly().laplace(x)

    def survival_lt(self, x):
        """Laplace transform of the survival function, ``(1 - lst(s)) / s``."""
        return self.sf_poly().laplace(x)

    def pdf(self, x):
        return self.pdf_poly()(x)

    def sf(self, x):
        return np.clip(self.sf_poly()(x), 0.0, 1.0)

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        w = np.array([c.weight for c in self.components])
        idx = rng.choice(len(w), size=n, p=w) if len(w) > 1 else np.zeros(n, dtype=int)
        shapes = np.array([c.stages for c in self.components], dtype=float)[idx]
        scales = 1.0 / np.array([c.rate for c in self.components])[idx]
        out = rng.gamma(shapes, scales)
        return out[0] if size is None else out

    def ppf(self, p):
        """Quantile function (vectorised)."""
        p = np.asarray(p, dtype=float)
        if len(self.components) == 1:
            c = self.components[0]
            if c.stages == 1:
                return -np.log1p(-p) / c.rate
            return gammaincinv(c.stages, p) / c.rate
        # bracketed Newton on the mixture cdf
        lo = np.zeros_like(p)
        hi = np.full_like(p, 1.0)
        while True:
            short = self.cdf(hi) < p
            if not short.any():
                break
            hi = np.where(short, 2 * hi, hi)
        x = 0.5 * (lo + hi)
        for _ in range(200):
            f = self.cdf(x) - p
            lo = np.where(f < 0, x, lo)
            hi = np.where(f >= 0, x, hi)
            d = self.pdf(x)
            step = np.where(d > 0, f / np.where(d > 0, d, 1.0), 0.0)
            xn = x - step
            bad = (xn <= lo) | (xn >= hi) | (d <= 0)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            if np.all(np.abs(xn - x) <= 1e-14 * (1 + np.abs(x))):
                x = xn
                break
            x = xn
        return x

    def to_dict(self):
        return {
            "kind": "mixed_erlang",
            "components": [{"w": c.weight, "rate": c.rate, "stages": c.stages} for c in self.components],
        }


@dataclass(frozen=True)
class Deterministic:
    """Point mass at ``value``."""

    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError("deterministic value must be >= 0")

    @property
    def has_density(self):
        return False

    def mean(self):
        return self.value

    def variance(self):
        return 0.0

    def lst(self, x):
        return (x * (-self.value)).exp()

    def survival_lt(self, x):
        d = x.order
        z = x.value
        tay = np.empty((d + 1,) + np.shape(z), dtype=complex)
        for r in range(d + 1):
            tay[r] = (-1) ** r * lower_moment(r, z, self.value) / factorial(r)
        return compose(tay, x)

    def sf(self, x):
        return (np.asarray(x, dtype=float) < self.value).astype(float)

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sample(self, rng, size=None):
        return self.value if size is None else np.full(size, self.value)

    def to_dict(self):
        return {"kind": "deterministic", "value": self.value}


def exponential(rate):
    return PhaseDist([(1.0, rate, 1)])


def erlang(stages, rate):
    return PhaseDist([(1.0, rate, stages)])


def hyperexponential(weights, rates):
    return PhaseDist([(w, r, 1) for w, r in zip(weights, rates)])


def lower_moment(n, z, tau):
    """``int_0^tau t^n e^{-z t} dt`` for complex ``z`` (vectorised)."""
    z = np.asarray(z, dtype=complex)
    w = z * tau
    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w) <= 8 + n
    if np.any(small):
        ws = w[small]
        acc = np.zeros(ws.shape, dtype=complex)
        term = np.ones(ws.shape, dtype=complex)
        m = 0
        while True:
            add = term / (n + m + 1)
            acc = acc + add
            if np.all(np.abs(add) <= 1e-17 * np.maximum(np.abs(acc), 1e-300)) and m > 2:
                break
            m += 1
            term = term * (-ws) / m
        out[small] = tau ** (n + 1) * acc
    if np.any(~small):
        zl, wl = z[~small], w[~small]
        partial = np.zeros(wl.shape, dtype=complex)
        term = np.ones(wl.shape, dtype=complex)
        for i in range(n + 1):
            partial = partial + term
            term = term * wl / (i + 1)
        out[~small] = factorial(n) / zl ** (n + 1) * (1.0 - np.exp(-wl) * partial)
    return out


def lst_jet(dist, s, order):
    """Jet of the LST of ``dist`` at ``s`` up to ``order``."""
    if order < 0:
        raise OrderError("order must be >= 0")
    if isinstance(dist, PhaseDist):
        for r in dist.rates:
            if np.any(np.abs(np.asarray(s) + r) <= POLE_GUARD):
                raise PoleError(f"s hits the pole -{r}")
    return dist.lst(Jet.variable(s, order))


def cdf_pdf(dist, x):
    """Return ``(cdf, pdf)`` at ``x`` (``pdf`` is nan for a point mass)."""
    if np.any(np.asarray(x) < 0):
        raise DomainError("x must be >= 0")
    if isinstance(dist, Deterministic):
        return dist.cdf(x), np.full(np.shape(x), np.nan)
    return dist.cdf(x), dist.pdf(x)


def sample(dist, rng, size=None):
    return dist.sample(rng, size)


def parse_distribution(d):
    """Build a distribution from its scenario-file mapping."""
    from .errors import ParseError

    if not isinstance(d, dict) or "kind" not in d:
        raise ParseError(f"distribution must be a mapping with a 'kind': {d!r}")
    kind = d["kind"]
    try:
        if kind == "mixed_erlang":
            return PhaseDist([(c["w"], c["rate"], c.get("stages", 1)) for c in d["components"]])
        if kind == "exponential":
            return exponential(float(d["rate"]))
        if kind == "erlang":
            return erlang(int(d["stages"]), float(d["rate"]))
        if kind == "deterministic":
            return Deterministic(float(d["value"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad distribution {d!r}: {exc}") from exc
    except DomainError as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown distribution kind {kind!r}")
