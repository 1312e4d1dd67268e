"""Model variants and their transform equations.

Every gain is of the form ``(1 + a) w + Y`` (``a = 0`` for additive jumps) or
``[(1 + beta) w - Y]^+`` for losses, where ``w`` is the surplus just before
the jump. The joint law of (interarrival, jump size) is written as a finite
sum of products ``A(t) G(y)`` with ``G`` an exponential polynomial, so the
transform of the ruin probability satisfies

    rho(s) = S_B(s) + sum_branches weight * sum_parts A^(s) K_G(s)

with ``S_B`` the transform of the interarrival survival function and ``K_G``
the transform of ``w -> int R(g w + y) G(y) dy``. For a term
``y^j e^{-k y}`` and ``D = s - k g``,

    K(s) = (-1)^j j! [ sum_{l<=j} rho^{(l)}(k) g^{j-l} / (l! D^{j-l+1})
                       - rho(s / g) g^j / D^{j+1} ].

Losses give ``rho(s / g) j! g^j / (s + k g)^{j+1}`` plus the transform of the
overshoot probability.
"""

from dataclasses import dataclass, field, fields
from math import factorial, log

import numpy as np

from .copulas import Fgm, Gfgm, gain_tilt_poly, gz_poly, h_poly, kc_poly
from .distributions import Deterministic, ExpPoly, PhaseDist, erlang, exponential, lower_moment, parse_distribution
from .errors import (
    ConvergenceGuard,
    DomainError,
    InputError,
    NoDensityError,
    ParseError,
    UnsupportedCombination,
    UnsupportedFunctional,
)
from .feq import AffineMap, ExtraEquation, FeqSystem, Unknown, stack
from .numerics import Jet, compose
from .roots import PoleSum, rhp_roots

__all__ = [
    "CausalProportional",
    "FgmProportional",
    "FgmMixture",
    "GfgmProportional",
    "GfgmMixture",
    "GfgmParams",
    "LinearDependence",
    "TwoSided",
    "TwoSidedFgm",
    "UniformProportional",
    "RuinProbability",
    "RuinTimeLst",
    "MODEL_TYPES",
    "build_ruin_system",
    "build_time_system",
    "build_system",
    "boole_rule",
    "log_grid_rule",
    "parse_model",
    "chi_transforms",
    "model_to_dict",
    "psi_iterate",
]


# ---------------------------------------------------------------------------
# model parameters


def _prob(x, name):
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1]")


def _factor(x, name):
    if not x > 0:
        raise DomainError(f"proportional factor {name} must be > 0")


def _theta(x, name):
    if not -1.0 < x < 1.0:
        raise DomainError(f"{name} must lie in (-1, 1)")


@dataclass(frozen=True)
class CausalProportional:
    """Branch 0 (``a0``, ``C0``) when the threshold ``T >= B``, else branch 1."""

    B: object
    T: object
    a0: float
    a1: float
    C0: PhaseDist
    C1: PhaseDist

    def __post_init__(self):
        _factor(self.a0, "a0")
        _factor(self.a1, "a1")


@dataclass(frozen=True)
class FgmProportional:
    B: object
    n: int
    mu: float
    theta: float
    a: float

    def __post_init__(self):
        _factor(self.a, "a")
        _theta(self.theta, "theta")
        if self.n < 1 or self.mu <= 0:
            raise DomainError("need n >= 1 and mu > 0")


@dataclass(frozen=True)
class FgmMixture:
    """Proportional FGM gain w.p. ``p``, additive FGM gain w.p. ``1 - p``."""

    B: object
    p: float
    a: float
    n: int
    mu: float
    theta1: float
    m: int
    nu: float
    theta2: float

    def __post_init__(self):
        _prob(self.p, "p")
        _factor(self.a, "a")
        _theta(self.theta1, "theta1")
        _theta(self.theta2, "theta2")
        if min(self.n, self.m) < 1 or min(self.mu, self.nu) <= 0:
            raise DomainError("need n, m >= 1 and positive rates")


@dataclass(frozen=True)
class GfgmProportional:
    B: object
    mu: float
    theta: float
    k: int
    b: int
    c: int
    d: int
    a: float

    def __post_init__(self):
        _factor(self.a, "a")
        Gfgm(self.theta, self.k, self.b, self.c, self.d)

    @property
    def copula(self):
        return Gfgm(self.theta, self.k, self.b, self.c, self.d)


@dataclass(frozen=True)
class GfgmParams:
    theta: float
    k: int = 1
    b: int = 1
    c: int = 1
    d: int = 1

    def __post_init__(self):
        Gfgm(self.theta, self.k, self.b, self.c, self.d)

    @property
    def copula(self):
        return Gfgm(self.theta, self.k, self.b, self.c, self.d)


@dataclass(frozen=True)
class GfgmMixture:
    B: object
    p: float
    a: float
    gfgm1: GfgmParams
    mu: float
    gfgm2: GfgmParams
    nu: float

    def __post_init__(self):
        _prob(self.p, "p")
        _factor(self.a, "a")


@dataclass(frozen=True)
class LinearDependence:
    """Exponential interarrival ``B`` shifted by ``c`` times the surplus."""

    lam: float
    mu: float
    theta: float
    a: float
    c: float

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise DomainError("rates must be positive")
        _theta(self.theta, "theta")
        if not 0.0 <= self.c < 1.0:
            raise DomainError("c must lie in [0, 1)")
        if self.a < 0:
            raise DomainError("a must be >= 0")


@dataclass(frozen=True)
class TwoSided:
    B: object
    p: float
    k: tuple
    a: tuple
    m: tuple
    beta: tuple
    mu: float
    nu: float

    def __post_init__(self):
        _prob(self.p, "p")
        object.__setattr__(self, "k", tuple(float(x) for x in self.k))
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "m", tuple(float(x) for x in self.m))
        object.__setattr__(self, "beta", tuple(float(x) for x in self.beta))
        if len(self.k) != len(self.a) or len(self.m) != len(self.beta) or not self.k:
            raise DomainError("branch weights and factors must pair up")
        if self.p > 0 and abs(sum(self.k) - 1) > 1e-12:
            raise DomainError("up-branch weights must sum to 1")
        if self.p < 1 and (not self.m or abs(sum(self.m) - 1) > 1e-12):
            raise DomainError("down-branch weights must sum to 1")
        for x in self.a:
            _factor(x, "a_l")
        for x in self.beta:
            if x < 0:
                raise DomainError("down factors beta_h must be >= 0")


@dataclass(frozen=True)
class TwoSidedFgm:
    B: object
    p: float
    a: float
    beta: float
    mu: float
    nu: float
    theta1: float
    theta2: float

    def __post_init__(self):
        _prob(self.p, "p")
        _factor(self.a, "a")
        if self.beta < 0:
            raise DomainError("beta must be >= 0")
        _theta(self.theta1, "theta1")
        _theta(self.theta2, "theta2")


@dataclass(frozen=True)
class UniformProportional:
    """Gain ``(1 + V) w + C`` with ``V ~ U[a, b]``."""

    B: object
    mu: float
    a: float
    b: float
    panels: int = 24

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise DomainError("need 0 < a < b")
        if self.panels < 4 or self.panels % 4:
            raise DomainError("panels must be a positive multiple of 4")
        if log((1 + self.b) / (1 + self.a)) >= 1:
            raise ConvergenceGuard(
                f"ln((1+b)/(1+a)) = {log((1 + self.b) / (1 + self.a)):.4f} >= 1: series guard violated"
            )


@dataclass(frozen=True)
class RuinProbability:
    pass


@dataclass(frozen=True)
class RuinTimeLst:
    alpha: complex

    def __post_init__(self):
        if complex(self.alpha).real < 0:
            raise DomainError("Re(alpha) must be >= 0")


MODEL_TYPES = {
    "causal_proportional": CausalProportional,
    "fgm_proportional": FgmProportional,
    "fgm_mixture": FgmMixture,
    "gfgm_proportional": GfgmProportional,
    "gfgm_mixture": GfgmMixture,
    "linear_dependence": LinearDependence,
    "two_sided": TwoSided,
    "two_sided_fgm": TwoSidedFgm,
    "uniform_proportional": UniformProportional,
}

# ---------------------------------------------------------------------------
# time-side factors A(t) and their transforms


class PolyFactor:
    """``A(t)`` given as an exponential polynomial."""

    def __init__(self, poly):
        self.poly = poly

    def lt(self, x):
        return self.poly.laplace(x)

    def pole_terms(self):
        return self.poly.pole_terms()

    def poles(self):
        return [-k for k in self.poly.rates()]

    def is_zero(self):
        return not self.poly.terms


class TruncatedFactor:
    """``A(t) 1(t <= tau)`` (``upper=False``) or ``A(t) 1(t > tau)``."""

    def __init__(self, poly, tau, upper=False):
        self.poly, self.tau, self.upper = poly, tau, upper

    def lt(self, x):
        d = x.order
        z = x.value
        tay = np.zeros((d + 1,) + np.shape(z), dtype=complex)
        for (j, k), c in self.poly.terms.items():
            for r in range(d + 1):
                low = lower_moment(j + r, z + k, self.tau)
                tay[r] += c * (-1) ** r / factorial(r) * low
        low = compose(tay, x)
        return self.poly.laplace(x) - low if self.upper else low

    def pole_terms(self):
        raise UnsupportedCombination("truncated factors have no rational transform")

    def poles(self):
        return [-k for k in self.poly.rates()]

    def is_zero(self):
        return not self.poly.terms


class PointFactor:
    """Point mass ``weight * delta(t - b)``."""

    def __init__(self, b, weight):
        self.b, self.weight = b, weight

    def lt(self, x):
        return (x * (-self.b)).exp() * self.weight

    def pole_terms(self):
        raise UnsupportedCombination("a point-mass interarrival has no rational transform")

    def poles(self):
        return []

    def is_zero(self):
        return self.weight == 0


@dataclass
class Branch:
    """One jump type: ``kind`` is ``"up"`` or ``"down"``, ``g`` the factor."""

    weight: float
    kind: str
    g: float
    parts: list  # [(time factor, ExpPoly gain piece)]


# ---------------------------------------------------------------------------
# generic assembly


@dataclass
class _Affine:
    scale: complex = 1.0
    shift: complex = 0.0

    def jet(self, s):
        return s * self.scale + self.shift if (self.scale != 1 or self.shift != 0) else s

    def inverse(self, x):
        return (x - self.shift) / self.scale


class _Assembly:
    """Coefficient and forcing columns for a list of branches."""

    def __init__(self, branches, survival, w0=1.0, targ=None, karg=None):
        self.survival = survival
        self.w0 = w0
        self.targ = targ or _Affine()
        self.karg = karg or _Affine()
        self.branches = [b for b in branches if b.weight != 0]
        for b in self.branches:
            b.parts = [(A, G) for A, G in b.parts if not A.is_zero() and G.terms]
        self.branches = [b for b in self.branches if b.parts]

        # unknowns rho^{(l)}(k) from up-jump kernels
        need = {}
        ident_rates = set()
        other_rates = set()
        for b in self.branches:
            if b.kind != "up":
                continue
            for _, G in b.parts:
                for (j, k), c in G.terms.items():
                    need[k] = max(need.get(k, -1), j)
                    (ident_rates if self._is_identity(b) else other_rates).add(k)
        self.unknowns = []
        self.index = {}
        for k in sorted(need):
            for l in range(need[k] + 1):
                self.index[(k, l)] = len(self.unknowns)
                self.unknowns.append(Unknown(point=k, derivative_order=l, label=f"rho^({l})({k:g})",
                                             collocate=k in other_rates))
        if ident_rates & other_rates:
            raise UnsupportedCombination("additive and proportional branches share a gain rate")

        # maps
        self.maps = []
        self.map_of = []
        self.ident = []
        for b in self.branches:
            m = self._map(b)
            if m.is_identity:
                self.map_of.append(None)
                self.ident.append(b)
                continue
            for i, mm in enumerate(self.maps):
                if mm.key() == m.key():
                    self.map_of.append(i)
                    break
            else:
                self.map_of.append(len(self.maps))
                self.maps.append(m)
        self._memo = (None, None)

    def _map(self, b):
        return AffineMap(self.karg.scale / b.g, self.karg.shift / b.g)

    def _is_identity(self, b):
        return self._map(b).is_identity

    def _compute(self, s):
        if self._memo[0] is s:
            return self._memo[1]
        t = self.targ.jet(s)
        x = self.karg.jet(s)
        L = len(self.maps)
        K = len(self.unknowns)
        zero = s * 0.0
        coeffs = [zero] * L
        ident = zero
        forcing = [self.survival.survival_lt(t)] + [zero] * K
        cache = {}
        for bi, b in enumerate(self.branches):
            g = b.g
            for A, G in b.parts:
                key = id(A)
                if key not in cache:
                    cache[key] = A.lt(t)
                a_hat = cache[key] * b.weight
                if b.kind == "up":
                    coef = zero
                    for (j, k), c in G.terms.items():
                        D = x - k * g
                        invD = D.reciprocal()
                        powD = [None] * (j + 2)
                        powD[1] = invD
                        for r in range(2, j + 2):
                            powD[r] = powD[r - 1] * invD
                        coef = coef + powD[j + 1] * (c * (-1) ** (j + 1) * factorial(j) * g**j)
                        for l in range(j + 1):
                            u = self.index[(k, l)]
                            w = c * (-1) ** j * factorial(j) * g ** (j - l) / factorial(l)
                            forcing[u + 1] = forcing[u + 1] + a_hat * powD[j - l + 1] * w
                    term = a_hat * coef
                else:
                    coef = zero
                    over = zero
                    for (j, k), c in G.terms.items():
                        P = x + k * g
                        coef = coef + P.reciprocal() ** (j + 1) * (c * factorial(j) * g**j)
                        q = x * (1.0 / g) + k
                        num = zero
                        for i in range(j + 1):
                            num = num + q ** (j - i) * k**i
                        over = over + num / q ** (j + 1) * (c * factorial(j) / (g * k ** (j + 1)))
                    term = a_hat * coef
                    forcing[0] = forcing[0] + a_hat * over
                li = self.map_of[bi]
                if li is None:
                    ident = ident + term
                else:
                    coeffs[li] = coeffs[li] + term
        w0 = self.w0
        out = (
            stack([c * w0 for c in coeffs]) if L else Jet(np.zeros(s.c.shape + (0,), dtype=complex)),
            stack([h * w0 for h in forcing]),
            ident * w0,
        )
        self._memo = (s, out)
        return out

    def coeff_fn(self, s):
        return self._compute(s)[0]

    def forcing_fn(self, s):
        return self._compute(s)[1]

    def identity_fn(self, s):
        return self._compute(s)[2]

    def poles(self):
        pts = []
        for b in self.branches:
            if b.kind == "up":
                for _, G in b.parts:
                    for (_, k) in G.terms:
                        pts.append(self.karg.inverse(k * b.g))
            else:
                for _, G in b.parts:
                    for (_, k) in G.terms:
                        pts.append(self.karg.inverse(-k * b.g))
            for A, _ in b.parts:
                pts.extend(self.targ.inverse(p) for p in A.poles())
        return sorted(set(complex(p) for p in pts), key=lambda z: (z.real, z.imag))

    def identity_polesum(self):
        """``1 - c_id(s)`` as a :class:`PoleSum`."""
        terms = []
        t1, t0 = self.targ.scale, self.targ.shift
        k1, k0 = self.karg.scale, self.karg.shift
        for b in self.ident:
            for A, G in b.parts:
                for ca, pa, ma in A.pole_terms():
                    fa = ca * t1 ** (-ma)
                    pa_s = (pa - t0) / t1
                    for (j, k), c in G.terms.items():
                        if b.kind == "up":
                            fk = c * (-1) ** (j + 1) * factorial(j) * k1 ** (-(j + 1))
                            pk_s = (k - k0) / k1
                        else:
                            fk = c * factorial(j) * k1 ** (-(j + 1))
                            pk_s = (-k - k0) / k1
                        coef = -self.w0 * b.weight * fa * fk
                        terms.append((coef, ((pa_s, ma), (pk_s, j + 1))))
        return PoleSum(1.0, terms)

    def system(self, label, exponents=None):
        extra = []
        poles = self.poles()
        cert = None
        n_roots = sum(not u.collocate for u in self.unknowns)
        if self.ident:
            f = self.identity_polesum()
            cert = rhp_roots(f, expected_count=n_roots)
            extra = [ExtraEquation(point=z, label=f"root {i}") for i, z in enumerate(cert.roots)]
            poles = poles + list(cert.roots)
        sys = FeqSystem(
            maps=self.maps,
            coeff_fn=self.coeff_fn,
            forcing_fn=self.forcing_fn,
            unknowns=self.unknowns,
            identity_fn=self.identity_fn if self.ident else None,
            extra_equations=extra,
            poles=tuple(poles),
            exponents=exponents,
            label=label,
        )
        sys.certificate = cert
        return sys


def _phase(x, what):
    if not isinstance(x, PhaseDist):
        raise NoDensityError(f"{what} needs a phase-type interarrival law")
    return x


def _copula_parts(B, C, model):
    """``[(A, G), ...]`` for ``f_B f_C`` tilted by an FGM or GFGM copula."""
    if isinstance(B, Deterministic):
        if model is not None and model.theta != 0:
            raise UnsupportedCombination("copula dependence needs an interarrival density")
        return [(PointFactor(B.value, 1.0), C.pdf_poly())]
    parts = [(PolyFactor(B.pdf_poly()), C.pdf_poly())]
    if model is not None and model.theta != 0:
        if isinstance(model, Fgm):
            A = h_poly(B)
        else:
            A = B.pdf_poly() - gz_poly(B, model.k, model.b)
        parts.append((PolyFactor(A * model.theta), gain_tilt_poly(C, model)))
    return parts


def _time_arg(alpha):
    return _Affine(1.0, complex(alpha)) if alpha != 0 else _Affine()


# ---------------------------------------------------------------------------
# per-model builders


def _causal_factors(model):
    B, T = model.B, model.T
    if isinstance(B, Deterministic):
        b = B.value
        s_t = float(T.sf(b)) if isinstance(T, PhaseDist) else float(T.value >= b)
        return PointFactor(b, s_t), PointFactor(b, 1.0 - s_t)
    f = B.pdf_poly()
    if isinstance(T, PhaseDist):
        prod = f * T.sf_poly()
        return PolyFactor(prod), PolyFactor(f - prod)
    return TruncatedFactor(f, T.value), TruncatedFactor(f, T.value, upper=True)


def _causal(model, alpha):
    B = model.B
    A0, A1 = _causal_factors(model)
    branches = [
        Branch(1.0, "up", 1 + model.a0, [(A0, model.C0.pdf_poly())]),
        Branch(1.0, "up", 1 + model.a1, [(A1, model.C1.pdf_poly())]),
    ]
    return _Assembly(branches, B, targ=_time_arg(alpha))


def chi_transforms(model, s):
    """``(E e^{-sB} 1(T >= B), E e^{-sB} 1(T < B))`` for a causal model."""
    x = Jet.variable(np.asarray(s, dtype=complex), 0)
    return tuple(A.lt(x).c[0] for A in _causal_factors(model))


def _fgm(model, alpha):
    C = erlang(model.n, model.mu)
    parts = _copula_parts(model.B, C, Fgm(model.theta))
    return _Assembly([Branch(1.0, "up", 1 + model.a, parts)], model.B, targ=_time_arg(alpha))


def _fgm_mixture(model):
    _phase(model.B, "the mixture root equations")
    C, D = erlang(model.n, model.mu), erlang(model.m, model.nu)
    branches = [
        Branch(model.p, "up", 1 + model.a, _copula_parts(model.B, C, Fgm(model.theta1))),
        Branch(1 - model.p, "up", 1.0, _copula_parts(model.B, D, Fgm(model.theta2))),
    ]
    return _Assembly(branches, model.B)


def _gfgm(model):
    C = exponential(model.mu)
    parts = _copula_parts(model.B, C, model.copula)
    return _Assembly([Branch(1.0, "up", 1 + model.a, parts)], model.B)


def _gfgm_mixture(model):
    _phase(model.B, "the mixture root equations")
    C, D = exponential(model.mu), exponential(model.nu)
    branches = [
        Branch(model.p, "up", 1 + model.a, _copula_parts(model.B, C, model.gfgm1.copula)),
        Branch(1 - model.p, "up", 1.0, _copula_parts(model.B, D, model.gfgm2.copula)),
    ]
    return _Assembly(branches, model.B)


def _linear(model, alpha):
    B = exponential(model.lam)
    C = exponential(model.mu)
    cb = 1.0 - model.c
    alpha = complex(alpha)
    if cb * (1 + model.a) < 1:
        raise ConvergenceGuard("(1 - c)(1 + a) < 1: the map expands")
    if cb * (1 + model.a) == 1 and alpha.real <= 0:
        raise UnsupportedCombination("with c = a = 0 the transform is resolved from roots that need Re(alpha) > 0")
    targ = _Affine(1 / cb, alpha / cb)
    karg = _Affine(1 / cb, alpha * model.c / cb)
    parts = _copula_parts(B, C, Fgm(model.theta))
    return _Assembly([Branch(1.0, "up", 1 + model.a, parts)], B, w0=1 / cb, targ=targ, karg=karg)


def _two_sided(model):
    q = 1 - model.p
    C, D = exponential(model.mu), exponential(model.nu)
    branches = [Branch(model.p * k, "up", 1 + a, _copula_parts(model.B, C, None)) for k, a in zip(model.k, model.a)]
    branches += [Branch(q * m, "down", 1 + b, _copula_parts(model.B, D, None)) for m, b in zip(model.m, model.beta)]
    return _Assembly(branches, model.B)


def _two_sided_fgm(model):
    C, D = exponential(model.mu), exponential(model.nu)
    branches = [
        Branch(model.p, "up", 1 + model.a, _copula_parts(model.B, C, Fgm(model.theta1))),
        Branch(1 - model.p, "down", 1 + model.beta, _copula_parts(model.B, D, Fgm(model.theta2))),
    ]
    return _Assembly(branches, model.B)


def boole_rule(x0, x1, panels):
    """Composite Boole rule on ``[x0, x1]``: equispaced nodes and weights."""
    if panels % 4:
        raise DomainError("panels must be a multiple of 4")
    h = (x1 - x0) / panels
    x = x0 + h * np.arange(panels + 1)
    w = np.zeros(panels + 1)
    for i in range(0, panels, 4):
        w[i:i + 5] += np.array([7.0, 32.0, 12.0, 32.0, 7.0])
    return x, w * (2 * h / 45)


def log_grid_rule(x0, x1, panels):
    """Quadrature on ``[x0, x1]`` with nodes on the grid ``j h``, ``h = x0 / N0``.

    ``h`` is the largest step not exceeding ``(x1 - x0) / panels`` that
    divides ``x0``. Boole panels cover the grid part; the leftover piece up
    to ``x1`` uses the degree-4 interpolant through the last five grid
    points reaching past ``x1``. Returns integer indices ``j`` and weights.
    """
    if not 0 < x0 < x1:
        raise DomainError("need 0 < x0 < x1")
    n0 = int(np.ceil(x0 * panels / (x1 - x0) - 1e-12))
    h = x0 / n0
    top = int(np.floor(x1 / h + 1e-9))
    m = (top - n0) // 4
    idx = np.arange(n0, n0 + 4 * m + 1)
    _, w = boole_rule(x0, x0 + 4 * m * h, 4 * m)
    weights = dict(zip(idx.tolist(), w.tolist()))
    start = x0 + 4 * m * h
    if x1 - start > 1e-12 * x1:
        hi = int(np.ceil(x1 / h - 1e-9))
        nodes = np.arange(hi - 4, hi + 1)
        t = nodes * h - start
        ell = x1 - start
        V = np.vander(t, 5, increasing=True).T              # rows: powers
        mom = np.array([ell ** (p + 1) / (p + 1) for p in range(5)])
        wr = np.linalg.solve(V, mom)
        for j, wj in zip(nodes.tolist(), wr.tolist()):
            weights[j] = weights.get(j, 0.0) + wj
    js = np.array(sorted(weights), dtype=np.int64)
    return js, h, np.array([weights[j] for j in js])


def _uniform(model):
    """Uniform proportional factor: the integral over ``v`` is discretised.

    With ``x = ln(1 + v)`` and nodes ``x_j = j h`` the maps are
    ``s -> s e^{-j h}``, so every composite map is a power of ``e^{-h}``
    and the lattice is one-dimensional.
    """
    B = model.B
    mu, a, b = model.mu, model.a, model.b
    js, h, w = log_grid_rule(log(1 + a), log(1 + b), model.panels)
    g = np.exp(js * h)                              # 1 + v_q
    weight = w * g * mu / (b - a)                   # per-node weight of the mu e^{-mu y} kernel
    maps = [AffineMap(float(np.exp(-j * h))) for j in js]
    exponents = js.reshape(-1, 1)
    poles = tuple(complex(mu * gq) for gq in g)

    lst = B.lst
    memo = [None, None]

    def compute(s):
        if memo[0] is s:
            return memo[1]
        if s.order == 0:
            phi = lst(s).c[..., None]
            c = Jet(phi * weight / (mu * g - s.c[..., None]))
        else:
            c = lst(s).expand() * (s.expand() * -1.0 + mu * g).reciprocal() * weight
        hmu = -c.sum(-1)
        h = stack([B.survival_lt(s), hmu])
        memo[0], memo[1] = s, (c, h)
        return c, h

    unknowns = [Unknown(point=mu, derivative_order=0, label=f"rho({mu:g})")]
    return FeqSystem(
        maps=maps,
        coeff_fn=lambda s: compute(s)[0],
        forcing_fn=lambda s: compute(s)[1],
        unknowns=unknowns,
        poles=poles,
        exponents=exponents,
        label="uniform_proportional",
    )


def build_ruin_system(model):
    """Functional equation for the Laplace transform of ``R(x)``."""
    return build_system(model, RuinProbability())


def build_time_system(model, alpha):
    """Functional equation for the transform of ``E(e^{-alpha tau_x}; tau_x < inf)``."""
    return build_system(model, RuinTimeLst(alpha))


def build_system(model, functional):
    if isinstance(functional, RuinTimeLst):
        alpha = complex(functional.alpha)
        if alpha.real < 0:
            raise DomainError("Re(alpha) must be >= 0")
        if not isinstance(model, (CausalProportional, FgmProportional, LinearDependence)):
            raise UnsupportedFunctional(f"no ruin-time transform for {type(model).__name__}")
    else:
        alpha = 0.0
    label = type(model).__name__
    if isinstance(model, CausalProportional):
        return _causal(model, alpha).system(label)
    if isinstance(model, FgmProportional):
        _check_density(model.B, model.theta)
        return _fgm(model, alpha).system(label)
    if isinstance(model, FgmMixture):
        return _fgm_mixture(model).system(label)
    if isinstance(model, GfgmProportional):
        _check_density(model.B, model.theta)
        return _gfgm(model).system(label)
    if isinstance(model, GfgmMixture):
        return _gfgm_mixture(model).system(label)
    if isinstance(model, LinearDependence):
        return _linear(model, alpha).system(label)
    if isinstance(model, TwoSided):
        return _two_sided(model).system(label)
    if isinstance(model, TwoSidedFgm):
        _check_density(model.B, max(abs(model.theta1), abs(model.theta2)))
        return _two_sided_fgm(model).system(label)
    if isinstance(model, UniformProportional):
        return _uniform(model)
    raise UnsupportedCombination(f"unknown model {model!r}")


def _check_density(B, theta):
    if isinstance(B, Deterministic) and theta != 0:
        raise UnsupportedCombination("copula dependence needs an interarrival density")


def psi_iterate(scale, shift, beta, j):
    """``j``-fold composition of ``z -> scale z + shift`` applied to ``beta``."""
    z = beta
    for _ in range(j):
        z = scale * z + shift
    return z


# ---------------------------------------------------------------------------
# scenario (de)serialisation


def _dist_dict(x):
    return x.to_dict()


def model_to_dict(model):
    name = next(k for k, v in MODEL_TYPES.items() if isinstance(model, v))
    out = {"type": name}
    for f in fields(model):
        v = getattr(model, f.name)
        key = "lambda" if f.name == "lam" else f.name
        if isinstance(v, (PhaseDist, Deterministic)):
            out[key] = _dist_dict(v)
        elif isinstance(v, GfgmParams):
            out[key] = {"theta": v.theta, "k": v.k, "b": v.b, "c": v.c, "d": v.d}
        elif isinstance(v, tuple):
            out[key] = list(v)
        else:
            out[key] = v
    return out


_DIST_FIELDS = {"B", "T", "C0", "C1"}


def parse_model(d):
    """Build a model from its scenario mapping."""
    if not isinstance(d, dict) or "type" not in d:
        raise ParseError("model must be a mapping with a 'type'")
    d = dict(d)
    kind = d.pop("type")
    cls = MODEL_TYPES.get(kind)
    if cls is None:
        raise ParseError(f"unknown model type {kind!r}")
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    dep = d.pop("dependence", None)
    if dep is not None:
        if dep.get("type") == "fgm" and cls in (FgmProportional, LinearDependence):
            d["theta"] = dep["theta"]
        elif dep.get("type") == "gfgm" and cls is GfgmProportional:
            for key in ("theta", "k", "b", "c", "d"):
                d[key] = dep[key]
        else:
            raise ParseError(f"dependence {dep!r} does not fit model {kind!r}")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ParseError(f"unknown fields for {kind}: {sorted(unknown)}")
    kw = {}
    try:
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if f.name in _DIST_FIELDS:
                kw[f.name] = parse_distribution(v)
            elif f.name in ("gfgm1", "gfgm2"):
                kw[f.name] = GfgmParams(**v)
            elif f.type is int:
                kw[f.name] = int(v)
            elif isinstance(v, list):
                kw[f.name] = tuple(v)
            else:
                kw[f.name] = v
        return cls(**kw)
    except DomainError as exc:
        raise ParseError(f"invalid {kind} model: {exc}") from exc
    except (TypeError, KeyError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise ParseError(f"bad {kind} model: {exc}") from exc
