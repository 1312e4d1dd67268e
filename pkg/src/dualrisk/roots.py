"""Right-half-plane roots of rational transform equations, with certificates.

The equations handled here have the form ``f(s) = const + sum_i coef_i /
prod (s - p)^m``. Roots come from the eigenvalues of the companion matrix of
the cleared numerator and are cross-checked by a winding-number count of
``f(s) prod_{Re p > 0} (s - p)^m`` around a right half-disc.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import CountMismatch, NonConvergedRadius, OnContourZero

__all__ = ["PoleSum", "RootCertificate", "count_rhp_zeros", "winding_number", "rhp_roots"]


@dataclass
class PoleSum:
    """``const + sum coef / prod_j (s - pole_j)^mult_j``.

    ``terms`` is a list of ``(coef, ((pole, mult), ...))``.
    """

    const: complex = 1.0
    terms: list = field(default_factory=list)
    merge_tol: float = 1e-10

    def __post_init__(self):
        self.terms = [(c, tuple(f)) for c, f in self.terms if c != 0]
        reps = []

        def canon(p):
            for r in reps:
                if abs(p - r) <= self.merge_tol * (1 + abs(r)):
                    return r
            reps.append(p)
            return p

        merged = []
        for c, factors in self.terms:
            mult = {}
            for p, m in factors:
                p = canon(complex(p))
                mult[p] = mult.get(p, 0) + int(m)
            merged.append((c, tuple(sorted(mult.items(), key=lambda t: (t[0].real, t[0].imag)))))
        self.terms = merged

    def poles(self):
        """Distinct poles with the largest multiplicity met in any term."""
        out = {}
        for _, factors in self.terms:
            for p, m in factors:
                out[p] = max(out.get(p, 0), m)
        return out

    def rhp_poles(self):
        return {p: m for p, m in self.poles().items() if p.real > 0}

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.full(s.shape, self.const, dtype=complex)
        for c, factors in self.terms:
            t = np.full(s.shape, c, dtype=complex)
            for p, m in factors:
                t = t / (s - p) ** m
            out = out + t
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.zeros(s.shape, dtype=complex)
        for c, factors in self.terms:
            t = np.full(s.shape, c, dtype=complex)
            logd = np.zeros(s.shape, dtype=complex)
            for p, m in factors:
                t = t / (s - p) ** m
                logd = logd - m / (s - p)
            out = out + t * logd
        return out

    def cleared(self, s):
        """``f(s) * prod_{Re p > 0} (s - p)^m``: analytic in the right half-plane."""
        s = np.asarray(s, dtype=complex)
        out = self(s)
        for p, m in self.rhp_poles().items():
            out = out * (s - p) ** m
        return out

    def numerator(self):
        """Polynomial ``f * prod_p (s - p)^m`` over every pole."""
        poles = self.poles()
        lcd = Polynomial([1.0 + 0j])
        for p, m in poles.items():
            lcd = lcd * Polynomial([-p, 1.0]) ** m
        num = lcd * self.const
        for c, factors in self.terms:
            have = dict(factors)
            rest = Polynomial([c + 0j])
            for p, m in poles.items():
                k = m - have.get(p, 0)
                if k:
                    rest = rest * Polynomial([-p, 1.0]) ** k
            num = num + rest
        return num


@dataclass
class RootCertificate:
    roots: list
    expected_count: int
    winding_number: int
    residuals: list
    radius: float = 0.0

    @property
    def ok(self):
        return (
            self.winding_number == self.expected_count == len(self.roots)
            and all(r < 1e-8 for r in self.residuals)
            and all(z.real > 0 for z in self.roots)
        )

    def to_dict(self):
        return {
            "roots": [[z.real, z.imag] for z in self.roots],
            "expected_count": self.expected_count,
            "winding_number": self.winding_number,
            "residuals": list(map(float, self.residuals)),
            "radius": self.radius,
            "ok": self.ok,
        }


def _contour(radius, n):
    # down the imaginary axis, then the right semicircle counterclockwise
    n_line = n // 2
    n_arc = n - n_line
    y = np.linspace(radius, -radius, n_line, endpoint=False)
    th = np.linspace(-np.pi / 2, np.pi / 2, n_arc, endpoint=False)
    return np.concatenate([1j * y, radius * np.exp(1j * th)])


def winding_number(f, radius, samples=4096, max_samples=2**20):
    """Winding number of ``f`` around the right half-disc of ``radius``.

    Samples double until every phase step is below pi/2 and the integer is
    unchanged across two refinements.
    """
    last = None
    stable = 0
    n = samples
    while n <= max_samples:
        z = _contour(radius, n)
        v = f(z)
        mag = np.abs(v)
        if mag.min() < 1e-10 * max(1.0, np.median(mag)):
            raise OnContourZero(f"function vanishes on the contour (radius {radius})")
        steps = np.angle(np.roll(v, -1) / v)
        w = int(round(steps.sum() / (2 * np.pi)))
        if np.abs(steps).max() < np.pi / 2:
            stable = stable + 1 if w == last else 0
            if stable >= 1:
                return w
        last = w
        n *= 2
    raise NonConvergedRadius("phase refinement did not stabilise")


def count_rhp_zeros(f, radius=None, samples=4096, max_radius=1e6):
    """Number of zeros of an analytic ``f`` with ``Re s > 0``.

    The radius doubles until the count is unchanged twice in a row.
    """
    r = 4.0 if radius is None else float(radius)
    counts = []
    while r <= max_radius:
        counts.append(winding_number(f, r, samples))
        if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
            return counts[-1]
        r *= 2
    raise NonConvergedRadius("zero count did not stabilise as the radius grew")


def _newton(f, z, tol=1e-13, maxit=50):
    for _ in range(maxit):
        fz = f(z)
        dz = fz / f.derivative(z)
        z_new = z - dz
        if abs(dz) <= tol * max(1.0, abs(z)):
            return z_new
        z = z_new
    return z


def rhp_roots(f, expected_count=None):
    """Certified right-half-plane roots of a :class:`PoleSum`.

    Raises
    ------
    CountMismatch
        If the companion-matrix count disagrees with the winding number or
        with ``expected_count``.
    """
    num = f.numerator().trim(1e-300)
    cand = num.roots() if num.degree() > 0 else np.array([], dtype=complex)
    poles = np.array(list(f.poles()), dtype=complex)
    roots = []
    for z in cand:
        if z.real <= 1e-9:
            continue
        if poles.size and np.min(np.abs(poles - z)) < 1e-7 * (1 + abs(z)):
            continue
        zp = complex(_newton(f, complex(z)))
        if zp.real <= 1e-9:
            continue
        if any(abs(zp - r) < 1e-9 * (1 + abs(r)) for r in roots):
            continue
        roots.append(zp)
    roots.sort(key=lambda z: (round(z.real, 9), z.imag))
    residuals = [float(abs(f(z))) for z in roots]
    rmax = max([abs(z) for z in roots] + [1.0])
    wind = count_rhp_zeros(f.cleared, radius=max(4.0, 2 * rmax))
    if wind != len(roots):
        raise CountMismatch(f"companion matrix gives {len(roots)} roots, winding number {wind}")
    exp = len(roots) if expected_count is None else expected_count
    if exp != len(roots):
        raise CountMismatch(f"expected {exp} right-half-plane roots, found {len(roots)}")
    return RootCertificate(roots=roots, expected_count=exp, winding_number=wind, residuals=residuals,
                           radius=max(4.0, 2 * rmax))
