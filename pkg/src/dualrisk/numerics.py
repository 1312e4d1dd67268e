"""Truncated power series (jets), dense linear solves and quadrature.

A :class:`Jet` stores the Taylor coefficients ``c[0], ..., c[order]`` of a
function around an expansion point. The coefficient array carries trailing
batch axes so one jet can describe the same expansion at many points at once;
all arithmetic broadcasts over those axes.
"""

import warnings
from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.linalg

from .errors import DivByZeroJet, DomainError, MismatchError, OrderError, SingularError

__all__ = [
    "Jet",
    "jet_mul",
    "jet_div",
    "compose",
    "inv_power",
    "LinearSystem",
    "LinearSolution",
    "solve_linear",
    "gauss_legendre",
    "legendre_rule",
]


def _as_coeffs(x):
    return np.asarray(x, dtype=complex)


class Jet:
    """Truncated complex power series ``sum_r c[r] (s - center)^r``.

    Parameters
    ----------
    coeffs : array_like
        Shape ``(order + 1, *batch)``.
    center : array_like, optional
        Expansion point(s), broadcastable to the batch shape. Only used to
        guard against combining expansions taken at different points.
    """

    __slots__ = ("c", "center")
    __array_ufunc__ = None

    def __init__(self, coeffs, center=None):
        c = _as_coeffs(coeffs)
        if c.ndim == 0:
            c = c.reshape(1)
        self.c = c
        self.center = center

    # construction
    @classmethod
    def variable(cls, z, order):
        """Identity jet ``s`` expanded at ``z``."""
        if order < 0:
            raise OrderError("jet order must be >= 0")
        z = _as_coeffs(z)
        c = np.zeros((order + 1,) + z.shape, dtype=complex)
        c[0] = z
        if order >= 1:
            c[1] = 1.0
        return cls(c, center=z)

    @classmethod
    def constant(cls, value, order, shape=()):
        if order < 0:
            raise OrderError("jet order must be >= 0")
        value = np.broadcast_to(_as_coeffs(value), shape) if shape else _as_coeffs(value)
        c = np.zeros((order + 1,) + value.shape, dtype=complex)
        c[0] = value
        return cls(c)

    # shape helpers
    @property
    def order(self):
        return self.c.shape[0] - 1

    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def value(self):
        return self.c[0]

    def derivative(self, l):
        """``l``-th derivative at the expansion point."""
        return factorial(l) * self.c[l]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        center = None
        if self.center is not None and np.ndim(self.center) > 0:
            center = np.broadcast_to(self.center, self.shape)[idx]
        return Jet(self.c[(slice(None),) + idx], center=center)

    def expand(self, axis=-1):
        """Insert a new batch axis (``axis`` counted over the batch axes)."""
        if axis < 0:
            axis = len(self.shape) + 1 + axis
        return Jet(np.expand_dims(self.c, axis + 1))

    def sum(self, axis):
        if axis < 0:
            axis = len(self.shape) + axis
        return Jet(self.c.sum(axis=axis + 1))

    def rescale(self, gamma):
        """Jet of ``f(gamma * t)`` in ``t`` given the jet of ``f``."""
        g = np.asarray(gamma, dtype=complex)
        powers = g[None, ...] ** np.arange(self.order + 1).reshape((-1,) + (1,) * g.ndim)
        powers = powers.reshape(powers.shape + (1,) * (self.c.ndim - 1 - g.ndim))
        return Jet(self.c * powers)

    def truncate(self, order):
        return Jet(self.c[: order + 1].copy(), self.center)

    def norm(self):
        """Sum of coefficient magnitudes, per batch element."""
        return np.abs(self.c).sum(axis=0)

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape}, c0={self.c[0]!r})"

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.order != self.order:
                raise MismatchError(f"jet orders differ: {self.order} vs {other.order}")
            if not _same_center(self.center, other.center):
                raise MismatchError("jets expanded at different centers")
            return other
        return None

    def _center_with(self, other):
        if isinstance(other, Jet):
            return self.center if self.center is not None else other.center
        return self.center

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            shape = np.broadcast_shapes(self.shape, np.shape(other))
            c = np.array(np.broadcast_to(self.c, (self.c.shape[0],) + shape), dtype=complex)
            c[0] = c[0] + other
            return Jet(c, self.center)
        return Jet(self.c + o.c, self._center_with(o))

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.center)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other)
            return Jet(self.c * other, self.center)
        return Jet(_cauchy(self.c, o.c), self._center_with(o))

    __rmul__ = __mul__

    def reciprocal(self):
        return Jet(_reciprocal(self.c), self.center)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.c / np.asarray(other), self.center)
        return Jet(_cauchy(self.c, _reciprocal(o.c)), self._center_with(o))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("jets support integer powers only")
        if n < 0:
            return self.reciprocal() ** (-n)
        out = Jet.constant(1.0, self.order, self.shape)
        out.center = self.center
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def exp(self):
        a = self.c
        e = np.empty_like(a)
        e[0] = np.exp(a[0])
        for k in range(1, a.shape[0]):
            acc = 0
            for i in range(1, k + 1):
                acc = acc + i * a[i] * e[k - i]
            e[k] = acc / k
        return Jet(e, self.center)

    def log(self):
        a = self.c
        if np.any(np.abs(a[0]) <= 1e-300):
            raise DivByZeroJet("log of a jet with vanishing leading coefficient")
        out = np.empty_like(a)
        out[0] = np.log(a[0])
        for k in range(1, a.shape[0]):
            acc = a[k]
            for i in range(1, k):
                acc = acc - (i / k) * out[i] * a[k - i]
            out[k] = acc / a[0]
        return Jet(out, self.center)


def _same_center(p, q):
    if p is None or q is None or p is q:
        return True
    try:
        p, q = np.broadcast_arrays(p, q)
    except ValueError:
        return False
    return bool(np.array_equal(p, q))


def _cauchy(a, b):
    d = a.shape[0]
    shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.zeros((d,) + shape, dtype=complex)
    for i in range(d):
        out[i:] += a[i] * b[: d - i]
    return out


def _reciprocal(b):
    b0 = b[0]
    if np.any(np.abs(b0) <= 1e-12):
        raise DivByZeroJet("jet division by a series with vanishing leading coefficient")
    d = b.shape[0]
    r = np.empty_like(b)
    r[0] = 1.0 / b0
    for k in range(1, d):
        acc = b[1] * r[k - 1]
        for i in range(2, k + 1):
            acc = acc + b[i] * r[k - i]
        r[k] = -acc * r[0]
    return r


def jet_mul(a, b):
    """Truncated Cauchy product of two jets."""
    return a * b


def jet_div(a, b):
    """Truncated quotient ``a / b``."""
    return a / b


def compose(taylor, x):
    """Jet of ``f(x)`` given Taylor coefficients of ``f`` at ``x.value``.

    Parameters
    ----------
    taylor : ndarray
        Shape ``(order + 1, *batch)``; ``taylor[r]`` is ``f^{(r)}(x0) / r!``.
    x : Jet
    """
    taylor = _as_coeffs(taylor)
    d = x.order
    delta = x.c.copy()
    delta[0] = 0
    shape = np.broadcast_shapes(taylor.shape[1:], x.shape)
    out = np.zeros((d + 1,) + shape, dtype=complex)
    out[0] = taylor[d]
    for r in range(d - 1, -1, -1):
        out = _cauchy(out, delta)
        out[0] = out[0] + taylor[r]
    return Jet(out, x.center)


def inv_power(x, p):
    """Jet of ``x ** (-p)`` for a positive integer ``p``."""
    t = x.c[0]
    if np.any(np.abs(t) <= 1e-12):
        raise DivByZeroJet("negative power of a jet with vanishing leading coefficient")
    d = x.order
    tay = np.empty((d + 1,) + t.shape, dtype=complex)
    base = t ** (-p)
    coef = 1.0
    inv_t = 1.0 / t
    for r in range(d + 1):
        tay[r] = coef * base
        # binom(-p, r + 1) / binom(-p, r) = -(p + r) / (r + 1)
        coef = coef * (-(p + r) / (r + 1))
        base = base * inv_t
    return compose(tay, x)


@dataclass
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=complex))
        n = self.matrix.shape[0]
        if n < 1 or self.matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise DomainError("linear system must be square with a matching right-hand side")


@dataclass
class LinearSolution:
    x: np.ndarray
    residual: float
    min_pivot: float = field(default=np.inf)


def solve_linear(system, pivot_tol=1e-13):
    """Solve a dense complex system by LU with partial pivoting.

    Raises
    ------
    SingularError
        If a pivot falls below ``pivot_tol`` relative to the largest entry.
    """
    a, b = system.matrix, system.rhs
    scale = max(np.abs(a).max(), 1e-300)
    with warnings.catch_warnings():
        # singular pivots are reported below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < pivot_tol * scale:
        raise SingularError(f"pivot {pivots.min():.3e} below tolerance; collocation system is degenerate")
    x = scipy.linalg.lu_solve((lu, piv), b)
    residual = float(np.abs(a @ x - b).max())
    if residual > 1e-8 * (1 + np.abs(b).max()):
        raise SingularError(f"linear solve residual {residual:.3e} too large")
    return LinearSolution(x=x, residual=residual, min_pivot=float(pivots.min() / scale))


def legendre_rule(a, b, nodes):
    """Gauss-Legendre nodes and weights mapped to ``[a, b]``."""
    if not a < b:
        raise DomainError("need a < b")
    if nodes < 2:
        raise DomainError("need at least 2 nodes")
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_legendre(f, a, b, nodes):
    """Integrate ``f`` over ``[a, b]`` with an ``nodes``-point Gauss-Legendre rule.

    ``f`` is called once with the array of nodes and must return an array of
    the same length.
    """
    x, w = legendre_rule(a, b, nodes)
    vals = np.asarray(f(x))
    return np.tensordot(w, vals, axes=(0, 0))
