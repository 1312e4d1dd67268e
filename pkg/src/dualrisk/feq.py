"""Solver for linear functional equations with contracting affine maps.

The equations have the form

    rho(s) = c_id(s) rho(s) + sum_l c_l(s) rho(m_l(s)) + H_0(s) + sum_k H_k(s) u_k

where ``m_l`` are commuting affine contractions, ``u_k`` are unknown constants
(values or derivatives of ``rho`` at fixed points) and the optional identity
coefficient ``c_id`` is moved to the left-hand side. Iterating the equation
gives a sum over a lattice of composite maps; the lattice weights are built
level by level and the result is affine in the unknowns.
"""

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import sparse

from .errors import (
    CountMismatch,
    DivByZeroJet,
    DivergenceError,
    DomainError,
    NonCommutingMaps,
    PoleError,
    PoleProximity,
    TruncationError,
)
from .numerics import Jet, LinearSystem, solve_linear

__all__ = [
    "AffineMap",
    "Unknown",
    "ExtraEquation",
    "FeqSystem",
    "SeriesResult",
    "TransformSolution",
    "stack",
    "contraction",
    "lattice_coefficients",
    "series_eval",
    "solve_unknowns",
    "rho_eval",
    "fe_residual",
    "system_distance",
    "excision_discs",
]

POLE_GUARD = 1e-6
CIRCLE_POINTS = 96
TRIGGER = 0.7
DISC_FRACTION = 0.9
COVER = 0.5
MAX_NODES = 1_000_000
ORBIT_SAMPLES = 200
ORBIT_SAFETY = 1.5


@dataclass(frozen=True)
class AffineMap:
    """``z -> scale * z + shift``."""

    scale: complex
    shift: complex = 0.0

    def __call__(self, z):
        return self.scale * np.asarray(z) + self.shift

    @property
    def is_identity(self):
        return self.scale == 1 and self.shift == 0

    def fixed_point(self):
        return self.shift / (1 - self.scale)

    def key(self):
        return (round(complex(self.scale).real, 14), round(complex(self.scale).imag, 14),
                round(complex(self.shift).real, 14), round(complex(self.shift).imag, 14))


@dataclass(frozen=True)
class Unknown:
    """Unknown constant ``rho^{(order)}(point)``.

    ``collocate=False`` marks unknowns fixed by extra (root) equations rather
    than by evaluating the series at ``point``.
    """

    point: complex
    derivative_order: int = 0
    label: str = ""
    collocate: bool = True


@dataclass(frozen=True)
class ExtraEquation:
    """The un-divided equation must vanish at ``point`` (a zero of ``1 - c_id``)."""

    point: complex
    label: str = ""


def stack(jets):
    """Stack jets along a new trailing batch axis."""
    shape = np.broadcast_shapes(*(j.shape for j in jets))
    return Jet(np.stack([np.broadcast_to(j.c, j.c.shape[:1] + shape) for j in jets], axis=-1))


@dataclass
class FeqSystem:
    """A functional equation in vectorised form.

    Parameters
    ----------
    maps : list of AffineMap
        Non-identity maps, one per coefficient column.
    coeff_fn : callable
        ``Jet -> Jet`` with an extra trailing axis of length ``len(maps)``.
    forcing_fn : callable
        ``Jet -> Jet`` with a trailing axis of length ``1 + len(unknowns)``;
        column 0 is ``H_0``, column ``k + 1`` multiplies unknown ``k``.
    unknowns : list of Unknown
    identity_fn : callable, optional
        Coefficient of ``rho(s)`` on the right-hand side.
    extra_equations : list of ExtraEquation
    poles : sequence of complex
        Points where some coefficient or forcing column is singular.
    exponents : ndarray, optional
        Integer matrix ``(len(maps), D)``; composite maps with equal exponent
        sums are identified. Defaults to the identity (multi-index lattice).
    """

    maps: list
    coeff_fn: object
    forcing_fn: object
    unknowns: list
    identity_fn: object = None
    extra_equations: list = field(default_factory=list)
    poles: tuple = ()
    exponents: object = None
    label: str = ""
    removable: tuple = ()

    def __post_init__(self):
        for m in self.maps:
            if m.is_identity:
                raise DomainError("identity maps belong in identity_fn")
            if not abs(m.scale) < 1:
                raise DivergenceError(f"map scale {m.scale} is not a contraction")
        if self.exponents is None:
            self.exponents = np.eye(len(self.maps), dtype=np.int64)
        self.exponents = np.asarray(self.exponents, dtype=np.int64)
        seen = set()
        for u in self.unknowns:
            key = (complex(u.point), u.derivative_order)
            if key in seen:
                raise DomainError(f"duplicate unknown {u}")
            seen.add(key)

    @classmethod
    def from_terms(cls, terms, h0, hk, unknowns, **kw):
        """Build from ``[(coeff, AffineMap), ...]``, ``h0`` and ``[h_k, ...]``.

        Terms sharing a map are merged; an identity-map term becomes
        ``identity_fn``.
        """
        groups = {}
        ident = []
        for fn, m in terms:
            if m.is_identity:
                ident.append(fn)
            else:
                groups.setdefault(m.key(), (m, []))[1].append(fn)
        maps = [g[0] for g in groups.values()]
        fns = [g[1] for g in groups.values()]

        def coeff_fn(s):
            cols = []
            for group in fns:
                acc = group[0](s)
                for fn in group[1:]:
                    acc = acc + fn(s)
                cols.append(acc)
            return stack(cols) if cols else Jet(np.zeros(s.c.shape + (0,), dtype=complex))

        def forcing_fn(s):
            return stack([h0(s)] + [h(s) for h in hk])

        identity_fn = None
        if ident:
            def identity_fn(s):
                acc = ident[0](s)
                for fn in ident[1:]:
                    acc = acc + fn(s)
                return acc

        return cls(maps=maps, coeff_fn=coeff_fn, forcing_fn=forcing_fn, unknowns=list(unknowns),
                   identity_fn=identity_fn, **kw)

    @property
    def terms(self):
        """Per-map coefficient evaluators paired with their maps."""
        return [((lambda s, l=l: self.coeff_fn(s)[..., l]), m) for l, m in enumerate(self.maps)]

    @property
    def n_unknowns(self):
        return len(self.unknowns)

    def jet_order(self):
        return max([u.derivative_order for u in self.unknowns if u.collocate] + [0])

    def effective(self, s):
        """Coefficients and forcing with the identity term moved to the left."""
        c = self.coeff_fn(s)
        h = self.forcing_fn(s)
        if self.identity_fn is not None:
            inv = (1.0 - self.identity_fn(s)).reciprocal()
            inv = Jet(inv.c[..., None])
            c = c * inv
            h = h * inv
        return c, h

    def limit_point(self):
        if not self.maps:
            return 0.0
        pts = [m.fixed_point() for m in self.maps]
        if max(abs(p - pts[0]) for p in pts) > 1e-10 * (1 + abs(pts[0])):
            raise NonCommutingMaps("maps have different fixed points")
        return pts[0]


def contraction(system):
    """Limiting coefficient magnitudes ``kappa_l`` at the common fixed point."""
    if not system.maps:
        return np.zeros(0)
    z = system.limit_point()
    for eps in (0.0, 1e-9, 1e-7):
        try:
            c, _ = system.effective(Jet.variable(np.array([z + eps]), 0))
        except (DivByZeroJet, PoleError, ZeroDivisionError):
            continue
        vals = np.abs(c.c[0, 0])
        if np.all(np.isfinite(vals)):
            return vals
    raise DivergenceError("coefficients are singular at the fixed point of the maps")


@dataclass
class SeriesResult:
    """Affine representation ``rho = A + B @ x`` at a batch of points.

    ``x`` stacks the unknowns ``u`` and the values of ``rho`` on the
    excision circles.
    """

    A: Jet          # shape (S,)
    B: Jet          # shape (S, K + n_circle)
    tail: float
    depth: int
    nodes: int

    def value(self, x, order=None):
        x = np.asarray(x, dtype=complex)
        c = self.A.c + (self.B.c @ x if x.size else 0)
        return c if order is None else c[order]


def _check_poles(system, z):
    p = np.asarray([q for q in system.poles if not _is_removable(q)], dtype=complex)
    if not p.size:
        return
    d = np.abs(z[..., None] - p)
    bad = d < POLE_GUARD * np.maximum(1.0, np.abs(p))
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise PoleProximity(f"composite point within guard radius of pole {p[idx[-1]]}", point=z[tuple(idx[:-1])])


def _is_removable(p):
    return complex(p).real > 0


@dataclass(frozen=True)
class Discs:
    """Excision discs around removable poles.

    ``rho`` is analytic in the right half-plane, so inside a disc it is the
    Cauchy integral of its values on the boundary circle. Those values are
    extra unknowns; lattice nodes inside ``TRIGGER * radius`` are replaced by
    the trapezoid-rule Cauchy sum instead of being expanded, so the series is
    never summed where its terms blow up.
    """

    centres: np.ndarray
    radii: np.ndarray

    @property
    def count(self):
        return self.centres.size

    @property
    def n_values(self):
        return self.count * CIRCLE_POINTS

    def points(self):
        if not self.count:
            return np.zeros(0, dtype=complex)
        return np.concatenate([_circle(c, r) for c, r in zip(self.centres, self.radii)])


def excision_discs(system):
    poles = [complex(p) for p in system.poles]
    rem = sorted({p for p in poles if _is_removable(p)}, key=lambda z: (-z.real, z.imag))
    centres, radii = [], []
    for p in rem:
        # a pole well inside an existing disc is already covered
        if any(abs(p - c) < COVER * r for c, r in zip(centres, radii)):
            continue
        r = DISC_FRACTION * p.real
        # keep the circle itself clear of every pole
        for _ in range(40):
            zeta = _circle(p, r)
            gap = min(np.abs(zeta[:, None] - np.asarray(poles)[None, :]).min(), np.inf)
            if gap >= 0.2 * r:
                break
            r *= 0.8
        centres.append(p)
        radii.append(r)
    return Discs(np.array(centres, dtype=complex), np.array(radii, dtype=float))


def _absorbed(system, discs):
    if discs is None or not discs.count or not system.maps:
        return False
    z = complex(system.limit_point())
    return bool(np.any(np.abs(z - discs.centres) / discs.radii < TRIGGER))


def _circle(centre, radius):
    return centre + radius * np.exp(2j * np.pi * (np.arange(CIRCLE_POINTS) + 0.5) / CIRCLE_POINTS)


def _circle_weights(z0, gamma, centre, radius, order, G):
    """Jet weights ``W_q`` with ``G(s) rho(z(s)) = sum_q W_q(s) rho(zeta_q)``.

    ``z(s)`` has value ``z0`` and slope ``gamma``; the Cauchy integral over the
    circle is discretised by the trapezoid rule.
    """
    zeta = _circle(centre, radius)
    base = (zeta - centre) / CIRCLE_POINTS
    r = np.arange(order + 1)[:, None]
    w = base[None, :] * gamma**r / (zeta[None, :] - z0) ** (r + 1)      # (d+1, N)
    return (Jet(G[:, None]) * Jet(w)).c


def _orbit_forcing_bound(system, s, order, centres, radii):
    """Sampled bound on the weighted forcing over every composite point.

    With real scales in (0, 1) all composite points lie on the segment from
    the common fixed point to ``s``. Returns 0 when that does not hold.
    """
    scales = np.array([m.scale for m in system.maps], dtype=complex)
    if not scales.size or np.any(np.abs(scales.imag) > 0) or np.any((scales.real <= 0) | (scales.real >= 1)):
        return 0.0
    p = complex(system.limit_point())
    gam = np.concatenate([[0.0], np.logspace(-16, 0, ORBIT_SAMPLES)])
    z = p + gam[None, :] * (s[:, None] - p)
    ok = np.ones(z.shape, dtype=bool)
    if centres.size:
        ok &= ~(np.abs(z[..., None] - centres) / radii < TRIGGER).any(-1)
    poles = np.asarray([q for q in system.poles if not _is_removable(q)], dtype=complex)
    if poles.size:
        ok &= ~(np.abs(z[..., None] - poles) < POLE_GUARD * np.maximum(1.0, np.abs(poles))).any(-1)
    if not ok.any():
        return 0.0
    zs, gs = z[ok], np.broadcast_to(gam, z.shape)[ok]
    _, h = system.effective(Jet.variable(zs, order))
    hc = np.abs(h.c) * gs[None, :, None] ** np.arange(order + 1).reshape(-1, 1, 1)
    bound = hc.sum(axis=0).max()
    return float(ORBIT_SAFETY * bound) if np.isfinite(bound) else 0.0


def _walk(system, s, order, tol, max_nodes, max_rank, prune, collect=None, discs=None):
    """Lattice accumulation shared by series evaluation and lattice inspection.

    Nodes are keyed by exponent sums and processed in layers of increasing
    rank (the sum of the key entries). Every map raises the rank by at least
    ``rmin``, so a layer of width ``rmin`` only feeds later layers and each
    node is expanded once, after all its predecessors have been merged in.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    S = s.size
    L = len(system.maps)
    K = system.n_unknowns
    scales = np.array([m.scale for m in system.maps], dtype=complex)
    shifts = np.array([m.shift for m in system.maps], dtype=complex)
    E = system.exponents
    D = E.shape[1] if L else 1
    erank = E.sum(axis=1) if L else np.ones(1, dtype=np.int64)
    if L and erank.min() < 1:
        raise DomainError("map exponents must have positive rank")
    rmin = int(erank.min())
    kappa = contraction(system)
    ksum = float(kappa.sum())
    if ksum >= 1:
        # orbits that end inside an excision disc are absorbed there
        if not _absorbed(system, discs):
            raise DivergenceError(f"contraction sum {ksum:.6f} >= 1")
        ksum = 0.0

    keys = np.zeros((1, D), dtype=np.int64)
    gam = np.ones(1, dtype=complex)
    dlt = np.zeros(1, dtype=complex)
    G = np.zeros((order + 1, S, 1), dtype=complex)
    G[0] = 1.0
    ny = discs.n_values if discs is not None else 0
    acc = np.zeros((order + 1, S, K + 1 + ny), dtype=complex)
    rpow = np.arange(order + 1).reshape(-1, 1)
    total_nodes = 0
    dropped = 0.0
    prev_mass = None
    calm = 0
    tail = np.inf
    layers = 0
    if discs is not None and discs.count:
        centres, radii = discs.centres, discs.radii
    else:
        centres, radii = np.zeros(0, dtype=complex), np.zeros(0)
    # the forcing can grow along the orbit, so bound pruned mass by its sup
    hbound = _orbit_forcing_bound(system, s, order, centres, radii) if prune else 0.0
    while keys.shape[0]:
        rank = keys.sum(axis=1)
        r0 = int(rank.min())
        if max_rank is not None and r0 > max_rank:
            break
        sel = rank < r0 + rmin
        rest = ~sel
        pool = (keys[rest], gam[rest], dlt[rest], G[..., rest])
        keys, gam, dlt, G = keys[sel], gam[sel], dlt[sel], G[..., sel]
        n = keys.shape[0]
        total_nodes += n
        if total_nodes > max_nodes:
            raise TruncationError(f"lattice exceeded {max_nodes} nodes before reaching tolerance {tol:g}")
        z = gam[None, :] * s[:, None] + dlt[None, :]
        if centres.size:
            dist = np.abs(z[..., None] - centres) / radii
            inside = dist < TRIGGER
            hit = inside.any(-1)
            if hit.any():
                for i, k in zip(*np.nonzero(hit)):
                    j = int(np.argmin(dist[i, k]))
                    cols = slice(K + 1 + j * CIRCLE_POINTS, K + 1 + (j + 1) * CIRCLE_POINTS)
                    acc[:, i, cols] += _circle_weights(z[i, k], gam[k], centres[j], radii[j], order, G[:, i, k])
                G = G.copy()
                G[:, hit] = 0.0
                z = np.where(hit, z + radii.max() * 3 + 1.0, z)
        _check_poles(system, z)
        sj = Jet.variable(z, order)
        c, h = system.effective(sj)
        if order:
            gp = gam[None, :] ** rpow                      # (d+1, n)
            hc = h.c * gp[:, None, :, None]
            acc[..., :K + 1] += (Jet(G[..., None]) * Jet(hc)).c.sum(axis=2)
        else:
            hc = h.c
            acc[0, :, :K + 1] += np.einsum("sn,snk->sk", G[0], hc[0])
        if collect is not None:
            collect(layers, keys, Jet(G), z)
        layers += 1
        hsup = float(np.abs(hc).sum(axis=0).max()) if n else 0.0
        hbound = max(hbound, hsup)
        if L == 0:
            tail = 0.0
            break
        if order:
            cc = c.c * gp[:, None, :, None]                 # (d+1, S, n, L)
            P = (Jet(G[..., None]) * Jet(cc)).c             # (d+1, S, n, L)
        else:
            P = (G[0][..., None] * c.c[0])[None]
        # children, merged with the pending pool
        ck = (keys[:, None, :] + E[None, :, :]).reshape(n * L, D)
        cg = (gam[:, None] * scales[None, :]).reshape(-1)
        cd = (dlt[:, None] * scales[None, :] + shifts[None, :]).reshape(-1)
        cG = P.reshape(order + 1, S, n * L)
        allk = np.concatenate([pool[0], ck])
        allg = np.concatenate([pool[1], cg])
        alld = np.concatenate([pool[2], cd])
        allG = np.concatenate([pool[3], cG], axis=2)
        new_keys, first, inv = np.unique(allk, axis=0, return_index=True, return_inverse=True)
        inv = inv.reshape(-1)
        ng, nd = allg[first], alld[first]
        # scales deep in the lattice underflow to denormals, which carry no relative precision
        if np.any(np.abs(allg - ng[inv]) > 1e-10 * np.abs(ng[inv]) + 1e-290) or np.any(
            np.abs(alld - nd[inv]) > 1e-10 * (1 + np.abs(nd[inv]))
        ):
            raise NonCommutingMaps("composite points differ across map orderings")
        nn = new_keys.shape[0]
        if nn == inv.size:
            newG = allG[..., np.argsort(inv)]
        else:
            merge = sparse.csr_matrix((np.ones(inv.size), (inv, np.arange(inv.size))), shape=(nn, inv.size))
            newG = merge @ np.moveaxis(allG, 2, 0).reshape(inv.size, -1)
            newG = np.moveaxis(newG.reshape(nn, order + 1, S), 0, 2)
        norms = np.abs(newG).sum(axis=0).max(axis=0)        # per node
        if prune and hbound > 0:
            thresh = tol * (1 - ksum) / hbound
            keep = norms >= thresh
            # the pruned mass accumulates, so cap its total at half the budget
            budget = 0.5 * thresh - dropped
            cand = np.nonzero(~keep)[0]
            if cand.size:
                order_c = cand[np.argsort(norms[cand])]
                over = order_c[np.cumsum(norms[order_c]) > budget]
                keep[over] = True
            dropped += float(norms[~keep].sum())
            newG, new_keys, ng, nd, norms = newG[..., keep], new_keys[keep], ng[keep], nd[keep], norms[keep]
        mass = float(norms.sum())
        ratio = mass / prev_mass if prev_mass else ksum
        prev_mass = mass
        r = max(ksum, min(ratio, 0.999))
        tail = (mass + dropped) * max(hbound, hsup) / (1 - r)
        G, keys, gam, dlt = newG, new_keys, ng, nd
        if max_rank is not None:
            continue
        calm = calm + 1 if tail < tol else 0
        if calm >= 2:
            break
        if layers > 20000:
            raise TruncationError("lattice depth limit reached")
    if not keys.shape[0] and L:
        tail = dropped * max(hbound, hsup) / (1 - ksum) if np.isfinite(tail) else tail
    return acc, tail, layers, total_nodes


def series_eval(system, s, order=0, tol=1e-12, max_nodes=MAX_NODES, discs=None, chunk=64):
    """Truncated lattice sum at ``s`` (scalar or 1-D array).

    Returns a :class:`SeriesResult` whose ``A`` has batch shape ``(S,)`` and
    ``B`` has batch shape ``(S, K + n_circle)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    parts = []
    for i in range(0, max(s.size, 1), chunk):
        parts.append(_walk(system, s[i:i + chunk], order, tol, max_nodes, None, True, discs=discs))
    acc = np.concatenate([p[0] for p in parts], axis=1)
    return SeriesResult(A=Jet(acc[..., 0]), B=Jet(acc[..., 1:]), tail=float(max(p[1] for p in parts)),
                        depth=max(p[2] for p in parts), nodes=sum(p[3] for p in parts))


def lattice_coefficients(system, s, max_total, order=0):
    """Lattice weights by key up to total depth ``max_total``.

    Returns a dict mapping key tuples (exponent sums; multi-indices by
    default) to jets with batch shape ``(S,)``.
    """
    out = {}

    def collect(depth, keys, G, z):
        for i, k in enumerate(keys):
            out[tuple(int(v) for v in k)] = G[:, i]

    _walk(system, s, order, np.inf, np.inf, max_total, False, collect=collect)
    return out


@dataclass
class TransformSolution:
    """Resolved unknowns ``u`` plus the values ``y`` of ``rho`` on the excision circles."""

    system: FeqSystem
    resolved_unknowns: np.ndarray
    tail_bound: float
    residual: float
    tol: float = 1e-12
    max_nodes: int = MAX_NODES
    discs: Discs = None
    circle_values: np.ndarray = None

    @property
    def u(self):
        return self.resolved_unknowns

    @property
    def x(self):
        y = self.circle_values if self.circle_values is not None else np.zeros(0, dtype=complex)
        return np.concatenate([np.asarray(self.resolved_unknowns, dtype=complex), y])

    def evaluate(self, s, order=0):
        return rho_eval(self, s, order=order)

    def __call__(self, s):
        return rho_eval(self, s)


def _collocation_points(system):
    pts, rows = [], []
    for k, u in enumerate(system.unknowns):
        if u.collocate:
            pts.append(complex(u.point))
            rows.append(("unknown", k))
    for e in system.extra_equations:
        for l, m in enumerate(system.maps):
            pts.append(complex(m(e.point)))
        rows.append(("root", e))
    return np.array(pts, dtype=complex), rows


def solve_unknowns(system, tol=1e-12, max_nodes=MAX_NODES):
    """Resolve the unknowns jointly with the circle values.

    Rows are: collocation of each collocated unknown, the functional equation
    at each root, and ``y_q = rho(zeta_q)`` at every circle point.
    """
    K = system.n_unknowns
    n_eq = sum(u.collocate for u in system.unknowns) + len(system.extra_equations)
    if n_eq != K:
        raise CountMismatch(f"{n_eq} equations for {K} unknowns")
    discs = excision_discs(system)
    ny = discs.n_values
    N = K + ny
    if N == 0:
        return TransformSolution(system, np.zeros(0, dtype=complex), 0.0, 0.0, tol, max_nodes, discs,
                                 np.zeros(0, dtype=complex))
    order = system.jet_order()
    pts, rows = _collocation_points(system)
    M = np.zeros((N, N), dtype=complex)
    rhs = np.zeros(N, dtype=complex)
    tail = 0.0
    if pts.size:
        res = series_eval(system, pts, order=order, tol=tol, max_nodes=max_nodes, discs=discs)
        tail = res.tail
    else:
        res = SeriesResult(A=Jet(np.zeros((order + 1, 0), dtype=complex)),
                           B=Jet(np.zeros((order + 1, 0, N), dtype=complex)), tail=0.0, depth=0, nodes=0)
    L = len(system.maps)
    i_pt = 0
    for r, (kind, item) in enumerate(rows):
        if kind == "unknown":
            u = system.unknowns[item]
            l = u.derivative_order
            f = factorial(l)
            M[r] = -f * res.B.c[l, i_pt]
            M[r, item] += 1.0
            rhs[r] = f * res.A.c[l, i_pt]
            i_pt += 1
        else:
            z = np.array([item.point], dtype=complex)
            sj = Jet.variable(z, 0)
            c = system.coeff_fn(sj).c[0, 0]          # (L,)
            h = system.forcing_fn(sj).c[0, 0]        # (K+1,)
            A = res.A.c[0, i_pt:i_pt + L]
            B = res.B.c[0, i_pt:i_pt + L]            # (L, N)
            M[r] = c @ B
            M[r, :K] += h[1:]
            rhs[r] = -(c @ A + h[0])
            i_pt += L
    if ny:
        circ = series_eval(system, discs.points(), order=0, tol=tol, max_nodes=max_nodes, discs=discs)
        tail = max(tail, circ.tail)
        M[K:] = -circ.B.c[0]
        M[K:, K:] += np.eye(ny)
        rhs[K:] = circ.A.c[0]
    sol = solve_linear(LinearSystem(M, rhs))
    return TransformSolution(system, sol.x[:K], tail, sol.residual, tol, max_nodes, discs, sol.x[K:])


def _eval_direct(sol, s, order):
    res = series_eval(sol.system, s, order=order, tol=sol.tol, max_nodes=sol.max_nodes, discs=sol.discs)
    return res.value(sol.x)


def rho_eval(sol, s, order=0, delta=1e-5):
    """Evaluate the solved transform at ``s`` (scalar or array).

    Returns complex values for ``order == 0`` and Taylor coefficients of
    shape ``(order + 1, S)`` otherwise. Points whose lattice images approach a
    coefficient pole are evaluated by symmetric radial perturbation.
    """
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    try:
        c = _eval_direct(sol, s, order)
    except PoleProximity:
        c = np.empty((order + 1, s.size), dtype=complex)
        for i, si in enumerate(s):
            try:
                c[:, i] = _eval_direct(sol, np.array([si]), order)[:, 0]
            except PoleProximity:
                up = _eval_direct(sol, np.array([si * (1 + delta)]), order)[:, 0]
                dn = _eval_direct(sol, np.array([si * (1 - delta)]), order)[:, 0]
                c[:, i] = 0.5 * (up + dn)
    if order == 0:
        return c[0, 0] if scalar else c[0]
    return c[:, 0] if scalar else c


def fe_residual(sol, s):
    """``|rho(s) - rhs(s)|`` with the raw (un-divided) equation at points ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    system = sol.system
    sj = Jet.variable(s, 0)
    c = system.coeff_fn(sj).c[0]                     # (S, L)
    h = system.forcing_fn(sj).c[0]                   # (S, K+1)
    pts = np.concatenate([s] + [m(s) for m in system.maps])
    vals = rho_eval(sol, pts).reshape(len(system.maps) + 1, s.size)
    rho = vals[0]
    rhs = h[:, 0] + h[:, 1:] @ sol.u
    if system.identity_fn is not None:
        rhs = rhs + system.identity_fn(sj).c[0] * rho
    rhs = rhs + np.einsum("sl,ls->s", c, vals[1:])
    return np.abs(rho - rhs)


def _round_key(z, digits=10):
    z = complex(z)
    return (round(z.real, digits), round(z.imag, digits))


def _columns(system, sj):
    out = {}
    c = system.coeff_fn(sj).c[0]
    for l, m in enumerate(system.maps):
        key = ("map",) + _round_key(m.scale) + _round_key(m.shift)
        out[key] = out.get(key, 0) + c[:, l]
    h = system.forcing_fn(sj).c[0]
    out[("h0",)] = h[:, 0]
    for k, u in enumerate(system.unknowns):
        out[("u",) + _round_key(u.point) + (u.derivative_order,)] = h[:, k + 1]
    if system.identity_fn is not None:
        out[("id",)] = system.identity_fn(sj).c[0]
    return out


def system_distance(a, b, s):
    """Largest coefficientwise difference between two systems at points ``s``.

    Coefficients are matched by map, forcing columns by unknown; a column
    present in only one system is compared with zero.
    """
    sj = Jet.variable(np.atleast_1d(np.asarray(s, dtype=complex)), 0)
    ca, cb = _columns(a, sj), _columns(b, sj)
    zero = np.zeros(sj.shape, dtype=complex)
    return max(float(np.abs(ca.get(k, zero) - cb.get(k, zero)).max()) for k in set(ca) | set(cb))
