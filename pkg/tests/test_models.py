from math import comb, log

import numpy as np
import pytest
from scipy.integrate import quad

from dualrisk.copulas import Fgm, Gfgm, gain_tilt_poly, gz_star, h_star
from dualrisk.distributions import Deterministic, erlang, exponential
from dualrisk.errors import (
    ConvergenceGuard,
    NoDensityError,
    ParseError,
    UnsupportedCombination,
    UnsupportedFunctional,
)
from dualrisk.feq import contraction, fe_residual, rho_eval, solve_unknowns, system_distance
from dualrisk.models import (
    MODEL_TYPES,
    CausalProportional,
    FgmMixture,
    FgmProportional,
    GfgmProportional,
    LinearDependence,
    TwoSided,
    UniformProportional,
    build_ruin_system,
    build_time_system,
    chi_transforms,
    model_to_dict,
    parse_model,
    psi_iterate,
)
from dualrisk.numerics import Jet
from dualrisk.selfcheck import reduction_pairs, residual_models, takacs_transform

S = np.array([0.3 + 1j, 2.0, 1.1 - 0.5j, 4.0 + 3j])


def lst(dist, s):
    return dist.lst(Jet.variable(np.asarray(s, dtype=complex), 0)).c[0]


def coefficient(system, s):
    return system.coeff_fn(Jet.variable(np.asarray(s, dtype=complex), 0)).c[0]


# ---------------------------------------------------------------------------
# coefficient formulas


def fgm_J(B, n, mu, theta, a, s):
    phi, hs = lst(B, s), h_star(B, s, 0).c[0]
    m = mu * (1 + a)
    out = (phi - theta * hs) / (1 + a) * (m / (m - s)) ** n
    return out + 2 * theta * hs / (1 + a) * sum(comb(n - 1 + i, i) * (m / (2 * m - s)) ** (n + i) for i in range(n))


@pytest.mark.parametrize("n,theta,a,mu", [(1, 0.0, 0.5, 1.0), (2, 0.5, 0.25, 1.2), (3, -0.7, 0.5, 0.8)])
def test_fgm_coefficient_matches_closed_form(n, theta, a, mu):  # [PAPER]
    B = erlang(2, 1.3)
    system = build_ruin_system(FgmProportional(B, n, mu, theta, a))
    assert len(system.maps) == 1 and abs(system.maps[0].scale - 1 / (1 + a)) < 1e-15
    np.testing.assert_allclose(coefficient(system, S)[:, 0], fgm_J(B, n, mu, theta, a, S), atol=1e-13)


def test_independent_coefficient():
    # theta = 0, one stage: phi(s) mu / (mu (1 + a) - s)
    B, mu, a = exponential(1.3), 1.0, 0.5
    system = build_ruin_system(FgmProportional(B, 1, mu, 0.0, a))
    np.testing.assert_allclose(coefficient(system, S)[:, 0], lst(B, S) * mu / (mu * (1 + a) - S), atol=1e-14)


@pytest.mark.parametrize("theta,k,b,c,d", [(0.3, 1, 1, 2, 1), (-0.4, 2, 1, 2, 3), (0.5, 1, 2, 3, 1), (0.5, 1, 1, 4, 2)])
def test_gfgm_coefficient_matches_derived_form(theta, k, b, c, d):
    # [DERIVED] expanding (1 - e^{-mu y})^{c-1} in powers of e^{-mu y}, reindexed by i -> c - 1 - i,
    # carries the sign (-1)^{c-1-i}
    B, mu, a = erlang(2, 1.3), 1.0, 0.5
    system = build_ruin_system(GfgmProportional(B, mu, theta, k, b, c, d, a))
    phi, g = lst(B, S), gz_star(B, k, b, S, 0).c[0]
    m = mu * (1 + a)
    tilt = sum(comb(c - 1, i) * (-1) ** (c - 1 - i) * ((c + d) / (m * (c + d - i) - S) - d / (m * (c + d - i - 1) - S))
               for i in range(c))
    J = mu * phi / (m - S) + theta * (phi - g) * mu * tilt
    np.testing.assert_allclose(coefficient(system, S)[:, 0], J, atol=1e-13)


@pytest.mark.parametrize("model", [
    FgmProportional(erlang(2, 1.3), 2, 1.0, 0.5, 0.5),
    GfgmProportional(erlang(2, 1.3), 1.0, 0.3, 1, 1, 2, 1, 0.5),
    GfgmProportional(exponential(0.8), 1.0, -0.6, 2, 1, 3, 2, 0.25),
])
def test_coefficient_limit_is_phi0_over_one_plus_a(model):
    kappa = contraction(build_ruin_system(model))
    np.testing.assert_allclose(kappa.sum(), 1 / (1 + model.a), atol=1e-12)


@pytest.mark.parametrize("m,nu", [(1, 1.0), (2, 1.3), (3, 0.7)])
def test_fgm_gain_tilt_closed_form(m, nu):
    # d(s) = 2 sum_i binom(m+i-1, i) (nu/(2nu-s))^{m+i} - (nu/(nu-s))^m is the tilt transform at -s
    tilt = gain_tilt_poly(erlang(m, nu), Fgm(0.5))
    s = np.array([0.3 + 1j, 1.1 - 0.5j, 4.0 + 3j, -0.5])
    ref = 2 * sum(comb(m + i - 1, i) * (nu / (2 * nu - s)) ** (m + i) for i in range(m)) - (nu / (nu - s)) ** m
    np.testing.assert_allclose(tilt.laplace_value(-s), ref, atol=1e-12)
    assert abs(tilt.laplace_value(np.array([0.0]))[0]) < 1e-14


@pytest.mark.parametrize("c,d", [(1, 1), (1, 2), (2, 2), (3, 1)])
def test_gfgm_gain_tilt_vanishes_at_zero(c, d):
    tilt = gain_tilt_poly(exponential(1.4), Gfgm(0.5, 1, 1, c, d))
    assert abs(tilt.laplace_value(np.array([0.0]))[0]) < 1e-14


# ---------------------------------------------------------------------------
# threshold-dependent branches


@pytest.mark.parametrize("T", [exponential(0.7), erlang(2, 1.1), Deterministic(0.7)])
def test_chi_sum_is_phi(T):  # [PAPER]
    B = erlang(2, 1.3)
    model = CausalProportional(B, T, 0.25, 0.5, exponential(1.0), exponential(1.0))
    c0, c1 = chi_transforms(model, S)
    np.testing.assert_allclose(c0 + c1, lst(B, S), atol=1e-13)


def test_chi_with_deterministic_interarrival():
    B = Deterministic(0.5)
    model = CausalProportional(B, exponential(0.7), 0.25, 0.5, exponential(1.0), exponential(1.0))
    c0, c1 = chi_transforms(model, S)
    np.testing.assert_allclose(c0, np.exp(-0.5 * S) * np.exp(-0.7 * 0.5), atol=1e-14)
    np.testing.assert_allclose(c0 + c1, np.exp(-0.5 * S), atol=1e-14)


def test_chi_against_quadrature():
    # E e^{-sB} 1(T >= B) = int e^{-sx} P(T >= x) f_B(x) dx
    B, T = erlang(2, 1.3), exponential(0.7)
    model = CausalProportional(B, T, 0.25, 0.5, exponential(1.0), exponential(1.0))
    s = 0.8 + 0.6j
    f = lambda x: 1.3**2 * x * np.exp(-1.3 * x) * np.exp(-0.7 * x) * np.exp(-s * x)
    ref = quad(lambda x: f(x).real, 0, np.inf, epsabs=1e-14)[0] + 1j * quad(lambda x: f(x).imag, 0, np.inf, epsabs=1e-14)[0]
    assert abs(chi_transforms(model, np.array([s]))[0][0] - ref) < 1e-10


# ---------------------------------------------------------------------------
# reductions and time systems


@pytest.mark.parametrize("name", list(reduction_pairs()))
def test_reduction_is_coefficientwise_identical(name):
    a, b = reduction_pairs()[name]
    assert system_distance(a, b, S) <= 1e-12


@pytest.mark.parametrize("model", [
    residual_models()["causal_proportional"],
    residual_models()["fgm_proportional"],
    residual_models()["linear_dependence"],
])
def test_time_system_at_alpha_zero_is_ruin_system(model):  # [PAPER]
    assert system_distance(build_time_system(model, 0.0), build_ruin_system(model), S) <= 1e-12


def test_time_functional_limited_to_three_models():
    with pytest.raises(UnsupportedFunctional):
        build_time_system(residual_models()["two_sided"], 0.5)


def test_busy_period_transform():  # [DERIVED: Takacs quadratic]
    lam, mu, alpha = 1.0, 1.5, 0.5
    sol = solve_unknowns(build_time_system(LinearDependence(lam, mu, 0.0, 0.0, 0.0), alpha))
    s = np.array([0.5, 1.0, 2.0, 1 + 1j])
    np.testing.assert_allclose(rho_eval(sol, s), takacs_transform(lam, mu, alpha, s), atol=1e-8)
    # mu tau(mu, alpha) against the classical busy period LST started by one exp(mu) job
    beta = (lam + mu + alpha - np.sqrt((lam + mu + alpha) ** 2 - 4 * lam * mu)) / (2 * lam)
    assert abs(mu * rho_eval(sol, mu) - beta) < 1e-8


def test_psi_iterate_closed_form():  # [PAPER]
    c, a, s, beta = 0.2, 0.3, 0.7 + 0.2j, 1.3
    cb = 1 - c
    for j in range(6):
        ref = beta / (cb * (1 + a)) ** j + sum(c * s / (cb * (1 + a)) ** i for i in range(1, j + 1))
        assert abs(psi_iterate(1 / (cb * (1 + a)), c * s / (cb * (1 + a)), beta, j) - ref) < 1e-13


def test_linear_dependence_guards():
    with pytest.raises(UnsupportedCombination):
        build_ruin_system(LinearDependence(1.0, 1.0, 0.0, 0.0, 0.0))
    with pytest.raises(ConvergenceGuard):
        build_ruin_system(LinearDependence(1.0, 1.0, 0.0, 0.1, 0.5))


# ---------------------------------------------------------------------------
# uniform proportional factor


def nystrom_rho_mu(B, mu, a, b, nz=60, nv=60):
    """rho(mu) from the ratio of two series, each solved as a 1-D integral equation.

    Both series are ``u = f + K u`` on the real segment ``(0, mu]``; they are
    discretised with Chebyshev interpolation in ``z`` and Gauss-Legendre in ``v``.
    """
    phi = lambda z: lst(B, z).real
    k = np.arange(nz)
    z = 0.5 * mu * (np.cos((2 * k + 1) * np.pi / (2 * nz)) + 1)
    bw = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * nz))
    x, w = np.polynomial.legendre.leggauss(nv)
    v = 0.5 * (b - a) * x + 0.5 * (a + b)
    w = 0.5 * (b - a) * w

    def interp(zq):
        r = bw / (zq[..., None] - z)
        return r / r.sum(-1, keepdims=True)

    K = np.zeros((nz, nz))
    for q in range(nv):
        K += (w[q] * phi(z) * mu / (mu * (1 + v[q]) - z) / (b - a))[:, None] * interp(z / (1 + v[q]))
    A = np.eye(nz) - K
    num = np.linalg.solve(A, (1 - phi(z)) / z)
    den = np.linalg.solve(A, phi(z) * np.log(((1 + b) * mu - z) / ((1 + a) * mu - z)))
    e = interp(np.array([mu]))[0]
    return (e @ num) / (1 + (e @ den) / (b - a))


@pytest.mark.parametrize("B,mu,a,b", [(exponential(1.0), 1.0, 0.25, 0.5), (erlang(2, 2.0), 1.5, 0.5, 1.0)])
def test_uniform_unknown_against_nystrom(B, mu, a, b):  # [DERIVED: Nystrom ratio oracle]
    sol = solve_unknowns(build_ruin_system(UniformProportional(B, mu, a, b)))
    assert abs(sol.u[0] - nystrom_rho_mu(B, mu, a, b)) < 1e-9


def test_uniform_panel_doubling_is_stable():
    B = exponential(1.0)
    s = np.array([0.5, 2.0 + 1j, 4.0])
    coarse = solve_unknowns(build_ruin_system(UniformProportional(B, 1.0, 0.5, 1.0, panels=24)))
    fine = solve_unknowns(build_ruin_system(UniformProportional(B, 1.0, 0.5, 1.0, panels=48)))
    assert np.abs(rho_eval(coarse, s) - rho_eval(fine, s)).max() < 1e-8


def test_uniform_guard():
    assert log(2.0 / 1.5) < 1
    UniformProportional(exponential(1.0), 1.0, 0.5, 1.0)
    with pytest.raises(ConvergenceGuard):
        UniformProportional(exponential(1.0), 1.0, 0.1, 3.0)


# ---------------------------------------------------------------------------
# residuals and validation


@pytest.fixture(scope="module")
def solved():
    return {name: solve_unknowns(build_ruin_system(model)) for name, model in residual_models().items()}


@pytest.mark.parametrize("name", list(residual_models()))
def test_functional_equation_residual(solved, name):  # [DERIVED: residual oracle]
    rng = np.random.default_rng(20)
    s = rng.uniform(0.1, 5, 20) + 1j * rng.uniform(-5, 5, 20)
    assert fe_residual(solved[name], s).max() < 1e-6


@pytest.mark.parametrize("name", ["fgm_proportional", "two_sided", "uniform_proportional"])
def test_initial_value(solved, name):
    # R(0) = 1, so s rho(s) -> 1
    s = 1e5
    assert abs(s * rho_eval(solved[name], s) - 1) < 1e-3


def test_copula_needs_density():
    with pytest.raises(UnsupportedCombination):
        build_ruin_system(FgmProportional(Deterministic(1.0), 1, 1.0, 0.5, 0.5))
    with pytest.raises(NoDensityError):
        build_ruin_system(FgmMixture(Deterministic(1.0), 0.6, 0.25, 1, 1.0, 0.0, 1, 1.3, 0.0))


def test_deterministic_interarrival_without_dependence(solved):
    sol = solve_unknowns(build_ruin_system(FgmProportional(Deterministic(1.0), 1, 1.0, 0.0, 0.5)))
    assert fe_residual(sol, np.array([1.0, 2 + 1j])).max() < 1e-8


def test_two_sided_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        TwoSided(exponential(1.0), 0.7, (0.5, 0.4), (0.25, 0.5), (1.0,), (0.2,), 1.0, 1.5)


@pytest.mark.parametrize("name", list(residual_models()))
def test_model_dict_round_trip(name):
    model = residual_models()[name]
    d = model_to_dict(model)
    assert d["type"] in MODEL_TYPES
    assert parse_model(d) == model


def test_parse_dependence_table():
    d = {"type": "fgm_proportional", "B": {"kind": "exponential", "rate": 1.0}, "n": 2, "mu": 1.0, "a": 0.5,
         "dependence": {"type": "fgm", "theta": 0.25}}
    assert parse_model(d) == FgmProportional(exponential(1.0), 2, 1.0, 0.25, 0.5)


def test_parse_keeps_real_support():
    d = {"type": "uniform_proportional", "B": {"kind": "exponential", "rate": 1.0}, "mu": 1.0, "a": 0.5, "b": 1.5}
    assert parse_model(d).b == 1.5


@pytest.mark.parametrize("d", [
    {"type": "nope"},
    {"mu": 1.0},
    {"type": "fgm_proportional", "B": {"kind": "exponential", "rate": 1.0}, "n": 1, "mu": 1.0, "theta": 0.0,
     "a": 0.5, "extra": 1},
    {"type": "fgm_proportional", "B": {"kind": "exponential", "rate": 1.0}, "n": 1, "mu": 1.0, "theta": 1.5,
     "a": 0.5},
    {"type": "fgm_proportional", "B": {"kind": "exponential", "rate": 1.0}, "n": "x", "mu": 1.0, "theta": 0.0,
     "a": 0.5},
])
def test_parse_errors(d):
    with pytest.raises(ParseError):
        parse_model(d)
