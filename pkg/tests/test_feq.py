import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from math import comb

from dualrisk.distributions import exponential
from dualrisk.errors import CountMismatch, DivergenceError, DomainError, NonCommutingMaps
from dualrisk.feq import (
    AffineMap,
    FeqSystem,
    Unknown,
    contraction,
    excision_discs,
    fe_residual,
    lattice_coefficients,
    rho_eval,
    series_eval,
    solve_unknowns,
    stack,
    system_distance,
)
from dualrisk.models import FgmProportional, build_ruin_system
from dualrisk.selfcheck import _toy_system, brute_force_coefficients


def constant_system(coeffs, scales, h0=1.0, unknowns=(), hk=()):
    maps = [AffineMap(sc) for sc in scales]

    def coeff_fn(s):
        return stack([s * 0 + c for c in coeffs])

    def forcing_fn(s):
        return stack([s * 0 + h0] + [s * 0 + h for h in hk])

    return FeqSystem(maps=maps, coeff_fn=coeff_fn, forcing_fn=forcing_fn, unknowns=list(unknowns))


# ---------------------------------------------------------------------------
# lattice coefficients


def test_geometric_series_sums_to_two():
    # rho(s) = rho(s/2)/2 + 1  =>  rho = 2  [TRIVIAL]
    res = series_eval(constant_system([0.5], [0.5]), np.array([1.0, 3 + 2j]))
    np.testing.assert_allclose(res.A.c[0], 2.0, atol=1e-11)
    assert res.tail <= 1e-12


def test_origin_coefficient_is_one():
    lat = lattice_coefficients(_toy_system(2), np.array([1.0 + 1j]), 3)
    np.testing.assert_allclose(lat[(0, 0)].c[0], 1.0)


def test_single_map_coefficient_is_product():
    system = _toy_system(1)
    s = np.array([0.7 + 0.4j])
    lat = lattice_coefficients(system, s, 5)
    for n in range(6):
        ref = np.prod([0.3 / (s * 0.5**j + 1.0) for j in range(n)], axis=0)
        np.testing.assert_allclose(lat[(n,)].c[0], ref, rtol=1e-13)


def test_constant_coefficients_give_binomials():
    c0, c1 = 0.3, 0.45
    lat = lattice_coefficients(constant_system([c0, c1], [0.5, 0.25]), np.array([1.0]), 6)
    for j in range(7):
        for l in range(j + 1):
            ref = comb(j, l) * c0**l * c1 ** (j - l)
            np.testing.assert_allclose(lat[(l, j - l)].c[0], ref, rtol=1e-13)


def test_lattice_weights_bounded_by_multinomial():
    # unit-modulus coefficients do not contract, so check the bound on a scaled copy
    lat = lattice_coefficients(constant_system([0.45j, -0.45], [0.5, 0.25]), np.array([1.0]), 5)
    for (i, j), G in lat.items():
        assert abs(G.c[0, 0]) / 0.45 ** (i + j) <= comb(i + j, i) + 1e-12


@pytest.mark.parametrize("n_maps", [2, 3])
@pytest.mark.parametrize("depth", [0, 1, 3, 6])
def test_lattice_matches_word_enumeration(n_maps, depth):
    rng = np.random.default_rng(depth)
    s = rng.uniform(0.1, 4, 10) + 1j * rng.uniform(-4, 4, 10)
    system = _toy_system(n_maps)
    lat = lattice_coefficients(system, s, depth)
    ref = brute_force_coefficients(system, s, depth)
    assert set(lat) == set(ref)
    for key in ref:
        np.testing.assert_allclose(lat[key].c[0], ref[key], atol=1e-9)


def test_lattice_matches_words_on_fgm_model():
    system = build_ruin_system(FgmProportional(exponential(1.0), 1, 1.0, 0.5, 0.5))
    s = np.array([0.3 + 2j, 2.2 - 1j])
    lat = lattice_coefficients(system, s, 4)
    ref = brute_force_coefficients(system, s, 4)
    for key in ref:
        np.testing.assert_allclose(lat[key].c[0], ref[key], atol=1e-9)


def test_non_commuting_maps_rejected():
    system = FeqSystem(
        maps=[AffineMap(0.5, 0.0), AffineMap(0.5, 1.0)],
        coeff_fn=lambda s: stack([s * 0 + 0.2, s * 0 + 0.2]),
        forcing_fn=lambda s: stack([s * 0 + 1.0]),
        unknowns=[],
    )
    with pytest.raises(NonCommutingMaps):
        series_eval(system, np.array([1.0]))


# ---------------------------------------------------------------------------
# series evaluation


def test_divergent_system_refused():
    system = constant_system([0.6, 0.5], [0.5, 0.25])
    assert contraction(system).sum() >= 1
    with pytest.raises(DivergenceError):
        series_eval(system, np.array([1.0]))


def test_non_contracting_map_rejected():
    with pytest.raises(DivergenceError):
        constant_system([0.2], [1.5])


def test_duplicate_unknowns_rejected():
    with pytest.raises(DomainError):
        constant_system([0.2], [0.5], unknowns=[Unknown(1.0), Unknown(1.0)], hk=[1.0, 1.0])


def test_tail_bound_covers_truncation():
    system = _toy_system(2)
    s = np.array([1.0 + 0.5j])
    loose = series_eval(system, s, tol=1e-5)
    tight = series_eval(system, s, tol=1e-14)
    assert abs(loose.A.c[0, 0] - tight.A.c[0, 0]) <= loose.tail
    assert tight.depth > loose.depth


def test_tail_bound_covers_pruning():
    system = _toy_system(3)
    s = np.array([2.0, 0.5 + 1j])
    exact = lattice_coefficients(system, s, 60)
    ref = sum(G.c[0] * (s * 0.5 ** k[0] * (0.6 + 0.1j) ** k[1] * 0.7 ** k[2] + 1.0) ** -1
              for k, G in exact.items())
    for tol in (1e-6, 1e-10):
        res = series_eval(system, s, tol=tol)
        assert np.abs(res.A.c[0] - ref).max() <= res.tail <= tol


def test_tail_bound_decreases_with_tolerance():
    system = _toy_system(3)
    s = np.array([2.0])
    tails = [series_eval(system, s, tol=t).tail for t in (1e-4, 1e-8, 1e-12)]
    assert tails[0] > tails[1] > tails[2]
    assert all(t <= tol for t, tol in zip(tails, (1e-4, 1e-8, 1e-12)))


@settings(max_examples=25, deadline=None)
@given(
    re=st.floats(0.1, 5.0),
    im=st.floats(-5.0, 5.0),
    u=st.floats(-3.0, 3.0),
)
def test_series_is_affine_in_unknowns(re, im, u):
    system = constant_system([0.3], [0.5], unknowns=[Unknown(2.0)], hk=[0.7])
    res = series_eval(system, np.array([complex(re, im)]))
    x = np.array([u])
    lhs = res.value(2 * x) - res.value(x)
    np.testing.assert_allclose(lhs, res.B.c @ x, atol=1e-12)


# ---------------------------------------------------------------------------
# resolution


def test_count_mismatch():
    system = constant_system([0.3], [0.5], unknowns=[Unknown(2.0, collocate=False)], hk=[1.0])
    with pytest.raises(CountMismatch):
        solve_unknowns(system)


def test_single_unknown_fixed_point():
    # rho(s) = 0.3 rho(s/2) + 1 + 0.2 u,  u = rho(2): the limit gives rho = (1 + 0.2u)/0.7
    system = constant_system([0.3], [0.5], unknowns=[Unknown(2.0)], hk=[0.2])
    sol = solve_unknowns(system)
    u = sol.u[0]
    np.testing.assert_allclose(u, 1.0 / 0.5, rtol=1e-12)
    res = series_eval(system, np.array([2.0]))
    np.testing.assert_allclose(res.value(sol.x)[0, 0], u, atol=1e-10)
    assert sol.residual < 1e-8


@pytest.fixture(scope="module")
def fgm_independent():
    model = FgmProportional(exponential(1.0), 1, 1.0, 0.0, 0.5)
    return model, solve_unknowns(build_ruin_system(model))


def test_fgm_independent_fixed_point(fgm_independent):
    model, sol = fgm_independent
    assert len(sol.u) == 1
    assert abs(rho_eval(sol, model.mu) - sol.u[0]) < 1e-10


def test_residual_at_fixed_point(fgm_independent):
    _, sol = fgm_independent
    assert fe_residual(sol, np.array([2 + 3j]))[0] < 1e-6


def test_residual_on_random_points(fgm_independent, rng):
    _, sol = fgm_independent
    s = rng.uniform(0.1, 5, 20) + 1j * rng.uniform(-5, 5, 20)
    assert fe_residual(sol, s).max() < 1e-7


def test_initial_value_theorem(fgm_independent):
    # R(0) = 1: ruin is immediate with zero capital
    _, sol = fgm_independent
    s = 1e5
    assert abs(s * rho_eval(sol, s) - 1) < 1e-3


def test_removable_singularity_is_continuous(fgm_independent):
    model, sol = fgm_independent
    p = model.mu * (1 + model.a)
    left, right = rho_eval(sol, p - 1e-6), rho_eval(sol, p + 1e-6)
    assert abs(left - right) < 1e-5
    mid = rho_eval(sol, p)
    assert abs(mid - 0.5 * (left + right)) < 1e-8


def test_excision_discs_avoid_poles(fgm_independent):
    _, sol = fgm_independent
    discs = excision_discs(sol.system)
    poles = np.array([complex(p) for p in sol.system.poles])
    for c, r in zip(discs.centres, discs.radii):
        assert c.real > 0 and 0 < r < c.real
        ring = c + r * np.exp(2j * np.pi * np.linspace(0, 1, 50))
        assert np.abs(ring[:, None] - poles[None, :]).min() >= 0.2 * r - 1e-12


def test_system_distance_zero_for_same_system(fgm_independent):
    _, sol = fgm_independent
    assert system_distance(sol.system, sol.system, np.array([1.0, 2 + 1j])) == 0.0


def test_system_distance_sees_a_change():
    a = constant_system([0.3], [0.5])
    b = constant_system([0.31], [0.5])
    assert abs(system_distance(a, b, np.array([1.0])) - 0.01) < 1e-14
