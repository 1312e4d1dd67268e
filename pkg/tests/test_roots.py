import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualrisk.distributions import erlang, exponential
from dualrisk.errors import CountMismatch, OnContourZero
from dualrisk.models import FgmMixture, GfgmMixture, GfgmParams, LinearDependence, build_ruin_system, build_time_system
from dualrisk.numerics import Jet
from dualrisk.roots import PoleSum, count_rhp_zeros, rhp_roots, winding_number
from dualrisk.selfcheck import root_cases


def test_winding_single_zero():  # [TRIVIAL]
    assert winding_number(lambda s: s - 1, 2.0) == 1


def test_winding_counts_only_right_half_plane():  # [TRIVIAL]
    assert winding_number(lambda s: (s - 1) * (s - 2) * (s + 3), 5.0) == 2


def test_winding_excludes_zeros_outside_radius():
    assert winding_number(lambda s: (s - 1) * (s - 10), 5.0) == 1


def test_zero_on_contour():
    with pytest.raises(OnContourZero):
        winding_number(lambda s: s - 2.0, 2.0)


def test_count_grows_radius_until_stable():
    # radius 4 sees two zeros; the count settles at 3 once the radius passes 6
    assert count_rhp_zeros(lambda s: (s - 1) * (s - 6) * (s - 2 - 3j)) == 3


def test_pole_sum_evaluation_and_numerator():
    f = PoleSum(1.0, [(2.0, ((1.0, 1),)), (-0.5, ((2.0, 2), (1.0, 1)))])
    s = np.array([0.3 + 0.4j, 3.0])
    ref = 1 + 2 / (s - 1) - 0.5 / ((s - 2) ** 2 * (s - 1))
    np.testing.assert_allclose(f(s), ref, rtol=1e-14)
    lcd = (s - 1) * (s - 2) ** 2
    np.testing.assert_allclose(f.numerator()(s), ref * lcd, rtol=1e-12)
    h = 1e-6
    np.testing.assert_allclose(f.derivative(s), (f(s + h) - f(s - h)) / (2 * h), rtol=1e-7)


def test_pole_sum_merges_equal_poles():
    f = PoleSum(1.0, [(1.0, ((1.0, 1), (1.0 + 1e-13, 1)))])
    assert f.poles() == {1.0 + 0j: 2}


def test_rhp_roots_simple():
    # 1 - 2/(s+1) = 0 at s = 1
    cert = rhp_roots(PoleSum(1.0, [(-2.0, ((-1.0, 1),))]))
    assert cert.ok and len(cert.roots) == 1
    assert abs(cert.roots[0] - 1) < 1e-12


def test_rhp_roots_expected_count_mismatch():
    with pytest.raises(CountMismatch):
        rhp_roots(PoleSum(1.0, [(-2.0, ((-1.0, 1),))]), expected_count=2)


@settings(max_examples=20, deadline=None)
@given(q=st.floats(0.05, 0.9), nu=st.floats(0.5, 3.0), lam=st.floats(0.5, 3.0))
def test_roots_are_certified_conjugate_and_right(q, nu, lam):
    # 1 - q lam/(lam+s) nu/(nu-s) has one zero with Re > 0
    f = PoleSum(1.0, [(-q * lam * nu, ((-lam, 1), (nu, 1)))])
    cert = rhp_roots(f)
    assert cert.ok
    assert all(z.real > 1e-9 for z in cert.roots)
    assert all(r < 1e-10 for r in cert.residuals)
    for z in cert.roots:
        assert any(abs(np.conj(z) - w) < 1e-8 for w in cert.roots)


@pytest.mark.parametrize("name", list(root_cases()))
def test_model_root_counts(name):  # [PAPER: 3m-1, c2+2, two roots]
    model, alpha, expected = root_cases()[name]
    system = build_ruin_system(model) if alpha is None else build_time_system(model, alpha)
    cert = system.certificate
    assert cert.ok
    assert len(cert.roots) == cert.winding_number == expected


def test_mixture_m2_has_five_roots():  # [PAPER]
    model = FgmMixture(exponential(1.0), 0.6, 0.25, 2, 1.0, 0.5, 2, 1.3, -0.5)
    cert = build_ruin_system(model).certificate
    assert len(cert.roots) == 5 and cert.winding_number == 5


def test_roots_zero_the_identity_denominator():
    # each root makes 1 - c_id vanish in the assembled equation
    for model in (FgmMixture(erlang(2, 2.0), 0.6, 0.25, 1, 1.0, 0.5, 2, 1.3, 0.7),
                 GfgmMixture(exponential(1.0), 0.6, 0.25, GfgmParams(0.5), 1.0, GfgmParams(0.3, 1, 1, 2, 2), 1.4)):
        system = build_ruin_system(model)
        z = np.array(system.certificate.roots)
        c_id = system.identity_fn(Jet.variable(z, 0)).c[0]
        np.testing.assert_allclose(c_id, 1.0, atol=1e-10)


def test_independent_mixture_count_drops():  # [DERIVED: winding count at theta2 = 0]
    for m in (1, 2):
        dep = build_ruin_system(FgmMixture(exponential(1.0), 0.6, 0.25, 2, 1.0, 0.5, m, 1.3, -0.5)).certificate
        ind = build_ruin_system(FgmMixture(exponential(1.0), 0.6, 0.25, 2, 1.0, 0.5, m, 1.3, 0.0)).certificate
        assert ind.ok and len(ind.roots) == m < len(dep.roots) == 3 * m - 1


def test_busy_period_roots():
    system = build_time_system(LinearDependence(1.0, 1.0, 0.5, 0.0, 0.0), 1.0)
    cert = system.certificate
    assert len(cert.roots) == 2 and max(cert.residuals) < 1e-10
    c_id = system.identity_fn(Jet.variable(np.array(cert.roots), 0)).c[0]
    np.testing.assert_allclose(c_id, 1.0, atol=1e-10)
