"""Test-function families, kernel closed forms, and the flag audits."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nck.testfn import (FlagAuditError, TestFunction, by_name, cap, delta_phi,
                        ell0_kernel, ell_kernel, identity, lambda_kernel,
                        linear_combination, one, phi_eps, power)


def test_lambda_vanishes_for_identity():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0, 10, (2, 200))
    assert np.max(np.abs(lambda_kernel(identity(), x, y))) < 1e-14


def test_lambda_square_at_1_1():
    assert lambda_kernel(power(2), 1.0, 1.0) == pytest.approx(2.0)


def test_lambda_phi_eps_example():
    # phi(2) + phi(0) - 2 phi(1) = 0 + 1 - 0 for the eps = 1 family
    assert lambda_kernel(phi_eps(1.0), 1.0, 1.0) == pytest.approx(1.0)


def test_lambda_symmetry():
    rng = np.random.default_rng(2)
    x, y = rng.uniform(0, 5, (2, 64))
    p = phi_eps(0.7)
    assert np.allclose(lambda_kernel(p, x, y), lambda_kernel(p, y, x))


def test_ell_constant_is_minus_x():
    x = np.linspace(0, 5, 11)
    assert np.allclose(ell_kernel(one(), x), -x)


def test_ell_identity_vanishes():
    x = np.linspace(0, 5, 11)
    assert np.max(np.abs(ell_kernel(identity(), x))) == 0.0


def test_ell_power_closed_form():
    # x phi - 2 int phi = ((alpha-1)/(alpha+1)) x^(alpha+1) for powers
    x = np.linspace(0.0, 3.0, 13)
    for alpha in (2.0, 3.0, 4.5):
        want = (alpha - 1.0) / (alpha + 1.0) * x ** (alpha + 1.0)
        assert np.allclose(ell_kernel(power(alpha), x), want, rtol=1e-12)


def test_ell0_shift_identity():
    x = np.linspace(0, 4, 9)
    for phi in (one(), identity(), phi_eps(1.0), cap(2.0)):
        phi0 = float(phi.f(np.array(0.0)))
        assert np.allclose(ell0_kernel(phi, x), ell_kernel(phi, x) + x * phi0)
    assert np.allclose(ell0_kernel(one(), x), 0.0)
    assert ell0_kernel(power(2), 1.0) == pytest.approx(1.0 / 3.0)


def test_delta_phi_examples():
    assert delta_phi(identity(), 1.0, 2.0, 1.5) == pytest.approx(0.0)
    assert delta_phi(one(), 0.3, 0.4, 5.0) == pytest.approx(0.0)
    assert delta_phi(power(2), 1.0, 1.0, 1.0) == pytest.approx(0.0)
    # x4 clamps at zero when x3 exceeds x1 + x2
    assert delta_phi(power(2), 1.0, 1.0, 3.0) == pytest.approx(9.0 - 2.0)


def test_phi_eps_family():
    p = phi_eps(1.0)
    assert p.f(np.array(0.0)) == 1.0
    assert np.all(p.f(np.linspace(1.0, 5.0, 9)) == 0.0)
    assert p.antiderivative(np.array(1.0)) == pytest.approx(1.0 / 3.0)
    assert p.antiderivative(np.array(9.0)) == pytest.approx(1.0 / 3.0)


def test_cap_family():
    c = cap(4.0)
    x = np.array([1.0, 4.0, 5.0, 6.0, 9.0])
    assert np.allclose(c.f(x), [1.0, 4.0, 4.75, 5.0, 5.0])
    # C^1 at the blend points
    h = 1e-7
    for pt in (4.0, 6.0):
        left = (c.f(np.array(pt)) - c.f(np.array(pt - h))) / h
        right = (c.f(np.array(pt + h)) - c.f(np.array(pt))) / h
        assert abs(left - right) < 1e-4
    assert c.sup_deriv == 1.0


def test_by_name():
    assert by_name("one").name == "one"
    assert by_name("x").name == "x"
    assert by_name("pow:2").name == "pow:2"
    assert by_name("phi_eps:0.5").kinks == (0.5,)
    assert by_name("cap:3").kinks == (3.0, 5.0)
    with pytest.raises(ValueError):
        by_name("mystery:1")


def test_audit_rejects_false_convexity():
    with pytest.raises(FlagAuditError):
        TestFunction(name="bad", f=lambda x: np.sin(x),
                     antiderivative=lambda x: 1.0 - np.cos(x), convex=True)


def test_audit_rejects_bad_antiderivative():
    with pytest.raises(FlagAuditError):
        TestFunction(name="bad", f=lambda x: x,
                     antiderivative=lambda x: x ** 2)   # off by factor 2
    with pytest.raises(FlagAuditError):
        TestFunction(name="bad", f=lambda x: np.ones_like(x),
                     antiderivative=lambda x: x + 1.0)  # F(0) != 0


def test_audit_rejects_false_monotonicity():
    with pytest.raises(FlagAuditError):
        TestFunction(name="bad", f=lambda x: x,
                     antiderivative=lambda x: 0.5 * x * x, nonincreasing=True)


# ---------------------------------------------------------------------------
# Kernel sign and regularity properties
# ---------------------------------------------------------------------------

def _random_convex_nonincreasing(rng):
    k = rng.integers(1, 4)
    phis = [phi_eps(e) for e in rng.uniform(0.2, 3.0, k)]
    return linear_combination(phis, rng.uniform(0.1, 2.0, k))


def test_convex_kernel_signs():
    rng = np.random.default_rng(3)
    x, y = rng.uniform(0, 8, (2, 200))
    for _ in range(25):
        phi = _random_convex_nonincreasing(rng)
        assert np.all(lambda_kernel(phi, x, y) >= -1e-12)
        assert np.all(ell0_kernel(phi, x) >= -1e-12)
        assert np.all(ell_kernel(phi, x) <= 1e-12)


def test_concave_kernel_signs():
    rng = np.random.default_rng(4)
    x, y = rng.uniform(0, 8, (2, 200))
    for k in (0.5, 2.0, 5.0):
        phi = cap(k)
        assert np.all(lambda_kernel(phi, x, y) <= 1e-12)
        assert np.all(ell0_kernel(phi, x) <= 1e-12)


def test_lambda_lipschitz_bound():
    rng = np.random.default_rng(5)
    x, y = rng.uniform(1e-6, 10.0, (2, 500))
    for phi in (phi_eps(0.5), phi_eps(2.0), cap(3.0)):
        L = phi.lipschitz_constant
        vals = np.abs(lambda_kernel(phi, x, y)) / np.sqrt(x * y)
        assert np.all(vals <= 2.0 * L + 1e-10)


def test_ell_growth_bounds():
    rng = np.random.default_rng(6)
    x = rng.uniform(1e-9, 20.0, 500)
    for phi in (one(), phi_eps(1.0), cap(2.0)):
        sup = phi.sup_norm
        assert np.all(np.abs(ell0_kernel(phi, x)) / np.sqrt(x) <= 4 * sup * np.sqrt(x) + 1e-12)
        assert np.all(np.abs(ell_kernel(phi, x)) / np.sqrt(x) <= 3 * sup * np.sqrt(x) + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_delta_phi_four_bounds(x1, x2, x3):
    # |Dphi| <= min(4 sup|phi|, 2 sup|phi'| |x1-x3|, 2 sup|phi'| |x2-x3|,
    #               sup|phi''| |x1-x3| |x2-x3|) whenever x1 + x2 >= x3
    if x1 + x2 < x3:
        return
    for phi in (phi_eps(1.0), cap(2.0)):
        v = abs(float(delta_phi(phi, x1, x2, x3)))
        bound = min(4 * phi.sup_norm,
                    2 * phi.sup_deriv * abs(x1 - x3),
                    2 * phi.sup_deriv * abs(x2 - x3),
                    phi.sup_second * abs(x1 - x3) * abs(x2 - x3))
        assert v <= bound + 1e-10
