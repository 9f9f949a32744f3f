"""Weak-form collision functionals against brute-force oracles."""
import numpy as np
import pytest

from nck.measure import GridSpec, RadialMeasure, bose_einstein, moment, split_atom
from nck.testfn import (by_name, cap, delta_phi, ell0_kernel, ell_kernel,
                        identity, lambda_kernel, one, phi_eps, power)
from nck.weakops import (FunctionalError, phi_capital, q3, q3_linear,
                         q3_linear_tilde, q3_pair, q3_quadratic, q3_tilde,
                         q4_full, q4_script, transfer_functional, weight_w)

BUILTINS = [one(), identity(), power(2), phi_eps(1.0), phi_eps(0.5), cap(2.0), cap(4.0)]


# -- brute-force oracles: independent loop implementations ------------------

def brute_q3_quadratic(phi, g):
    total = 0.0
    for x, wx in g.atoms:
        for y, wy in g.atoms:
            lam = (float(phi.f(np.array(x + y))) + float(phi.f(np.array(abs(x - y))))
                   - 2.0 * float(phi.f(np.array(max(x, y)))))
            total += lam / np.sqrt(x * y) * wx * wy
    return total


def brute_q3_linear(phi, g, origin_weighted=True):
    total = 0.0
    phi0 = float(phi.f(np.array(0.0)))
    for x, w in g.atoms:
        F = float(phi.antiderivative(np.array(x)))
        val = x * float(phi.f(np.array(x))) - 2.0 * F
        if origin_weighted:
            val += x * phi0
        total += val / np.sqrt(x) * w
    return total


def random_atomic(rng, min_x=0.05, max_x=5.0, max_atoms=8):
    k = rng.integers(1, max_atoms)
    atoms = np.column_stack([rng.uniform(min_x, max_x, k), rng.uniform(0.05, 2.0, k)])
    return RadialMeasure.from_atoms(atoms)


# -- examples ----------------------------------------------------------------

def test_quadratic_single_atom_square():
    g = RadialMeasure.from_atoms([(1.0, 1.0)])
    assert q3_quadratic(power(2), g) == pytest.approx(2.0)


def test_quadratic_identity_vanishes():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_atomic(rng)
        assert abs(q3_quadratic(identity(), g)) < 1e-12 * (moment(g, 0.0) ** 2 + 1)


def test_quadratic_two_atoms_vs_brute_force():
    g = RadialMeasure.from_atoms([(1.0, 1.0), (2.0, 1.0)])
    phi = phi_eps(1.0)
    assert q3_quadratic(phi, g) == pytest.approx(brute_q3_quadratic(phi, g), rel=1e-14)


def test_quadratic_random_vs_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = random_atomic(rng)
        phi = BUILTINS[rng.integers(len(BUILTINS))]
        assert q3_quadratic(phi, g) == pytest.approx(
            brute_q3_quadratic(phi, g), rel=1e-12, abs=1e-13)


def test_linear_examples():
    g = RadialMeasure.from_atoms([(1.0, 1.0)])
    assert q3_linear(one(), g) == pytest.approx(0.0)
    assert q3_linear(identity(), g) == pytest.approx(0.0)
    assert q3_linear(power(2), g) == pytest.approx(1.0 / 3.0)
    assert q3_linear_tilde(one(), g) == pytest.approx(-1.0)
    assert q3_linear_tilde(identity(), g) == pytest.approx(0.0)


def test_linear_tilde_density_oracle():
    # unit density on [0,1], phi = 1: -int_0^1 x/sqrt(x) dx = -2/3 exactly
    grid = GridSpec.uniform(0.0, 1.0, 40)
    g = RadialMeasure.from_density(grid, np.ones(40))
    assert q3_linear_tilde(one(), g) == pytest.approx(-2.0 / 3.0, rel=1e-12)


def test_linear_random_vs_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(50):
        g = random_atomic(rng)
        phi = BUILTINS[rng.integers(len(BUILTINS))]
        assert q3_linear(phi, g) == pytest.approx(
            brute_q3_linear(phi, g, True), rel=1e-12, abs=1e-13)
        assert q3_linear_tilde(phi, g) == pytest.approx(
            brute_q3_linear(phi, g, False), rel=1e-12, abs=1e-13)


def test_q3_mass_and_energy_kernels_vanish():
    g = RadialMeasure.from_atoms([(1.0, 1.0)])
    v3, v3t = q3_pair(one(), g)
    assert v3 == pytest.approx(0.0, abs=1e-14)
    assert v3t == pytest.approx(moment(g, 0.5), rel=1e-14)   # +M_{1/2}
    assert q3(identity(), g) == pytest.approx(0.0, abs=1e-14)


def test_shift_identity_random():
    rng = np.random.default_rng(3)
    for _ in range(200):
        g = random_atomic(rng)
        phi = BUILTINS[rng.integers(len(BUILTINS))]
        v3, v3t = q3_pair(phi, g)
        phi0 = float(phi.f(np.array(0.0)))
        resid = abs(v3 - (v3t - phi0 * moment(g, 0.5)))
        scale = abs(v3) + abs(v3t) + moment(g, 0.5) + 1e-300
        assert resid <= 1e-12 * scale


def test_origin_atom_rejected():
    g = RadialMeasure.from_atoms([(1.0, 1.0)], atom0=0.5)
    for fn in (q3_quadratic, q3_linear, q3_linear_tilde):
        with pytest.raises(FunctionalError):
            fn(one(), g)


def test_equilibrium_residual_quick():
    # coarse version of the acceptance criterion: the equilibrium makes the
    # three-wave functional vanish within the grid's projection error
    grid = GridSpec.two_zone(0.05, 55.0, 1.02, 1.01, 1e-8)
    g = bose_einstein(1.0, 0.0, 0.0, grid)
    for phi in (phi_eps(1.0), power(2)):
        quad = q3_quadratic(phi, g, order=2)
        lin = q3_linear(phi, g)
        assert abs(quad - lin) <= 2e-3 * max(abs(quad), abs(lin))


# -- sign properties ----------------------------------------------------------

def test_convex_sign_properties():
    rng = np.random.default_rng(4)
    for _ in range(50):
        g = random_atomic(rng)
        phi = phi_eps(rng.uniform(0.3, 3.0))
        assert q3_quadratic(phi, g) >= -1e-12
        assert q3_linear_tilde(phi, g) <= 1e-12


def test_q3_tilde_norm_bound():
    rng = np.random.default_rng(5)
    for _ in range(50):
        g = random_atomic(rng)
        for phi in (phi_eps(1.0), cap(2.0)):
            bound = (2.0 * phi.sup_deriv * moment(g, 0.0) ** 2
                     + 4.0 * phi.sup_norm * moment(g, 0.5))
            assert abs(q3_tilde(phi, g)) <= bound * (1 + 1e-12)


# -- boundary-completed weight and the cubic functionals ----------------------

def test_weight_values():
    assert weight_w(1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert weight_w(0.0, 2.0, 1.0) == pytest.approx(1.0 / np.sqrt(2.0))
    assert weight_w(2.0, 0.0, 1.0) == pytest.approx(1.0 / np.sqrt(2.0))
    assert weight_w(0.0, 1.0, 2.0) == 0.0
    assert weight_w(1.0, 2.0, 0.0) == pytest.approx(1.0 / np.sqrt(2.0))
    assert weight_w(0.0, 0.0, 1.0) == 0.0
    assert weight_w(0.0, 0.0, 0.0) == 0.0


def test_weight_boundary_is_continuous_limit():
    # approaching the x2 = 0 face from inside reproduces the face value
    for x1, x3 in [(2.0, 1.0), (5.0, 0.5)]:
        face = weight_w(x1, 0.0, x3)
        inner = weight_w(x1, 1e-12, x3)
        assert inner == pytest.approx(face, rel=1e-5)


def test_phi_capital_continuity_spot():
    phi = phi_eps(1.0)
    pts = [(1e-9, 1.0, 0.5), (1.0, 1e-9, 0.5), (1.0, 1.0, 1e-9),
           (1e-9, 1e-9, 1e-9), (2.0, 1e-9, 2.0 - 1e-9)]
    for x1, x2, x3 in pts:
        v = float(phi_capital(phi, x1, x2, x3))
        assert np.isfinite(v)
        # compare with the exact boundary value
        vb = float(phi_capital(phi, round(x1), round(x2), x3 if x3 > 1e-6 else 0.0))
        assert abs(v - vb) < 5e-4


def test_phi_capital_vanishes_at_infinity():
    phi = phi_eps(1.0)
    big = np.array([50.0, 80.0, 120.0])
    vals = np.abs(phi_capital(phi, big, big[::-1], big * 0.5))
    assert np.all(vals < 1e-3)


def test_q4_zero_pair_closed_form():
    # the x3 integral for a (0, xj) pair collapses to -L0(phi)(xj)/sqrt(xj)
    from nck.weakops import _pair_x3_integral
    for phi in (power(2), phi_eps(1.0), cap(2.0)):
        for xj in (0.7, 1.3, 3.1):
            got = _pair_x3_integral(phi, 0.0, xj)
            want = -float(ell0_kernel(phi, np.array(xj))) / np.sqrt(xj)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-14)


def test_q4_energy_and_mass_kernels_vanish():
    G = RadialMeasure.from_atoms([(0.5, 1.0), (1.5, 0.5)], atom0=0.7)
    assert q4_full(identity(), G) == pytest.approx(0.0, abs=1e-12)
    assert q4_full(one(), G) == pytest.approx(0.0, abs=1e-12)


def test_q4_decomposition_random():
    rng = np.random.default_rng(6)
    for _ in range(30):
        G = random_atomic(rng, max_atoms=5).with_atom0(rng.uniform(0.1, 2.0))
        n0, g = split_atom(G)
        phi = [phi_eps(1.0), power(2), cap(2.0)][rng.integers(3)]
        lhs = q4_full(phi, G)
        rhs = q4_script(phi, g) + n0 * q3(phi, g)
        scale = abs(lhs) + abs(rhs) + 1e-30
        assert abs(lhs - rhs) <= 1e-8 * scale


def test_q4_rejects_density():
    grid = GridSpec.uniform(0.0, 1.0, 4)
    g = RadialMeasure.from_density(grid, np.ones(4))
    with pytest.raises(FunctionalError):
        q4_full(one(), g)
    with pytest.raises(FunctionalError):
        q4_script(one(), g.with_atom0(0.0))


# -- transfer functional -------------------------------------------------------

def test_transfer_atom_self_interaction():
    g = RadialMeasure.from_atoms([(1.0, 1.0)])
    res = transfer_functional(g, [0.5, 0.25, 0.125])
    # Lambda(phi_eps)(1,1) = phi(2) + 1 - 2 phi(1) = 1 once eps < 1
    assert np.allclose(res.estimates, 1.0)
    assert res.extrapolated == pytest.approx(1.0)


def test_transfer_monotone_eps_required():
    g = RadialMeasure.from_atoms([(1.0, 1.0)])
    with pytest.raises(FunctionalError):
        transfer_functional(g, [0.1, 0.2])


def test_transfer_floor_warning():
    grid = GridSpec.uniform(0.0, 1.0, 10)
    g = RadialMeasure.from_density(grid, np.ones(10))
    res = transfer_functional(g, [0.5, 0.25])
    assert any("floor" in w for w in res.warnings)


def test_transfer_smooth_density_vanishes():
    grid = GridSpec.geometric_ratio(1.0, 1.02, 1e-7)
    g = RadialMeasure.from_density(grid, np.ones(grid.n_cells))
    res = transfer_functional(g, [0.2 * 2 ** -k for k in range(9)])
    assert abs(res.extrapolated) <= 1e-3


def test_determinism():
    g = RadialMeasure.from_atoms([(0.3, 1.0), (1.7, 0.4), (2.2, 0.9)])
    phi = phi_eps(0.8)
    a = q3_quadratic(phi, g)
    b = q3_quadratic(phi, g)
    assert a == b
