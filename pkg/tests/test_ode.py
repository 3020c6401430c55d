import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from srplab.errors import InvalidInputError
from srplab.ode import (
    f_of_c,
    g1,
    g1_estimate,
    implicit_parameters,
    rate_point,
    solve_bvp,
    vg1,
)

TOL = 1e-10


def collocation_rate(c, nodes=201):
    """Independent oracle: scipy collocation solve of the same boundary-value problem."""
    def rhs(s, y):
        return np.vstack([y[1], -2.0 / (c * y[0]) + y[0]])

    def bc(ya, yb):
        return np.array([ya[1] - ya[0], yb[1] + yb[0]])

    s = np.linspace(0, c, nodes)
    ystar = math.sqrt(2 / c) if c > 2 else 0.8
    guess = np.vstack([np.full_like(s, ystar), np.zeros_like(s)])
    sol = integrate.solve_bvp(rhs, bc, s, guess, tol=1e-9, bc_tol=1e-12, max_nodes=100000)
    assert sol.success
    fine = np.linspace(0, c, 20001)
    h, hd = sol.sol(fine)
    integrand = (2 / c) * np.log(h) - 0.5 * (h + hd) ** 2
    integral = integrate.simpson(integrand, x=fine)
    return h[0], 1 - h[0] ** 2 + integral, math.log(2) - h[0] ** 2 + integral


def test_small_c_initial_value_near_one():
    sol = solve_bvp(1e-3, TOL)
    assert abs(sol.a - 1) <= 2e-3


@pytest.mark.parametrize("c", [0.01, 0.1, 0.5, 1.0])
def test_a_priori_bounds_on_initial_value(c):
    a2 = solve_bvp(c, TOL).a ** 2
    lower = 1 / ((1 + c / 2) * (1 + c / 2 * (1 + c / 2)))
    upper = 1 / (1 + c / 2)
    assert lower <= a2 <= upper


@pytest.mark.parametrize("c", [0.1, 1.0, 3.0, 7.0, 15.0])
def test_solution_invariants(c):
    sol = solve_bvp(c, TOL)
    assert np.all(sol.h > 0)
    assert sol.hdot[0] == sol.h[0]
    assert sol.boundary_residual <= TOL
    assert np.max(np.abs(sol.h - sol.h[::-1])) <= 10 * TOL
    assert np.max(np.diff(sol.h, 2)) <= 1e-8
    assert sol.first_integral_residual <= 1e-8
    assert sol.grid.shape == (4097, 3)


@pytest.mark.parametrize("c", [0.1, 1.0, 4.0, 10.0, 20.0])
def test_implicit_route_agrees_with_shooting(c):
    sol = solve_bvp(c, TOL)
    a1, a2 = implicit_parameters(c, TOL)
    assert abs(a1 - sol.a) <= 10 * TOL
    assert abs(a2 - sol.h.max()) <= 10 * TOL


def test_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        solve_bvp(-1.0)
    with pytest.raises(InvalidInputError):
        solve_bvp(1.0, tol=1e-3)
    with pytest.raises(InvalidInputError):
        f_of_c(1e-4, dc=1e-4)


def test_g1_small_c():
    assert abs(g1(0.01) + 0.01 / 3) <= 1e-4
    assert abs(g1(1e-4)) <= 1e-4


def test_g1_large_c_log_growth():
    assert abs(g1(50.0) + math.log(50)) <= 5


def test_vg1_identity():
    for c in (1e-3, 0.3, 2.0, 12.0):
        assert vg1(c) - g1(c) == pytest.approx(math.log(2) - 1, abs=1e-9)
    assert vg1(1e-4) == pytest.approx(math.log(2) - 1, abs=1e-3)
    p = rate_point(0.5)
    assert p.vg1 - p.g1 == pytest.approx(math.log(2) - 1, abs=1e-12)


@pytest.mark.parametrize("c", [0.3, 1.0, 6.0])
def test_collocation_oracle(c):
    a, g, v = collocation_rate(c)
    assert solve_bvp(c, TOL).a == pytest.approx(a, abs=1e-7)
    assert g1(c) == pytest.approx(g, abs=1e-6)
    assert vg1(c) == pytest.approx(v, abs=1e-6)


@pytest.mark.parametrize("c", [0.1, 1.0, 10.0])
def test_self_convergence(c):
    g, err = g1_estimate(c, 1e-10)
    sol = solve_bvp(c, 5e-11, n_grid=8193)
    from srplab.ode import rate_terms

    g_fine = rate_terms(sol)[0]
    assert abs(g - g_fine) <= 5 * max(err, 1e-13)


def test_g1_decreasing_and_convex_log_grid():
    cs = np.geomspace(0.1, 20, 25)
    vals = np.array([g1(c) for c in cs])
    assert np.all(np.diff(vals) <= 0)
    # convexity in c on a non-uniform grid: slopes must increase
    slopes = np.diff(vals) / np.diff(cs)
    assert np.all(np.diff(slopes) >= -1e-7)


def test_f_small_c_and_monotone():
    assert abs(f_of_c(0.01) - 1 / 3) <= 0.02
    cs = np.arange(0.1, 10.01, 0.5)
    fs = np.array([f_of_c(c) for c in cs])
    assert np.all(fs >= 0)
    assert np.all(np.diff(fs) <= 1e-7)


def test_f_decays_like_inverse_c():
    assert 0.05 <= 20 * f_of_c(20.0) <= 20


@settings(max_examples=10)
@given(st.floats(0.05, 12.0))
def test_first_integral_holds(c):
    sol = solve_bvp(c, TOL)
    assert sol.first_integral_residual <= 1e-8
    assert sol.boundary_residual <= TOL
