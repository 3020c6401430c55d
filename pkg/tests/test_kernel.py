import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from srplab.core import LatticeBox
from srplab.errors import InvalidInputError
from srplab.kernel import (
    build_radial_operator,
    heat_kernel_matrix,
    hilbert_schmidt_squared,
    hilbert_schmidt_small_t,
    ik_closed_form,
    inner_product_iterate,
    kernel_logE,
    log_prefactor,
    principal_eigenvalue,
    radial_quadrature,
    semigroup_time,
    weight_functions,
)
from srplab.permanent import log_partition


def test_weight_function_examples():
    wf = weight_functions(0.3)
    assert wf.f(1.0) == pytest.approx(1.0, abs=1e-16)
    r = np.linspace(0.01, 5, 2001)
    assert np.argmax(wf.f(r)) == np.argmin(np.abs(r - 1))
    assert semigroup_time(0.1) == pytest.approx(2.5020e-3, rel=1e-4)
    for beta in (1e-2, 1e-3):
        assert semigroup_time(beta) / (beta**2 / 4) == pytest.approx(1, abs=1e-6 + beta)
    with pytest.raises(InvalidInputError):
        weight_functions(0.0)


def test_heat_kernel_preserves_mass_at_interior_nodes():
    t = semigroup_time(0.5)
    nodes, weights = radial_quadrature(8.0, 64)
    k = heat_kernel_matrix(nodes, weights, t)
    out = k @ np.ones_like(nodes)
    interior = nodes < 8.0 - 12 * math.sqrt(t)
    assert np.max(np.abs(out[interior] - 1)) <= 1e-6


def test_bessel_kernel_matches_planar_heat_kernel():
    """Radial Bessel reduction against a brute Cartesian grid convolution."""
    t = semigroup_time(0.5)
    g = lambda x: np.exp(-(x**2)) * (1 + x**2)  # radial test function of r
    nodes, weights = radial_quadrature(8.0, 64)
    radial = heat_kernel_matrix(nodes, weights, t) @ g(nodes)
    h = 0.02
    xs = np.arange(-7, 7 + h / 2, h)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    field = g(np.hypot(X, Y))
    for r0 in (0.0, 0.7, 1.5):
        idx = np.argmin(np.abs(nodes - r0))
        p = np.exp(-((X - nodes[idx]) ** 2 + Y**2) / (4 * t)) / (4 * math.pi * t)
        planar = np.sum(p * field) * h * h
        assert radial[idx] == pytest.approx(planar, rel=1e-8)


def test_kernel_entries_finite_at_small_beta():
    op = build_radial_operator(0.02, n_nodes=512)
    assert np.all(np.isfinite(op.kernel))
    assert np.all(op.kernel >= 0)


def test_operator_argument_checks():
    with pytest.raises(InvalidInputError):
        build_radial_operator(0.5, radius=4)
    with pytest.raises(InvalidInputError):
        build_radial_operator(0.5, n_nodes=100)
    with pytest.raises(InvalidInputError):
        inner_product_iterate(build_radial_operator(0.5), np.ones(1024), 1)


def test_hilbert_schmidt_small_t_limit():
    for beta in (0.05, 0.1):
        op = build_radial_operator(beta)
        ratio = hilbert_schmidt_squared(op) / hilbert_schmidt_small_t(op.t)
        assert ratio == pytest.approx(1, abs=5 * op.t)


def test_hilbert_schmidt_against_half_time_semigroup():
    """p_t(x, y)^2 = p_{t/2}(x, y) / (8 pi t), so HS^2 = <f^2, e^{(t/2)L} f^2> / (8 pi t)."""
    op = build_radial_operator(0.5)
    f2 = op.f_values**2
    half = heat_kernel_matrix(op.nodes, op.weights, op.t / 2) @ f2
    want = op.inner(f2, half) / (8 * math.pi * op.t)
    assert hilbert_schmidt_squared(op) == pytest.approx(want, rel=1e-10)


def test_inner_product_against_cartesian_fft():
    beta = 0.5
    wf = weight_functions(beta)
    op = build_radial_operator(beta)
    v = wf.v(op.nodes)
    got = math.exp(inner_product_iterate(op, v, 2)[0])
    L, m = 10.0, 1024
    xs = np.linspace(-L, L, m, endpoint=False)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    r = np.hypot(X, Y)
    fv = wf.f(r) * wf.v(r)
    k = 2 * math.pi * np.fft.fftfreq(m, d=h)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    smoothed = np.real(np.fft.ifft2(np.fft.fft2(fv) * np.exp(-wf.t * (KX**2 + KY**2))))
    want = np.sum(fv * smoothed) * h * h
    assert got == pytest.approx(want, rel=1e-5)


def test_two_site_moment():
    for beta in (0.3, 1.0):
        res = kernel_logE(beta, 2)
        assert res.log_E == pytest.approx(math.log(4 * (1 + math.exp(-2 * beta))), rel=1e-5)


def test_eight_site_moment_matches_permanent():
    res = kernel_logE(0.5, 8)
    exact = 8 * math.log(2) + log_partition(LatticeBox(1, 8), 0.5).log_magnitude
    assert abs(res.log_E - exact) <= 1e-3 * abs(exact)
    assert abs(res.log_E - exact) <= 1e-9 * abs(exact)


def test_decomposition_is_exact():
    res = kernel_logE(0.7, 6)
    assert res.log_E == res.log_prefactor + res.log_inner
    assert res.log_prefactor == log_prefactor(0.7, 6)
    assert res.log_perm == res.log_E - 6 * math.log(2)


def test_quadrature_convergence():
    a = kernel_logE(0.5, 8, radius=8.0, n_nodes=1024).log_inner
    b = kernel_logE(0.5, 8, radius=10.0, n_nodes=2048).log_inner
    assert abs(a - b) <= 1e-6


@pytest.mark.parametrize("beta", [0.02, 0.1, 0.5])
def test_principal_eigenvalue_in_unit_interval(beta):
    op = build_radial_operator(beta)
    lam1, lam2 = principal_eigenvalue(op, second=True)
    assert 0 < lam2 < lam1 < 1


def test_power_iteration_matches_dense_eigensolver():
    op = build_radial_operator(0.5)
    d = np.sqrt(op.nodes * op.weights)
    sym = op.kernel * (d[:, None] / d[None, :])
    sym = 0.5 * (sym + sym.T)
    top = np.linalg.eigvalsh(sym)[-2:]
    lam1, lam2 = principal_eigenvalue(op, second=True)
    assert lam1 == pytest.approx(top[1], abs=1e-9)
    assert lam2 == pytest.approx(top[0], abs=1e-8)


def test_one_minus_lambda_scales_with_beta():
    gaps = [(1 - principal_eigenvalue(build_radial_operator(b))) / b for b in (0.02, 0.05, 0.1)]
    assert max(gaps) / min(gaps) <= 2


def test_iterates_approach_principal_eigenvalue():
    op = build_radial_operator(0.5)
    lam = principal_eigenvalue(op)
    v = weight_functions(0.5).v(op.nodes)
    a = inner_product_iterate(op, v, 400)[0]
    b = inner_product_iterate(op, v, 401)[0]
    assert abs((b - a) - math.log(lam)) <= 1e-4
    # the averaged value carries the 1/N overlap term log <v, phi1>^2 / (N - 1)
    c = inner_product_iterate(op, v, 801)[0]
    gap400 = 399 * (a / 399 - math.log(lam))
    gap800 = 800 * (c / 800 - math.log(lam))
    assert gap400 == pytest.approx(gap800, rel=1e-4)


def test_inner_product_decreases_in_N():
    op = build_radial_operator(0.3)
    v = weight_functions(0.3).v(op.nodes)
    vals = [inner_product_iterate(op, v, N)[0] for N in range(2, 12)]
    assert np.all(np.diff(vals) < 0)


def test_ik_examples():
    b = (1 + math.exp(-1)) / (1 - math.exp(-1)) + 1
    assert math.exp(ik_closed_form(2, 1.0, 0)) == pytest.approx(math.pi * math.e * 2 * b**-3, rel=1e-14)
    assert math.exp(ik_closed_form(2, 1.0, 0)) == pytest.approx(0.539, abs=5e-4)
    with pytest.raises(InvalidInputError):
        ik_closed_form(3, 1.0, 4)


@pytest.mark.parametrize("N", [2, 3, 4])
@pytest.mark.parametrize("beta", [0.5, 1.0])
@pytest.mark.parametrize("k", [-1, 0, 2])
def test_ik_matches_quadrature(N, beta, k):
    wf = weight_functions(beta)

    def integrand(r):
        return 2 * math.pi * r * r ** (2 * k) * wf.v(r) ** 2 * wf.f(r) ** (2 * N - 2)

    val, _ = integrate.quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    assert math.log(val) == pytest.approx(ik_closed_form(N, beta, k), abs=1e-6)


@settings(max_examples=30)
@given(st.integers(2, 12), st.floats(0.05, 3.0), st.data())
def test_ik_ratio_identity(N, beta, data):
    k = data.draw(st.integers(-N, N))
    b = weight_functions(beta).b + N - 1
    want = math.lgamma(N + k + 1) - math.lgamma(N + 1) - k * math.log(b)
    assert ik_closed_form(N, beta, k) - ik_closed_form(N, beta, 0) == pytest.approx(want, abs=1e-12)
