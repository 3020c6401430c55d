"""Transfer-operator route to the Gaussian moment in one dimension.

For the Ornstein-Uhlenbeck field on ``beta * [0, N-1]`` the moment
``E = E[prod (X_x^2 + Y_x^2)]`` equals an explicit prefactor times
``<v, K^(N-1) v>``, where ``K = f e^{t Laplacian} f`` acts on functions of
the plane. All functions involved are radial, so ``K`` is discretized on the
half-line: the angular integral of the 2D heat kernel gives the Bessel ``I0``
kernel, evaluated in exponentially scaled form so nothing overflows at small t.

Radial inner product: ``<g, h> = 2 pi * int g(r) h(r) r dr``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln, i0e

from .errors import InvalidInputError, SolverFailureError

DEFAULT_RADIUS = 8.0
DEFAULT_NODES = 1024
PANEL_NODES = 16
MAX_POWER_ITERATIONS = 100_000


@dataclass(frozen=True)
class WeightFunctions:
    v: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    t: float
    b: float  # Gaussian rate in v: v(r) = r exp(-b r^2 / 2)


def semigroup_time(beta: float) -> float:
    # (1 - e^-b)^2 / (4 e^-b), written with expm1 to keep small-beta accuracy
    return math.expm1(-beta) ** 2 / (4.0 * math.exp(-beta))


def weight_functions(beta: float) -> WeightFunctions:
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    b = (1.0 + math.exp(-beta)) / -math.expm1(-beta)

    def v(r):
        r = np.asarray(r, dtype=float)
        return r * np.exp(-0.5 * b * r * r)

    def f(r):
        r = np.asarray(r, dtype=float)
        return r * np.exp(0.5 * (1.0 - r * r))

    return WeightFunctions(v=v, f=f, t=semigroup_time(beta), b=b)


@dataclass(frozen=True)
class RadialOperator:
    """Nystrom matrix of ``f e^{tL} f`` on radial functions.

    ``kernel[i, j]`` already includes the quadrature weight ``r_j w_j`` of
    column ``j``, so ``kernel @ g`` approximates the operator applied to ``g``.
    """

    beta: float
    t: float
    radius: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)
    f_values: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def measure(self) -> np.ndarray:
        """Quadrature weights of the planar measure restricted to radial functions."""
        return 2.0 * math.pi * self.nodes * self.weights

    def inner(self, g: np.ndarray, h: np.ndarray) -> float:
        return float(np.dot(self.measure, g * h))


def radial_quadrature(radius: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on (0, radius]."""
    x, w = np.polynomial.legendre.leggauss(PANEL_NODES)
    edges = np.linspace(0.0, radius, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def required_nodes(beta: float, radius: float) -> int:
    """Node count that keeps at least four nodes per heat-kernel width ``sqrt(t)``."""
    panels = math.ceil(radius / (4.0 * math.sqrt(semigroup_time(beta))))
    return panels * PANEL_NODES


def heat_kernel_matrix(nodes: np.ndarray, weights: np.ndarray, t: float) -> np.ndarray:
    """Radial 2D heat kernel with column quadrature weights; overflow free.

    ``(1/2t) exp(-(ri^2 + rj^2)/4t) I0(ri rj / 2t)``
    ``= (1/2t) exp(-(ri - rj)^2 / 4t) i0e(ri rj / 2t)``.
    """
    ri = nodes[:, None]
    rj = nodes[None, :]
    k = np.exp(-((ri - rj) ** 2) / (4.0 * t))
    k *= i0e(ri * rj / (2.0 * t))
    k *= (nodes * weights)[None, :] / (2.0 * t)
    return k


def build_radial_operator(
    beta: float, radius: float = DEFAULT_RADIUS, n_nodes: int = DEFAULT_NODES
) -> RadialOperator:
    """Discretize the weighted heat semigroup on ``n_nodes`` composite Gauss nodes.

    ``n_nodes`` is rounded up to a multiple of the panel size and raised to
    :func:`required_nodes` when the heat kernel is too narrow for the grid.
    """
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    if radius < 6:
        raise InvalidInputError(f"radius must be at least 6, got {radius}")
    if n_nodes < 512:
        raise InvalidInputError(f"need at least 512 nodes, got {n_nodes}")
    wf = weight_functions(beta)
    n_nodes = max(n_nodes, required_nodes(beta, radius))
    panels = math.ceil(n_nodes / PANEL_NODES)
    nodes, weights = radial_quadrature(radius, panels)
    fv = wf.f(nodes)
    k = heat_kernel_matrix(nodes, weights, wf.t)
    k *= fv[:, None]
    k *= fv[None, :]
    for arr in (nodes, weights, k, fv):
        arr.setflags(write=False)
    return RadialOperator(beta=beta, t=wf.t, radius=radius, nodes=nodes, weights=weights, kernel=k, f_values=fv)


def _symmetric_form(op: RadialOperator) -> tuple[np.ndarray, np.ndarray]:
    # K is self-adjoint for <.,.>; D^1/2 K D^-1/2 with D = r w is a symmetric matrix
    d = np.sqrt(op.nodes * op.weights)
    return op.kernel * (d[:, None] / d[None, :]), d


def principal_eigenvalue(op: RadialOperator, *, tol: float = 1e-10, second: bool = False):
    """Power iteration for the top eigenvalue (and optionally the second, by deflation).

    Iterates until the Rayleigh quotient moves by less than ``tol`` between steps.
    Returns ``lambda1`` or ``(lambda1, lambda2)``.
    """
    s, _ = _symmetric_form(op)
    lam1, u1 = _power(s, np.ones(op.size), tol, None)
    if not second:
        return lam1
    start = np.cos(np.linspace(0.0, math.pi, op.size))
    lam2, _ = _power(s, start, tol, u1)
    return lam1, lam2


def _power(s, x, tol, deflate):
    def project(y):
        if deflate is not None:
            y = y - np.dot(deflate, y) * deflate
        return y

    x = project(x)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(MAX_POWER_ITERATIONS):
        y = project(s @ x)
        new = float(np.dot(x, y))
        norm = np.linalg.norm(y)
        if norm == 0:
            raise SolverFailureError("power iteration collapsed to zero")
        x = y / norm
        if abs(new - lam) < tol:
            return new, x
        lam = new
    raise SolverFailureError(f"power iteration did not converge in {MAX_POWER_ITERATIONS} steps")


def inner_product_iterate(op: RadialOperator, v_grid: np.ndarray, N: int) -> tuple[float, float]:
    """``log <v, K^(N-1) v>`` with sup-norm rescaling after each application.

    Returns ``(log_inner, rescale_log_accumulator)``.
    """
    if N < 2:
        raise InvalidInputError(f"need N >= 2, got {N}")
    g = np.array(v_grid, dtype=float)
    acc = 0.0
    for _ in range(N - 1):
        g = op.kernel @ g
        scale = np.max(np.abs(g))
        if not scale > 0:
            raise SolverFailureError("iterate underflowed to zero")
        g /= scale
        acc += math.log(scale)
    inner = op.inner(v_grid, g)
    return math.log(inner) + acc, acc


@dataclass(frozen=True)
class ExpansionResult:
    beta: float
    N: int
    log_prefactor: float
    log_inner: float
    rescale_log_accumulator: float

    @property
    def log_E(self) -> float:
        return self.log_prefactor + self.log_inner

    @property
    def per_site(self) -> float:
        return self.log_E / self.N

    @property
    def log_perm(self) -> float:
        return self.log_E - self.N * math.log(2.0)


def log_prefactor(beta: float, N: int) -> float:
    em = math.exp(-beta)
    one_minus = -math.expm1(-beta)
    return (
        N * math.log(2.0)
        + 1.0
        - math.log(math.pi)
        + math.log(em * (1.0 + em) / one_minus)
        + N * (beta + math.log1p(em) - 1.0 - math.log(one_minus))
    )


def kernel_logE(
    beta: float,
    N: int,
    radius: float = DEFAULT_RADIUS,
    n_nodes: int = DEFAULT_NODES,
    op: RadialOperator | None = None,
) -> ExpansionResult:
    """``log E`` for the one-dimensional box of side ``N`` via the kernel expansion."""
    if op is None:
        op = build_radial_operator(beta, radius, n_nodes)
    v = weight_functions(beta).v(op.nodes)
    log_inner, acc = inner_product_iterate(op, v, N)
    return ExpansionResult(beta, N, log_prefactor(beta, N), log_inner, acc)


def ik_closed_form(N: int, beta: float, k: int) -> float:
    """``log I_k`` where ``I_k = int |s|^{2k} v^2 f^{2N-2} ds`` over the plane."""
    if not -N <= k <= N:
        raise InvalidInputError(f"need -N <= k <= N, got k={k}, N={N}")
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    b = weight_functions(beta).b + N - 1
    a = N + k
    return math.log(math.pi) + (N - 1) + float(gammaln(a + 1)) - (a + 1) * math.log(b)


def hilbert_schmidt_squared(op: RadialOperator) -> float:
    """Squared Hilbert-Schmidt norm of the full planar operator ``f e^{tL} f``.

    All angular modes are included: integrating the squared heat kernel over
    both angles gives ``(2 pi)^2 (1/4 pi t)^2 exp(-(r1^2 + r2^2)/2t) I0(r1 r2/t)``.
    """
    t = op.t
    r = op.nodes
    ri, rj = r[:, None], r[None, :]
    q = np.exp(-((ri - rj) ** 2) / (2.0 * t)) * i0e(ri * rj / t)
    q *= (2.0 * math.pi / (4.0 * math.pi * t)) ** 2
    g = op.f_values**2 * r * op.weights
    return float(g @ q @ g)


def hilbert_schmidt_reference(t: float) -> float:
    """Closed form ``(1/8 pi t) ||f||_2^4 = pi e^2 / (8 t)`` quoted for the squared norm."""
    return math.pi * math.e**2 / (8.0 * t)


def hilbert_schmidt_small_t(t: float) -> float:
    """Leading small-t behaviour ``int f^4 / (8 pi t) = e^2 / (32 t)``."""
    return math.e**2 / (32.0 * t)
