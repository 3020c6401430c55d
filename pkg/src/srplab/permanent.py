"""Exact permanents of KMS matrices and the quantities derived from them.

The partition function of the model equals the permanent of the matrix
``A[x, y] = exp(-beta |x - y|)`` over lattice sites, so the log-partition
function, the convexity bounds on the mean displacement and the row-sum upper
bound are all computed here.

Cost model for :func:`permanent_exact`: about ``2**(n-1) * n`` multiply-adds
with the default Glynn kernel (``2**n * n`` for Ryser). On one core this is
well under a second at n = 24 and roughly 20 s at n = 30.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import LatticeBox
from .errors import InvalidInputError, SizeLimitError

BRUTE_FORCE_MAX = 9
PERMANENT_CEILING = 30
# subsets per chunk: bounds the drift of the incrementally updated sums
_CHUNK = 1 << 12


@dataclass(frozen=True)
class LogValue:
    log_magnitude: float
    sign: int = 1

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.log_magnitude)


@dataclass(frozen=True)
class KmsMatrix:
    entries: np.ndarray = field(repr=False)
    beta: float
    box: LatticeBox | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def build_kms_matrix(box: LatticeBox, beta: float) -> KmsMatrix:
    if not beta >= 0:
        raise InvalidInputError(f"beta must be nonnegative, got {beta}")
    a = np.exp(-beta * box.distance_matrix())
    np.fill_diagonal(a, 1.0)
    a.setflags(write=False)
    return KmsMatrix(a, float(beta), box)


def _as_array(matrix) -> np.ndarray:
    a = matrix.entries if isinstance(matrix, KmsMatrix) else np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    return a


def permanent_bruteforce(matrix) -> LogValue:
    """Sum over all n! permutations in 80-bit extended precision."""
    a = _as_array(matrix)
    n = a.shape[0]
    if n > BRUTE_FORCE_MAX:
        raise SizeLimitError(f"brute force permanent limited to n <= {BRUTE_FORCE_MAX}, got {n}")
    if n == 0:
        return LogValue(0.0)
    al = a.astype(np.longdouble)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    prods = np.ones(len(perms), dtype=np.longdouble)
    for i in range(n):
        prods *= al[i, perms[:, i]]
    total = _neumaier_longdouble(prods)
    if total <= 0:
        raise InvalidInputError("brute force permanent is not positive")
    return LogValue(float(np.log(total)))


def _neumaier_longdouble(x: np.ndarray) -> np.longdouble:
    s = np.longdouble(0)
    c = np.longdouble(0)
    for v in x:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


@numba.njit(cache=True)
def _ctz(k):
    b = 0
    while (k >> b) & 1 == 0:
        b += 1
    return b


@numba.njit(cache=True)
def _neumaier_add(acc, comp, term):
    t = acc + term
    if abs(acc) >= abs(term):
        comp += (acc - t) + term
    else:
        comp += (term - t) + acc
    return t, comp


@numba.njit(cache=True)
def _glynn_chunk(a, k0, k1):
    # a: column-normalized matrix; Gray code over the signs of rows 1..n-1
    n = a.shape[0]
    g = k0 ^ (k0 >> 1)
    s = np.empty(n)
    for j in range(n):
        s[j] = a[0, j]
    sign = 1.0
    for i in range(1, n):
        if (g >> (i - 1)) & 1:
            sign = -sign
            for j in range(n):
                s[j] -= a[i, j]
        else:
            for j in range(n):
                s[j] += a[i, j]
    acc = 0.0
    comp = 0.0
    for k in range(k0, k1):
        if k > k0:
            b = _ctz(k)
            g ^= 1 << b
            sign = -sign
            if (g >> b) & 1:
                for j in range(n):
                    s[j] -= 2.0 * a[b + 1, j]
            else:
                for j in range(n):
                    s[j] += 2.0 * a[b + 1, j]
        term = sign
        for j in range(n):
            term *= s[j]
        acc, comp = _neumaier_add(acc, comp, term)
    return acc, comp


@numba.njit(cache=True)
def _ryser_chunk(a, k0, k1):
    # a: row-normalized matrix; Gray code over column subsets
    n = a.shape[0]
    g = k0 ^ (k0 >> 1)
    r = np.zeros(n)
    pop = 0
    for j in range(n):
        if (g >> j) & 1:
            pop += 1
            for i in range(n):
                r[i] += a[i, j]
    sign = 1.0 if (n - pop) % 2 == 0 else -1.0
    acc = 0.0
    comp = 0.0
    for k in range(k0, k1):
        if k > k0:
            b = _ctz(k)
            g ^= 1 << b
            sign = -sign
            if (g >> b) & 1:
                pop += 1
                for i in range(n):
                    r[i] += a[i, b]
            else:
                pop -= 1
                for i in range(n):
                    r[i] -= a[i, b]
        if pop > 0:
            term = sign
            for i in range(n):
                term *= r[i]
            acc, comp = _neumaier_add(acc, comp, term)
    return acc, comp


@numba.njit(cache=True, parallel=True)
def _glynn_chunks(a, chunk):
    total = 1 << (a.shape[0] - 1)
    nchunks = (total + chunk - 1) // chunk
    sums = np.zeros(nchunks)
    comps = np.zeros(nchunks)
    for c in numba.prange(nchunks):
        sums[c], comps[c] = _glynn_chunk(a, c * chunk, min((c + 1) * chunk, total))
    return sums, comps


@numba.njit(cache=True, parallel=True)
def _ryser_chunks(a, chunk):
    total = 1 << a.shape[0]
    nchunks = (total + chunk - 1) // chunk
    sums = np.zeros(nchunks)
    comps = np.zeros(nchunks)
    for c in numba.prange(nchunks):
        sums[c], comps[c] = _ryser_chunk(a, c * chunk, min((c + 1) * chunk, total))
    return sums, comps


def permanent_exact(
    matrix,
    *,
    method: str = "glynn",
    ceiling: int = PERMANENT_CEILING,
    threads: int | None = None,
) -> LogValue:
    """Permanent of a matrix with positive entries, returned in log space.

    Rows (Ryser) or columns (Glynn) are first divided by their sums so every
    Gray-code term lies in [-1, 1]; the scale factors are restored in log space.
    Chunks of the subset range are summed with Neumaier compensation and the
    chunk totals are combined with ``math.fsum``. The chunking does not depend
    on ``threads``, so the result is bit-identical for any thread count.
    """
    a = _as_array(matrix)
    n = a.shape[0]
    if n > ceiling:
        raise SizeLimitError(f"exact permanent limited to n <= {ceiling}, got {n}")
    if n == 0:
        return LogValue(0.0)
    if np.any(a <= 0):
        raise InvalidInputError("permanent_exact expects strictly positive entries")
    if n == 1:
        return LogValue(float(math.log(a[0, 0])))
    if threads is not None:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    if method == "glynn":
        scale = a.sum(axis=0)
        sums, comps = _glynn_chunks(np.ascontiguousarray(a / scale[None, :]), _CHUNK)
        offset = -(n - 1) * math.log(2.0)
    elif method == "ryser":
        scale = a.sum(axis=1)
        sums, comps = _ryser_chunks(np.ascontiguousarray(a / scale[:, None]), _CHUNK)
        offset = 0.0
    else:
        raise InvalidInputError(f"unknown permanent method {method!r}")
    total = math.fsum(np.concatenate([sums, comps]))
    if not total > 0:
        raise InvalidInputError(
            "permanent sum is not positive; the matrix is too ill conditioned for this kernel"
        )
    return LogValue(math.log(total) + offset + float(np.sum(np.log(scale))))


def log_partition(box: LatticeBox, beta: float, **kwargs) -> LogValue:
    """``log Z`` for the box at inverse temperature ``beta``."""
    return permanent_exact(build_kms_matrix(box, beta), **kwargs)


def row_sum_upper_bound(matrix) -> LogValue:
    a = _as_array(matrix)
    if np.any(a <= 0):
        raise InvalidInputError("row-sum bound expects strictly positive entries")
    return LogValue(float(np.sum(np.log(a.sum(axis=1)))))


def default_fd_step(beta: float) -> float:
    return max(1e-4, 1e-3 * beta)


def mean_displacement_fd(box: LatticeBox, beta: float, delta: float | None = None, **kwargs):
    """Bracket the mean displacement per site between two secant slopes.

    With ``F(b) = -(1/n) log Z(b)`` concave (log Z is convex), the forward and
    backward secant slopes of ``F`` bound ``F'(beta)``, which is the mean
    displacement per site. Returns ``(lower, upper)``.
    """
    if delta is None:
        delta = default_fd_step(beta)
    if not 0 < delta < beta:
        raise InvalidInputError(f"need 0 < delta < beta, got delta={delta}, beta={beta}")
    n = box.n_sites

    def F(b):
        return -log_partition(box, b, **kwargs).log_magnitude / n

    f0, fm, fp = F(beta), F(beta - delta), F(beta + delta)
    return (fp - f0) / delta, (f0 - fm) / delta


# --- asymptotic predictions -------------------------------------------------

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"
OUTSIDE = "outside"


def classify_regime(beta: float, N: int) -> str:
    """Fixed desk-scale cutoffs on ``c = beta N``; conventions, not theorems."""
    c = beta * N
    if c <= 0.1:
        return SUBCRITICAL
    if c <= 10.0:
        return CRITICAL
    if beta <= 1.0:
        return SUPERCRITICAL
    return OUTSIDE


@dataclass(frozen=True)
class Prediction:
    value: float | None
    regime: str
    error_order: str
    source: str


def _log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


def asymptotic_log_perm(d: int, N: int, beta: float, regime: str | None = None) -> Prediction:
    """Predicted ``(1/N^d) log perm(A)`` from the KMS permanent asymptotics."""
    if regime is None:
        regime = classify_regime(beta, N)
    n = N**d
    uniform = _log_factorial(n) / n
    if d == 1:
        if regime == SUBCRITICAL:
            return Prediction(
                uniform - beta * (N / 3 - 1 / (3 * N)),
                regime,
                "O(beta^2 N^2)",
                "kms:subcritical d=1",
            )
        if regime == CRITICAL:
            from .ode import g1

            return Prediction(uniform + g1(beta * N), regime, "o(1)", "kms:critical d=1")
        if regime == SUPERCRITICAL:
            return Prediction(
                math.log(2 / beta) - 1, regime, "O(beta) + O(1/(beta N))", "kms:supercritical d=1"
            )
        return Prediction(None, regime, "none", "no asymptotic line for beta > 1")
    if regime == SUBCRITICAL:
        return Prediction(uniform, regime, "o(1)", f"kms:subcritical d={d}")
    if regime == CRITICAL:
        # g^d has no explicit form for d >= 2; the uniform part is all we can report
        return Prediction(None, regime, "uniform + g^d(c) + o(1), g^d unknown", f"kms:critical d={d}")
    if regime == SUPERCRITICAL:
        return Prediction(-d * math.log(beta), regime, "O(1)", f"kms:supercritical d={d}")
    return Prediction(None, regime, "none", "no asymptotic line for beta > 1")
