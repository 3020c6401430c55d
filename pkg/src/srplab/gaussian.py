"""Monte Carlo route to the permanent through Gaussian moments.

For a symmetric positive-definite ``A`` and independent centred Gaussian
vectors ``X, Y`` with covariance ``A``,

    perm(A) = 2^-n E[prod_i (X_i^2 + Y_i^2)].

With ``A`` the KMS matrix of a box, ``X`` is the Ornstein-Uhlenbeck field
sampled at the sites; in one dimension it is an AR(1) recursion.

Sampling is split into independent batches, each with its own child stream of
``SeedSequence(seed)``, so results depend only on the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .core import LatticeBox
from .errors import InvalidInputError, NumericalDegeneracyError, SizeLimitError
from .permanent import build_kms_matrix

MOMENT_SITE_CEILING = 12
MIN_SAMPLES = 1000
MIN_BATCHES = 20
DEFAULT_BATCHES = 50
BLOCK = 1 << 16


class SamplerMode(Enum):
    AR1 = "ar1"
    CHOLESKY = "cholesky"


@dataclass(frozen=True)
class GaussianSampler:
    mode: SamplerMode
    n: int
    beta: float | None = None
    box: LatticeBox | None = None
    rho: float | None = None
    innovation: float | None = None
    factor: np.ndarray | None = field(default=None, repr=False)

    def covariance(self) -> np.ndarray:
        """Covariance implied by the sampler's construction."""
        if self.mode is SamplerMode.AR1:
            lag = np.abs(np.subtract.outer(np.arange(self.n), np.arange(self.n)))
            return self.rho**lag
        return self.factor @ self.factor.T

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` independent field samples, shape ``(size, n)``."""
        z = rng.standard_normal((size, self.n))
        if self.mode is SamplerMode.CHOLESKY:
            return z @ self.factor.T
        x = np.empty_like(z)
        x[:, 0] = z[:, 0]
        for k in range(1, self.n):
            x[:, k] = self.rho * x[:, k - 1] + self.innovation * z[:, k]
        return x


def build_sampler(box: LatticeBox, beta: float) -> GaussianSampler:
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    if box.d == 1:
        return GaussianSampler(
            SamplerMode.AR1,
            box.n_sites,
            beta=beta,
            box=box,
            rho=math.exp(-beta),
            innovation=math.sqrt(-math.expm1(-2.0 * beta)),
        )
    return _cholesky_sampler(build_kms_matrix(box, beta).entries, beta=beta, box=box)


def _cholesky_sampler(a: np.ndarray, beta=None, box=None) -> GaussianSampler:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.allclose(a, a.T, rtol=0, atol=1e-14):
        raise InvalidInputError("matrix must be square and symmetric")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("Cholesky factorization failed: matrix not positive definite") from exc
    low.setflags(write=False)
    return GaussianSampler(SamplerMode.CHOLESKY, a.shape[0], beta=beta, box=box, factor=low)


@dataclass(frozen=True)
class MomentEstimate:
    """Estimate of ``log E[prod (X_i^2 + Y_i^2)]``.

    ``se_of_log`` is the batch-means standard error of the mean divided by the
    mean (delta method). ``ess`` is the Kish effective sample size of the
    sample weights; a value far below ``n_samples`` flags a heavy right tail.
    """

    log_mean: float
    se_of_log: float
    n_samples: int
    batch_count: int
    ess: float
    n_sites: int

    @property
    def log_perm(self) -> float:
        return self.log_mean - self.n_sites * math.log(2.0)


def _batch_logs(sampler, rng, size, swap):
    """Per-sample ``sum_i log(X_i^2 + Y_i^2)``."""
    out = np.empty(size)
    done = 0
    while done < size:
        m = min(BLOCK, size - done)
        x = sampler.draw(rng, m)
        y = sampler.draw(rng, m)
        if swap:
            x, y = y, x
        out[done : done + m] = np.log(x * x + y * y).sum(axis=1)
        done += m
    return out


def sample_moment(
    sampler: GaussianSampler,
    n_samples: int,
    seed: int,
    *,
    batches: int = DEFAULT_BATCHES,
    swap: bool = False,
) -> MomentEstimate:
    if n_samples < MIN_SAMPLES:
        raise InvalidInputError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    if batches < MIN_BATCHES or batches > n_samples:
        raise InvalidInputError(f"batch count must lie in [{MIN_BATCHES}, n_samples], got {batches}")
    streams = np.random.SeedSequence(seed).spawn(batches)
    sizes = np.full(batches, n_samples // batches)
    sizes[: n_samples % batches] += 1
    batch_log_means = np.empty(batches)
    log_sum_w = np.empty(batches)
    log_sum_w2 = np.empty(batches)
    for b, (ss, size) in enumerate(zip(streams, sizes)):
        logs = _batch_logs(sampler, np.random.Generator(np.random.PCG64(ss)), int(size), swap)
        lse = logsumexp(logs)
        batch_log_means[b] = lse - math.log(size)
        log_sum_w[b] = lse
        log_sum_w2[b] = logsumexp(2.0 * logs)
    log_mean = float(logsumexp(batch_log_means, b=sizes / n_samples))
    # batch means relative to the overall mean
    rel = np.exp(batch_log_means - log_mean)
    weights = sizes / n_samples
    var = np.sum(weights * (rel - 1.0) ** 2) / (batches - 1)
    se = math.sqrt(var)
    ess = math.exp(2.0 * logsumexp(log_sum_w) - logsumexp(log_sum_w2))
    return MomentEstimate(log_mean, se, int(n_samples), batches, ess, sampler.n)


def estimate_moment(
    box: LatticeBox,
    beta: float,
    n_samples: int,
    seed: int,
    *,
    batches: int = DEFAULT_BATCHES,
    swap: bool = False,
    allow_large: bool = False,
) -> MomentEstimate:
    """Monte Carlo estimate of ``log E[prod_x (X_x^2 + Y_x^2)]`` for the box.

    Boxes above ``MOMENT_SITE_CEILING`` sites are refused unless ``allow_large``:
    the relative variance of the product grows roughly exponentially in n.
    """
    if box.n_sites > MOMENT_SITE_CEILING and not allow_large:
        raise SizeLimitError(
            f"Gaussian moment estimates are limited to {MOMENT_SITE_CEILING} sites, got {box.n_sites}"
        )
    return sample_moment(build_sampler(box, beta), n_samples, seed, batches=batches, swap=swap)


def reed_check(matrix, n_samples: int, seed: int, *, batches: int = DEFAULT_BATCHES) -> MomentEstimate:
    """Estimate ``perm(matrix)`` for a symmetric positive-definite matrix.

    Use ``.log_perm`` on the result for the implied log-permanent.
    """
    a = matrix.entries if hasattr(matrix, "entries") else np.asarray(matrix, dtype=float)
    if a.shape[0] > MOMENT_SITE_CEILING:
        raise SizeLimitError(f"reed_check is limited to n <= {MOMENT_SITE_CEILING}, got {a.shape[0]}")
    return sample_moment(_cholesky_sampler(a), n_samples, seed, batches=batches)
