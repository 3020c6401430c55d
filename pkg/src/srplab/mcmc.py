"""Metropolis sampling of the Boltzmann law over permutations of a box.

Moves swap the images of sites ``i`` and ``j`` drawn independently and
uniformly; ``i == j`` is a null move. The proposal is symmetric, so the
acceptance probability is ``min(1, exp(-beta dH))`` with ``dH`` computed from
the four displacement terms that change. The null moves make the chain
aperiodic: with distinct sites only, every accepted move flips the parity of
the permutation, and at ``beta = 0`` an even thinning would only ever see even
permutations.

Random numbers come from ``numpy.random.Generator(PCG64)``: chain ``k`` of a
run with seed ``s`` uses child ``k`` of ``SeedSequence(s)``, and draws are taken
in fixed-size blocks, so a run is reproduced exactly from its seed alone.
The default burn-in ``50 n max(1, beta N)`` is a heuristic, not a mixing bound.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import LatticeBox, ModelParams, Permutation, energy
from .errors import InvalidInputError, SizeLimitError

EXACT_SITE_CEILING = 8
RESYNC_INTERVAL = 100_000
MIN_BATCHES = 20
_BLOCK = 1 << 16


@dataclass(frozen=True)
class ChainState:
    perm: Permutation
    cached_energy: float
    rng_state: dict = field(repr=False)
    steps_taken: int = 0

    @classmethod
    def start(cls, params: ModelParams, seed: int, perm: Permutation | None = None) -> "ChainState":
        if perm is None:
            perm = Permutation.identity(params.box.n_sites)
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls(perm, energy(params.box, perm), rng.bit_generator.state, 0)


@dataclass(frozen=True)
class SampleStats:
    displacement_mean: float
    displacement_se: float
    histogram: np.ndarray = field(repr=False)  # counts in unit-width bins [k, k+1)
    longest_cycle_samples: np.ndarray = field(repr=False)
    n_samples: int
    burn_in: int
    thinning: int
    acceptance_rate: float
    chains: int = 1
    displacement_samples: np.ndarray = field(default=None, repr=False)
    state_ranks: np.ndarray | None = field(default=None, repr=False)

    @property
    def bin_edges(self) -> np.ndarray:
        return np.arange(self.histogram.size + 1, dtype=float)


@dataclass(frozen=True)
class LongestCycleSummary:
    mean: float
    se: float
    quantiles: dict
    maximum: int
    n_samples: int


def default_burn_in(params: ModelParams) -> int:
    n = params.box.n_sites
    return int(50 * n * max(1.0, params.beta * params.box.N))


# --- numba kernels -----------------------------------------------------------


@numba.njit(cache=True)
def _dist(coords, a, b):
    s = 0.0
    for k in range(coords.shape[1]):
        t = coords[a, k] - coords[b, k]
        s += t * t
    return math.sqrt(s)


@numba.njit(cache=True)
def _energy(coords, mapping):
    e = 0.0
    for x in range(mapping.shape[0]):
        e += _dist(coords, x, mapping[x])
    return e


@numba.njit(cache=True)
def _delta(coords, mapping, i, j):
    pi, pj = mapping[i], mapping[j]
    return (
        _dist(coords, i, pj)
        + _dist(coords, j, pi)
        - _dist(coords, i, pi)
        - _dist(coords, j, pj)
    )


@numba.njit(cache=True)
def _longest_cycle(mapping, seen):
    n = mapping.shape[0]
    for k in range(n):
        seen[k] = False
    best = 0
    for s in range(n):
        if seen[s]:
            continue
        length = 0
        x = s
        while not seen[x]:
            seen[x] = True
            x = mapping[x]
            length += 1
        if length > best:
            best = length
    return best


@numba.njit(cache=True)
def _rank(mapping):
    # Lehmer code rank in lexicographic order
    n = mapping.shape[0]
    r = 0
    for a in range(n):
        smaller = 0
        for b in range(a + 1, n):
            if mapping[b] < mapping[a]:
                smaller += 1
        r = r * (n - a) + smaller
    return r


@numba.njit(cache=True)
def _run_block(
    coords, mapping, e, beta, ii, jj, uu, step, burn_in, thinning, total,
    means, longest, ranks, hist, seen, sample_idx, record_ranks, resync,
):
    accepted = 0
    n = mapping.shape[0]
    for k in range(ii.shape[0]):
        i = ii[k]
        j = jj[k]
        dh = _delta(coords, mapping, i, j)
        if i != j and (dh <= 0.0 or uu[k] < math.exp(-beta * dh)):
            t = mapping[i]
            mapping[i] = mapping[j]
            mapping[j] = t
            e += dh
            accepted += 1
        step += 1
        if step % resync == 0:
            e = _energy(coords, mapping)
        if step > burn_in and (step - burn_in) % thinning == 0 and sample_idx < total:
            means[sample_idx] = e / n
            longest[sample_idx] = _longest_cycle(mapping, seen)
            for x in range(n):
                b = int(_dist(coords, x, mapping[x]))
                hist[b] += 1
            if record_ranks:
                ranks[sample_idx] = _rank(mapping)
            sample_idx += 1
    return e, step, sample_idx, accepted


# --- public API --------------------------------------------------------------


def _coords(box: LatticeBox) -> np.ndarray:
    return np.ascontiguousarray(box.sites, dtype=float)


def delta_energy(box: LatticeBox, perm: Permutation, i: int, j: int) -> float:
    """Energy change from swapping the images of sites ``i`` and ``j``."""
    return float(_delta(_coords(box), np.asarray(perm.mapping, dtype=np.int64), i, j))


def acceptance_probability(params: ModelParams, perm: Permutation, i: int, j: int) -> float:
    dh = delta_energy(params.box, perm, i, j)
    return 1.0 if dh <= 0 else math.exp(-params.beta * dh)


def mcmc_step(state: ChainState, params: ModelParams) -> ChainState:
    """One Metropolis transposition move; reference implementation of the rule."""
    n = params.box.n_sites
    if len(state.perm) != n:
        raise InvalidInputError("chain state does not match the box")
    if n < 2:
        return ChainState(state.perm, state.cached_energy, state.rng_state, state.steps_taken + 1)
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state.rng_state
    i = int(rng.integers(0, n))
    j = int(rng.integers(0, n))
    u = rng.random()
    dh = delta_energy(params.box, state.perm, i, j)
    perm, e = state.perm, state.cached_energy
    if i != j and (dh <= 0 or u < math.exp(-params.beta * dh)):
        m = list(perm.mapping)
        m[i], m[j] = m[j], m[i]
        perm, e = Permutation(tuple(m)), e + dh
    steps = state.steps_taken + 1
    if steps % RESYNC_INTERVAL == 0:
        e = energy(params.box, perm)
    return ChainState(perm, e, rng.bit_generator.state, steps)


def _hist_bins(box: LatticeBox) -> int:
    return int(math.floor(math.sqrt(box.d) * (box.N - 1))) + 1


def _run_single(params, burn_in, n_samples, thinning, seed_seq, record_states, start):
    box = params.box
    n = box.n_sites
    coords = _coords(box)
    mapping = np.arange(n, dtype=np.int64) if start is None else np.array(start.mapping, dtype=np.int64)
    e = _energy(coords, mapping)
    means = np.zeros(n_samples)
    longest = np.zeros(n_samples, dtype=np.int64)
    ranks = np.zeros(n_samples if record_states else 1, dtype=np.int64)
    hist = np.zeros(_hist_bins(box), dtype=np.int64)
    seen = np.zeros(n, dtype=np.bool_)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    total_steps = burn_in + thinning * n_samples
    step = 0
    idx = 0
    accepted = 0
    if n < 2:
        means[:] = 0.0
        longest[:] = 1
        hist[0] = n_samples * n
        return means, longest, ranks, hist, 0.0
    while step < total_steps:
        m = min(_BLOCK, total_steps - step)
        ii = rng.integers(0, n, size=m)
        jj = rng.integers(0, n, size=m)
        uu = rng.random(m)
        e, step, idx, acc = _run_block(
            coords, mapping, e, float(params.beta), ii, jj, uu, step, burn_in, thinning,
            n_samples, means, longest, ranks, hist, seen, idx, record_states, RESYNC_INTERVAL,
        )
        accepted += acc
    return means, longest, ranks, hist, accepted / total_steps


def batch_means_se(x: np.ndarray, batches: int = MIN_BATCHES) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    if x.size < batches:
        return float("nan")
    size = x.size // batches
    bm = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(bm.std(ddof=1) / math.sqrt(batches))


def run_chain(
    params: ModelParams,
    burn_in: int | None,
    n_samples: int,
    thinning: int,
    seed: int,
    *,
    chains: int = 1,
    record_states: bool = False,
    start: Permutation | None = None,
) -> SampleStats:
    """Run ``chains`` independent chains and pool their samples.

    A sample is taken every ``thinning`` steps after ``burn_in`` steps. The
    standard error combines per-chain batch means (20 batches per chain).
    ``burn_in=None`` uses :func:`default_burn_in`.
    """
    if burn_in is None:
        burn_in = default_burn_in(params)
    if burn_in < 1 or n_samples < 1 or thinning < 1 or chains < 1:
        raise InvalidInputError("burn_in, n_samples, thinning and chains must all be >= 1")
    if record_states and params.box.n_sites > 20:
        raise SizeLimitError("state recording is limited to 20 sites")
    seqs = np.random.SeedSequence(seed).spawn(chains)
    results = [_run_single(params, burn_in, n_samples, thinning, s, record_states, start) for s in seqs]
    means = np.concatenate([r[0] for r in results])
    longest = np.concatenate([r[1] for r in results])
    hist = np.sum([r[3] for r in results], axis=0)
    acc = float(np.mean([r[4] for r in results]))
    ses = [batch_means_se(r[0]) for r in results]
    se = math.sqrt(sum(s * s for s in ses)) / chains
    ranks = np.concatenate([r[2] for r in results]) if record_states else None
    return SampleStats(
        displacement_mean=float(means.mean()),
        displacement_se=se,
        histogram=hist,
        longest_cycle_samples=longest,
        n_samples=int(n_samples * chains),
        burn_in=int(burn_in),
        thinning=int(thinning),
        acceptance_rate=acc,
        chains=chains,
        displacement_samples=means,
        state_ranks=ranks,
    )


def permutation_rank(perm: Permutation) -> int:
    return int(_rank(np.asarray(perm.mapping, dtype=np.int64)))


def exact_distribution(params: ModelParams) -> dict[Permutation, float]:
    """Boltzmann probabilities of every permutation (enumeration, at most 8 sites)."""
    box = params.box
    n = box.n_sites
    if n > EXACT_SITE_CEILING:
        raise SizeLimitError(f"exact enumeration limited to {EXACT_SITE_CEILING} sites, got {n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    dist = box.distance_matrix()
    energies = dist[np.arange(n)[None, :], perms].sum(axis=1)
    logw = -params.beta * (energies - energies.min())
    w = np.exp(logw)
    z = math.fsum(w)
    return {Permutation(tuple(p)): float(x / z) for p, x in zip(perms.tolist(), w)}


def exact_mean_displacement(params: ModelParams) -> float:
    n = params.box.n_sites
    return math.fsum(p * energy(params.box, perm) / n for perm, p in exact_distribution(params).items())


def tv_distance(stats: SampleStats, exact: dict[Permutation, float]) -> float:
    """Total-variation distance between recorded chain states and an exact law."""
    if stats.state_ranks is None:
        raise InvalidInputError("run the chain with record_states=True")
    ranks, counts = np.unique(stats.state_ranks, return_counts=True)
    emp = dict(zip(ranks.tolist(), (counts / counts.sum()).tolist()))
    total = 0.0
    for perm, p in exact.items():
        total += abs(emp.pop(permutation_rank(perm), 0.0) - p)
    total += sum(emp.values())
    return 0.5 * total


def estimate_longest_cycle(stats: SampleStats) -> LongestCycleSummary:
    x = np.asarray(stats.longest_cycle_samples)
    if x.size == 0:
        raise InvalidInputError("no longest-cycle samples")
    qs = {q: float(np.quantile(x, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)}
    return LongestCycleSummary(
        mean=float(x.mean()),
        se=batch_means_se(x.astype(float)),
        quantiles=qs,
        maximum=int(x.max()),
        n_samples=int(x.size),
    )
