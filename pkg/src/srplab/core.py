"""Lattice boxes, permutations and the displacement energy.

Sites of ``[[1, N]]^d`` are enumerated in row-major order (last coordinate
varies fastest). Every other module indexes sites through this ordering, so
matrices and covariances built anywhere in the package agree entry for entry.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class LatticeBox:
    d: int
    N: int
    sites: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInputError(f"dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidInputError(f"side length must be a positive integer, got {self.N}")
        grid = np.array(list(itertools.product(range(1, self.N + 1), repeat=self.d)), dtype=np.int64)
        grid.setflags(write=False)
        object.__setattr__(self, "sites", grid.reshape(self.N**self.d, self.d))

    @property
    def n_sites(self) -> int:
        return self.N**self.d

    def index(self, coords: Sequence[int]) -> int:
        """Row-major index of a site given its 1-based coordinates."""
        if len(coords) != self.d or any(not 1 <= c <= self.N for c in coords):
            raise InvalidInputError(f"{tuple(coords)} is not a site of {self}")
        idx = 0
        for c in coords:
            idx = idx * self.N + (c - 1)
        return idx

    def distance_matrix(self) -> np.ndarray:
        """Euclidean distances between all pairs of sites."""
        diff = (self.sites[:, None, :] - self.sites[None, :, :]).astype(float)
        if self.d == 1:
            return np.abs(diff[..., 0])
        return _norm(diff)


@dataclass(frozen=True)
class Permutation:
    """Bijection of site indices: site ``i`` is sent to site ``mapping[i]``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(x) for x in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise InvalidInputError("mapping is not a bijection of {0, ..., n-1}")
        object.__setattr__(self, "mapping", m)

    def __len__(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """``(self ∘ other)(i) = self(other(i))``."""
        return Permutation(tuple(self.mapping[j] for j in other.mapping))

    def to_line(self) -> str:
        return ",".join(str(i) for i in self.mapping)

    @classmethod
    def from_line(cls, line: str) -> "Permutation":
        line = line.strip()
        if not line:
            return cls(())
        try:
            return cls(tuple(int(tok) for tok in line.split(",")))
        except ValueError as exc:
            raise InvalidInputError(f"cannot parse permutation line {line!r}") from exc


@dataclass(frozen=True)
class ModelParams:
    beta: float
    box: LatticeBox

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InvalidInputError(f"beta must be finite and nonnegative, got {self.beta}")


def _norm(diff: np.ndarray) -> np.ndarray:
    # hypot chain: no overflow or cancellation for integer offsets
    out = np.abs(diff[..., 0])
    for k in range(1, diff.shape[-1]):
        out = np.hypot(out, diff[..., k])
    return out


def _check(box: LatticeBox, perm: Permutation) -> None:
    if len(perm) != box.n_sites:
        raise InvalidInputError(
            f"permutation has length {len(perm)} but the box has {box.n_sites} sites"
        )


def displacement_profile(box: LatticeBox, perm: Permutation) -> np.ndarray:
    """Per-site displacement ``|x - perm(x)|`` in site order."""
    _check(box, perm)
    diff = (box.sites - box.sites[np.asarray(perm.mapping, dtype=np.int64)]).astype(float)
    if box.d == 1:
        return np.abs(diff[:, 0])
    return _norm(diff)


def energy(box: LatticeBox, perm: Permutation) -> float:
    """Total Euclidean displacement of ``perm``."""
    prof = displacement_profile(box, perm)
    total = 0.0
    for x in prof:
        total += x
    return total


def cycle_lengths(perm: Permutation | Sequence[int]) -> tuple[int, ...]:
    mapping = perm.mapping if isinstance(perm, Permutation) else tuple(perm)
    seen = [False] * len(mapping)
    lengths = []
    for start in range(len(mapping)):
        if seen[start]:
            continue
        length = 0
        i = start
        while not seen[i]:
            seen[i] = True
            i = mapping[i]
            length += 1
        lengths.append(length)
    return tuple(sorted(lengths, reverse=True))


def all_permutations(n: int) -> Iterable[Permutation]:
    for p in itertools.permutations(range(n)):
        yield Permutation(p)


def box_symmetries(box: LatticeBox) -> list[Permutation]:
    """Site permutations induced by the hyperoctahedral symmetries of the box."""
    out = []
    for axes in itertools.permutations(range(box.d)):
        for flips in itertools.product((False, True), repeat=box.d):
            img = []
            for x in box.sites:
                y = [x[a] for a in axes]
                y = [box.N + 1 - c if f else c for c, f in zip(y, flips)]
                img.append(box.index(y))
            out.append(Permutation(tuple(img)))
    return out
