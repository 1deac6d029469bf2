"""Permutations of coordinate axes and the induced decomposition of R^n.

A permutation acts on a vector by reordering its coordinates,
``apply(p, x)[i] == x[p.map[i]]``.  Maps are stored 0-based; use
:meth:`Permutation.from_one_based` and :attr:`Permutation.one_based` to move
between this and the 1-based notation common in the literature.

Every point with distinct coordinates lies in exactly one region ``pi T``,
where ``T`` is the set of strictly ascending vectors; :func:`locate_region`
finds that region and :func:`induced_permutation` returns the permutation
carrying a random draw into the region of an observed point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .errors import DimensionMismatch, ExhaustiveLimit, InputError

__all__ = [
    "DEFAULT_EXHAUSTIVE_LIMIT",
    "Permutation",
    "RegionLocation",
    "apply",
    "compose",
    "inverse",
    "identity",
    "enumerate_all",
    "all_permutations",
    "locate_region",
    "induced_permutation",
    "sample_uniform",
    "sample_uniform_array",
]

DEFAULT_EXHAUSTIVE_LIMIT = 8


@dataclass(frozen=True)
class Permutation:
    map: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.map)
        if sorted(m) != list(range(len(m))):
            raise InputError(f"not a permutation of 0..{len(m) - 1}: {m}")
        object.__setattr__(self, "map", m)

    @classmethod
    def from_one_based(cls, seq) -> "Permutation":
        return cls(tuple(int(i) - 1 for i in seq))

    @property
    def one_based(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in self.map)

    @property
    def n(self) -> int:
        return len(self.map)

    @property
    def is_identity(self) -> bool:
        return self.map == tuple(range(len(self.map)))

    def __len__(self):
        return len(self.map)

    def __call__(self, x):
        return apply(self, x)

    def __repr__(self):
        return f"Permutation{self.one_based}"


@dataclass(frozen=True)
class RegionLocation:
    region_perm: Permutation
    on_edge: bool


def identity(n: int) -> Permutation:
    return Permutation(tuple(range(n)))


def apply(p: Permutation, x):
    """Reorder the last axis of `x` so that ``result[..., i] = x[..., p.map[i]]``."""
    x = np.asarray(x)
    if x.shape[-1] != p.n:
        raise DimensionMismatch(f"permutation of size {p.n} applied to vector of size {x.shape[-1]}")
    return x[..., list(p.map)]


def compose(a: Permutation, b: Permutation) -> Permutation:
    """Return the permutation equal to applying `b` first, then `a`."""
    if a.n != b.n:
        raise DimensionMismatch(f"cannot compose permutations of sizes {a.n} and {b.n}")
    return Permutation(tuple(b.map[i] for i in a.map))


def inverse(a: Permutation) -> Permutation:
    inv = [0] * a.n
    for i, j in enumerate(a.map):
        inv[j] = i
    return Permutation(tuple(inv))


def _check_limit(n: int, limit: int | None):
    if n < 1:
        raise InputError("n must be positive")
    limit = DEFAULT_EXHAUSTIVE_LIMIT if limit is None else limit
    if n > limit:
        raise ExhaustiveLimit(
            f"full enumeration of S_{n} ({math.factorial(n)} permutations) exceeds "
            f"the exhaustive limit n <= {limit}"
        )


def enumerate_all(n: int, limit: int | None = None) -> Iterator[Permutation]:
    """Yield all n! permutations in lexicographic order of their maps."""
    _check_limit(n, limit)
    for m in itertools.permutations(range(n)):
        yield Permutation(m)


@lru_cache(maxsize=None)
def _perm_table(n: int) -> np.ndarray:
    table = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    table.setflags(write=False)
    return table


def all_permutations(n: int, limit: int | None = None) -> np.ndarray:
    """All permutations of S_n as a read-only ``(n!, n)`` index array.

    Rows follow the same lexicographic order as :func:`enumerate_all`, so row 0
    is always the identity.
    """
    _check_limit(n, limit)
    return _perm_table(n)


def locate_region(x) -> RegionLocation:
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    srt = x[order]
    on_edge = bool(np.any(srt[1:] == srt[:-1]))
    # order sorts x ascending, i.e. it is the inverse of the region permutation
    return RegionLocation(inverse(Permutation(tuple(order))), on_edge)


def induced_permutation(x_star, pi0: Permutation) -> tuple[Permutation, bool]:
    """Permutation carrying `x_star` into the region ``pi0 T``.

    Returns ``(pi, on_edge)``; `on_edge` flags a tied draw, for which the
    region is only defined through the stable-sort convention.
    """
    loc = locate_region(x_star)
    return compose(pi0, inverse(loc.region_perm)), loc.on_edge


def sample_uniform(n: int, rng: np.random.Generator) -> Permutation:
    return Permutation(tuple(rng.permutation(n)))


def sample_uniform_array(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `size` independent uniform permutations as rows of an index array."""
    base = np.broadcast_to(np.arange(n), (size, n))
    return rng.permuted(base, axis=1)
