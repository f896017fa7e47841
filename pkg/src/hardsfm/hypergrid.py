"""Partition-induced set functions on integer hypergrids.

A set function on a universe split into parts P_1..P_r is partition induced
when its value on S depends only on the signature (|S & P_1|, ..., |S & P_r|).
Everything here is exact integer arithmetic.

Part indices in the public API are 1-based. Signatures are plain tuples (or
rows of an integer array in the batch helpers) whose position k holds the
count for part k + 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, ResourceError

DEFAULT_BUDGET = 10**7
_CHUNK = 1 << 18

Signature = tuple[int, ...]


class Partition:
    """Partition of the universe {0, ..., N-1} into r labelled parts.

    ``labels[e]`` is the (1-based) part of element ``e``. Part sizes need not
    be equal; `is_equipartition` tells whether they are.
    """

    def __init__(self, labels, r: int | None = None, seed: int | None = None):
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise DomainError("labels must be a non-empty 1-d sequence")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DomainError("labels must be integers")
        top = int(labels.max())
        r = top if r is None else int(r)
        if int(labels.min()) < 1 or top > r:
            raise DomainError(f"part labels must lie in 1..{r}")
        sizes = np.bincount(labels.astype(np.int64), minlength=r + 1)[1:]
        if (sizes == 0).any():
            empty = int(np.flatnonzero(sizes == 0)[0]) + 1
            raise DomainError(f"part {empty} is empty")
        dtype = np.uint8 if r < 256 else np.int32
        self.labels = labels.astype(dtype, copy=False)
        self.labels.flags.writeable = False
        self.r = r
        self.seed = seed
        self.part_sizes: tuple[int, ...] = tuple(int(s) for s in sizes)

    @classmethod
    def from_parts(cls, parts: Sequence[Iterable[int]], seed: int | None = None) -> "Partition":
        """Build from explicit member lists; together they must cover 0..N-1 exactly once."""
        members = [np.fromiter(p, dtype=np.int64) for p in parts]
        N = sum(m.size for m in members)
        labels = np.zeros(N, dtype=np.int64)
        for k, m in enumerate(members, start=1):
            if m.size and (m.min() < 0 or m.max() >= N):
                raise DomainError("parts must cover exactly the ids 0..N-1")
            labels[m] = k
        if (labels == 0).any() or sum(np.unique(m).size for m in members) != N:
            raise DomainError("parts must be disjoint and cover 0..N-1")
        return cls(labels, r=len(members), seed=seed)

    @property
    def N(self) -> int:
        return int(self.labels.size)

    @property
    def is_equipartition(self) -> bool:
        return len(set(self.part_sizes)) == 1

    def members(self, i: int) -> np.ndarray:
        """Sorted element ids of part ``i`` (1-based)."""
        if not 1 <= i <= self.r:
            raise DomainError(f"part index {i} outside 1..{self.r}")
        return np.flatnonzero(self.labels == i)

    def parts(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum((0,) + self.part_sizes)
        return [order[bounds[k]:bounds[k + 1]] for k in range(self.r)]

    def union(self, indices: Iterable[int]) -> frozenset[int]:
        chosen = np.zeros(self.r + 1, dtype=bool)
        chosen[list(indices)] = True
        return frozenset(np.flatnonzero(chosen[self.labels]).tolist())

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.r == other.r and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash((self.r, self.labels.tobytes()))

    def __repr__(self):
        return f"Partition(N={self.N}, r={self.r}, sizes={self.part_sizes})"

    def to_text(self) -> str:
        seed = "-" if self.seed is None else str(self.seed)
        lines = [f"{self.N} {self.r} {seed}"]
        lines.extend(str(int(v)) for v in self.labels)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Partition":
        rows = text.split("\n")
        head = rows[0].split()
        if len(head) != 3:
            raise DomainError("partition header must be 'N r seed'")
        N, r = int(head[0]), int(head[1])
        seed = None if head[2] == "-" else int(head[2])
        body = [row for row in rows[1:] if row.strip()]
        if len(body) != N:
            raise DomainError(f"expected {N} part labels, found {len(body)}")
        return cls(np.array([int(v) for v in body], dtype=np.int64), r=r, seed=seed)


def _as_ids(S, N: int) -> np.ndarray:
    if isinstance(S, np.ndarray):
        ids = S.astype(np.int64, copy=False).ravel()
    else:
        ids = np.fromiter(S, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= N):
        bad = ids[(ids < 0) | (ids >= N)][0]
        raise DomainError(f"element id {bad} outside universe 0..{N - 1}")
    return ids


def signature(P: Partition, S) -> Signature:
    """Counts of ``S`` inside each part of ``P``."""
    ids = _as_ids(S, P.N)
    if np.unique(ids).size != ids.size:
        raise DomainError("query contains repeated element ids")
    counts = np.bincount(P.labels[ids].astype(np.int64), minlength=P.r + 1)[1:]
    return tuple(int(c) for c in counts)


class HypergridFunction:
    """Integer function on the box [0, bounds[0]] x ... x [0, bounds[r-1]].

    Subclasses override `values` with a vectorized evaluator; the default
    falls back to calling ``func`` row by row.
    """

    def __init__(self, bounds: Sequence[int], func: Callable[[Signature], int] | None = None):
        self.bounds: tuple[int, ...] = tuple(int(b) for b in bounds)
        if any(b < 0 for b in self.bounds):
            raise DomainError("bounds must be non-negative")
        self._func = func

    @property
    def r(self) -> int:
        return len(self.bounds)

    def values(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        return np.fromiter((self._func(tuple(int(v) for v in row)) for row in X),
                           dtype=np.int64, count=len(X))

    def __call__(self, x) -> int:
        row = np.asarray(x, dtype=np.int64).reshape(1, -1)
        if row.shape[1] != self.r:
            raise DomainError(f"signature has {row.shape[1]} coordinates, expected {self.r}")
        return int(self.values(row)[0])

    def in_domain(self, x) -> bool:
        return len(x) == self.r and all(0 <= v <= b for v, b in zip(x, self.bounds))


def cardinality(bounds: Sequence[int]) -> HypergridFunction:
    """The modular function x -> |x|_1."""
    return HypergridFunction(bounds, lambda x: sum(x))


def lift_eval(P: Partition, h: HypergridFunction, S) -> int:
    """Value on the set ``S`` of the set function induced by ``(P, h)``."""
    return h(signature(P, S))


def marginal_fd(h: HypergridFunction, x, i: int) -> int:
    """Finite difference h(x + e_i) - h(x); ``i`` is 1-based."""
    x = tuple(int(v) for v in x)
    if not 1 <= i <= h.r:
        raise DomainError(f"coordinate {i} outside 1..{h.r}")
    if not h.in_domain(x):
        raise DomainError(f"{x} outside the hypergrid")
    if x[i - 1] >= h.bounds[i - 1]:
        raise DomainError(f"coordinate {i} of {x} is at its maximum")
    up = list(x)
    up[i - 1] += 1
    return h(up) - h(x)


def grid_size(bounds: Sequence[int]) -> int:
    return int(np.prod([b + 1 for b in bounds], dtype=object))


def grid_values(h: HypergridFunction, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Evaluate ``h`` on every grid point; the result has shape ``bounds + 1``."""
    shape = tuple(b + 1 for b in h.bounds)
    total = grid_size(h.bounds)
    if total > budget:
        raise ResourceError(f"grid has {total} points, budget is {budget}")
    out = np.empty(total, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        X = np.stack(np.unravel_index(flat, shape), axis=1)
        out[start:start + len(flat)] = h.values(X)
    return out.reshape(shape)


@dataclass(frozen=True)
class Counterexample:
    """A violation of d_j h(x) >= d_j h(x + e_i)."""

    x: Signature
    i: int
    j: int
    lhs: int
    rhs: int

    def __str__(self):
        coords = ",".join(str(v) for v in self.x)
        return f"x=({coords}) i={self.i} j={self.j} lhs={self.lhs} rhs={self.rhs}"


@dataclass(frozen=True)
class SubmodularityReport:
    ok: bool
    counterexample: Counterexample | None
    checked: int
    sampled: bool


def submodularity_check(h: HypergridFunction, budget: int = DEFAULT_BUDGET,
                        samples: int | None = None, seed: int = 0) -> SubmodularityReport:
    """Check decreasing marginals of ``h`` over its whole grid.

    When the grid exceeds ``budget`` the check raises `ResourceError`, unless
    ``samples`` is given, in which case that many uniformly random (x, i, j)
    triples are tested instead and the report is flagged as sampled.
    """
    if grid_size(h.bounds) > budget:
        if samples is None:
            raise ResourceError(
                f"grid has {grid_size(h.bounds)} points, budget is {budget}; pass samples=")
        return _sampled_submodularity(h, samples, seed)

    H = grid_values(h, budget)
    worst = None
    checked = 0
    for j in range(h.r):
        if h.bounds[j] == 0:
            continue
        D = np.diff(H, axis=j)
        for i in range(h.r):
            if D.shape[i] < 2:
                continue
            second = np.diff(D, axis=i)
            checked += second.size
            bad = np.argwhere(second > 0)
            if bad.size:
                x = tuple(int(v) for v in bad[0])
                key = (x, i + 1, j + 1)
                if worst is None or key < worst:
                    worst = key
    if worst is None:
        return SubmodularityReport(True, None, checked, False)
    x, i, j = worst
    return SubmodularityReport(False, _counterexample(h, x, i, j), checked, False)


def _counterexample(h, x, i, j) -> Counterexample:
    up = list(x)
    up[i - 1] += 1
    return Counterexample(x, i, j, marginal_fd(h, x, j), marginal_fd(h, up, j))


def _sampled_submodularity(h, samples, seed) -> SubmodularityReport:
    rng = np.random.default_rng(seed)
    b = np.array(h.bounds, dtype=np.int64)
    worst = None
    done = 0
    while done < samples:
        m = min(_CHUNK, samples - done)
        i = rng.integers(0, h.r, size=m)
        j = rng.integers(0, h.r, size=m)
        hi = np.tile(b, (m, 1))
        hi[np.arange(m), i] -= 1
        hi[np.arange(m), j] -= 1
        keep = (hi >= 0).all(axis=1)
        i, j, hi = i[keep], j[keep], hi[keep]
        X = np.floor(rng.random(hi.shape) * (hi + 1)).astype(np.int64)
        rows = np.arange(len(X))
        Xi = X.copy()
        Xi[rows, i] += 1
        Xj = X.copy()
        Xj[rows, j] += 1
        Xij = Xi.copy()
        Xij[rows, j] += 1
        lhs = h.values(Xj) - h.values(X)
        rhs = h.values(Xij) - h.values(Xi)
        for k in np.flatnonzero(lhs < rhs):
            key = (tuple(int(v) for v in X[k]), int(i[k]) + 1, int(j[k]) + 1)
            if worst is None or key < worst:
                worst = key
        done += m
    if worst is None:
        return SubmodularityReport(True, None, samples, True)
    return SubmodularityReport(False, _counterexample(h, *worst), samples, True)


def corners(bounds: Sequence[int]) -> np.ndarray:
    """All 2^r corner signatures, in lexicographic order."""
    axes = [sorted({0, b}) for b in bounds]
    return np.array(list(itertools.product(*axes)), dtype=np.int64)


def corner_minimum(h: HypergridFunction) -> tuple[int, Signature]:
    """Minimum of ``h`` over signatures with every coordinate at 0 or its bound.

    For submodular ``h`` the maximal minimizer is such a corner, so the value
    equals the global grid minimum. Ties go to the lexicographically smallest
    corner.
    """
    C = corners(h.bounds)
    vals = h.values(C)
    k = int(np.argmin(vals))
    return int(vals[k]), tuple(int(v) for v in C[k])


def grid_minimum_bruteforce(h: HypergridFunction, budget: int = DEFAULT_BUDGET) -> tuple[int, Signature]:
    """Exact minimum over the full grid with the lexicographically smallest argmin."""
    H = grid_values(h, budget)
    flat = int(np.argmin(H))
    return int(H.flat[flat]), tuple(int(v) for v in np.unravel_index(flat, H.shape))
