"""Nested matroids, their duals, and rank-oracle matroid intersection.

A nested matroid is a partition (P_1, ..., P_k) with thresholds tau_1..tau_k.
A set I is independent when every suffix union C_t = P_t | ... | P_k meets I
in at most cap_t = tau_t + ... + tau_k elements. Its rank is

    rk(S) = |x|_1 - max(0, max_t sum_{s >= t} (x_s - tau_s))

with x the signature of S, valid whenever all thresholds are non-negative.

Rank oracles in this module accept element sets (any iterable of ids) and
also expose ``rank_masks`` for batches of boolean membership rows, which is
what the intersection algorithm uses.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DomainError, IntegrityError, ResourceError
from .hardfamily import HardParams, Variant, values
from .hypergrid import Partition, corners

DEFAULT_BUDGET = 10**7


def _mask(S, N: int) -> np.ndarray:
    if isinstance(S, np.ndarray) and S.dtype == bool:
        if S.shape != (N,):
            raise DomainError(f"membership mask must have length {N}")
        return S
    ids = np.fromiter(S, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= N):
        raise DomainError(f"element id outside universe 0..{N - 1}")
    m = np.zeros(N, dtype=bool)
    m[ids] = True
    return m


class RankOracle:
    """Interface: ``N`` plus a vectorized ``rank_masks``."""

    N: int

    def rank_masks(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rank(self, S) -> int:
        return int(self.rank_masks(_mask(S, self.N)[None, :])[0])

    def is_independent(self, S) -> bool:
        m = _mask(S, self.N)
        return self.rank(m) == int(m.sum())


class NestedMatroid(RankOracle):
    """Nested matroid over ``partition`` with per-part ``thresholds``.

    ``groups`` optionally records, for a matroid built by coarsening a base
    partition, which base parts make up each of its parts (1-based).
    """

    def __init__(self, partition: Partition, thresholds: Sequence[int],
                 groups: Sequence[Sequence[int]] | None = None):
        thresholds = tuple(int(t) for t in thresholds)
        if len(thresholds) != partition.r:
            raise ConfigError(f"{len(thresholds)} thresholds for {partition.r} parts")
        if any(t < 0 for t in thresholds):
            raise ConfigError(f"thresholds must be non-negative, got {thresholds}")
        self.partition = partition
        self.thresholds = thresholds
        self.groups = None if groups is None else tuple(tuple(g) for g in groups)
        self.N = partition.N
        self._onehot = np.zeros((self.N, partition.r), dtype=np.int32)
        self._onehot[np.arange(self.N), partition.labels.astype(np.int64) - 1] = 1

    @property
    def k(self) -> int:
        return self.partition.r

    @property
    def capacities(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.cumsum(self.thresholds[::-1])[::-1])

    def signatures(self, masks: np.ndarray) -> np.ndarray:
        return masks.astype(np.int32) @ self._onehot

    def rank_signatures(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64).reshape(-1, self.k)
        excess = np.cumsum((X - np.array(self.thresholds))[:, ::-1], axis=1).max(axis=1)
        return X.sum(axis=1) - np.maximum(excess, 0)

    def rank_masks(self, masks: np.ndarray) -> np.ndarray:
        return self.rank_signatures(self.signatures(np.atleast_2d(masks)))

    def independent_signatures(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64).reshape(-1, self.k)
        return (np.cumsum((X - np.array(self.thresholds))[:, ::-1], axis=1) <= 0).all(axis=1)

    def is_independent(self, S) -> bool:
        return bool(self.independent_signatures(self.signatures(_mask(S, self.N)[None, :]))[0])

    def __repr__(self):
        return f"NestedMatroid(sizes={self.partition.part_sizes}, thresholds={self.thresholds})"

    def to_text(self, partition_ref: str) -> str:
        groups = "-" if self.groups is None else ";".join(",".join(map(str, g)) for g in self.groups)
        lines = [f"partition={partition_ref} groups={groups}", str(self.k)]
        lines += [f"{s} {t}" for s, t in zip(self.partition.part_sizes, self.thresholds)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: Partition) -> "NestedMatroid":
        """Rebuild from `to_text` output; ``base`` is the referenced partition."""
        rows = [row for row in text.splitlines() if row.strip()]
        try:
            head = dict(tok.split("=", 1) for tok in rows[0].split())
            k = int(rows[1])
            body = [tuple(int(v) for v in row.split()) for row in rows[2:2 + k]]
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"malformed matroid file: {exc}") from None
        if len(body) != k or any(len(b) != 2 for b in body):
            raise ConfigError(f"matroid file must list {k} 'part_size threshold' lines")
        if head.get("groups", "-") == "-":
            partition, groups = base, None
        else:
            groups = [tuple(int(v) for v in grp.split(",")) for grp in head["groups"].split(";")]
            partition = coarsen(base, groups)
        if len(groups or range(partition.r)) != k:
            raise ConfigError(f"matroid file lists {k} parts but groups give {partition.r}")
        sizes = tuple(b[0] for b in body)
        if sizes != partition.part_sizes:
            raise ConfigError(f"part sizes {sizes} disagree with partition {partition.part_sizes}")
        return cls(partition, [b[1] for b in body], groups)


def coarsen(P: Partition, groups: Sequence[Sequence[int]]) -> Partition:
    """Merge base parts: new part k+1 is the union of base parts ``groups[k]``."""
    flat = sorted(itertools.chain.from_iterable(groups))
    if flat != list(range(1, P.r + 1)):
        raise ConfigError(f"groups {groups} do not cover parts 1..{P.r} exactly once")
    lut = np.zeros(P.r + 1, dtype=np.int64)
    for k, grp in enumerate(groups, start=1):
        lut[list(grp)] = k
    return Partition(lut[P.labels], r=len(groups), seed=P.seed)


def is_independent(M: NestedMatroid, S) -> bool:
    return M.is_independent(S)


def rank_closed_form(M: NestedMatroid, S) -> int:
    return M.rank(S)


def rank_greedy_oracle(M: NestedMatroid, S) -> int:
    """Size of the greedy maximal independent subset, scanning ids in ascending order.

    Uses only the capacity definition of independence.
    """
    caps = M.capacities
    counts = [0] * M.k
    labels = M.partition.labels
    kept = 0
    for e in np.flatnonzero(_mask(S, M.N)):
        part = int(labels[e]) - 1
        # adding e raises |I & C_t| for every t <= part + 1
        if all(sum(counts[t:]) + 1 <= caps[t] for t in range(part + 1)):
            counts[part] += 1
            kept += 1
    return kept


def rank_greedy_batch(M: NestedMatroid, masks: np.ndarray) -> np.ndarray:
    """`rank_greedy_oracle` applied to every row of ``masks`` at once."""
    masks = np.atleast_2d(masks)
    caps = np.array(M.capacities, dtype=np.int64)
    counts = np.zeros((len(masks), M.k), dtype=np.int64)
    labels = M.partition.labels.astype(np.int64) - 1
    for e in range(M.N):
        part = labels[e]
        trial = counts.copy()
        trial[:, part] += 1
        suffix = np.cumsum(trial[:, ::-1], axis=1)[:, ::-1]
        fits = (suffix <= caps).all(axis=1) & masks[:, e]
        counts[fits, part] += 1
    return counts.sum(axis=1)


class DualRankOracle(RankOracle):
    """Rank of the dual matroid from three calls to the primal rank."""

    def __init__(self, M: RankOracle):
        self.M = M
        self.N = M.N
        self._full = int(M.rank_masks(np.ones((1, M.N), dtype=bool))[0])

    def rank_masks(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        return self.M.rank_masks(~masks) + masks.sum(axis=1) - self._full


def dual_rank(M: RankOracle, S) -> int:
    """rk*(S) = rk(U - S) + |S| - rk(U)."""
    m = _mask(S, M.N)
    full = np.ones(M.N, dtype=bool)
    return M.rank(~m) + int(m.sum()) - M.rank(full)


def dual_nested(M: NestedMatroid) -> NestedMatroid:
    """The dual as a nested matroid: parts reversed, thresholds n_i - tau_i."""
    sizes, taus = M.partition.part_sizes, M.thresholds
    new = tuple(s - t for s, t in zip(sizes[::-1], taus[::-1]))
    if any(t < 0 for t in new):
        raise ConfigError(f"dual thresholds {new} are negative: some threshold exceeds its part size")
    labels = M.k + 1 - M.partition.labels.astype(np.int64)
    groups = None if M.groups is None else M.groups[::-1]
    return NestedMatroid(Partition(labels, r=M.k, seed=M.partition.seed), new, groups)


# ---------------------------------------------------------------------------
# the hard pair


@dataclass
class HardMatroidPair:
    m_odd: NestedMatroid
    m_even: NestedMatroid
    m_even_prime: NestedMatroid
    partition: Partition
    params: HardParams
    C: int = field(init=False)

    def __post_init__(self):
        self.C = self.partition.N - self.m_even.rank(np.ones(self.partition.N, dtype=bool))

    def items(self):
        return (("m_odd", self.m_odd), ("m_even", self.m_even), ("m_even_prime", self.m_even_prime))


def hard_taus(p: HardParams) -> list[int]:
    return [p.tau] * (p.r - 1) + [p.tau + p.gamma]


def hard_groups(r: int) -> dict[str, list[tuple[int, ...]]]:
    odd = [(t, t + 1) for t in range(1, r - 1, 2)] + [(r,)]
    even = [(1,)] + [(t, t + 1) for t in range(2, r, 2)]
    even_prime = even[:-1] + [(r - 1,), (r,)]
    return {"m_odd": odd, "m_even": even, "m_even_prime": even_prime}


def hard_thresholds(p: HardParams) -> dict[str, list[int]]:
    tau = hard_taus(p)
    groups = hard_groups(p.r)
    odd = [sum(tau[s - 1] for s in grp) for grp in groups["m_odd"]]
    even = [p.n] + [sum(tau[s - 1] for s in grp) for grp in groups["m_even"][1:]]
    even_prime = even[:-1] + [tau[-2] + tau[-1] - p.theta, p.theta]
    return {"m_odd": odd, "m_even": even, "m_even_prime": even_prime}


def build_hard_pair(p: HardParams, P: Partition) -> HardMatroidPair:
    if P.r != p.r or P.part_sizes != (p.n,) * p.r:
        raise ConfigError(
            f"partition sizes {P.part_sizes} do not form an {p.r}-equipartition with parts of {p.n}")
    groups, thresholds = hard_groups(p.r), hard_thresholds(p)
    built = {key: NestedMatroid(coarsen(P, groups[key]), thresholds[key], groups[key])
             for key in groups}
    return HardMatroidPair(built["m_odd"], built["m_even"], built["m_even_prime"], P, p)


def rank_base_signatures(M: NestedMatroid, X) -> np.ndarray:
    """Rank of sets given by signatures over the base partition M was coarsened from."""
    if M.groups is None:
        return M.rank_signatures(X)
    X = np.asarray(X, dtype=np.int64)
    Y = np.stack([X[:, [s - 1 for s in grp]].sum(axis=1) for grp in M.groups], axis=1)
    return M.rank_signatures(Y)


# ---------------------------------------------------------------------------
# intersection


class IntersectionResult(NamedTuple):
    size: int
    elements: tuple[int, ...]


def _check_same_ground(M1: RankOracle, M2: RankOracle) -> int:
    if M1.N != M2.N:
        raise DomainError(f"ground sets differ: {M1.N} vs {M2.N}")
    return M1.N


def intersection_max(M1: RankOracle, M2: RankOracle) -> IntersectionResult:
    """Maximum common independent set by shortest augmenting paths.

    The exchange graph has an edge y -> x (y in I, x not in I) when
    I - y + x is independent in M1 and x -> y when it is independent in M2;
    paths run from elements that extend I in M1 to those that extend it in
    M2. Oracle answers that contradict the matroid axioms raise
    `IntegrityError`.
    """
    N = _check_same_ground(M1, M2)
    current = np.zeros(N, dtype=bool)
    # greedy warm start
    for e in range(N):
        current[e] = True
        if M1.rank_masks(current[None, :])[0] != current.sum() or \
                M2.rank_masks(current[None, :])[0] != current.sum():
            current[e] = False

    while True:
        size = int(current.sum())
        for M in (M1, M2):
            if M.rank_masks(current[None, :])[0] != size:
                raise IntegrityError("working set stopped being independent")
        inside = np.flatnonzero(current)
        outside = np.flatnonzero(~current)
        if outside.size == 0:
            break
        grow = np.repeat(current[None, :], outside.size, axis=0)
        grow[np.arange(outside.size), outside] = True
        sources = M1.rank_masks(grow) == size + 1
        sinks = M2.rank_masks(grow) == size + 1
        if not sources.any() or not sinks.any():
            break
        # exch1[a, b]: I - inside[a] + outside[b] independent in M1; exch2 likewise in M2
        exch1 = np.zeros((inside.size, outside.size), dtype=bool)
        exch2 = np.zeros_like(exch1)
        for a, y in enumerate(inside):
            swap = grow.copy()
            swap[:, y] = False
            exch1[a] = M1.rank_masks(swap) == size
            exch2[a] = M2.rank_masks(swap) == size
        path = _shortest_path(sources, sinks, exch1, exch2)
        if path is None:
            break
        for b_out, a_in in zip(path[0::2], path[1::2] + [None]):
            current[outside[b_out]] = True
            if a_in is not None:
                current[inside[a_in]] = False
        if int(current.sum()) != size + 1:
            raise IntegrityError("augmentation did not grow the common independent set")

    for M in (M1, M2):
        if M.rank_masks(current[None, :])[0] != current.sum():
            raise IntegrityError("result is not independent in both matroids")
    elems = tuple(int(e) for e in np.flatnonzero(current))
    return IntersectionResult(len(elems), elems)


def _shortest_path(sources, sinks, exch1, exch2):
    """BFS over outside (even positions) and inside (odd positions) nodes.

    Returns alternating indices [out, in, out, ..., out] or None.
    """
    n_out = len(sources)
    prev_out = np.full(n_out, -2)
    prev_in = np.full(exch1.shape[0], -2)
    queue = deque()
    for b in np.flatnonzero(sources):
        prev_out[b] = -1
        queue.append(("out", int(b)))
    while queue:
        side, v = queue.popleft()
        if side == "out":
            if sinks[v]:
                path = [v]
                while prev_out[path[-1]] != -1:
                    a = int(prev_out[path[-1]])
                    path.append(a)
                    path.append(int(prev_in[a]))
                return path[::-1]
            # x -> y when I - y + x is independent in M2
            for a in np.flatnonzero(exch2[:, v]):
                if prev_in[a] == -2:
                    prev_in[a] = v
                    queue.append(("in", int(a)))
        else:
            # y -> x when I - y + x is independent in M1
            for b in np.flatnonzero(exch1[v]):
                if prev_out[b] == -2:
                    prev_out[b] = v
                    queue.append(("out", int(b)))
    return None


def _all_masks(N: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(N)) & 1).astype(bool)


def intersection_bruteforce(M1: RankOracle, M2: RankOracle, max_n: int = 20) -> int:
    """Largest common independent set by scanning all 2^N subsets."""
    N = _check_same_ground(M1, M2)
    if N > max_n:
        raise ResourceError(f"subset scan over 2^{N} sets exceeds the 2^{max_n} cap")
    best = 0
    for start in range(0, 1 << N, 1 << 16):
        masks = _all_masks(N, start, min(start + (1 << 16), 1 << N))
        sizes = masks.sum(axis=1)
        ok = (M1.rank_masks(masks) == sizes) & (M2.rank_masks(masks) == sizes)
        if ok.any():
            best = max(best, int(sizes[ok].max()))
    return best


def _refinement(M1: NestedMatroid, M2: NestedMatroid):
    """Common refinement: ids of refined parts plus their labels under M1 and M2."""
    pairs = M1.partition.labels.astype(np.int64) * (M2.k + 1) + M2.partition.labels
    codes, sizes = np.unique(pairs, return_counts=True)
    return codes // (M2.k + 1), codes % (M2.k + 1), sizes


def edmonds_min(M1: RankOracle, M2: RankOracle, mode: str = "corners",
                budget: int = DEFAULT_BUDGET) -> int:
    """min over S of rk1(S) + rk2(U - S).

    corners: both matroids nested; the objective depends only on the
    signature over the common refinement and is submodular there, so its
    minimum is attained at a union of refined parts.
    grid: scan every signature of the common refinement (within budget).
    subsets: scan all 2^N subsets (tiny N only).
    """
    N = _check_same_ground(M1, M2)
    if mode == "subsets":
        if N > 20 or (1 << N) > budget:
            raise ResourceError(f"subset scan over 2^{N} sets exceeds budget")
        best = None
        for start in range(0, 1 << N, 1 << 16):
            masks = _all_masks(N, start, min(start + (1 << 16), 1 << N))
            vals = M1.rank_masks(masks) + M2.rank_masks(~masks)
            low = int(vals.min())
            best = low if best is None else min(best, low)
        return best
    if not (isinstance(M1, NestedMatroid) and isinstance(M2, NestedMatroid)):
        raise ResourceError("corner and grid modes need two nested matroids; use mode='subsets'")
    lab1, lab2, sizes = _refinement(M1, M2)
    k = len(sizes)
    if mode == "corners":
        if (1 << k) > budget:
            raise ResourceError(f"{1 << k} corners exceed budget {budget}")
        Y = corners(sizes)
    elif mode == "grid":
        total = int(np.prod(sizes + 1, dtype=object))
        if total > budget:
            raise ResourceError(f"refined grid has {total} points, budget is {budget}")
        axes = [np.arange(s + 1) for s in sizes]
        Y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    agg1 = np.zeros((k, M1.k), dtype=np.int64)
    agg1[np.arange(k), lab1 - 1] = 1
    agg2 = np.zeros((k, M2.k), dtype=np.int64)
    agg2[np.arange(k), lab2 - 1] = 1
    vals = M1.rank_signatures(Y @ agg1) + M2.rank_signatures((sizes - Y) @ agg2)
    return int(vals.min())


# ---------------------------------------------------------------------------
# verification


@dataclass
class MatDualReport:
    ok: bool
    sets_checked: int
    signatures_checked: int
    violations: list = field(default_factory=list)


def verify_mat_dual_two(p: HardParams, P: Partition, pair: HardMatroidPair | None = None,
                        samples: int = 200, seed: int = 0,
                        budget: int = DEFAULT_BUDGET) -> MatDualReport:
    """Check rk_odd(S) + rk*_even(U - S) = C + h(x) and the primed version with hhat.

    Random sets use the rank oracles on explicit sets; when the signature grid
    fits in ``budget`` every signature is also checked through the base
    signature ranks.
    """
    pair = pair or build_hard_pair(p, P)
    d_even = DualRankOracle(pair.m_even)
    d_prime = DualRankOracle(pair.m_even_prime)
    violations = []
    rng = np.random.default_rng(seed)
    N = P.N
    masks = rng.random((samples, N)) < rng.random((samples, 1))
    if samples:
        masks[0] = False
    if samples > 1:
        masks[1] = P.labels == P.r
    sigs = np.stack([np.bincount(P.labels[m].astype(np.int64), minlength=P.r + 1)[1:]
                     for m in masks]) if samples else np.zeros((0, P.r), dtype=np.int64)
    r_odd = pair.m_odd.rank_masks(masks) if samples else np.zeros(0, dtype=np.int64)
    for name, dual, variant in (("even", d_even, Variant.F), ("even_prime", d_prime, Variant.FHAT)):
        if not samples:
            break
        lhs = r_odd + dual.rank_masks(~masks)
        rhs = pair.C + values(p, sigs, variant)
        for k in np.flatnonzero(lhs != rhs):
            violations.append((name, "set", tuple(int(v) for v in sigs[k]), int(lhs[k]), int(rhs[k])))

    checked = 0
    if (p.n + 1) ** p.r <= budget:
        axes = np.arange(p.n + 1, dtype=np.int64)
        X = np.stack(np.meshgrid(*([axes] * p.r), indexing="ij"), axis=-1).reshape(-1, p.r)
        comp = p.n - X
        full = np.full((1, p.r), p.n)
        r_odd_x = rank_base_signatures(pair.m_odd, X)
        for name, M, variant in (("even", pair.m_even, Variant.F),
                                 ("even_prime", pair.m_even_prime, Variant.FHAT)):
            # dual rank of U - S is rk(S) + |U - S| - rk(U)
            dual_comp = rank_base_signatures(M, X) + comp.sum(axis=1) - rank_base_signatures(M, full)[0]
            lhs = r_odd_x + dual_comp
            rhs = pair.C + values(p, X, variant)
            for k in np.flatnonzero(lhs != rhs)[:10]:
                violations.append((name, "signature", tuple(int(v) for v in X[k]),
                                   int(lhs[k]), int(rhs[k])))
        checked = len(X)
    return MatDualReport(not violations, samples, checked, violations)


@dataclass
class AxiomReport:
    ok: bool
    checked: int
    violation: str | None


def rank_axioms_check(M: RankOracle, samples: int = 500, seed: int = 0) -> AxiomReport:
    """Sampled check of rk(empty) = 0, unit marginals, monotonicity and submodularity."""
    rng = np.random.default_rng(seed)
    N = M.N
    empty = np.zeros((1, N), dtype=bool)
    if M.rank_masks(empty)[0] != 0:
        return AxiomReport(False, 0, "rank of the empty set is not 0")
    A = rng.random((samples, N)) < rng.random((samples, 1))
    e = rng.integers(0, N, size=samples)
    f = rng.integers(0, N, size=samples)
    rows = np.arange(samples)
    A[rows, e] = False
    A[rows, f] = False
    Ae = A.copy()
    Ae[rows, e] = True
    Af = A.copy()
    Af[rows, f] = True
    Aef = Ae | Af
    rA, rAe, rAf, rAef = (M.rank_masks(Z) for Z in (A, Ae, Af, Aef))
    d = rAe - rA
    if ((d < 0) | (d > 1)).any():
        return AxiomReport(False, samples, "a marginal outside {0, 1}")
    if (rA > A.sum(axis=1)).any():
        return AxiomReport(False, samples, "rank exceeds cardinality")
    sub = (rAef - rAf > rAe - rA) & (e != f)
    if sub.any():
        k = int(np.flatnonzero(sub)[0])
        return AxiomReport(False, samples, f"submodularity fails adding {e[k]} after {f[k]}")
    return AxiomReport(True, samples, None)
