"""Algorithms that talk to an `OracleSession`.

`sequential_minimize` is an adaptive minimizer for the hard family that
identifies the hidden parts one round at a time. The other strategies are
baselines for the game and distinguishing experiments.

How part identification works. Suppose parts P_1..P_{i-1} are known and W is
the set of remaining elements. Take a baseline B made of some known parts
plus k random elements of W, query B, and query B + e (or B - e) for every
e in W. Each answer difference is a marginal of the hidden function at a
point close to the signature x of B. Submodularity gives

    d_i(y) >= d_i(top)   and   d_j(y) <= d_j(bottom)   for bottom <= y <= top,

so if d_i(top) > max_{j>i} d_j(bottom) for a box [bottom, top] that contains
x with high probability, the n largest marginals are exactly P_i. The
baseline (known parts, k) and the box half-width are chosen offline to
maximize the box width in standard deviations of the hypergeometric counts.

The minimizing corner of every variant is known offline from the parameters.
The condition above is only required for variants whose minimizing corner
cannot yet be assembled from the identified parts, so identification stops
early when it is no longer needed. A final round queries every assemblable
candidate corner and reports the smallest answer.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hardfamily import HardParams, Variant, hard_function, marginals_batch
from .hypergrid import corner_minimum
from .oracle import OracleSession, Query, QueryStrategy, _rng


@dataclass
class SolverReport:
    min_value: int
    minimizer: frozenset
    rounds: int
    queries: int
    identified_parts: int = 0
    retries: int = 0
    notes: list = field(default_factory=list)

    def csv_row(self, instance_seed: int, variant: str, correct: bool) -> list:
        return [instance_seed, variant, self.min_value, self.rounds, self.queries, int(correct)]


SOLVER_CSV_HEADER = ["instance_seed", "variant", "min_value", "rounds", "queries", "correct"]


@dataclass(frozen=True)
class _Baseline:
    pattern: tuple[int, ...]  # counts taken from each known part (0 or n)
    k: int  # random elements drawn from the unknown pool
    width: int  # box half-width per unknown coordinate
    z: float  # width in standard deviations


def _box_ok(p: HardParams, i: int, pattern, ks: np.ndarray, ws: np.ndarray, variants) -> np.ndarray:
    """Separation condition for every (k, w) pair; returns a bool array."""
    q = p.r - i + 1
    m = ks / q
    lo = np.maximum(0, np.floor(m - ws).astype(np.int64) - 1)
    hi = np.minimum(p.n, np.ceil(m + ws).astype(np.int64))
    pre = np.tile(np.array(pattern, dtype=np.int64), (len(ks), 1))
    top = np.concatenate([pre, np.repeat(hi[:, None], q, axis=1)], axis=1)
    top[:, i - 1] = np.minimum(top[:, i - 1], p.n - 1)
    bot = np.concatenate([pre, np.repeat(lo[:, None], q, axis=1)], axis=1)
    ok = np.ones(len(ks), dtype=bool)
    for v in variants:
        dt = marginals_batch(p, top, v)[:, i - 1]
        db = marginals_batch(p, bot, v)[:, i:].max(axis=1)
        ok &= dt > db
    return ok


def plan_baseline(p: HardParams, i: int, variants: Sequence[Variant],
                  budget: int | None = None) -> _Baseline | None:
    """Most robust baseline for identifying part i, or None if none separates.

    A round costs one query per unknown element, plus one for the baseline
    itself unless the baseline contains all or none of the unknown elements
    (then only differences between probes matter). Baselines that would not
    fit in ``budget`` are skipped.
    """
    budget = p.budget if budget is None else budget
    return _plan_cached(p, i, tuple(sorted(Variant.parse(v).value for v in variants)), budget)


@functools.lru_cache(maxsize=256)
def _plan_cached(p: HardParams, i: int, variants: tuple, budget: int) -> _Baseline | None:
    if not variants:
        return None
    pool = p.n * (p.r - i + 1)
    q = p.r - i + 1
    if budget < pool:
        return None
    widths = np.arange(p.n + 1)
    ks = np.arange(pool + 1) if budget > pool else np.array([0, pool])
    K, Wd = np.meshgrid(ks, widths, indexing="ij")
    patterns = itertools.product((0, p.n), repeat=i - 1) if i <= 7 else [(0,) * (i - 1)]
    best = None
    for pattern in patterns:
        ok = _box_ok(p, i, pattern, K.ravel(), Wd.ravel(), variants).reshape(K.shape)
        # largest w with every w' <= w feasible
        run = np.cumprod(ok, axis=1).sum(axis=1) - 1
        for row in np.flatnonzero(run >= 0):
            k, w = int(ks[row]), int(run[row])
            sd = np.sqrt(k * (1 / q) * (1 - 1 / q) * (pool - k) / max(pool - 1, 1))
            z = np.inf if sd == 0 else w / sd
            cand = _Baseline(tuple(pattern), int(k), w, float(z))
            if best is None or (cand.z, cand.width, -cand.k) > (best.z, best.width, -best.k):
                best = cand
    return best


@functools.lru_cache(maxsize=64)
def _corner_targets(p: HardParams) -> dict[Variant, tuple[int, ...]]:
    return {v: corner_minimum(hard_function(p, v))[1] for v in Variant}


def _assemble(corner, parts: list[np.ndarray], pool: np.ndarray, n: int):
    """Element set for ``corner`` if the identified parts suffice, else None."""
    i = len(parts)
    tail = corner[i:]
    if len(set(tail)) > 1:
        return None
    chosen = [parts[t] for t in range(i) if corner[t] == n]
    if tail and tail[0] == n:
        chosen.append(pool)
    if not chosen:
        return frozenset()
    return frozenset(np.concatenate(chosen).tolist())


def sequential_minimize(sess: OracleSession, max_retries: int = 2) -> SolverReport:
    """Minimize the hidden hard-family function through ``sess`` alone.

    Uses at most r + 2 rounds when identification succeeds within the retry
    allowance; the query count is reported, not bounded.
    """
    p = sess.params
    N, n = p.N, p.n
    rng = _rng(sess.seed, 1)
    targets = _corner_targets(p)
    parts: list[np.ndarray] = []
    pool = np.arange(N)
    retries = 0
    notes = []

    while True:
        pending = [v for v, c in targets.items() if _assemble(c, parts, pool, n) is None]
        if not pending:
            break
        i = len(parts) + 1
        plan = plan_baseline(p, i, pending, sess.budget)
        if plan is None or sess.round >= p.r + 1:
            notes.append(f"stopped before part {i}: variants {[v.value for v in pending]} unresolved")
            break
        chosen = rng.choice(pool.size, size=plan.k, replace=False)
        inside = np.zeros(pool.size, dtype=bool)
        inside[chosen] = True
        known = [parts[t] for t in range(i - 1) if plan.pattern[t] == n]
        base = np.concatenate(known + [pool[inside]]) if known or plan.k else np.zeros(0, dtype=np.int64)
        base_set = frozenset(base.tolist())
        mixed = 0 < plan.k < pool.size
        batch = [Query.explicit(base_set)] if mixed else []
        for e, inn in zip(pool.tolist(), inside):
            batch.append(Query.explicit(base_set - {e} if inn else base_set | {e}))
        ans = np.array(sess.submit_round(batch), dtype=np.int64)
        # without a baseline query, marginals are known up to a common shift
        ref = ans[0] if mixed else 0
        probes = ans[1:] if mixed else ans
        marg = np.where(inside, ref - probes, probes - ref)
        order = np.argsort(-marg, kind="stable")
        if pool.size > n and marg[order[n - 1]] <= marg[order[n]]:
            retries += 1
            notes.append(f"part {i}: no separation between rank n and n+1, retrying")
            if retries > max_retries:
                break
            continue
        mine = np.zeros(pool.size, dtype=bool)
        mine[order[:n]] = True
        parts.append(np.sort(pool[mine]))
        pool = pool[~mine]

    candidates = []
    for v, c in targets.items():
        s = _assemble(c, parts, pool, n)
        if s is not None and s not in candidates:
            candidates.append(s)
    answers = sess.submit_round([Query.explicit(s) for s in candidates])
    k = int(np.argmin(answers))
    return SolverReport(int(answers[k]), candidates[k], sess.round, sess.queries_used,
                        len(parts), retries, notes)


# ---------------------------------------------------------------------------
# baselines


class RandomQuerier(QueryStrategy):
    """Uniform random queries, ignoring all answers.

    ``sizes`` is either a (lo, hi) pair drawn uniformly (inclusive) or a
    sequence of sizes drawn with equal probability; None means (0, N).
    """

    def __init__(self, per_round: int, sizes=None, kind: str = "implicit"):
        if kind not in ("implicit", "explicit"):
            raise ValueError(f"kind must be 'implicit' or 'explicit', got {kind!r}")
        self.per_round = int(per_round)
        self.sizes = sizes
        self.kind = kind
        self.name = f"random-{kind}-{self.per_round}"

    def _sizes(self, rng, N):
        if self.sizes is None:
            return rng.integers(0, N + 1, size=self.per_round)
        if isinstance(self.sizes, tuple) and len(self.sizes) == 2:
            lo, hi = self.sizes
            return rng.integers(lo, hi + 1, size=self.per_round)
        return rng.choice(np.asarray(self.sizes), size=self.per_round)

    def propose(self, round_no, history, rng, params):
        sizes = self._sizes(rng, params.N)
        if self.kind == "implicit":
            seeds = rng.integers(0, 2**63, size=self.per_round)
            return [Query.implicit(int(s), int(d)) for s, d in zip(sizes, seeds)]
        return [Query.explicit(rng.choice(params.N, size=int(s), replace=False)) for s in sizes]


def random_querier(sizes=None, per_round: int = 1000, kind: str = "implicit") -> RandomQuerier:
    return RandomQuerier(per_round, sizes, kind)


class GreedyMarginalProbe(QueryStrategy):
    """Adaptive baseline: probe singleton marginals on top of the best set so far.

    Each round queries the current set B and B + e for up to ``per_round - 1``
    elements outside B (ascending id). Elements with a negative marginal are
    then added to B.
    """

    def __init__(self, per_round: int | None = None):
        self.per_round = per_round
        self.name = "greedy-probe"
        self.reset()

    def reset(self):
        self.current: frozenset = frozenset()
        self.best_value: int | None = None
        self._probed: list[int] = []
        self.marginals: list[dict[int, int]] = []

    def propose(self, round_no, history, rng, params):
        if history and self._probed:
            ans = history[-1]
            base = ans[0]
            if self.best_value is None or base < self.best_value:
                self.best_value = base
            marg = {e: a - base for e, a in zip(self._probed, ans[1:])}
            self.marginals.append(marg)
            self.current = self.current | {e for e, d in marg.items() if d < 0}
        cap = params.budget if self.per_round is None else self.per_round
        outside = [e for e in range(params.N) if e not in self.current]
        self._probed = outside[:max(cap - 1, 0)]
        return [Query.explicit(self.current)] + [Query.explicit(self.current | {e}) for e in self._probed]


def greedy_marginal_probe(sess=None, per_round: int | None = None) -> GreedyMarginalProbe:
    """Build the probe; ``sess`` is accepted for symmetry and only its budget is read."""
    if per_round is None and sess is not None:
        per_round = sess.budget
    return GreedyMarginalProbe(per_round)


class ScriptedQuerier(QueryStrategy):
    """Replays fixed batches, or calls ``script(round_no, history, params)``."""

    def __init__(self, script: Sequence[Sequence[Query]] | Callable, name: str = "scripted"):
        self.script = script
        self.name = name

    def propose(self, round_no, history, rng, params):
        if callable(self.script):
            return list(self.script(round_no, history, params))
        return list(self.script[round_no - 1]) if round_no <= len(self.script) else []


def brute_force_minimum(p: HardParams, variant) -> int:
    """Reference minimum used to grade solver runs (exact for submodular h)."""
    from .hypergrid import DEFAULT_BUDGET, grid_minimum_bruteforce, grid_size

    f = hard_function(p, variant)
    if grid_size(f.bounds) <= DEFAULT_BUDGET:
        return grid_minimum_bruteforce(f)[0]
    return corner_minimum(f)[0]
