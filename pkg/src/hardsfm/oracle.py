"""Round-accounting oracle sessions and the prefix-resampling adversary game.

An `OracleSession` hides a random equipartition and answers batches of
queries, one batch per round, under a per-round cap of floor(N^c) queries.

Queries are either explicit element sets or implicit ones: an implicit query
stands for a uniform random subset of a given size and is only ever
materialized as its signature, drawn from the multivariate hypergeometric
law. Implicit queries make statistics at N around 10^7 affordable and are
refused in matroid mode.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BudgetError, ConfigError, DomainError
from .hardfamily import HardParams, Variant, balanced_mask, values
from .hypergrid import Partition, signature
from .matroids import DualRankOracle, build_hard_pair


def derive_seed(master: int, *path: int) -> int:
    """64-bit seed determined by ``master`` and an integer path."""
    state = np.random.SeedSequence([int(master), *map(int, path)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _rng(master: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, path)]))


@dataclass(frozen=True)
class Query:
    kind: str
    size: int
    elements: frozenset | None = None
    draw_seed: int | None = None

    @classmethod
    def explicit(cls, ids) -> "Query":
        ids = frozenset(int(e) for e in ids)
        return cls("explicit", len(ids), elements=ids)

    @classmethod
    def implicit(cls, size: int, draw_seed: int) -> "Query":
        if size < 0:
            raise DomainError(f"implicit query size must be non-negative, got {size}")
        return cls("implicit", int(size), draw_seed=int(draw_seed))


def sample_equipartition(N: int, r: int, seed: int, fixed_prefix: Sequence = ()) -> Partition:
    """Uniform random equipartition of {0..N-1} into r parts, keeping ``fixed_prefix``.

    ``fixed_prefix`` lists member collections for parts 1..len(fixed_prefix);
    the remaining elements are shuffled with ``seed`` and cut into blocks of
    n = N / r for the later parts.
    """
    if r < 1 or N % r:
        raise DomainError(f"N={N} is not divisible by r={r}")
    n = N // r
    if len(fixed_prefix) > r:
        raise DomainError(f"prefix has {len(fixed_prefix)} parts, more than r={r}")
    labels = np.zeros(N, dtype=np.uint8 if r < 256 else np.int32)
    for k, part in enumerate(fixed_prefix, start=1):
        ids = np.asarray(part if isinstance(part, np.ndarray) else list(part), dtype=np.int64)
        if ids.size != n:
            raise DomainError(f"prefix part {k} has {ids.size} elements, expected n={n}")
        if ids.min() < 0 or ids.max() >= N or np.unique(ids).size != n:
            raise DomainError(f"prefix part {k} has repeated or out-of-range ids")
        if labels[ids].any():
            raise DomainError(f"prefix part {k} overlaps an earlier part")
        labels[ids] = k
    rest = np.flatnonzero(labels == 0)
    rest = rest[np.random.default_rng(seed).permutation(rest.size)]
    start = len(fixed_prefix)
    for k in range(r - start):
        labels[rest[k * n:(k + 1) * n]] = start + 1 + k
    return Partition(labels, r=r, seed=seed)


def draw_signatures(part_sizes: Sequence[int], sizes, rng: np.random.Generator) -> np.ndarray:
    """Signatures of independent uniform subsets of the given sizes.

    Each row is multivariate hypergeometric, drawn part by part from
    univariate hypergeometric laws.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    part_sizes = np.asarray(part_sizes, dtype=np.int64)
    total = int(part_sizes.sum())
    if sizes.size and (sizes.min() < 0 or sizes.max() > total):
        raise DomainError(f"subset sizes must lie in 0..{total}")
    out = np.zeros((sizes.size, part_sizes.size), dtype=np.int64)
    left = sizes.copy()
    pool = total
    for k, good in enumerate(part_sizes[:-1]):
        pool -= int(good)
        take = rng.hypergeometric(int(good), pool, left)
        out[:, k] = take
        left = left - take
    out[:, -1] = left
    return out


@dataclass(frozen=True)
class TranscriptEntry:
    round: int
    query_id: int
    kind: str
    size: int
    answer: object


class OracleSession:
    """Hidden instance plus round counter, per-round budget and transcript.

    ``matroid`` selects matroid mode: None for function values of
    ``variant``, or "even" / "even_prime" for rank pairs
    (rk_odd(S), rk of the chosen dual at S).
    """

    def __init__(self, params: HardParams, variant=Variant.F, seed: int = 0,
                 matroid: str | None = None, hidden: Partition | None = None):
        self.params = params
        self._variant = Variant.parse(variant)
        self.seed = int(seed)
        if matroid not in (None, "even", "even_prime"):
            raise ConfigError(f"matroid mode must be 'even' or 'even_prime', got {matroid!r}")
        self._matroid_mode = matroid
        self._hidden = hidden
        if hidden is not None and (hidden.r != params.r or hidden.part_sizes != (params.n,) * params.r):
            raise ConfigError("hidden partition does not match the parameters")
        self._oracles = None
        self.round = 0
        self.budget = params.budget
        self._transcript: list[TranscriptEntry] = []
        self.closed = False

    @property
    def hidden(self) -> Partition:
        if self._hidden is None:
            self._hidden = sample_equipartition(self.params.N, self.params.r, derive_seed(self.seed, 0))
        return self._hidden

    @property
    def transcript(self) -> tuple[TranscriptEntry, ...]:
        return tuple(self._transcript)

    @property
    def queries_used(self) -> int:
        return len(self._transcript)

    @property
    def matroid_mode(self) -> bool:
        return self._matroid_mode is not None

    def _rank_oracles(self):
        if self._oracles is None:
            pair = build_hard_pair(self.params, self.hidden)
            dual_of = pair.m_even if self._matroid_mode == "even" else pair.m_even_prime
            self._oracles = (pair.m_odd, DualRankOracle(dual_of))
        return self._oracles

    def _signatures(self, queries: Sequence[Query]) -> np.ndarray:
        P = self.hidden
        rows = []
        for q in queries:
            if q.kind == "explicit":
                rows.append(signature(P, q.elements))
            else:
                rows.append(tuple(draw_signatures(P.part_sizes, [q.size], _rng(q.draw_seed))[0]))
        return np.array(rows, dtype=np.int64).reshape(len(queries), self.params.r)

    def submit_round(self, queries: Sequence[Query]) -> list:
        """Answer one batch; the round counter advances even for an empty batch."""
        if self.closed:
            raise DomainError("session is closed")
        queries = list(queries)
        if len(queries) > self.budget:
            raise BudgetError(f"batch of {len(queries)} queries exceeds the per-round budget {self.budget}")
        for q in queries:
            if not isinstance(q, Query) or q.kind not in ("explicit", "implicit"):
                raise DomainError(f"malformed query {q!r}")
            if q.kind == "explicit" and q.elements and (min(q.elements) < 0 or max(q.elements) >= self.params.N):
                raise DomainError(f"query contains ids outside 0..{self.params.N - 1}")
            if q.kind == "implicit" and (q.size > self.params.N or q.draw_seed is None):
                raise DomainError(f"malformed implicit query {q!r}")
            if q.kind == "implicit" and self.matroid_mode:
                raise DomainError("implicit queries are not allowed in matroid mode")
        if self.matroid_mode:
            m_odd, dual = self._rank_oracles()
            masks = np.zeros((len(queries), self.params.N), dtype=bool)
            for k, q in enumerate(queries):
                masks[k, list(q.elements)] = True
            a, b = m_odd.rank_masks(masks), dual.rank_masks(masks)
            answers = [(int(x), int(y)) for x, y in zip(a, b)]
        else:
            answers = [int(v) for v in values(self.params, self._signatures(queries), self._variant)]
        self.round += 1
        for k, (q, ans) in enumerate(zip(queries, answers)):
            self._transcript.append(TranscriptEntry(self.round, k, q.kind, q.size, ans))
        return answers

    def close(self) -> None:
        self.closed = True

    def transcript_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "query_id", "kind", "size", "answer"])
        for e in self._transcript:
            ans = ";".join(map(str, e.answer)) if isinstance(e.answer, tuple) else e.answer
            w.writerow([e.round, e.query_id, e.kind, e.size, ans])
        return buf.getvalue()


class QueryStrategy:
    """A multi-round algorithm: proposes each round's batch from earlier answers."""

    name = "strategy"

    def reset(self) -> None:
        pass

    def propose(self, round_no: int, history: list[list], rng: np.random.Generator,
                params: HardParams) -> list[Query]:
        raise NotImplementedError


def run_strategy(strategy: QueryStrategy, sess: OracleSession, rounds: int, seed: int = 0) -> list[list]:
    """Drive ``strategy`` against ``sess`` for ``rounds`` rounds; returns all answers."""
    strategy.reset()
    rng = _rng(seed, 2)
    history: list[list] = []
    for ell in range(1, rounds + 1):
        history.append(sess.submit_round(strategy.propose(ell, history, rng, sess.params)))
    return history


# ---------------------------------------------------------------------------
# adversary game


@dataclass
class RoundRecord:
    round: int
    partition_seed: int
    revealed_prefix: int
    verdicts: list  # (query round i, balanced count, total count)
    kinds: list
    sizes: list
    balanced: list
    answers_f: list | None
    answers_fhat: list | None

    @property
    def stable(self) -> bool:
        return self.answers_f is not None and self.answers_f == self.answers_fhat


@dataclass
class GameRecord:
    seed: int
    params: HardParams
    s: int
    algorithm: str
    rounds: list = field(default_factory=list)
    failure_round: int | None = None

    @property
    def failed(self) -> bool:
        return self.failure_round is not None

    def transcript_csv(self, which: str) -> str:
        """Answer transcript as seen under F ("f") or FHAT ("fhat")."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "query_id", "kind", "size", "answer"])
        for rec in self.rounds:
            answers = rec.answers_f if which == "f" else rec.answers_fhat
            if answers is None:
                continue
            for k, ans in enumerate(answers):
                w.writerow([rec.round, k, rec.kinds[k], rec.sizes[k], ans])
        return buf.getvalue()

    @property
    def transcripts_identical(self) -> bool:
        return self.transcript_csv("f") == self.transcript_csv("fhat")

    @property
    def diverged_round(self) -> int | None:
        for rec in self.rounds:
            if rec.answers_f is not None and not rec.stable:
                return rec.round
        return None

    def csv_rows(self, trial: int) -> list[list]:
        rows = []
        for rec in self.rounds:
            for k in range(len(rec.sizes)):
                f = "" if rec.answers_f is None else rec.answers_f[k]
                fh = "" if rec.answers_fhat is None else rec.answers_fhat[k]
                rows.append([trial, rec.round, k, rec.kinds[k], rec.sizes[k], f, fh,
                             int(rec.balanced[k])])
        return rows

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "params": self.params.to_text(),
            "algorithm": self.algorithm,
            "rounds_requested": self.s,
            "failure_round": self.failure_round,
            "transcripts_identical": self.transcripts_identical,
            "rounds": [
                {"round": rec.round, "partition_seed": rec.partition_seed,
                 "revealed_prefix": rec.revealed_prefix,
                 "verdicts": [list(v) for v in rec.verdicts], "stable": rec.stable}
                for rec in self.rounds
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


GAME_CSV_HEADER = ["trial", "round", "query_id", "kind", "size", "answer_f", "answer_fhat", "balanced"]


class _ResampledInstance:
    """Partitions Gamma^(1), Gamma^(2), ... of the game, materialized only on demand."""

    def __init__(self, p: HardParams, seed: int):
        self.p = p
        self.seed = seed
        self._chain: list[Partition] = []

    def partition_seed(self, ell: int) -> int:
        return derive_seed(self.seed, ell)

    def partition(self, ell: int) -> Partition:
        while len(self._chain) < ell:
            k = len(self._chain) + 1
            prefix = self._chain[-1].parts()[:k - 1] if self._chain else []
            self._chain.append(sample_equipartition(self.p.N, self.p.r, self.partition_seed(k), prefix))
        return self._chain[ell - 1]


def adversary_game(algorithm: QueryStrategy, p: HardParams, s: int, seed: int) -> GameRecord:
    """Play ``s`` rounds of the prefix-resampling game against ``algorithm``.

    Before answering round ell the unrevealed parts ell..r are redrawn
    uniformly, keeping parts 1..ell-1 from the previous round. Every query
    asked in a round i <= ell must then be i-balanced; otherwise the game
    stops with failure_round = ell. Answers are computed under F and FHAT on
    the same signatures; the algorithm only sees the F answers.

    Implicit queries carry their signature forward: counts in revealed parts
    stay, the rest is redrawn from the hypergeometric law each round.
    """
    if s < 1 or s > p.r - 1:
        raise ConfigError(f"rounds s must satisfy 1 <= s <= r - 1 = {p.r - 1}, got {s}")
    algorithm.reset()
    record = GameRecord(seed, p, s, getattr(algorithm, "name", type(algorithm).__name__))
    inst = _ResampledInstance(p, seed)
    algo_rng = _rng(seed, 2)
    history: list[list] = []
    asked: list[tuple[int, Query]] = []
    implicit_sigs: dict[int, np.ndarray] = {}  # position in `asked` -> current signature

    for ell in range(1, s + 1):
        batch = list(algorithm.propose(ell, history, algo_rng, p))
        if len(batch) > p.budget:
            raise BudgetError(f"round {ell} batch of {len(batch)} exceeds the budget {p.budget}")
        start = len(asked)
        asked.extend((ell, q) for q in batch)

        # implicit signatures under Gamma^(ell)
        game_rng = _rng(seed, ell, 1)
        old = [k for k in range(start) if k in implicit_sigs]
        if old:
            S = np.stack([implicit_sigs[k] for k in old])
            keep = S[:, :ell - 1]
            rest = S[:, ell - 1:].sum(axis=1)
            redraw = draw_signatures([p.n] * (p.r - ell + 1), rest, game_rng)
            S = np.concatenate([keep, redraw], axis=1)
            for k, row in zip(old, S):
                implicit_sigs[k] = row
        for k in range(start, len(asked)):
            q = asked[k][1]
            if q.kind == "implicit":
                implicit_sigs[k] = draw_signatures([p.n] * p.r, [q.size], _rng(q.draw_seed))[0]
            elif q.kind != "explicit":
                raise DomainError(f"malformed query {q!r}")

        need_labels = any(q.kind == "explicit" for _, q in asked)
        P = inst.partition(ell) if need_labels else None
        sigs = np.zeros((len(asked), p.r), dtype=np.int64)
        for k, (_, q) in enumerate(asked):
            sigs[k] = implicit_sigs[k] if q.kind == "implicit" else signature(P, q.elements)

        origin = np.array([i for i, _ in asked], dtype=np.int64)
        ok = np.zeros(len(asked), dtype=bool)
        verdicts = []
        for i in range(1, ell + 1):
            sel = origin == i
            if sel.any():
                ok[sel] = balanced_mask(p, sigs[sel], i)
            verdicts.append((i, int(ok[sel].sum()), int(sel.sum())))
        mine = slice(start, len(asked))
        rec = RoundRecord(ell, inst.partition_seed(ell), ell - 1, verdicts,
                          [q.kind for q in batch], [q.size for q in batch],
                          [bool(v) for v in ok[mine]], None, None)
        record.rounds.append(rec)
        if not ok.all():
            record.failure_round = ell
            break
        rec.answers_f = [int(v) for v in values(p, sigs[mine], Variant.F)]
        rec.answers_fhat = [int(v) for v in values(p, sigs[mine], Variant.FHAT)]
        history.append(list(rec.answers_f))
    return record


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class BalanceStats:
    trials: int
    balanced: int
    probability: float
    max_deviation: float
    yardstick: Fraction
    within_yardstick: int


def balancedness_stats(p: HardParams, sizes, i: int, trials: int, seed: int = 0,
                       prefix: Sequence[int] | None = None) -> BalanceStats:
    """Empirical rate at which a uniform random query is i-balanced.

    Each trial draws a fresh uniform equipartition and a query whose size is
    taken from ``sizes`` in turn; only signatures are materialized. The
    deviation statistic is max over j >= i of |X_j - mu|, with mu the
    expected count per part, compared against g/16.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if not 1 <= i <= p.r:
        raise DomainError(f"balance index {i} outside 1..{p.r}")
    rng = np.random.default_rng(seed)
    sizes = np.resize(np.asarray(sizes, dtype=np.int64), trials)
    X = draw_signatures([p.n] * p.r, sizes, rng)
    ok = balanced_mask(p, X, i)
    mu = sizes[:, None] / p.r
    dev = np.abs(X[:, i - 1:] - mu)
    yard = Fraction(p.g, 16)
    within = int((16 * dev <= p.g).all(axis=1).sum())
    return BalanceStats(trials, int(ok.sum()), float(ok.mean()), float(dev.max()), yard, within)


@dataclass
class DistinguishSummary:
    trials: int
    distinguished: int
    first_rounds: list  # per trial: round of first differing answer, or None

    @property
    def rate(self) -> float:
        return self.distinguished / self.trials if self.trials else 0.0


def coupled_distinguish(algorithm: QueryStrategy, p: HardParams, s: int, trials: int,
                        seed: int = 0) -> DistinguishSummary:
    """Run ``algorithm`` against F and FHAT sessions that share hidden partition and seed."""
    firsts = []
    for t in range(trials):
        tseed = derive_seed(seed, t)
        runs = []
        for variant in (Variant.F, Variant.FHAT):
            sess = OracleSession(p, variant, seed=tseed)
            runs.append(run_strategy(algorithm, sess, s, seed=tseed))
        first = None
        for ell, (a, b) in enumerate(zip(*runs), start=1):
            if a != b:
                first = ell
                break
        firsts.append(first)
    return DistinguishSummary(trials, sum(f is not None for f in firsts), firsts)
