import numpy as np
import pytest
from scipy import stats

from hardsfm.errors import BudgetError, ConfigError, DomainError
from hardsfm.hardfamily import HardParams, Variant, values
from hardsfm.hypergrid import signature
from hardsfm.matroids import DualRankOracle, build_hard_pair
from hardsfm.oracle import (OracleSession, Query, adversary_game, balancedness_stats,
                            coupled_distinguish, derive_seed, draw_signatures, run_strategy,
                            sample_equipartition)
from hardsfm.solvers import ScriptedQuerier, random_querier


class TestSeeds:
    def test_stable(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(1, 3) != derive_seed(2, 2)

    def test_partition_reproducible(self):
        assert sample_equipartition(30, 3, 5) == sample_equipartition(30, 3, 5)
        assert sample_equipartition(30, 3, 5) != sample_equipartition(30, 3, 6)


class TestEquipartition:
    def test_sizes(self):
        P = sample_equipartition(300, 5, 1)
        assert P.part_sizes == (60,) * 5

    def test_prefix_kept(self):
        P = sample_equipartition(30, 3, 1)
        Q = sample_equipartition(30, 3, 2, fixed_prefix=P.parts()[:1])
        assert (Q.members(1) == P.members(1)).all()
        assert Q.part_sizes == (10, 10, 10)

    def test_bad_prefix(self):
        with pytest.raises(DomainError):
            sample_equipartition(30, 3, 1, fixed_prefix=[range(9)])
        with pytest.raises(DomainError):
            sample_equipartition(30, 3, 1, fixed_prefix=[range(10), range(5, 15)])
        with pytest.raises(DomainError):
            sample_equipartition(31, 3, 1)

    def test_uniform_part_of_one_element(self):
        # element 0 lands in each part with probability 1/r
        counts = np.bincount([int(sample_equipartition(12, 4, s).labels[0]) for s in range(4000)],
                             minlength=5)[1:]
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_uniform_over_all_equipartitions(self):
        # N=6, r=2: 20 labelled equipartitions, all equally likely
        seen = {}
        for s in range(6000):
            key = tuple(sample_equipartition(6, 2, s).labels.tolist())
            seen[key] = seen.get(key, 0) + 1
        assert len(seen) == 20
        assert stats.chisquare(list(seen.values())).pvalue > 1e-3


class TestDrawSignatures:
    def test_sums(self):
        rng = np.random.default_rng(0)
        X = draw_signatures([10, 10, 10], [0, 7, 30, 15], rng)
        assert X.sum(axis=1).tolist() == [0, 7, 30, 15]
        assert (X >= 0).all() and (X <= 10).all()

    def test_matches_explicit_law(self):
        # counts in part 1 of a uniform 6-subset of a 3x8 partition
        rng = np.random.default_rng(1)
        X = draw_signatures([8, 8, 8], np.full(20000, 6), rng)
        observed = np.bincount(X[:, 0], minlength=7)
        expected = stats.hypergeom(24, 8, 6).pmf(np.arange(7)) * 20000
        keep = expected > 5
        obs, exp = observed[keep], expected[keep]
        exp = exp * obs.sum() / exp.sum()
        assert stats.chisquare(obs, exp).pvalue > 1e-3

    def test_joint_law_matches_explicit_subsets(self):
        rng = np.random.default_rng(2)
        P = sample_equipartition(12, 3, 0)
        direct = [signature(P, rng.choice(12, size=5, replace=False)) for _ in range(6000)]
        drawn = [tuple(r) for r in draw_signatures(P.part_sizes, np.full(6000, 5), rng)]
        keys = sorted(set(direct) | set(drawn))
        table = np.array([[direct.count(k) for k in keys], [drawn.count(k) for k in keys]])
        table = table[:, table.sum(axis=0) >= 10]
        assert stats.chi2_contingency(table).pvalue > 1e-3

    def test_bad_size(self):
        with pytest.raises(DomainError):
            draw_signatures([3, 3], [7], np.random.default_rng(0))


class TestSession:
    def test_values(self, p60):
        sess = OracleSession(p60, Variant.FHAT, seed=3)
        P = sess.hidden
        ans = sess.submit_round([Query.explicit([]), Query.explicit(P.members(3)),
                                 Query.explicit(range(180))])
        assert ans == [0, -2, 16]
        assert sess.round == 1 and sess.queries_used == 3

    def test_implicit_deterministic(self, p60):
        a = OracleSession(p60, seed=3).submit_round([Query.implicit(90, 11)])
        b = OracleSession(p60, seed=3).submit_round([Query.implicit(90, 11)])
        assert a == b

    def test_budget(self, p60):
        sess = OracleSession(p60)
        with pytest.raises(BudgetError):
            sess.submit_round([Query.explicit([0])] * 181)
        assert sess.round == 0 and sess.queries_used == 0

    def test_budget_scales_with_c(self):
        from fractions import Fraction
        sess = OracleSession(HardParams(60, 3, 4, Fraction(1, 2)))
        assert sess.budget == 13
        with pytest.raises(BudgetError):
            sess.submit_round([Query.implicit(1, k) for k in range(14)])

    def test_malformed(self, p60):
        sess = OracleSession(p60)
        with pytest.raises(DomainError):
            sess.submit_round([Query.explicit([180])])
        with pytest.raises(DomainError):
            sess.submit_round(["not a query"])
        with pytest.raises(DomainError):
            Query.implicit(-1, 0)

    def test_closed(self, p60):
        sess = OracleSession(p60)
        sess.close()
        with pytest.raises(DomainError):
            sess.submit_round([])

    def test_empty_round_counts(self, p60):
        sess = OracleSession(p60)
        assert sess.submit_round([]) == []
        assert sess.round == 1

    def test_matroid_mode(self, p60):
        sess = OracleSession(p60, seed=5, matroid="even")
        pair = build_hard_pair(p60, sess.hidden)
        S = sess.hidden.members(3)
        (ans,) = sess.submit_round([Query.explicit(S)])
        assert ans == (pair.m_odd.rank(S), DualRankOracle(pair.m_even).rank(S))
        with pytest.raises(DomainError):
            sess.submit_round([Query.implicit(3, 0)])
        with pytest.raises(ConfigError):
            OracleSession(p60, matroid="odd")

    def test_transcript_csv(self, p60):
        sess = OracleSession(p60, seed=1)
        sess.submit_round([Query.explicit([]), Query.implicit(5, 2)])
        lines = sess.transcript_csv().splitlines()
        assert lines[0] == "round,query_id,kind,size,answer"
        assert lines[1] == "1,0,explicit,0,0"
        assert lines[2].startswith("1,1,implicit,5,")


class TestRunStrategy:
    def test_scripted(self, p60):
        script = [[Query.explicit([])], [Query.explicit(range(180))]]
        sess = OracleSession(p60, seed=0)
        assert run_strategy(ScriptedQuerier(script), sess, 2) == [[0], [16]]


class TestGame:
    def test_explicit_singleton_fails_first_round(self, p60):
        algo = ScriptedQuerier([[Query.explicit([0])]])
        rec = adversary_game(algo, p60, 1, seed=0)
        assert rec.failed and rec.failure_round == 1
        assert rec.rounds[0].answers_f is None

    def test_empty_query_never_fails(self, p60):
        rec = adversary_game(ScriptedQuerier([[Query.explicit([])]] * 2), HardParams(60, 5, 4), 2, 0)
        assert not rec.failed and rec.transcripts_identical

    def test_random_queries_balanced(self):
        # band g/8 = 5000 against count deviations of a few hundred
        p = HardParams(1_000_000, 5, 40_000)
        rec = adversary_game(random_querier(per_round=200), p, 2, seed=3)
        assert not rec.failed
        assert rec.transcripts_identical and rec.diverged_round is None
        assert [v[0] for v in rec.rounds[1].verdicts] == [1, 2]

    def test_deterministic(self):
        p = HardParams(1_000_000, 5, 40_000)
        a = adversary_game(random_querier(per_round=50), p, 2, seed=7)
        b = adversary_game(random_querier(per_round=50), p, 2, seed=7)
        assert a.to_json() == b.to_json() and a.csv_rows(0) == b.csv_rows(0)

    def test_explicit_uses_materialized_partitions(self):
        p = HardParams(200, 3, 40)
        rec = adversary_game(random_querier(per_round=20, kind="explicit", sizes=(250, 350)), p, 2, 1)
        assert len(rec.rounds) >= 1
        assert rec.rounds[0].partition_seed == derive_seed(1, 1)

    def test_rounds_bound(self, p60):
        with pytest.raises(ConfigError):
            adversary_game(random_querier(per_round=1), p60, 3, 0)

    def test_budget(self, p60):
        with pytest.raises(BudgetError):
            adversary_game(random_querier(per_round=181), p60, 1, 0)


class TestStatistics:
    def test_balancedness(self):
        p = HardParams(1_000_000, 5, 40_000)
        st = balancedness_stats(p, [p.N // 2], 1, 500, seed=0)
        assert st.balanced == 500 and st.within_yardstick == 500

    def test_unbalanced_when_band_small(self, p60):
        st = balancedness_stats(p60, [90], 1, 200, seed=0)
        assert st.probability < 0.5

    def test_coupled_distinguish(self):
        p = HardParams(1_000_000, 5, 40_000)
        summary = coupled_distinguish(random_querier(per_round=100), p, 2, trials=3)
        assert summary.rate == 0.0 and summary.first_rounds == [None] * 3

    def test_coupled_distinguish_detects_difference(self, p60):
        # the universe has value 16 under F and FHAT alike, but a whole part differs
        def script(round_no, history, params):
            return [Query.explicit(range(120, 180))]
        summary = coupled_distinguish(ScriptedQuerier(script), p60, 1, trials=20)
        assert summary.distinguished == sum(f == 1 for f in summary.first_rounds)


def test_answers_use_values(p60):
    sess = OracleSession(p60, Variant.F, seed=2)
    P = sess.hidden
    S = np.concatenate([P.members(1)[:10], P.members(3)[:40]])
    assert sess.submit_round([Query.explicit(S)]) == [int(values(p60, [(10, 0, 40)])[0])]
