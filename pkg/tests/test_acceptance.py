"""End-to-end acceptance checks; each test reports one PASS/FAIL line in the terminal summary."""

import time

import numpy as np
import pytest

from hardsfm.cli import main
from hardsfm.hardfamily import (HardParams, Variant, derive_params, hard_function,
                                marginals_batch, suffix_indistinguishability_exhaustive,
                                suffix_indistinguishability_sampled, tail_corner, values)
from hardsfm.hypergrid import (Partition, corner_minimum, corners, grid_minimum_bruteforce,
                               submodularity_check)
from hardsfm.matroids import (DualRankOracle, NestedMatroid, build_hard_pair, dual_nested,
                              edmonds_min, intersection_max, rank_closed_form, rank_greedy_batch,
                              rank_greedy_oracle)
from hardsfm.oracle import OracleSession, adversary_game, derive_seed, sample_equipartition
from hardsfm.solvers import brute_force_minimum, random_querier, sequential_minimize


def full_grid(p):
    axes = np.arange(p.n + 1)
    return np.stack(np.meshgrid(*([axes] * p.r), indexing="ij"), axis=-1).reshape(-1, p.r)


def random_nested(N, rng):
    k = int(rng.integers(1, 6))
    labels = np.concatenate([np.arange(1, k + 1), rng.integers(1, k + 1, size=N - k)])
    P = Partition(rng.permutation(labels), r=k)
    return NestedMatroid(P, [int(rng.integers(0, s + 1)) for s in P.part_sizes])


def test_ac1_submodularity(record_property):
    record_property("criterion", "AC1 submodularity")
    start = time.perf_counter()
    checked = 0
    for n in (6, 8, 10, 12):
        for r in (3, 5):
            for g in (4, 8):
                for v in Variant:
                    rep = submodularity_check(hard_function(HardParams(n, r, g), v))
                    assert rep.ok, f"n={n} r={r} g={g} {v.value}: {rep.counterexample}"
                    assert not rep.sampled
                    checked += rep.checked
    elapsed = time.perf_counter() - start
    record_property("detail", f"{checked} triples, 0 violations, {elapsed:.1f}s")
    assert elapsed < 60


def test_ac2_minimizers(record_property):
    record_property("criterion", "AC2 minimizers")
    start = time.perf_counter()
    p = HardParams(60, 3, 4)
    assert 5 * p.g * p.r == p.n

    f = hard_function(p, Variant.F)
    assert grid_minimum_bruteforce(f) == (0, (0, 0, 0))
    C = corners(f.bounds)
    assert (f.values(C) == 0).sum() == 1 and f.values(C)[0] == 0

    fh = hard_function(p, Variant.FHAT)
    assert grid_minimum_bruteforce(fh) == (-2, (0, 0, 60))

    fp = hard_function(p, Variant.FHATPRIME)
    tail = fp(tail_corner(p))
    assert 6 * tail <= -p.g * p.r
    golden, where = grid_minimum_bruteforce(fp)
    assert golden == -7  # frozen from the exhaustive scan
    assert tail == golden and where == (0, 60, 60)
    elapsed = time.perf_counter() - start
    record_property("detail", f"min h=0, min hhat=-2 at (0,0,60), hhat' tail={tail} golden={golden}, "
                              f"{elapsed:.1f}s")
    assert elapsed < 30


def test_ac3_marginal_closed_form(record_property):
    record_property("criterion", "AC3 marginal closed form")
    p = HardParams(60, 3, 4)
    X = full_grid(p)
    mismatches = 0
    for v in Variant:
        D = marginals_batch(p, X, v)
        base = values(p, X, v)
        for i in range(p.r):
            ok = X[:, i] < p.n
            Y = X[ok].copy()
            Y[:, i] += 1
            mismatches += int((values(p, Y, v) - base[ok] != D[ok, i]).sum())
    record_property("detail", f"{3 * p.r * len(X)} cells, {mismatches} mismatches")
    assert mismatches == 0


def test_ac4_suffix_indistinguishability(record_property):
    record_property("criterion", "AC4 suffix indistinguishability")
    exhaustive = [suffix_indistinguishability_exhaustive(HardParams(60, 3, g)) for g in (4, 16)]
    for rep in exhaustive:
        assert rep.ok, rep.violation
    start = time.perf_counter()
    p = HardParams(10_000, 9, 40)
    assert 5 * p.g * p.r <= p.n
    sampled = suffix_indistinguishability_sampled(p, 10**6, seed=0)
    assert sampled.ok, sampled.violation
    assert sampled.pairs == 10**6
    record_property("detail", f"exhaustive n=60 r=3: g=4 {exhaustive[0].pairs} pairs, "
                              f"g=16 {exhaustive[1].pairs} pairs; sampled {sampled.pairs} pairs "
                              f"in {time.perf_counter() - start:.1f}s; 0 violations")


def test_ac5_nested_rank_identities(record_property):
    record_property("criterion", "AC5 nested-matroid rank identities")
    rng = np.random.default_rng(2024)
    N = 16
    masks = ((np.arange(1 << N)[:, None] >> np.arange(N)) & 1).astype(bool)
    mismatches = dual_mismatches = 0
    for _ in range(50):
        M = random_nested(N, rng)
        closed = M.rank_masks(masks)
        mismatches += int((closed != rank_greedy_batch(M, masks)).sum())
        for row in rng.choice(len(masks), 200, replace=False):
            S = np.flatnonzero(masks[row])
            mismatches += rank_greedy_oracle(M, S) != closed[row]
        D = dual_nested(M)
        dual_mismatches += int((D.rank_masks(masks) != DualRankOracle(M).rank_masks(masks)).sum())
        DD = dual_nested(D)
        dual_mismatches += int((DD.independent_signatures(DD.signatures(masks))
                                != M.independent_signatures(M.signatures(masks))).sum())

    big = 0
    for _ in range(10):
        M = random_nested(180, rng)
        for _ in range(100):
            S = np.flatnonzero(rng.random(180) < rng.random())
            big += rank_closed_form(M, S) != rank_greedy_oracle(M, S)
    record_property("detail", f"50 matroids x 2^16 sets + 1000 sets at |U|=180: "
                              f"{mismatches + big} rank, {dual_mismatches} dual mismatches")
    assert mismatches == big == dual_mismatches == 0


def test_ac6_intersection_vs_sfm(record_property):
    record_property("criterion", "AC6 matroid intersection vs SFM")
    start = time.perf_counter()
    p = HardParams(60, 3, 4)
    pair = build_hard_pair(p, sample_equipartition(p.N, p.r, 0))
    a = intersection_max(pair.m_odd, DualRankOracle(pair.m_even)).size
    b = intersection_max(pair.m_odd, DualRankOracle(pair.m_even_prime)).size
    assert a == 65 == p.n + 5 * p.g // 4
    assert b == 63 == p.n + 3 * p.g // 4
    assert a - b == p.g // 2
    ea = edmonds_min(pair.m_odd, dual_nested(pair.m_even))
    eb = edmonds_min(pair.m_odd, dual_nested(pair.m_even_prime))
    assert (ea, eb) == (a, b)
    assert a == pair.C + corner_minimum(hard_function(p, Variant.F))[0]
    assert b == pair.C + corner_minimum(hard_function(p, Variant.FHAT))[0]
    elapsed = time.perf_counter() - start
    record_property("detail", f"sizes {a}/{b}, gap {a - b}, C={pair.C}, {elapsed:.1f}s")
    assert elapsed < 60


@pytest.mark.slow
def test_ac7_indistinguishability_game(record_property):
    record_property("criterion", "AC7 indistinguishability game")
    start = time.perf_counter()
    p = derive_params(4_000_000, r_override=5)
    assert p.g == 160_000 and 5 * p.g * (p.r + 2) > p.n >= 5 * p.g * p.r
    algo = random_querier(per_round=1000, kind="implicit")
    failed = diverged = broken = 0
    trials = 100
    for t in range(trials):
        rec = adversary_game(algo, p, 2, derive_seed(0, t))
        failed += rec.failed
        diverged += rec.diverged_round is not None
        if not rec.failed and not rec.transcripts_identical:
            broken += 1
    elapsed = time.perf_counter() - start
    record_property("detail", f"failure {failed}/{trials}, divergence {diverged}/{trials}, "
                              f"non-identical {broken}, {elapsed:.0f}s")
    assert failed <= 0.05 * trials and diverged <= 0.05 * trials
    assert broken == 0
    assert elapsed < 600


def test_ac8_sequential_solver(record_property):
    record_property("criterion", "AC8 sequential solver")
    p = HardParams(60, 3, 4)
    reference = {v: brute_force_minimum(p, v) for v in Variant}
    correct = 0
    rounds, queries = [], []
    for t in range(100):
        v = list(Variant)[t % 3]
        rep = sequential_minimize(OracleSession(p, v, seed=derive_seed(8, t)))
        correct += rep.min_value == reference[v]
        rounds.append(rep.rounds)
        queries.append(rep.queries)
    record_property("detail", f"{correct}/100 correct, rounds <= {max(rounds)}, "
                              f"queries {min(queries)}..{max(queries)} (mean {np.mean(queries):.0f})")
    assert correct == 100
    assert max(rounds) <= p.r + 2


def test_ac9_determinism(record_property, tmp_path):
    record_property("criterion", "AC9 determinism")
    runs = []
    for k in (1, 2):
        d = tmp_path / f"run{k}"
        inst = d / "inst"
        assert main(["gen", "--n", "60", "--g", "4", "--seed", "3", "--out", str(inst)]) == 0
        assert main(["verify", str(inst), "--seed", "3", "--out", str(d / "verify.csv")]) == 0
        assert main(["solve", "--trials", "20", "--seed", "3", "--out", str(d / "solve.csv")]) == 0
        assert main(["game", "--trials", "5", "--seed", "3", "--out", str(d / "game")]) == 0
        assert main(["intersect", "--illustration", "--seed", "3", "--out", str(d / "inter.txt")]) == 0
        runs.append({str(f.relative_to(d)): f.read_bytes() for f in sorted(d.rglob("*")) if f.is_file()})
    assert runs[0].keys() == runs[1].keys()
    differing = [name for name in runs[0] if runs[0][name] != runs[1][name]]
    record_property("detail", f"{len(runs[0])} files compared, {len(differing)} differ")
    assert not differing
