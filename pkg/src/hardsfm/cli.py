"""Command-line front end: ``hardsfm gen|verify|game|intersect|solve``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, HardSFMError, IntegrityError
from .hardfamily import (HardParams, Variant, derive_params, hard_function, marginals_batch,
                         suffix_indistinguishability_exhaustive, suffix_indistinguishability_sampled,
                         tail_corner, values)
from .hypergrid import (DEFAULT_BUDGET, Partition, corner_minimum, grid_minimum_bruteforce, grid_size,
                        submodularity_check)
from .matroids import (DualRankOracle, HardMatroidPair, NestedMatroid, build_hard_pair, dual_nested,
                       edmonds_min, intersection_max, rank_axioms_check, rank_greedy_oracle,
                       verify_mat_dual_two)
from .oracle import GAME_CSV_HEADER, OracleSession, adversary_game, derive_seed, sample_equipartition
from .solvers import SOLVER_CSV_HEADER, brute_force_minimum, random_querier, sequential_minimize

MAX_UNIVERSE = 5 * 10**7
MAX_MATERIALIZED = 10**7
SUITES = ("submodularity", "minimizers", "marginals", "suffix", "ranks", "edmonds")
VERIFY_CSV_HEADER = ["suite", "status", "sampled", "checked", "detail"]
MATROID_FILES = {"m_odd": "m_odd.txt", "m_even": "m_even.txt", "m_even_prime": "m_even_prime.txt"}


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def params_from_args(args, *, default_n=None, default_r=None) -> HardParams:
    n = args.n if args.n is not None else default_n
    if n is None:
        raise ConfigError("--n is required")
    r = args.r if args.r is not None else default_r
    p = derive_params(n, Fraction(args.c), args.mode, g_override=args.g, r_override=r)
    if p.N > MAX_UNIVERSE:
        raise ConfigError(f"universe N={p.N} exceeds the cap {MAX_UNIVERSE}; pass a smaller --r")
    return p


# ---------------------------------------------------------------------------
# gen


def write_instance(p: HardParams, seed: int, out: Path) -> None:
    if p.N > MAX_MATERIALIZED:
        raise ConfigError(f"instance files for N={p.N} exceed the cap {MAX_MATERIALIZED}")
    P = sample_equipartition(p.N, p.r, derive_seed(seed, 0))
    pair = build_hard_pair(p, P)
    atomic_write(out / "params.txt", p.to_text() + f" seed={seed}\n")
    atomic_write(out / "partition.txt", P.to_text())
    for key, M in pair.items():
        atomic_write(out / MATROID_FILES[key], M.to_text("partition.txt"))


def load_instance(path: Path):
    path = Path(path)
    text = (path / "params.txt").read_text(encoding="utf-8")
    p = HardParams.from_text(text)
    P = Partition.from_text((path / "partition.txt").read_text(encoding="utf-8"))
    if P.r != p.r or P.part_sizes != (p.n,) * p.r:
        raise ConfigError("partition file does not match params")
    mats = {}
    for key, name in MATROID_FILES.items():
        mats[key] = NestedMatroid.from_text((path / name).read_text(encoding="utf-8"), P)
    pair = HardMatroidPair(mats["m_odd"], mats["m_even"], mats["m_even_prime"], P, p)
    return p, P, pair


def cmd_gen(args) -> int:
    p = params_from_args(args)
    out = args.out or "instance"
    write_instance(p, args.seed, Path(out))
    print(f"wrote instance {p.to_text()} seed={args.seed} to {out}")
    return 0


# ---------------------------------------------------------------------------
# verify


def _suite_submodularity(p, P, pair, budget, seed):
    rows = []
    for v in Variant:
        rep = submodularity_check(hard_function(p, v), budget=budget,
                                  samples=min(budget, 10**6), seed=seed)
        detail = "" if rep.ok else str(rep.counterexample)
        rows.append((f"submodularity[{v.value}]", rep.ok, rep.sampled, rep.checked, detail))
    return rows


def _suite_minimizers(p, P, pair, budget, seed):
    rows = []
    for v in Variant:
        f = hard_function(p, v)
        cval, corner = corner_minimum(f)
        problems = []
        sampled = grid_size(f.bounds) > budget
        if not sampled:
            gval, _ = grid_minimum_bruteforce(f, budget)
            if gval != cval:
                problems.append(f"corner minimum {cval} != grid minimum {gval}")
        if v is Variant.F:
            C = np.array(list(np.ndindex(*(2,) * p.r)), dtype=np.int64) * p.n
            zero = np.flatnonzero(values(p, C, v) == 0)
            if cval != 0 or len(zero) != 1:
                problems.append(f"F corners attaining 0: {len(zero)}, minimum {cval}")
        if v is Variant.FHAT and p.structural and cval != -p.g // 2:
            problems.append(f"FHAT minimum {cval} != -g/2 = {-p.g // 2}")
        if v is Variant.FHATPRIME:
            tv = int(values(p, tail_corner(p), v)[0])
            if 6 * tv > -p.g * p.r:
                problems.append(f"tail corner value {tv} > -gr/6")
        detail = "; ".join(problems) or f"min={cval} at {corner}"
        rows.append((f"minimizers[{v.value}]", not problems, sampled, 2**p.r, detail))
    return rows


def _suite_marginals(p, P, pair, budget, seed):
    rows = []
    f0 = hard_function(p, Variant.F)
    total = grid_size(f0.bounds)
    if total <= budget:
        axes = np.arange(p.n + 1)
        X = np.stack(np.meshgrid(*([axes] * p.r), indexing="ij"), axis=-1).reshape(-1, p.r)
        sampled = False
    else:
        X = np.random.default_rng(seed).integers(0, p.n + 1, size=(budget // (p.r + 1), p.r))
        sampled = True
    for v in Variant:
        D = marginals_batch(p, X, v)
        base = values(p, X, v)
        bad = None
        checked = 0
        for i in range(p.r):
            ok = X[:, i] < p.n
            Y = X[ok].copy()
            Y[:, i] += 1
            fd = values(p, Y, v) - base[ok]
            checked += int(ok.sum())
            miss = np.flatnonzero(fd != D[ok, i])
            if miss.size and bad is None:
                k = miss[0]
                bad = f"x={tuple(int(t) for t in X[ok][k])} i={i + 1} closed={D[ok, i][k]} fd={fd[k]}"
        rows.append((f"marginals[{v.value}]", bad is None, sampled, checked, bad or ""))
    return rows


def _suite_suffix(p, P, pair, budget, seed):
    if (p.n + 1) ** p.r <= budget:
        rep = suffix_indistinguishability_exhaustive(p, variants=list(Variant), budget=budget)
    else:
        rep = suffix_indistinguishability_sampled(p, max(budget // 10, 1), seed=seed, variants=list(Variant))
    detail = "" if rep.ok else f"i,x,x',variant,v(x),v(x')={rep.violation}"
    return [("suffix", rep.ok, rep.sampled, rep.points, detail)]


def _suite_ranks(p, P, pair, budget, seed, samples=200):
    rows = []
    rng = np.random.default_rng(seed)
    masks = rng.random((samples, P.N)) < rng.random((samples, 1))
    for key, M in pair.items():
        bad = None
        closed = M.rank_masks(masks)
        for k in range(samples):
            if rank_greedy_oracle(M, masks[k]) != closed[k]:
                bad = f"set of size {int(masks[k].sum())}: closed form {closed[k]} vs greedy"
                break
        if bad is None:
            d1 = dual_nested(M).rank_masks(masks)
            d2 = DualRankOracle(M).rank_masks(masks)
            if (d1 != d2).any():
                k = int(np.flatnonzero(d1 != d2)[0])
                bad = f"dual rank mismatch on a set of size {int(masks[k].sum())}: {d1[k]} vs {d2[k]}"
        if bad is None:
            ax = rank_axioms_check(M, samples, seed)
            bad = ax.violation
        rows.append((f"ranks[{key}]", bad is None, True, samples, bad or ""))
    rep = verify_mat_dual_two(p, P, pair=pair, samples=samples, seed=seed, budget=budget)
    detail = ""
    if not rep.ok:
        name, kind, sig, lhs, rhs = rep.violations[0]
        detail = f"{name} {kind} signature={sig} lhs={lhs} rhs={rhs} violations={len(rep.violations)}"
    rows.append(("ranks[identity]", rep.ok, rep.signatures_checked == 0,
                 rep.sets_checked + rep.signatures_checked, detail))
    return rows


def _suite_edmonds(p, P, pair, budget, seed):
    rows = []
    for name, M, v in (("even", pair.m_even, Variant.F), ("even_prime", pair.m_even_prime, Variant.FHAT)):
        size = intersection_max(pair.m_odd, DualRankOracle(M)).size
        emin = edmonds_min(pair.m_odd, dual_nested(M), budget=budget)
        target = pair.C + corner_minimum(hard_function(p, v))[0]
        ok = size == emin == target
        rows.append((f"edmonds[{name}]", ok, False, 1,
                     f"intersection={size} edmonds_min={emin} C+min={target}"))
    return rows


SUITE_FUNCS = {
    "submodularity": _suite_submodularity,
    "minimizers": _suite_minimizers,
    "marginals": _suite_marginals,
    "suffix": _suite_suffix,
    "ranks": _suite_ranks,
    "edmonds": _suite_edmonds,
}


def parse_suites(selection) -> list[str]:
    if selection is None:
        return list(SUITES)
    names = [s.strip() for item in selection for s in item.split(",") if s.strip()]
    for s in names:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    return names


def cmd_verify(args) -> int:
    p, P, pair = load_instance(Path(args.instance))
    rows = []
    for name in parse_suites(args.suite):
        for label, ok, sampled, checked, detail in SUITE_FUNCS[name](p, P, pair, args.budget, args.seed):
            rows.append([label, "pass" if ok else "fail", str(bool(sampled)).lower(), checked, detail])
    text = to_csv(VERIFY_CSV_HEADER, rows)
    if args.out:
        atomic_write(Path(args.out), text)
    sys.stdout.write(text)
    failed = sum(row[1] == "fail" for row in rows)
    print(f"suites={len(rows)} failed={failed}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# game


def cmd_game(args) -> int:
    p = params_from_args(args, default_n=4_000_000, default_r=5)
    algo = random_querier(per_round=args.queries_per_round, kind="implicit")
    rows = []
    records = []
    failures = diverged = broken = 0
    for t in range(args.trials):
        rec = adversary_game(algo, p, args.rounds, derive_seed(args.seed, t))
        rows.extend(rec.csv_rows(t))
        records.append(rec.to_dict())
        failures += rec.failed
        diverged += rec.diverged_round is not None
        if not rec.failed and not rec.transcripts_identical:
            broken += 1
    summary = (f"trials={args.trials} rounds={args.rounds} failure_rate={failures / args.trials:.4f} "
               f"distinguish_rate={diverged / args.trials:.4f} "
               f"identical_when_not_failed={args.trials - failures - broken}/{args.trials - failures} "
               f"params: {p.to_text()}")
    if args.out:
        out = Path(args.out)
        atomic_write(out / "game.csv", to_csv(GAME_CSV_HEADER, rows))
        atomic_write(out / "game.json", json.dumps({"seed": args.seed, "params": p.to_text(),
                                                    "trials": records}, sort_keys=True) + "\n")
        atomic_write(out / "summary.txt", summary + "\n")
    print(summary)
    return 1 if broken else 0


# ---------------------------------------------------------------------------
# intersect


def cmd_intersect(args) -> int:
    if args.illustration:
        n = 60 if args.n is None else args.n
        g = 4 if args.g is None else args.g
        p = HardParams(n, 3, g, Fraction(args.c), args.mode)
        p.check_structural()
    else:
        p = params_from_args(args)
    if p.N > MAX_MATERIALIZED:
        raise ConfigError(f"intersection on N={p.N} exceeds the cap {MAX_MATERIALIZED}")
    P = sample_equipartition(p.N, p.r, derive_seed(args.seed, 0))
    pair = build_hard_pair(p, P)
    results = {}
    lines = []
    for name, M, v in (("even", pair.m_even, Variant.F), ("even_prime", pair.m_even_prime, Variant.FHAT)):
        res = intersection_max(pair.m_odd, DualRankOracle(M))
        emin = edmonds_min(pair.m_odd, dual_nested(M), budget=args.budget)
        target = pair.C + corner_minimum(hard_function(p, v))[0]
        if not res.size == emin == target:
            raise IntegrityError(f"{name}: intersection {res.size}, edmonds {emin}, C+min {target} disagree")
        results[name] = res
        lines.append(f"{name} size={res.size}")
        lines.append(" ".join(map(str, res.elements)))
    gap = results["even"].size - results["even_prime"].size
    summary = (f"size_even={results['even'].size} size_even_prime={results['even_prime'].size} gap={gap} "
               f"C={pair.C}")
    if p.r == 3:
        summary += (f" expected n+1.25g={p.n + 5 * p.g // 4} n+0.75g={p.n + 3 * p.g // 4}"
                    f" g/2={p.g // 2}")
    if args.out:
        atomic_write(Path(args.out), "\n".join(lines) + "\n")
    print(summary)
    return 0


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    p = params_from_args(args, default_n=60)
    variants = [Variant.parse(args.variant)] if args.variant else list(Variant)
    reference = {v: brute_force_minimum(p, v) for v in variants}
    rows = []
    correct = 0
    for t in range(args.trials):
        v = variants[t % len(variants)]
        iseed = derive_seed(args.seed, t)
        rep = sequential_minimize(OracleSession(p, v, seed=iseed))
        ok = rep.min_value == reference[v] and rep.rounds <= p.r + 2
        correct += ok
        rows.append(rep.csv_row(iseed, v.value, ok))
    if args.out:
        atomic_write(Path(args.out), to_csv(SOLVER_CSV_HEADER, rows))
    print(f"correct={correct}/{args.trials} max_rounds={max((r[3] for r in rows), default=0)} "
          f"max_queries={max((r[4] for r in rows), default=0)}")
    return 0 if correct == args.trials else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int)
    common.add_argument("--r", type=int)
    common.add_argument("--g", type=int)
    common.add_argument("--c", default="1", help="query exponent, a rational such as 1 or 3/2")
    common.add_argument("--mode", choices=("desk", "paper"), default="desk")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="grid-point cap for exhaustive checks; larger grids are sampled")

    parser = argparse.ArgumentParser(prog="hardsfm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="write params, partition and matroid files")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", parents=[common], help="run verification suites on an instance")
    v.add_argument("instance")
    v.add_argument("--suite", action="append", help=f"comma-separated subset of {','.join(SUITES)}")
    v.set_defaults(func=cmd_verify)

    gm = sub.add_parser("game", parents=[common], help="adversary resampling game with random queries")
    gm.add_argument("--trials", type=int, default=100)
    gm.add_argument("--rounds", type=int, default=2)
    gm.add_argument("--queries-per-round", type=int, default=1000)
    gm.set_defaults(func=cmd_game)

    it = sub.add_parser("intersect", parents=[common], help="matroid intersection on the hard pair")
    it.add_argument("--illustration", action="store_true", help="r=3 example, n=60 and g=4 by default")
    it.set_defaults(func=cmd_intersect)

    so = sub.add_parser("solve", parents=[common], help="sequential minimizer against seeded instances")
    so.add_argument("--trials", type=int, default=100)
    so.add_argument("--variant", choices=[x.value for x in Variant])
    so.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (HardSFMError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
