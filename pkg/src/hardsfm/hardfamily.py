"""The hard partition-submodular family h, its truncations, and their parameters.

For a signature x in [0, n]^r the suffix values are

    l_t(x) = sum_{s >= t} (x_s - tau) - gamma,        t = 1..r,

``a`` is the odd t with the largest l_t and ``b`` the even one (ties go to the
smaller index), and

    h(x) = |x|_1 - max(0, l_a(x)) - max(0, l_b(x)).

``hhat`` caps the last coordinate at theta and subtracts the overflow;
``hhatprime`` does the same for every coordinate from ``cut`` on. All three
share the same evaluator, selected by a `Variant` tag.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterator

import numpy as np

from .errors import ConfigError, DomainError
from .hypergrid import HypergridFunction, Signature


class Variant(str, Enum):
    F = "F"
    FHAT = "FHAT"
    FHATPRIME = "FHATPRIME"

    @classmethod
    def parse(cls, tag) -> "Variant":
        if isinstance(tag, Variant):
            return tag
        try:
            return cls(str(tag).upper())
        except ValueError:
            raise DomainError(f"unknown variant {tag!r}; expected F, FHAT or FHATPRIME") from None


def _iroot_floor(value: int, k: int) -> int:
    """Largest integer v with v**k <= value."""
    if value < 0:
        raise ValueError("negative radicand")
    if value < 2 or k == 1:
        return value
    v = int(round(value ** (1.0 / k))) if value.bit_length() < 1000 else 1 << (value.bit_length() // k + 1)
    while v**k > value:
        v -= 1
    while (v + 1) ** k <= value:
        v += 1
    return v


@dataclass(frozen=True)
class HardParams:
    """All scalars of the hard family.

    Only the arithmetic invariants are checked on construction (n even, r odd
    and at least 3, g a positive multiple of 4). The structural requirement
    5gr <= n is checked by `check_structural`, which `derive_params` always
    calls; exhaustive submodularity sweeps deliberately skip it.
    """

    n: int
    r: int
    g: int
    c: Fraction = field(default=Fraction(1))
    mode: str = "desk"

    def __post_init__(self):
        object.__setattr__(self, "c", Fraction(self.c))
        if self.n <= 0 or self.n % 2:
            raise ConfigError(f"n must be a positive even integer, got {self.n}")
        if self.r < 3 or self.r % 2 == 0:
            raise ConfigError(f"r must be an odd integer >= 3, got {self.r}")
        if self.g <= 0 or self.g % 4:
            raise ConfigError(f"g must be a positive multiple of 4, got {self.g}")
        if self.c <= 0:
            raise ConfigError(f"c must be positive, got {self.c}")
        if self.mode not in ("desk", "paper"):
            raise ConfigError(f"mode must be 'desk' or 'paper', got {self.mode!r}")

    @property
    def tau(self) -> int:
        return self.n // 2 - self.g

    @property
    def gamma(self) -> int:
        return self.g * self.r // 4

    @property
    def theta(self) -> int:
        return self.n // 2 - self.g // 4

    @property
    def cut(self) -> int:
        return -(-2 * self.r // 3)

    @property
    def N(self) -> int:
        return self.n * self.r

    @property
    def budget(self) -> int:
        """Per-round query cap floor(N^c), computed exactly."""
        return _iroot_floor(self.N ** self.c.numerator, self.c.denominator)

    @property
    def budget_n2c(self) -> int:
        """The looser per-round figure floor(n^(2c)), reported alongside `budget`."""
        e = 2 * self.c
        return _iroot_floor(self.n ** e.numerator, e.denominator)

    @property
    def structural(self) -> bool:
        return 5 * self.g * self.r <= self.n

    def check_structural(self) -> None:
        if not self.structural:
            raise ConfigError(
                f"5gr <= n violated: 5*{self.g}*{self.r} = {5 * self.g * self.r} > n = {self.n}")

    def to_text(self) -> str:
        return (f"n={self.n} r={self.r} g={self.g} c={self.c} mode={self.mode} "
                f"tau={self.tau} gamma={self.gamma} theta={self.theta} cut={self.cut} N={self.N}")

    @classmethod
    def from_text(cls, text: str) -> "HardParams":
        fields = dict(re.findall(r"(\w+)=(\S+)", text))
        try:
            p = cls(int(fields["n"]), int(fields["r"]), int(fields["g"]),
                    Fraction(fields.get("c", "1")), fields.get("mode", "desk"))
        except KeyError as exc:
            raise ConfigError(f"params block is missing {exc.args[0]!r}") from None
        for key in ("tau", "gamma", "theta", "cut", "N"):
            if key in fields and int(fields[key]) != getattr(p, key):
                raise ConfigError(
                    f"stored {key}={fields[key]} disagrees with recomputed {getattr(p, key)}")
        return p


def _largest_odd_r(n: int, g: int) -> int:
    r = n // (5 * g)
    return r if r % 2 else r - 1


def derive_params(n: int, c=1, mode: str = "desk", g_override: int | None = None,
                  r_override: int | None = None) -> HardParams:
    """Fill in the hard-family parameters for part size ``n``.

    paper mode: g is the smallest multiple of 4 at least 200 sqrt(c n ln n)
    and r the largest odd integer with 5gr <= n.

    desk mode: g comes from ``g_override``; without it, g is the largest
    multiple of 4 compatible with ``r_override`` (or with r = 3). r defaults
    to the largest feasible odd value and may be overridden downward.
    """
    c = Fraction(c)
    if n <= 0 or n % 2:
        raise ConfigError(f"n must be a positive even integer, got {n}")
    if c <= 0:
        raise ConfigError(f"c must be positive, got {c}")
    if mode == "paper":
        root = math.sqrt(float(c) * n * math.log(n))
        g = 4 * math.ceil(200 * root / 4)
        if g_override is not None:
            if not 200 * root <= g_override <= 800 * root:
                raise ConfigError(
                    f"g={g_override} outside the window 200 sqrt(c n ln n) <= g <= 800 sqrt(c n ln n)"
                    f" = [{200 * root:.1f}, {800 * root:.1f}]")
            g = g_override
    elif mode == "desk":
        if g_override is not None:
            g = g_override
        else:
            g = 4 * (n // (20 * (r_override or 3)))
            if g <= 0:
                raise ConfigError(f"5gr <= n violated: n={n} too small for any g >= 4")
    else:
        raise ConfigError(f"mode must be 'desk' or 'paper', got {mode!r}")
    if g <= 0 or g % 4:
        raise ConfigError(f"g must be a positive multiple of 4, got {g}")

    r_max = _largest_odd_r(n, g)
    if r_max < 3:
        raise ConfigError(
            f"5gr <= n violated: with g={g}, even r=3 needs n >= {15 * g}, got n={n}")
    r = r_max
    if r_override is not None:
        if r_override < 3 or r_override % 2 == 0:
            raise ConfigError(f"r must be an odd integer >= 3, got {r_override}")
        if r_override > r_max:
            raise ConfigError(
                f"5gr <= n violated: r={r_override} exceeds the largest feasible odd r={r_max}")
        r = r_override
    p = HardParams(n, r, g, c, mode)
    p.check_structural()
    return p


# ---------------------------------------------------------------------------
# batch evaluators: X is an (m, r) int64 array of signatures


def _as_batch(p: HardParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != p.r:
        raise DomainError(f"signature has {X.shape[1]} coordinates, expected r={p.r}")
    return X


def suffix_matrix(p: HardParams, X) -> np.ndarray:
    """Column t-1 holds l_t for every row of ``X``."""
    X = _as_batch(p, X)
    return np.cumsum((X - p.tau)[:, ::-1], axis=1)[:, ::-1] - p.gamma


def odd_even_batch(p: HardParams, X):
    """Arrays (a, b, l_a, l_b) with 1-based indices; ties go to the smaller index."""
    L = suffix_matrix(p, X)
    rows = np.arange(len(L))
    ka = np.argmax(L[:, 0::2], axis=1)
    kb = np.argmax(L[:, 1::2], axis=1)
    return 2 * ka + 1, 2 * kb + 2, L[rows, 2 * ka], L[rows, 2 * kb + 1]


def truncate_batch(p: HardParams, X, variant) -> np.ndarray:
    X = _as_batch(p, X)
    variant = Variant.parse(variant)
    if variant is Variant.F:
        return X
    start = p.r - 1 if variant is Variant.FHAT else p.cut - 1
    out = X.copy()
    np.minimum(out[:, start:], p.theta, out=out[:, start:])
    return out


def h_batch(p: HardParams, X) -> np.ndarray:
    X = _as_batch(p, X)
    _, _, la, lb = odd_even_batch(p, X)
    return X.sum(axis=1) - np.maximum(la, 0) - np.maximum(lb, 0)


def values(p: HardParams, X, variant=Variant.F) -> np.ndarray:
    """Values of the chosen variant on every row of ``X``."""
    X = _as_batch(p, X)
    T = truncate_batch(p, X, variant)
    return h_batch(p, T) - (X.sum(axis=1) - T.sum(axis=1))


def marginals_batch(p: HardParams, X, variant=Variant.F) -> np.ndarray:
    """Closed-form marginals d_i for every row and every coordinate, shape (m, r).

    Entries at coordinates already at n are computed from the formula but
    have no finite-difference counterpart.
    """
    X = _as_batch(p, X)
    variant = Variant.parse(variant)
    T = truncate_batch(p, X, variant)
    a, b, la, lb = odd_even_batch(p, T)
    idx = np.arange(1, p.r + 1)
    D = (1 - ((idx >= a[:, None]) & (la[:, None] >= 0))
         - ((idx >= b[:, None]) & (lb[:, None] >= 0))).astype(np.int64)
    if variant is not Variant.F:
        start = p.r - 1 if variant is Variant.FHAT else p.cut - 1
        over = np.zeros_like(X, dtype=bool)
        over[:, start:] = X[:, start:] >= p.theta
        D[over] = -1
    return D


def balanced_mask(p: HardParams, X, i: int) -> np.ndarray:
    """Rows of ``X`` that are i-balanced: 8 |x_j - x_i| <= g for all j > i."""
    X = _as_batch(p, X)
    if not 1 <= i <= p.r:
        raise DomainError(f"balance index {i} outside 1..{p.r}")
    dev = np.abs(X[:, i:] - X[:, i - 1:i])
    return (8 * dev <= p.g).all(axis=1)


# ---------------------------------------------------------------------------
# scalar API


def _point(p: HardParams, x) -> np.ndarray:
    X = _as_batch(p, x)
    if len(X) != 1:
        raise DomainError("expected a single signature")
    return X


def suffix(p: HardParams, x, t: int) -> int:
    if not 1 <= t <= p.r:
        raise DomainError(f"suffix index {t} outside 1..{p.r}")
    return int(suffix_matrix(p, _point(p, x))[0, t - 1])


def odd_even_index(p: HardParams, x) -> tuple[int, int, int, int]:
    """(a, b, l_a, l_b) for one signature."""
    a, b, la, lb = odd_even_batch(p, _point(p, x))
    return int(a[0]), int(b[0]), int(la[0]), int(lb[0])


def h_value(p: HardParams, x) -> int:
    return int(h_batch(p, _point(p, x))[0])


def truncate(p: HardParams, x, variant) -> Signature:
    return tuple(int(v) for v in truncate_batch(p, _point(p, x), variant)[0])


def hhat_value(p: HardParams, x) -> int:
    return int(values(p, _point(p, x), Variant.FHAT)[0])


def hhatprime_value(p: HardParams, x) -> int:
    return int(values(p, _point(p, x), Variant.FHATPRIME)[0])


def value(p: HardParams, x, variant=Variant.F) -> int:
    return int(values(p, _point(p, x), variant)[0])


def marginal_closed_form(p: HardParams, x, i: int, variant=Variant.F) -> int:
    X = _point(p, x)
    if not 1 <= i <= p.r:
        raise DomainError(f"coordinate {i} outside 1..{p.r}")
    if X[0, i - 1] >= p.n:
        raise DomainError(f"coordinate {i} of {tuple(X[0])} is at its maximum n={p.n}")
    return int(marginals_batch(p, X, variant)[0, i - 1])


def is_balanced(p: HardParams, x, i: int) -> bool:
    return bool(balanced_mask(p, _point(p, x), i)[0])


class HardFunction(HypergridFunction):
    """One variant of the hard family as a hypergrid function on [0, n]^r."""

    def __init__(self, p: HardParams, variant=Variant.F):
        super().__init__((p.n,) * p.r)
        self.params = p
        self.variant = Variant.parse(variant)

    def values(self, X) -> np.ndarray:
        return values(self.params, X, self.variant)

    def __repr__(self):
        return f"HardFunction({self.params.to_text()!r}, {self.variant.value})"


def hard_function(p: HardParams, variant=Variant.F) -> HardFunction:
    return HardFunction(p, variant)


def tail_corner(p: HardParams) -> Signature:
    """Signature with coordinates from ``cut`` on at n and the rest at 0."""
    return tuple(p.n if k >= p.cut else 0 for k in range(1, p.r + 1))


# ---------------------------------------------------------------------------
# suffix indistinguishability


@dataclass(frozen=True)
class IndistinguishabilityReport:
    ok: bool
    pairs: int
    points: int
    violation: tuple | None  # (i, x, x_prime, variant, value_x, value_x_prime)
    sampled: bool


def _grid(p: HardParams) -> np.ndarray:
    axes = np.arange(p.n + 1, dtype=np.int64)
    return np.stack(np.meshgrid(*([axes] * p.r), indexing="ij"), axis=-1).reshape(-1, p.r)


def suffix_indistinguishability_exhaustive(p: HardParams, variants=(Variant.F, Variant.FHAT),
                                           budget: int = 10**7) -> IndistinguishabilityReport:
    """Check every i < r/2 and every pair of i-balanced points with equal prefix and sum.

    All values of every listed variant must coincide inside each
    (prefix, sum) class. ``pairs`` counts distinct unordered pairs (sum of
    C(k, 2) over classes), ``points`` the balanced points visited.
    """
    from .errors import ResourceError

    if (p.n + 1) ** p.r > budget:
        raise ResourceError(f"grid has {(p.n + 1) ** p.r} points, budget is {budget}")
    G = _grid(p)
    vals = {v: values(p, G, v) for v in map(Variant.parse, variants)}
    pairs = points = 0
    for i in range(1, (p.r - 1) // 2 + 1):
        mask = balanced_mask(p, G, i)
        X = G[mask]
        points += len(X)
        keys = np.concatenate([X[:, :i], X.sum(axis=1, keepdims=True)], axis=1)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        pairs += int((counts * (counts - 1) // 2).sum())
        base = vals[Variant.F][mask] if Variant.F in vals else next(iter(vals.values()))[mask]
        order = np.argsort(inverse, kind="stable")
        starts = np.r_[0, np.cumsum(counts)[:-1]]
        first = base[order[starts]]
        for v, allv in vals.items():
            # every value in a class must equal the class's first reference value
            V = allv[mask]
            bad = np.flatnonzero(V != first[inverse])
            if bad.size:
                k = bad[0]
                mate = order[starts[inverse[k]]]
                return IndistinguishabilityReport(
                    False, pairs, points,
                    (i, tuple(map(int, X[mate])), tuple(map(int, X[k])), v.value,
                     int(base[mate]), int(V[k])), False)
    return IndistinguishabilityReport(True, pairs, points, None, False)


def balanced_pairs(p: HardParams, count: int, rng: np.random.Generator,
                   transfers: int = 8) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield (i, X, X') batches of random i-balanced pairs with equal prefix and sum.

    X' permutes the suffix of X and then applies random unit transfers
    between suffix coordinates that keep every coordinate inside the band.
    """
    band = p.g // 8
    chunk = 1 << 16
    done = 0
    imax = (p.r - 1) // 2
    while done < count:
        m = min(chunk, count - done)
        i = int(rng.integers(1, imax + 1))
        X = rng.integers(0, p.n + 1, size=(m, p.r))
        centre = np.where(rng.random(m) < 0.5,
                          rng.integers(0, p.n + 1, size=m),
                          rng.integers(max(0, p.tau - 2 * p.g), min(p.n, p.theta + 2 * p.g) + 1, size=m))
        X[:, i - 1] = centre
        lo = np.maximum(centre - band, 0)[:, None]
        hi = np.minimum(centre + band, p.n)[:, None]
        k = p.r - i
        X[:, i:] = lo + np.floor(rng.random((m, k)) * (hi - lo + 1)).astype(np.int64)
        Y = X.copy()
        Y[:, i:] = rng.permuted(X[:, i:], axis=1)
        rows = np.arange(m)
        for _ in range(transfers):
            src = rng.integers(i, p.r, size=m)
            dst = rng.integers(i, p.r, size=m)
            ok = (src != dst) & (Y[rows, src] > lo[:, 0]) & (Y[rows, dst] < hi[:, 0])
            Y[rows[ok], src[ok]] -= 1
            Y[rows[ok], dst[ok]] += 1
        done += m
        yield i, X, Y


def suffix_indistinguishability_sampled(p: HardParams, pairs: int, seed: int = 0,
                                        variants=(Variant.F, Variant.FHAT)) -> IndistinguishabilityReport:
    rng = np.random.default_rng(seed)
    variants = [Variant.parse(v) for v in variants]
    checked = 0
    for i, X, Y in balanced_pairs(p, pairs, rng):
        assert balanced_mask(p, X, i).all() and balanced_mask(p, Y, i).all()
        ref = values(p, X, Variant.F)
        for v in variants:
            for Z in (X, Y):
                bad = np.flatnonzero(values(p, Z, v) != ref)
                if bad.size:
                    k = bad[0]
                    return IndistinguishabilityReport(
                        False, checked + int(k), 2 * (checked + int(k)),
                        (i, tuple(map(int, X[k])), tuple(map(int, Y[k])), v.value,
                         int(ref[k]), int(values(p, Z[k], v)[0])), True)
        checked += len(X)
    return IndistinguishabilityReport(True, checked, 2 * checked, None, True)
