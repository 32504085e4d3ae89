"""Agreement between a reference leaderboard and an estimated one."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class UndefinedCorrelation(ValueError):
    pass


@dataclass(frozen=True)
class RankingPair:
    reference: tuple[str, ...]
    estimate: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "estimate", tuple(self.estimate))
        if len(set(self.reference)) != len(self.reference) or len(set(self.estimate)) != len(self.estimate):
            raise ValueError("rankings must not contain repeated items")
        if set(self.reference) != set(self.estimate):
            raise ValueError("reference and estimate must rank the same items")

    def __len__(self) -> int:
        return len(self.reference)

    def estimate_in_reference_ranks(self) -> list[int]:
        """Reference rank (0-based) of each item, listed in estimate order."""
        pos = {tag: i for i, tag in enumerate(self.reference)}
        return [pos[tag] for tag in self.estimate]


@dataclass(frozen=True)
class AgreementReport:
    tau: float
    tau_ap: float
    max_drop: int


def _count_inversions(seq: list[int]) -> int:
    if len(seq) < 2:
        return 0
    inv = 0
    width = 1
    a = list(seq)
    n = len(a)
    while width < n:
        merged = []
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j = lo, mid
            while i < mid and j < hi:
                if a[i] <= a[j]:
                    merged.append(a[i])
                    i += 1
                else:
                    merged.append(a[j])
                    inv += mid - i
                    j += 1
            merged.extend(a[i:mid])
            merged.extend(a[j:hi])
        a = merged
        width *= 2
    return inv


def _require_pairs(p: RankingPair) -> int:
    n = len(p)
    if n < 2:
        raise ValueError("rank correlation needs at least two items")
    return n


def kendall_tau(p: RankingPair) -> float:
    n = _require_pairs(p)
    discordant = _count_inversions(p.estimate_in_reference_ranks())
    pairs = n * (n - 1) // 2
    return (pairs - 2 * discordant) / pairs


def tau_ap(p: RankingPair) -> float:
    """AP rank correlation of ``estimate`` against the ground-truth ``reference``.

    For each estimate position i >= 2, counts how many of the items placed above it
    in the estimate are also above it in the reference. Not symmetric.
    """
    n = _require_pairs(p)
    ref_ranks = p.estimate_in_reference_ranks()
    # Fenwick tree over reference ranks of items already seen in the estimate
    tree = [0] * (n + 1)

    def add(i: int) -> None:
        i += 1
        while i <= n:
            tree[i] += 1
            i += i & -i

    def count_below(i: int) -> int:
        s = 0
        while i > 0:
            s += tree[i]
            i -= i & -i
        return s

    add(ref_ranks[0])
    terms = []
    for i in range(1, n):
        r = ref_ranks[i]
        terms.append(count_below(r) / i)
        add(r)
    return 2.0 * math.fsum(terms) / (n - 1) - 1.0


def max_drop(p: RankingPair) -> int:
    """Largest number of places any item falls from reference to estimate (0 if none falls)."""
    ref_pos = {tag: i for i, tag in enumerate(p.reference)}
    return max((max(0, i - ref_pos[tag]) for i, tag in enumerate(p.estimate)), default=0)


def max_rise(p: RankingPair) -> int:
    ref_pos = {tag: i for i, tag in enumerate(p.reference)}
    return max((max(0, ref_pos[tag] - i) for i, tag in enumerate(p.estimate)), default=0)


def agreement(reference: Sequence[str], estimate: Sequence[str]) -> AgreementReport:
    p = RankingPair(tuple(reference), tuple(estimate))
    return AgreementReport(kendall_tau(p), tau_ap(p), max_drop(p))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError("pearson needs equal-length inputs")
    n = len(xs)
    if n < 2:
        raise ValueError("pearson needs at least two points")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("undefined correlation: zero variance")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def curve_auc(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under (g, value) points on the raw g axis."""
    if len(points) < 2:
        raise ValueError("curve_auc needs at least two points")
    xs = [float(g) for g, _ in points]
    for a, b in zip(xs, xs[1:]):
        if b == a:
            raise ValueError(f"duplicate g value {a:g}")
        if b < a:
            raise ValueError("curve points must be sorted by increasing g")
    return math.fsum(
        (x1 - x0) * (y0 + y1) / 2.0 for (x0, y0), (x1, y1) in zip(points, points[1:])
    )
