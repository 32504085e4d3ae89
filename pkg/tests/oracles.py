"""Brute-force reference implementations, deliberately independent of poolforge internals."""

from __future__ import annotations

import functools
import itertools
import math
from fractions import Fraction


def ap_oracle(ranking, grades, cutoff=1000):
    """Quadratic AP: precision at each relevant hit is recounted from scratch."""
    total_rel = sum(1 for g in grades.values() if g > 0)
    ranking = list(ranking)[:cutoff]
    acc = Fraction(0)
    for k in range(1, len(ranking) + 1):
        if grades.get(ranking[k - 1], 0) > 0:
            hits = sum(1 for d in ranking[:k] if grades.get(d, 0) > 0)
            acc += Fraction(hits, k)
    return float(acc / total_rel)


def ndcg_oracle(ranking, grades, k=10):
    dcg = 0.0
    for i, d in enumerate(list(ranking)[:k], start=1):
        g = grades.get(d, 0)
        if g > 0:
            dcg += g / math.log2(i + 1)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg


def kendall_oracle(reference, estimate):
    rpos = {t: i for i, t in enumerate(reference)}
    epos = {t: i for i, t in enumerate(estimate)}
    conc = disc = 0
    for a, b in itertools.combinations(reference, 2):
        s = (rpos[a] - rpos[b]) * (epos[a] - epos[b])
        if s > 0:
            conc += 1
        else:
            disc += 1
    n = len(reference)
    return (conc - disc) / (n * (n - 1) / 2)


def tau_ap_oracle(reference, estimate):
    n = len(estimate)
    total = Fraction(0)
    for i in range(2, n + 1):
        item = estimate[i - 1]
        above = estimate[: i - 1]
        c = sum(1 for other in above if reference.index(other) < reference.index(item))
        total += Fraction(c, i - 1)
    return float(Fraction(2, n - 1) * total - 1)


def max_drop_oracle(reference, estimate):
    return max(max(0, estimate.index(t) - reference.index(t)) for t in reference)


def pearson_oracle(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    den = math.sqrt(sum((x - mx) ** 2 for x in xs) * sum((y - my) ** 2 for y in ys))
    return num / den


def trapezoid_oracle(points):
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * min(y0, y1) + (x1 - x0) * abs(y1 - y0) / 2
    return area


def prefix_union_oracle(rankings_per_run, topics, depth):
    """rankings_per_run: list of {topic: [docs...]}"""
    out = set()
    for run in rankings_per_run:
        for t in topics:
            docs = run.get(t, [])
            for k in range(len(docs)):
                if k < depth:
                    out.add((t, docs[k]))
    return out


def comparator_sort(pairs):
    """(doc, score) ordering via an explicit comparator: higher score first, then larger doc id."""

    def cmp(a, b):
        if a[1] != b[1]:
            return -1 if a[1] > b[1] else 1
        if a[0] != b[0]:
            return -1 if a[0] > b[0] else 1
        return 0

    return sorted(pairs, key=functools.cmp_to_key(cmp))


def largest_remainder_oracle(sizes, m):
    total = sum(sizes)
    exact = [Fraction(m * s, total) for s in sizes]
    quotas = [math.floor(e) for e in exact]
    rest = m - sum(quotas)
    order = sorted(range(len(sizes)), key=lambda k: (-(exact[k] - quotas[k]), k))
    for k in order[:rest]:
        quotas[k] += 1
    return quotas
