"""Brute-force reference implementations of the aggregation rules.

These are deliberately naive pure-Python rewrites (lists, ``math``, explicit
loops) that share no code with :mod:`garlab.gar`. They exist to cross-check
the fast implementations on randomly generated instances; the ``oracle`` CLI
subcommand and the acceptance suite both run the comparison.

Both sides follow the same written contract: ties break toward the lowest
node index and value-producing reductions accumulate in ascending node-index
order, so agreement is required to be bit-exact.
"""
from __future__ import annotations

import math
import time

import numpy as np

from . import gar

CHECKED_RULES = ("krum", "trimmed_mean", "median", "faba")


def ref_distance(a: list[float], b: list[float]) -> float:
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) * (x - y)
    return math.sqrt(total)


def ref_mean(vectors: list[list[float]]) -> list[float]:
    dim = len(vectors[0])
    out = []
    for c in range(dim):
        acc = 0.0
        for vec in vectors:
            acc += vec[c]
        out.append(acc / len(vectors))
    return out


def ref_median(vectors: list[list[float]]) -> list[float]:
    out = []
    for c in range(len(vectors[0])):
        column = sorted(vec[c] for vec in vectors)
        n = len(column)
        if n % 2 == 1:
            out.append(column[n // 2])
        else:
            out.append((column[n // 2 - 1] + column[n // 2]) / 2.0)
    return out


def ref_trimmed_mean(vectors: list[list[float]], f: int) -> list[float]:
    n = len(vectors)
    out = []
    for c in range(len(vectors[0])):
        column = [vec[c] for vec in vectors]
        by_rank = sorted(range(n), key=lambda i: (column[i], i))
        dropped = set(by_rank[:f]) | set(by_rank[n - f:]) if f else set()
        acc = 0.0
        for i in range(n):
            if i not in dropped:
                acc += column[i]
        out.append(acc / (n - 2 * f))
    return out


def ref_krum_index(vectors: list[list[float]], f: int) -> int:
    n = len(vectors)
    closest = n - f - 2
    scores = []
    for i in range(n):
        dists = sorted(ref_distance(vectors[i], vectors[j])
                       for j in range(n) if j != i)
        acc = 0.0
        for value in dists[:closest]:
            acc += value
        scores.append(acc)
    best = 0
    for i in range(1, n):
        if scores[i] < scores[best]:
            best = i
    return best


def ref_faba(vectors: list[list[float]], f: int) -> tuple[list[float], list[int]]:
    survivors = list(range(len(vectors)))
    for _ in range(f):
        center = ref_mean([vectors[i] for i in survivors])
        worst = survivors[0]
        worst_d = -1.0
        for idx in survivors:
            d = ref_distance(vectors[idx], center)
            if d > worst_d:
                worst, worst_d = idx, d
        survivors.remove(worst)
    return ref_mean([vectors[i] for i in survivors]), survivors


def ref_geomedian_objective(point: list[float], vectors: list[list[float]]) -> float:
    total = 0.0
    for vec in vectors:
        total += ref_distance(point, vec)
    return total


def random_instance(rng: np.random.Generator) -> list[list[float]]:
    """Random gradient stack: n in [4, 10], d in [1, 8], occasional duplicates."""
    n = int(rng.integers(4, 11))
    dim = int(rng.integers(1, 9))
    scale = float(rng.choice([0.1, 1.0, 10.0]))
    stack = (rng.standard_normal((n, dim)) * scale).tolist()
    # Duplicated reports exercise the lowest-index tie-breaks.
    if rng.random() < 0.3:
        src = int(rng.integers(0, n))
        dst = int(rng.integers(0, n))
        stack[dst] = list(stack[src])
    return stack


def _lists_equal(a: list[float], b) -> bool:
    bl = list(b)
    if len(a) != len(bl):
        return False
    return all(x == y for x, y in zip(a, bl))


def compare_rules(trials: int = 1000, seed: int = 0) -> dict[str, tuple[int, int]]:
    """Run ``trials`` random instances per rule; count bit-exact agreements."""
    rng = np.random.default_rng(seed)
    results = {rule: [0, 0] for rule in CHECKED_RULES}
    for _ in range(trials):
        vectors = random_instance(rng)
        n = len(vectors)

        f = int(rng.integers(0, n - 2))  # krum needs f <= n - 3
        got = gar.krum(vectors, f)
        ok = (got.selected_indices == (ref_krum_index(vectors, f),)
              and _lists_equal(vectors[got.selected_indices[0]], got.aggregate))
        results["krum"][0] += ok
        results["krum"][1] += 1

        f = int(rng.integers(0, (n - 1) // 2 + 1))  # n > 2f
        got = gar.trimmed_mean(vectors, f)
        results["trimmed_mean"][0] += _lists_equal(ref_trimmed_mean(vectors, f),
                                                   got.aggregate)
        results["trimmed_mean"][1] += 1

        got = gar.median_aggregate(vectors)
        results["median"][0] += _lists_equal(ref_median(vectors), got.aggregate)
        results["median"][1] += 1

        f = int(rng.integers(0, n))  # f < n
        got = gar.faba(vectors, f)
        want_vec, want_idx = ref_faba(vectors, f)
        results["faba"][0] += (_lists_equal(want_vec, got.aggregate)
                               and tuple(want_idx) == got.selected_indices)
        results["faba"][1] += 1
    return {rule: (hits, total) for rule, (hits, total) in results.items()}


def run_suite(trials: int = 1000, seed: int = 0) -> tuple[bool, list[str], float]:
    """Compare all checked rules; returns (all_ok, report_lines, elapsed_s)."""
    start = time.perf_counter()
    results = compare_rules(trials=trials, seed=seed)
    elapsed = time.perf_counter() - start
    lines = []
    all_ok = True
    for rule in CHECKED_RULES:
        hits, total = results[rule]
        ok = hits == total
        all_ok = all_ok and ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {rule}: {hits}/{total} "
                     f"bit-exact matches")
    return all_ok, lines, elapsed
