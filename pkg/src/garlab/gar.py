"""Gradient aggregation rules.

Seven rules over a set of n reported gradients, up to f of which may be
Byzantine: plain/weighted mean, coordinate-wise trimmed mean, coordinate-wise
median, krum (single-report selection by nearest-neighbour distance score),
faba (iterative furthest-from-mean elimination), a cosine-similarity filter
followed by the geometric median, and krum over hierarchical-cluster
representatives.

Every rule is a pure function and breaks all ties toward the lowest node
index, so aggregation is bit-reproducible. Where a rule returns a computed
value (means), the reduction accumulates in ascending node-index order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vecmath
from .errors import (ConfigError, DegenerateVectorError, DegenerateWeightsError,
                     InfeasibleError)

RULES = ("mean", "trimmed_mean", "median", "krum", "faba",
         "geomedian_cosine", "hc_krum")

#: Number of clusters hc_krum cuts the report dendrogram into.
DEFAULT_CLUSTER_COUNT = 5

_RULE_ALIASES = {"weighted_mean": "mean"}


def canonical_rule(name: str) -> str:
    """Map a rule name (or alias) to its canonical spelling."""
    rule = _RULE_ALIASES.get(name, name)
    if rule not in RULES:
        raise ConfigError(f"gar.rule: unknown rule {name!r} (choose from {', '.join(RULES)})")
    return rule


@dataclass(frozen=True)
class GarSpec:
    """Which rule to aggregate with, and its robustness parameters."""
    rule: str
    f: int = 0
    cluster_count: int = DEFAULT_CLUSTER_COUNT

    def __post_init__(self):
        object.__setattr__(self, "rule", canonical_rule(self.rule))
        if self.f < 0:
            raise ConfigError(f"gar.f: must be >= 0, got {self.f}")
        if self.cluster_count < 3:
            raise ConfigError(
                f"gar.cluster_count: must be >= 3, got {self.cluster_count}")


@dataclass(frozen=True)
class AggregationOutcome:
    """Aggregated gradient plus the node indices that contributed to it."""
    aggregate: np.ndarray
    selected_indices: tuple[int, ...]


def feasibility_errors(spec: GarSpec, n: int) -> list[str]:
    """Precondition violations of ``spec`` for ``n`` reports; empty if fine."""
    problems = []
    if n < 1:
        problems.append(f"aggregation requires n >= 1, got n={n}")
        return problems
    if spec.rule == "trimmed_mean" and n <= 2 * spec.f:
        problems.append(
            f"trimmed_mean requires n > 2f, got n={n}, f={spec.f}")
    if spec.rule == "krum" and n - spec.f - 2 < 1:
        problems.append(
            f"krum requires n - f - 2 >= 1, got n={n}, f={spec.f}")
    if spec.rule in ("faba", "geomedian_cosine") and n <= spec.f:
        problems.append(
            f"{spec.rule} requires n > f, got n={n}, f={spec.f}")
    if spec.rule == "hc_krum" and n < spec.cluster_count:
        problems.append(
            f"hc_krum requires n >= cluster_count, got n={n}, "
            f"cluster_count={spec.cluster_count}")
    return problems


def weighted_mean(reports, weights) -> AggregationOutcome:
    """Weighted arithmetic mean of all reports.

    Weights must be non-negative with a positive sum.
    """
    stack = vecmath.as_gradient_stack(reports)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size != stack.shape[0]:
        raise DegenerateWeightsError(
            f"need one weight per report: {w.size} weights for {stack.shape[0]} reports")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise DegenerateWeightsError("weights must be finite and non-negative")
    acc = np.zeros(stack.shape[1], dtype=np.float64)
    total = 0.0
    for i in range(stack.shape[0]):
        acc += w[i] * stack[i]
        total += w[i]
    if total == 0.0:
        raise DegenerateWeightsError("weights sum to zero")
    return AggregationOutcome(acc / total, tuple(range(stack.shape[0])))


def trimmed_mean(reports, f: int) -> AggregationOutcome:
    """Coordinate-wise mean after dropping the f smallest and f largest values.

    Per coordinate, entries are ranked by (value, node index); the f lowest
    and f highest ranks are discarded and the survivors are averaged in
    ascending node-index order. With f=0 this is exactly the plain mean.
    """
    stack = vecmath.as_gradient_stack(reports)
    n, dim = stack.shape
    if f < 0:
        raise InfeasibleError(f"trimmed_mean requires f >= 0, got f={f}")
    if n <= 2 * f:
        raise InfeasibleError(f"trimmed_mean requires n > 2f, got n={n}, f={f}")
    if f == 0:
        return AggregationOutcome(vecmath.ordered_mean(stack), tuple(range(n)))
    order = np.argsort(stack, axis=0, kind="stable")
    ranks = np.empty((n, dim), dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(n, dtype=np.int64)[:, None], axis=0)
    keep = (ranks >= f) & (ranks < n - f)
    acc = np.zeros(dim, dtype=np.float64)
    for i in range(n):
        acc += np.where(keep[i], stack[i], 0.0)
    return AggregationOutcome(acc / (n - 2 * f), tuple(range(n)))


def median_aggregate(reports) -> AggregationOutcome:
    """Coordinate-wise median of all reports."""
    stack = vecmath.as_gradient_stack(reports)
    return AggregationOutcome(vecmath.coordinate_median(stack),
                              tuple(range(stack.shape[0])))


def _pairwise_distances(stack: np.ndarray) -> np.ndarray:
    n = stack.shape[0]
    dmat = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = vecmath.euclidean_distance(stack[i], stack[j])
            dmat[i, j] = dmat[j, i] = d
    return dmat


def krum_scores(reports, f: int) -> list[float]:
    """Krum score per report: sum of distances to its n - f - 2 nearest peers."""
    stack = vecmath.as_gradient_stack(reports)
    n = stack.shape[0]
    closest = n - f - 2
    if f < 0 or closest < 1:
        raise InfeasibleError(f"krum requires n - f - 2 >= 1, got n={n}, f={f}")
    dmat = _pairwise_distances(stack)
    scores = []
    for i in range(n):
        others = np.sort(np.delete(dmat[i], i))
        total = 0.0
        for value in others[:closest]:
            total += float(value)
        scores.append(total)
    return scores


def _argmin_lowest(values) -> int:
    best_i = 0
    best_v = values[0]
    for i in range(1, len(values)):
        if values[i] < best_v:
            best_i, best_v = i, values[i]
    return best_i


def krum(reports, f: int) -> AggregationOutcome:
    """Select the single report with the lowest krum score (ties: lowest index)."""
    stack = vecmath.as_gradient_stack(reports)
    scores = krum_scores(stack, f)
    winner = _argmin_lowest(scores)
    return AggregationOutcome(stack[winner].copy(), (winner,))


def faba(reports, f: int) -> AggregationOutcome:
    """Mean after f rounds of dropping the report furthest from the current mean.

    Each elimination recomputes the survivor mean; distance ties drop the
    lowest index. The final aggregate is the mean of the n - f survivors.
    """
    stack = vecmath.as_gradient_stack(reports)
    n = stack.shape[0]
    if f < 0 or n <= f:
        raise InfeasibleError(f"faba requires 0 <= f < n, got n={n}, f={f}")
    survivors = list(range(n))
    for _ in range(f):
        center = vecmath.ordered_mean(stack[survivors])
        worst_i = survivors[0]
        worst_d = -1.0
        for idx in survivors:
            d = vecmath.euclidean_distance(stack[idx], center)
            if d > worst_d:
                worst_i, worst_d = idx, d
        survivors.remove(worst_i)
    return AggregationOutcome(vecmath.ordered_mean(stack[survivors]),
                              tuple(survivors))


def geomedian_cosine(reports, f: int) -> AggregationOutcome:
    """Geometric median of the reports surviving a cosine-similarity filter.

    Each report is scored by its total cosine similarity to the others; the
    f lowest-scoring reports are dropped (score ties drop the lower index
    first). This filter-then-geometric-median composition is this library's
    concretization of a loosely specified rule; all reports must be nonzero.
    """
    stack = vecmath.as_gradient_stack(reports)
    n = stack.shape[0]
    if f < 0 or n <= f:
        raise InfeasibleError(
            f"geomedian_cosine requires 0 <= f < n, got n={n}, f={f}")
    norms = np.sqrt((stack * stack).sum(axis=1))
    if np.any(norms == 0.0):
        raise DegenerateVectorError(
            "geomedian_cosine requires nonzero reports (cosine undefined)")
    scores = []
    for i in range(n):
        total = 0.0
        for j in range(n):
            if j != i:
                total += vecmath.cosine_similarity(stack[i], stack[j])
        scores.append(total)
    drop_order = sorted(range(n), key=lambda i: (scores[i], i))
    dropped = set(drop_order[:f])
    survivors = [i for i in range(n) if i not in dropped]
    center = vecmath.geometric_median(stack[survivors])
    return AggregationOutcome(center, tuple(survivors))


def _average_linkage_clusters(stack: np.ndarray, k: int) -> list[list[int]]:
    """Agglomerative average-linkage clustering cut at k clusters.

    Zero-distance clusters always merge, even when that leaves fewer than k
    clusters (duplicate reports never straddle a cluster boundary). Merge
    ties pick the lexicographically smallest cluster pair, clusters being
    ordered by their lowest member index.
    """
    n = stack.shape[0]
    dmat = _pairwise_distances(stack)
    clusters = [[i] for i in range(n)]
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                total = 0.0
                for i in clusters[a]:
                    for j in clusters[b]:
                        total += dmat[i, j]
                linkage = total / (len(clusters[a]) * len(clusters[b]))
                if best is None or linkage < best[0]:
                    best = (linkage, a, b)
        if len(clusters) <= k and best[0] > 0.0:
            break
        _, a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
        clusters.sort(key=lambda members: members[0])
    return clusters


def hc_krum(reports, f: int, cluster_count: int = DEFAULT_CLUSTER_COUNT) -> AggregationOutcome:
    """Krum over hierarchical-cluster representatives.

    Reports are clustered (average linkage, Euclidean) into ``cluster_count``
    groups; each group is represented by its member mean; krum then picks a
    representative using f' = min(f, clusters - 3). The aggregate is the
    winning representative and the selection is that cluster's membership.
    Duplicate-only data can leave fewer clusters than requested; with one or
    two clusters the krum score degenerates to a constant and the first
    cluster wins.
    """
    stack = vecmath.as_gradient_stack(reports)
    n = stack.shape[0]
    if f < 0:
        raise InfeasibleError(f"hc_krum requires f >= 0, got f={f}")
    if cluster_count < 3:
        raise InfeasibleError(
            f"hc_krum requires cluster_count >= 3, got {cluster_count}")
    if n < cluster_count:
        raise InfeasibleError(
            f"hc_krum requires n >= cluster_count, got n={n}, "
            f"cluster_count={cluster_count}")
    clusters = _average_linkage_clusters(stack, cluster_count)
    reps = np.stack([vecmath.ordered_mean(stack[members]) for members in clusters])
    if len(clusters) >= 3:
        f_eff = max(0, min(f, len(clusters) - 3))
        winner = _argmin_lowest(krum_scores(reps, f_eff))
    else:
        winner = 0
    return AggregationOutcome(reps[winner].copy(), tuple(clusters[winner]))


def aggregate(spec: GarSpec, reports, weights=None) -> AggregationOutcome:
    """Dispatch ``reports`` to the rule named by ``spec``.

    ``weights`` only applies to the mean rule and defaults to equal weights.
    """
    stack = vecmath.as_gradient_stack(reports)
    problems = feasibility_errors(spec, stack.shape[0])
    if problems:
        raise InfeasibleError("; ".join(problems))
    if spec.rule == "mean":
        if weights is None:
            weights = np.ones(stack.shape[0], dtype=np.float64)
        return weighted_mean(stack, weights)
    if spec.rule == "trimmed_mean":
        return trimmed_mean(stack, spec.f)
    if spec.rule == "median":
        return median_aggregate(stack)
    if spec.rule == "krum":
        return krum(stack, spec.f)
    if spec.rule == "faba":
        return faba(stack, spec.f)
    if spec.rule == "geomedian_cosine":
        return geomedian_cosine(stack, spec.f)
    return hc_krum(stack, spec.f, spec.cluster_count)
