"""Vector primitives and robust location estimators.

Gradients are finite 1-D float64 arrays. Every public function validates
its inputs, leaves them unmodified, and is deterministic: reductions over
a collection of vectors accumulate in ascending index order, so repeated
calls produce bit-identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVectorError, DimensionMismatchError, EmptySetError

#: Absolute movement threshold at which the geometric-median iteration stops.
GEOMEDIAN_TOL = 1e-8
#: Iteration cap for the geometric-median fixed point.
GEOMEDIAN_MAX_ITER = 200


def as_gradient(values) -> np.ndarray:
    """Coerce ``values`` to a finite, non-empty 1-D float64 vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatchError(
            f"expected a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise DegenerateVectorError("vector has NaN or Inf components")
    return vec


def as_gradient_stack(vectors) -> np.ndarray:
    """Coerce a non-empty sequence of equal-length gradients to an (n, d) array."""
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        if vectors.shape[0] == 0:
            raise EmptySetError("no vectors given")
        if vectors.shape[1] == 0:
            raise DimensionMismatchError("vectors must have at least one coordinate")
        stack = vectors.astype(np.float64, copy=False)
        if not np.all(np.isfinite(stack)):
            raise DegenerateVectorError("vector has NaN or Inf components")
        return stack
    rows = list(vectors)
    if not rows:
        raise EmptySetError("no vectors given")
    first = as_gradient(rows[0])
    stack = np.empty((len(rows), first.size), dtype=np.float64)
    stack[0] = first
    for i, row in enumerate(rows[1:], start=1):
        vec = as_gradient(row)
        if vec.size != first.size:
            raise DimensionMismatchError(
                f"vector {i} has length {vec.size}, expected {first.size}")
        stack[i] = vec
    return stack


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    va, vb = as_gradient(a), as_gradient(b)
    if va.size != vb.size:
        raise DimensionMismatchError(
            f"length mismatch: {va.size} vs {vb.size}")
    return va, vb


def euclidean_distance(a, b) -> float:
    """L2 distance with squared terms accumulated in ascending coordinate order.

    The scalar accumulation gives one rounding per add regardless of the
    BLAS build, so symmetric configurations (for example two points and
    their midpoint) produce exactly equal distances and index tie-breaks
    behave identically everywhere.
    """
    va, vb = _pair(a, b)
    total = 0.0
    for x, y in zip(va.tolist(), vb.tolist()):
        diff = x - y
        total += diff * diff
    return math.sqrt(total)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clipped to [-1, 1].

    Both vectors must have nonzero norm.
    """
    va, vb = _pair(a, b)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero-norm vector")
    value = float(np.dot(va, vb)) / (na * nb)
    return min(1.0, max(-1.0, value))


def ordered_mean(vectors) -> np.ndarray:
    """Arithmetic mean accumulated in ascending index order."""
    stack = as_gradient_stack(vectors)
    acc = np.zeros(stack.shape[1], dtype=np.float64)
    for row in stack:
        acc += row
    return acc / stack.shape[0]


def coordinate_median(vectors) -> np.ndarray:
    """Per-coordinate median; even counts average the two middle values."""
    stack = as_gradient_stack(vectors)
    return np.median(stack, axis=0)


def geomedian_objective(point, vectors) -> float:
    """Sum of Euclidean distances from ``point`` to each vector."""
    stack = as_gradient_stack(vectors)
    pt = as_gradient(point)
    if pt.size != stack.shape[1]:
        raise DimensionMismatchError(
            f"point has length {pt.size}, vectors have {stack.shape[1]}")
    total = 0.0
    for row in stack:
        total += float(np.linalg.norm(row - pt))
    return total


@dataclass(frozen=True)
class WeiszfeldResult:
    """Outcome of the geometric-median iteration."""
    point: np.ndarray
    converged: bool
    iterations: int
    objective: float


def _certified_vertex(stack: np.ndarray) -> int | None:
    """Index of an input point that is itself the geometric median, if any.

    A point of multiplicity m (duplicates detected by exact distance zero)
    minimizes the summed distances exactly when the unit directions toward
    the remaining points add up to a vector of norm at most m. Checking
    every vertex up front avoids the sublinear crawl of the fixed-point
    iteration toward an optimal vertex.
    """
    n = stack.shape[0]
    for k in range(n):
        diffs = stack - stack[k]
        dists = np.sqrt((diffs * diffs).sum(axis=1))
        far = dists > 0.0
        if not far.any():
            return k
        resid = (diffs[far] / dists[far][:, None]).sum(axis=0)
        if float(np.linalg.norm(resid)) <= float((~far).sum()):
            return k
    return None


def weiszfeld(vectors, tol: float = GEOMEDIAN_TOL,
              max_iter: int = GEOMEDIAN_MAX_ITER) -> WeiszfeldResult:
    """Geometric median via the Weiszfeld fixed-point iteration.

    An input point passing the vertex optimality test (summed unit
    directions no longer than the point's multiplicity) is returned
    directly. Otherwise iteration starts at the mean, which each step can
    only improve, and stops once the iterate moves less than ``tol``
    (absolute). An iterate landing exactly on a (necessarily non-optimal)
    input point takes the Vardi-Zhang step, which blends the reweighted
    target with the point itself instead of dividing by zero. The answer
    is the lowest-objective candidate seen, including the input points, so
    the result is never worse than the best input or the mean; when
    ``max_iter`` is exhausted ``converged`` is False.
    """
    stack = as_gradient_stack(vectors)
    n, _ = stack.shape
    vertex = _certified_vertex(stack)
    if vertex is not None:
        point = stack[vertex].copy()
        return WeiszfeldResult(point, True, 0,
                               geomedian_objective(point, stack))

    current = ordered_mean(stack)
    best_pt = current
    best_obj = geomedian_objective(current, stack)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        diffs = stack - current
        dists = np.sqrt((diffs * diffs).sum(axis=1))
        far = dists > 0.0
        weights = 1.0 / dists[far]
        tilde = (stack[far] * weights[:, None]).sum(axis=0) / weights.sum()
        anchored = int(n - far.sum())
        if anchored:
            resid = (diffs[far] * weights[:, None]).sum(axis=0)
            blend = anchored / float(np.linalg.norm(resid))
            nxt = (1.0 - blend) * tilde + blend * current
        else:
            nxt = tilde
        move = float(np.linalg.norm(nxt - current))
        obj = geomedian_objective(nxt, stack)
        if obj < best_obj:
            best_pt, best_obj = nxt, obj
        current = nxt
        if move <= tol:
            converged = True
            break
    for i in range(n):
        obj = geomedian_objective(stack[i], stack)
        if obj < best_obj:
            best_pt, best_obj = stack[i], obj
    return WeiszfeldResult(np.array(best_pt, copy=True), converged, it,
                           best_obj)


def geometric_median(vectors, tol: float = GEOMEDIAN_TOL,
                     max_iter: int = GEOMEDIAN_MAX_ITER) -> np.ndarray:
    """Point minimizing the sum of Euclidean distances to ``vectors``."""
    return weiszfeld(vectors, tol=tol, max_iter=max_iter).point


def medoid(vectors, tol: float = GEOMEDIAN_TOL,
           max_iter: int = GEOMEDIAN_MAX_ITER) -> tuple[int, np.ndarray]:
    """Input vector closest to the geometric median.

    Returns ``(index, vector)``; distance ties go to the lowest index.
    """
    stack = as_gradient_stack(vectors)
    center = weiszfeld(stack, tol=tol, max_iter=max_iter).point
    best_i = 0
    best_d = float("inf")
    for i in range(stack.shape[0]):
        d = euclidean_distance(stack[i], center)
        if d < best_d:
            best_i, best_d = i, d
    return best_i, stack[best_i].copy()
