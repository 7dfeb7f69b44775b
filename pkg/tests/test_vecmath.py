import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from garlab import vecmath
from garlab.errors import (DegenerateVectorError, DimensionMismatchError,
                           EmptySetError)


def finite_vectors(dim, min_size=1, max_size=8):
    elems = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False,
                      allow_infinity=False, width=64)
    vec = st.lists(elems, min_size=dim, max_size=dim)
    return st.lists(vec, min_size=min_size, max_size=max_size)


class TestValidation:
    def test_rejects_nan(self):
        with pytest.raises(DegenerateVectorError):
            vecmath.as_gradient([1.0, float("nan")])

    def test_rejects_inf(self):
        with pytest.raises(DegenerateVectorError):
            vecmath.as_gradient([float("inf")])

    def test_rejects_empty_vector(self):
        with pytest.raises(DimensionMismatchError):
            vecmath.as_gradient([])

    def test_rejects_matrix(self):
        with pytest.raises(DimensionMismatchError):
            vecmath.as_gradient([[1.0, 2.0]])

    def test_stack_rejects_empty_set(self):
        with pytest.raises(EmptySetError):
            vecmath.as_gradient_stack([])

    def test_stack_rejects_ragged(self):
        with pytest.raises(DimensionMismatchError):
            vecmath.as_gradient_stack([[1.0, 2.0], [1.0]])

    def test_stack_rejects_nan_in_array(self):
        bad = np.array([[1.0, 2.0], [np.nan, 0.0]])
        with pytest.raises(DegenerateVectorError):
            vecmath.as_gradient_stack(bad)


class TestEuclideanDistance:
    def test_three_four_five(self):
        assert vecmath.euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0

    def test_zero_for_identical(self):
        assert vecmath.euclidean_distance([1.5, -2.0], [1.5, -2.0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            vecmath.euclidean_distance([1.0], [1.0, 2.0])

    @settings(deadline=None, max_examples=50)
    @given(finite_vectors(3, min_size=3, max_size=3))
    def test_symmetry_and_triangle_inequality(self, rows):
        a, b, c = rows
        dab = vecmath.euclidean_distance(a, b)
        assert dab == vecmath.euclidean_distance(b, a)
        slack = 1e-9 * (1.0 + dab)
        assert dab <= (vecmath.euclidean_distance(a, c)
                       + vecmath.euclidean_distance(c, b) + slack)


class TestCosineSimilarity:
    def test_parallel(self):
        assert vecmath.cosine_similarity([2.0, 0.0], [5.0, 0.0]) == 1.0

    def test_antiparallel(self):
        assert vecmath.cosine_similarity([1.0, 0.0], [-3.0, 0.0]) == -1.0

    def test_orthogonal(self):
        assert vecmath.cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateVectorError):
            vecmath.cosine_similarity([0.0, 0.0], [1.0, 0.0])

    @settings(deadline=None, max_examples=50)
    @given(finite_vectors(4, min_size=2, max_size=2))
    def test_always_clipped(self, rows):
        a, b = rows
        if not any(a) or not any(b):
            return
        value = vecmath.cosine_similarity(a, b)
        assert -1.0 <= value <= 1.0


class TestCoordinateMedian:
    def test_even_count_averages_middles(self):
        got = vecmath.coordinate_median([[4.0], [1.0], [3.0], [2.0]])
        assert got.tolist() == [2.5]

    def test_odd_count_picks_member(self):
        got = vecmath.coordinate_median([[5.0], [1.0], [3.0]])
        assert got.tolist() == [3.0]

    def test_coordinates_independent(self):
        got = vecmath.coordinate_median([[1.0, 9.0], [2.0, 8.0], [3.0, 7.0]])
        assert got.tolist() == [2.0, 8.0]

    def test_empty_rejected(self):
        with pytest.raises(EmptySetError):
            vecmath.coordinate_median([])


class TestOrderedMean:
    def test_plain_average(self):
        got = vecmath.ordered_mean([[1.0, 2.0], [3.0, 4.0]])
        assert got.tolist() == [2.0, 3.0]

    def test_integer_values_permutation_exact(self):
        rows = [[3.0, -7.0], [10.0, 2.0], [-4.0, 5.0]]
        a = vecmath.ordered_mean(rows)
        b = vecmath.ordered_mean(rows[::-1])
        assert a.tolist() == b.tolist()


class TestGeometricMedian:
    def test_single_point(self):
        res = vecmath.weiszfeld([[7.0, -1.0]])
        assert res.point.tolist() == [7.0, -1.0]
        assert res.converged

    def test_identical_points_exact(self):
        res = vecmath.weiszfeld([[2.5, 1.0]] * 3)
        assert res.point.tolist() == [2.5, 1.0]
        assert res.converged
        assert res.objective == 0.0

    def test_equilateral_triangle_centroid(self):
        pts = [[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]
        res = vecmath.weiszfeld(pts)
        centroid = vecmath.ordered_mean(pts)
        assert np.linalg.norm(res.point - centroid) < 1e-6
        assert res.converged

    def test_one_dimensional_median_pull(self):
        # the middle point carries the minimum: sum of distances is
        # minimized at 1.0 for {0, 1, 10}
        res = vecmath.weiszfeld([[0.0], [1.0], [10.0]])
        assert res.converged
        assert abs(res.point[0] - 1.0) < 1e-6

    def test_1d_matches_line_search_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pts = rng.normal(size=(int(rng.integers(2, 9)), 1)) * 3.0
            res = vecmath.weiszfeld(pts)
            grid = np.linspace(pts.min(), pts.max(), 2001)
            oracle_best = min(float(np.abs(pts[:, 0] - g).sum()) for g in grid)
            assert res.objective <= oracle_best + 1e-6

    def test_objective_beats_inputs_and_mean(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            pts = rng.normal(size=(int(rng.integers(2, 10)), 3)) * 5.0
            res = vecmath.weiszfeld(pts)
            competitors = [vecmath.geomedian_objective(p, pts) for p in pts]
            competitors.append(
                vecmath.geomedian_objective(vecmath.ordered_mean(pts), pts))
            assert res.objective <= min(competitors) + 1e-6

    def test_objective_matches_point(self):
        pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]
        res = vecmath.weiszfeld(pts)
        assert res.objective == pytest.approx(
            vecmath.geomedian_objective(res.point, pts), abs=1e-9)

    def test_nonconvergence_flag(self):
        # Interior optimum (no vertex passes the optimality test), so the
        # iteration must actually run and a one-step budget falls short.
        pts = [[0.0, 0.0], [10.0, 0.0], [9.0, 8.0], [1.0, 9.0]]
        res = vecmath.weiszfeld(pts, max_iter=1)
        assert not res.converged
        assert res.iterations == 1

    def test_vertex_optimum_returned_exactly(self):
        # The inner point dominates: it is the geometric median and must be
        # returned bit-for-bit with zero iterations.
        pts = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0], [3.0, 4.0]]
        res = vecmath.weiszfeld(pts)
        assert res.converged
        assert res.iterations == 0
        assert res.point.tolist() == [3.0, 4.0]

    def test_geometric_median_wrapper(self):
        pts = [[0.0], [1.0], [10.0]]
        assert vecmath.geometric_median(pts).shape == (1,)


class TestMedoid:
    def test_middle_member_wins(self):
        idx, vec = vecmath.medoid([[1.0], [2.0], [9.0]])
        assert idx == 1
        assert vec.tolist() == [2.0]

    def test_returns_bitexact_member(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(6, 4))
        idx, vec = vecmath.medoid(pts)
        assert np.array_equal(vec, pts[idx])

    def test_tie_breaks_to_lowest_index(self):
        idx, vec = vecmath.medoid([[0.0], [2.0]])
        assert idx == 0
        assert vec.tolist() == [0.0]

    def test_input_not_mutated(self):
        pts = np.array([[1.0], [5.0], [2.0]])
        before = pts.copy()
        vecmath.medoid(pts)
        assert np.array_equal(pts, before)
