import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import simplex_points, stochastic_matrices
from exmarkov.simplex import (
    ConstantSegment,
    GeneratorMatrix,
    LinearSegment,
    SimplexError,
    SimplexPath,
    SimplexPoint,
    StochasticMatrix,
    matrix_exp,
    path_total_variation,
    project_to_simplex,
    tv_distance,
)


class TestSimplexPoint:
    def test_renormalizes_small_drift(self):
        y = SimplexPoint([0.5, 0.5 + 1e-10])
        assert abs(y.weights.sum() - 1) <= 1e-12

    @pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], []])
    def test_rejects(self, w):
        with pytest.raises(SimplexError):
            SimplexPoint(w)

    def test_immutable(self):
        y = SimplexPoint([0.3, 0.7])
        with pytest.raises((AttributeError, ValueError)):
            y.weights[0] = 1.0
        with pytest.raises(AttributeError):
            y.weights = np.array([1.0, 0.0])

    def test_vertex_and_uniform(self):
        assert np.array_equal(SimplexPoint.vertex(3, 1).weights, [0, 1, 0])
        assert np.allclose(SimplexPoint.uniform(4).weights, 0.25)

    def test_project_to_simplex_clamps(self):
        assert np.array_equal(project_to_simplex([1.0 + 1e-12, -1e-12]), [1.0, 0.0])


class TestMatrices:
    def test_stochastic_rejects_bad_rows(self):
        with pytest.raises(SimplexError):
            StochasticMatrix([[0.5, 0.4], [0, 1]])
        with pytest.raises(SimplexError):
            StochasticMatrix([[1.2, -0.2], [0, 1]])

    def test_generator_validation(self):
        GeneratorMatrix([[-1, 1], [2, -2]])
        with pytest.raises(SimplexError):
            GeneratorMatrix([[-1, 1], [-1, 1]])
        with pytest.raises(SimplexError):
            GeneratorMatrix([[-1, 0.5], [0, 0]])

    def test_from_rates_fills_diagonal(self):
        R = GeneratorMatrix.from_rates([[0, 2], [3, 0]])
        assert np.array_equal(R.entries, [[-2, 2], [3, -3]])

    def test_mass_transfer(self):
        Q = StochasticMatrix([[0.5, 0.5], [0, 1]])
        assert Q.mass_transfer([0.5, 0.5]) == pytest.approx(0.25)


class TestTV:
    @pytest.mark.parametrize(
        "a, b, want",
        [([0.3, 0.7], [0.3, 0.7], 0.0), ([1, 0], [0, 1], 1.0), ([0.5, 0.5], [0.25, 0.75], 0.25)],
    )
    def test_examples(self, a, b, want):
        assert tv_distance(a, b) == pytest.approx(want, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(SimplexError):
            tv_distance([1, 0], [1, 0, 0])

    @given(simplex_points(3), simplex_points(3), simplex_points(3))
    def test_triangle_inequality(self, a, b, c):
        assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12

    @given(simplex_points(4), simplex_points(4))
    def test_symmetric_and_bounded(self, a, b):
        d = tv_distance(a, b)
        assert d == tv_distance(b, a)
        assert 0 <= d <= 1 + 1e-12

    @given(simplex_points(3), stochastic_matrices(3))
    def test_closure_under_action(self, y, q):
        z = SimplexPoint(y).act(StochasticMatrix(q))
        assert np.all(z.weights >= 0) and abs(z.weights.sum() - 1) <= 1e-12


class TestMatrixExp:
    def test_zero_time_is_identity(self):
        assert np.array_equal(matrix_exp([[-1, 1], [1, -1]], 0.0).entries, np.eye(2))

    @pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 3.0])
    def test_symmetric_two_state(self, t):
        e = math.exp(-2 * t)
        want = np.array([[(1 + e) / 2, (1 - e) / 2], [(1 - e) / 2, (1 + e) / 2]])
        assert np.allclose(matrix_exp([[-1, 1], [1, -1]], t).entries, want, atol=1e-12)

    def test_absorbing_two_state(self):
        got = matrix_exp([[-1, 1], [0, 0]], math.log(2)).entries
        assert np.allclose(got, [[0.5, 0.5], [0, 1]], atol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(SimplexError):
            matrix_exp([[-1, 1], [1, -1]], math.inf)

    @given(
        stochastic_matrices(3).map(lambda m: m - np.eye(3)),
        st.floats(0.0, 2.0),
        st.floats(0.0, 2.0),
    )
    def test_semigroup(self, R, a, b):
        lhs = matrix_exp(R, a).entries @ matrix_exp(R, b).entries
        assert np.max(np.abs(lhs - matrix_exp(R, a + b).entries)) <= 1e-9


class TestPaths:
    def test_segments_must_tile(self):
        with pytest.raises(SimplexError):
            SimplexPath([ConstantSegment(0, 1, [1, 0]), ConstantSegment(1.5, 2, [1, 0])])

    def test_right_continuous_with_left_limits(self):
        p = SimplexPath.step([0.0, 0.5], [[1, 0], [0, 1]], 1.0)
        assert np.array_equal(p.at(0.5), [0, 1])
        assert np.array_equal(p.at(0.5, left=True), [1, 0])
        assert p.jump_times() == [0.5]

    def test_outside_domain(self):
        with pytest.raises(SimplexError):
            SimplexPath.constant([1, 0]).at(2.0)

    def test_tv_constant(self):
        assert path_total_variation(SimplexPath.constant([0.2, 0.8]), 0, 1) == 0

    def test_tv_single_jump(self):
        p = SimplexPath.step([0.0, 0.5], [[1, 0], [0, 1]], 1.0)
        assert path_total_variation(p, 0, 1) == pytest.approx(1.0)
        # jump sits at the right end of (0, 0.5]
        assert path_total_variation(p, 0, 0.5) == pytest.approx(1.0)
        assert path_total_variation(p, 0.5, 1) == 0

    def test_tv_cantor(self):
        from exmarkov.fixtures import MonotoneClock, clock_path

        assert abs(path_total_variation(clock_path(MonotoneClock.cantor()), 0, 1) - 1) <= 1e-6

    def test_tv_bad_interval(self):
        with pytest.raises(SimplexError):
            path_total_variation(SimplexPath.constant([1, 0]), 0.8, 0.2)

    def test_tv_of_nonmonotone_function_segment(self):
        p = SimplexPath.from_function(lambda t: np.stack([0.5 + 0.4 * np.sin(2 * np.pi * t), 0.5 - 0.4 * np.sin(2 * np.pi * t)], -1), 1.0)
        assert path_total_variation(p, 0, 1) == pytest.approx(1.6, abs=1e-8)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_tv_additive(self, a, b):
        from exmarkov.fixtures import path_corpus

        s, u = sorted((a, b))
        for path, _ in path_corpus().values():
            h = path.horizon
            c, m = s * h, u * h
            whole = path_total_variation(path, 0, h)
            parts = path_total_variation(path, 0, c) + path_total_variation(path, c, m) + path_total_variation(path, m, h)
            assert abs(whole - parts) <= 1e-9

    def test_linear_segment_tv(self):
        p = SimplexPath([LinearSegment(0, 1, [0.8, 0.2], [0.2, 0.8])])
        assert path_total_variation(p, 0, 1) == pytest.approx(0.6)
        assert path_total_variation(p, 0.25, 0.75) == pytest.approx(0.3)
