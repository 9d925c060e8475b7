import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import simplex_points
from exmarkov import fixtures
from exmarkov.meanfield import constant_field, glauber_field, IsingParams, zero_field
from exmarkov.projection import estimate_transition, frequencies
from exmarkov.semigroup import (
    SemigroupError,
    SemigroupTable,
    build_minimal_semigroup,
    check_semigroup,
    estimate_table,
    feller_flow_check,
    jump_transport_matrix,
    opened_segment_transport,
    rate_matrix,
    read_table,
    sample_inhomogeneous_chain,
    write_table,
)
from exmarkov.simplex import FunctionSegment, SimplexError, SimplexPath, StochasticMatrix, path_total_variation, tv_distance

N = 10_000
CORPUS = fixtures.path_corpus()


class TestRateMatrix:
    def test_zero_direction(self):
        assert np.array_equal(rate_matrix([0, 0, 0], [0.2, 0.3, 0.5]).entries, np.zeros((3, 3)))

    def test_two_colors(self):
        R = rate_matrix([-1, 1], [0.5, 0.5]).entries
        assert np.allclose(R, [[-2, 2], [0, 0]])
        assert np.allclose([0.5, 0.5] @ R, [-1, 1])

    def test_three_colors(self):
        y = np.full(3, 1 / 3)
        R = rate_matrix([-1, 0.5, 0.5], y).entries
        assert np.allclose(R, [[-3, 1.5, 1.5], [0, 0, 0], [0, 0, 0]])
        assert np.allclose(y @ R, [-1, 0.5, 0.5], atol=1e-12)

    def test_mass_from_empty_color(self):
        with pytest.raises(SimplexError, match="color 0"):
            rate_matrix([-1, 1], [0.0, 1.0])

    def test_direction_must_sum_to_zero(self):
        with pytest.raises(SimplexError):
            rate_matrix([1, 1], [0.5, 0.5])

    @given(simplex_points(4), simplex_points(4))
    def test_realizes_velocity(self, y, z):
        y = 0.5 * y + 0.5 / 4  # keep every color occupied
        v = z - y
        v = v - v.mean()
        R = rate_matrix(v, y).entries
        assert np.allclose(y @ R, v, atol=1e-12)


class TestJumpTransport:
    def test_no_jump(self):
        assert np.array_equal(jump_transport_matrix([0.3, 0.7], [0.3, 0.7]).entries, np.eye(2))

    def test_examples(self):
        q = jump_transport_matrix([0.5, 0.5], [0.25, 0.75])
        assert np.allclose(q.entries, [[0.5, 0.5], [0, 1]])
        assert q.mass_transfer([0.5, 0.5]) == pytest.approx(0.25)
        q = jump_transport_matrix([1, 0], [0, 1])
        assert np.allclose(q.entries, [[0, 1], [0, 1]])
        assert q.mass_transfer([1, 0]) == pytest.approx(1.0)

    @given(simplex_points(3), simplex_points(3))
    def test_pushes_forward_minimally(self, y, z):
        q = jump_transport_matrix(y, z)
        assert np.allclose(y @ q.entries, z, atol=1e-12)
        assert q.mass_transfer(y) == pytest.approx(tv_distance(y, z), abs=1e-12)

    @pytest.mark.parametrize("k", [2, 3])
    def test_matches_opened_segment(self, k):
        g = np.random.default_rng(k)
        for _ in range(25):
            y, z = g.dirichlet(np.ones(k), size=2)
            assert np.max(np.abs(jump_transport_matrix(y, z).entries - opened_segment_transport(y, z))) <= 1e-6

    @pytest.mark.parametrize("a, b", [(0.5, 0.25), (0.9, 0.1), (0.2, 0.7), (1 / 3, 2 / 3), (0.6, 0.6)])
    def test_minimal_over_epsilon_net(self, a, b):
        """No 2x2 stochastic Q with (a,1-a) Q = (b,1-b) moves less mass."""
        best = jump_transport_matrix([a, 1 - a], [b, 1 - b]).mass_transfer([a, 1 - a])
        for p in np.arange(0.0, 1.0 + 1e-12, 1e-3):
            q = (b - a * p) / (1 - a)  # Q[1, 0] forced by the marginal
            if not 0 <= q <= 1:
                continue
            transfer = a * (1 - p) + (1 - a) * q
            assert transfer >= best - 1e-9


class TestBuild:
    def test_constant_path(self):
        tab = build_minimal_semigroup(SimplexPath.constant([0.3, 0.7]), np.linspace(0, 1, 5))
        assert all(np.array_equal(f.entries, np.eye(2)) for f in tab.factors)

    def test_single_jump(self):
        path = SimplexPath.step([0, 0.5], [[1, 0], [0, 1]], 1.0)
        tab = build_minimal_semigroup(path, [0, 0.5, 1])
        assert np.allclose(tab.factors[0].entries, [[0, 1], [0, 1]])
        assert np.allclose(tab.factors[1].entries, np.eye(2))

    def test_linear(self):
        path = SimplexPath.linear([0.8, 0.2], [0.2, 0.8])
        tab = build_minimal_semigroup(path, [0, 1])
        assert tv_distance(np.array([0.8, 0.2]) @ tab.factors[0].entries, [0.2, 0.8]) <= 1e-8
        assert tab.transfer[0] == pytest.approx(0.6, abs=1e-9)

    @pytest.mark.parametrize("name", sorted(CORPUS))
    @pytest.mark.parametrize("method", ["chord", "expm"])
    def test_corpus_contract(self, name, method):
        path, grid = CORPUS[name]
        rep = check_semigroup(build_minimal_semigroup(path, grid, method=method), path, tol=1e-6)
        assert rep.passed, rep.to_dict()

    @pytest.mark.parametrize("name", sorted(CORPUS))
    def test_grid_refinement(self, name):
        path, grid = CORPUS[name]
        fine = np.unique(np.concatenate([grid, 0.5 * (grid[:-1] + grid[1:])]))
        coarse, refined = build_minimal_semigroup(path, grid), build_minimal_semigroup(path, fine)
        for i, (a, b) in enumerate(zip(grid[:-1], grid[1:])):
            prod = refined.product(refined.index(a), refined.index(b))
            assert np.max(np.abs(prod - coarse.factors[i].entries)) <= 1e-8

    def test_defaults_to_breakpoints(self):
        path, _ = CORPUS["alternating"]
        tab = build_minimal_semigroup(path)
        assert list(tab.grid) == path.breakpoints()

    def test_grid_outside_domain(self):
        with pytest.raises(SemigroupError):
            build_minimal_semigroup(SimplexPath.constant([1, 0]), [0, 2])

    def test_unresolvable_variation(self):
        # t sin(1/t) has infinite variation near 0
        def wiggle(t):
            t = np.asarray(t, dtype=float)
            s = np.where(t > 0, t * np.sin(1 / np.where(t > 0, t, 1)), 0.0)
            return np.stack([0.5 + 0.4 * s, 0.5 - 0.4 * s], -1)

        path = SimplexPath([FunctionSegment(0.0, 1.0, wiggle, max_level=12)])
        with pytest.raises((SemigroupError, SimplexError)):
            build_minimal_semigroup(path, [0, 1])


class TestCheck:
    def test_identity_table_on_constant_path(self):
        tab = SemigroupTable(np.array([0, 0.5, 1.0]), (StochasticMatrix.identity(2),) * 2, np.zeros(2))
        rep = check_semigroup(tab, SimplexPath.constant([0.4, 0.6]))
        assert rep.passed
        assert rep.cocycle_residual == rep.compatibility_residual == rep.minimality_gap == 0

    def test_non_minimal_cover_gap(self):
        jumps = [0.5, 1.5, 2.0]
        path = fixtures.recolor_target_path(jumps, 3.0)
        grid = np.array([0.0, *jumps, 3.0])
        factors = []
        for m in range(len(jumps)):
            post = 1 / 3 if m % 2 == 0 else 2 / 3
            factors.append(StochasticMatrix([[1 - post, post], [1 - post, post]]))
        factors.append(StochasticMatrix.identity(2))
        tab = SemigroupTable(grid, tuple(factors), np.array([5 / 9] * len(jumps) + [0.0]))
        rep = check_semigroup(tab, path, tol=1e-6)
        assert rep.compatibility_residual <= 1e-12
        assert rep.minimality_gap == pytest.approx(len(jumps) * 2 / 9)
        assert not rep.passed

    def test_injected_bad_factor(self):
        path, grid = CORPUS["mixed-k3"]
        tab = build_minimal_semigroup(path, grid)
        bad = list(tab.factors)
        bad[2] = StochasticMatrix(np.full((3, 3), 1 / 3))
        rep = check_semigroup(SemigroupTable(tab.grid, tuple(bad), tab.transfer), path)
        assert not rep.passed

    def test_estimated_table(self):
        path, grid = CORPUS["alternating"]
        tab = build_minimal_semigroup(path, grid)
        e = sample_inhomogeneous_chain(tab, path.at(0), 2000, seed=1)
        est = estimate_table(e, grid)
        assert est.origin == "estimated-from-ensemble"
        rep = check_semigroup(est, fixtures.recolor_target_path([0.3, 0.7, 1.2, 1.9], 2.5), tol=1.0)
        assert rep.cocycle_residual <= 0.1


class TestTableIO:
    def test_round_trip(self, tmp_path):
        path, grid = CORPUS["mixed-k3"]
        tab = build_minimal_semigroup(path, grid)
        write_table(tab, tmp_path / "q.json")
        back = read_table(tmp_path / "q.json")
        assert np.array_equal(back.grid, tab.grid)
        assert all(np.array_equal(a.entries, b.entries) for a, b in zip(back.factors, tab.factors))
        d = json.loads((tmp_path / "q.json").read_text())
        assert {"k", "grid", "factors", "transfer", "origin"} <= set(d)
        assert len(d["factors"][0]) == 9

    def test_rejects_bad_grid(self):
        with pytest.raises(SemigroupError):
            SemigroupTable(np.array([0, 0]), (StochasticMatrix.identity(2),), np.zeros(1))


class TestSampler:
    def test_identity_table(self):
        tab = SemigroupTable(np.array([0, 1.0]), (StochasticMatrix.identity(3),), np.zeros(1))
        e = sample_inhomogeneous_chain(tab, [0.2, 0.3, 0.5], 500, seed=0)
        assert e.num_events == 0

    def test_single_factor(self):
        tab = SemigroupTable(np.array([0, 1.0]), (StochasticMatrix([[0.5, 0.5], [0, 1]]),), np.array([0.25]))
        e = sample_inhomogeneous_chain(tab, [0.5, 0.5], N, seed=3)
        y = frequencies(e, 1.0)
        for p, want in zip(y, (0.25, 0.75)):
            assert abs(p - want) <= 4 * math.sqrt(want * (1 - want) / N) + 4 * math.sqrt(0.25 / N)

    @pytest.mark.parametrize("name", sorted(CORPUS))
    def test_round_trip_recovers_factors(self, name):
        path, grid = CORPUS[name]
        tab = build_minimal_semigroup(path, grid)
        e = sample_inhomogeneous_chain(tab, path.at(grid[0]), N, seed=17)
        for i, (s, t) in enumerate(zip(grid[:-1], grid[1:])):
            sup = e.counts_at(s) > 0
            gap = np.abs(estimate_transition(e, s, t).entries - tab.factors[i].entries)[sup]
            assert np.max(gap) <= 5 / math.sqrt(N)
            assert np.abs(frequencies(e, t) - path.at(t)).sum() <= 5 / math.sqrt(N)

    def test_initial_must_match(self):
        path, grid = CORPUS["linear"]
        with pytest.raises(SemigroupError):
            sample_inhomogeneous_chain(build_minimal_semigroup(path, grid), [0.5, 0.5], 10, seed=0)

    def test_dimension_mismatch(self):
        tab = SemigroupTable(np.array([0, 1.0]), (StochasticMatrix.identity(2),), np.zeros(1))
        with pytest.raises(SemigroupError):
            sample_inhomogeneous_chain(tab, [0.2, 0.3, 0.5], 10, seed=0)

    def test_thread_independent(self):
        path, grid = CORPUS["mixed-k3"]
        tab = build_minimal_semigroup(path, grid)
        a = sample_inhomogeneous_chain(tab, path.at(0), 5000, seed=2, threads=1)
        b = sample_inhomogeneous_chain(tab, path.at(0), 5000, seed=2, threads=3)
        assert np.array_equal(a.sites, b.sites) and np.array_equal(a.dst, b.dst)


class TestFellerFlow:
    def test_zero_generator(self):
        rep = feller_flow_check(zero_field(2), 1.0)
        assert rep["cocycle"] == rep["stationarity"] == 0 and max(rep["continuity"]) == 0

    def test_symmetric_flip(self):
        rep = feller_flow_check(constant_field([[0, 1], [1, 0]]), 2.0, np.linspace(0, 2, 9))
        assert rep["cocycle"] <= 1e-9 and rep["stationarity"] <= 1e-9
        assert rep["continuity_monotone"]
        assert rep["continuity"][-1] == pytest.approx((1 - math.exp(-2e-3)) / 2, rel=1e-9)

    def test_rejects_state_dependent_field(self):
        with pytest.raises(SemigroupError):
            feller_flow_check(glauber_field(IsingParams(1.0)), 1.0)
