import math

import numpy as np
import pytest
from scipy import stats

from exmarkov.discrete import (
    DiscreteError,
    MatrixLawSampler,
    fixed_sampler,
    identity_sampler,
    mixture_sampler,
    simulate_discrete,
    verify_discrete,
)
from exmarkov.meanfield import constant_field, simulate_finite
from exmarkov.projection import estimate_transition
from exmarkov.simplex import SimplexPoint, matrix_exp

N = 10_000
HALF = [[0.5, 0.5], [0, 1]]


def test_identity_chain_is_constant():
    trace, e = simulate_discrete(identity_sampler(3), [0.2, 0.3, 0.5], 500, 6, seed=1)
    assert e.num_events == 0
    assert np.all(trace.marginals == trace.marginals[0])
    rep = verify_discrete(trace, e, identity_sampler(3))
    assert rep["passed"] and rep["recursion_residual"] == 0 and rep["worst_row_gap"] == 0


def test_fixed_matrix_power_iteration():
    trace, e = simulate_discrete(fixed_sampler(HALF), [1, 0], N, 6, seed=2)
    for m, y in enumerate(trace.marginals):
        assert np.array_equal(y, [2.0**-m, 1 - 2.0**-m])
    rep = verify_discrete(trace, e)
    assert rep["recursion_ok"] and rep["rows_ok"] and rep["unit_rows_ok"]


def test_mixture_steps_match_drawn_matrix():
    A, B = [[0.5, 0.5], [0, 1]], [[1, 0], [0.3, 0.7]]
    trace, e = simulate_discrete(mixture_sampler([A, B]), [0.5, 0.5], N, 8, seed=3)
    drawn = {tuple(map(tuple, q)) for q in trace.matrices}
    assert len(drawn) == 2  # both branches exercised at this seed
    for m, q in enumerate(trace.matrices):
        sup = e.counts_at(float(m)) > 0
        gap = np.abs(estimate_transition(e, float(m), float(m + 1)).entries - q)[sup]
        assert np.max(gap) <= 5 / math.sqrt(N)


def test_adversarial_trace_is_caught():
    trace, e = simulate_discrete(fixed_sampler(HALF), [1, 0], 1000, 3, seed=4)
    trace.marginals[2] = [0.3, 0.7]
    rep = verify_discrete(trace, e)
    assert not rep["recursion_ok"] and not rep["passed"]


def test_redraw_mismatch_is_caught():
    trace, e = simulate_discrete(fixed_sampler(HALF), [1, 0], 1000, 3, seed=4)
    rep = verify_discrete(trace, e, fixed_sampler([[0.9, 0.1], [0, 1]]))
    assert rep["redraw_ok"] is False


def test_non_stochastic_sampler_names_step():
    calls = []

    def draw(y, g):
        calls.append(1)
        return np.eye(2) if len(calls) < 3 else np.array([[0.7, 0.7], [0, 1]])

    with pytest.raises(DiscreteError, match="step 2"):
        simulate_discrete(MatrixLawSampler(2, draw), [0.5, 0.5], 10, 5, seed=0)


@pytest.mark.parametrize("steps, n", [(-1, 10), (2, 0)])
def test_bad_sizes(steps, n):
    with pytest.raises(DiscreteError):
        simulate_discrete(identity_sampler(2), [0.5, 0.5], n, steps, seed=0)


def test_zero_steps():
    trace, e = simulate_discrete(identity_sampler(2), [0.5, 0.5], 10, 0, seed=0)
    assert trace.steps == 0 and e.horizon == 0.0


def test_sampler_sees_recursion_marginal():
    seen = []

    def draw(y, g):
        seen.append(np.array(y))
        return np.array(HALF)

    trace, _ = simulate_discrete(MatrixLawSampler(2, draw), [1, 0], 50, 3, seed=0)
    assert all(np.array_equal(a, b) for a, b in zip(seen, trace.marginals[:-1]))


def test_state_dependent_law_is_reproducible():
    def draw(y, g):
        p = 0.5 * y[0] if g.random() < 0.5 else 0.1
        return np.array([[1 - p, p], [p, 1 - p]])

    G = MatrixLawSampler(2, draw, "coin")
    a, ea = simulate_discrete(G, [0.8, 0.2], 500, 5, seed=9)
    b, eb = simulate_discrete(G, [0.8, 0.2], 500, 5, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a.matrices, b.matrices))
    assert verify_discrete(a, ea, G)["passed"]


def test_exchangeability_under_permuted_initials():
    n = 200
    G = mixture_sampler([[[0.6, 0.4], [0.1, 0.9]], [[0.9, 0.1], [0.5, 0.5]]])
    a, b = [], []
    for r in range(200):
        _, e1 = simulate_discrete(G, [0.3, 0.7], n, 3, seed=r)
        _, e2 = simulate_discrete(G, [0.3, 0.7], n, 3, seed=5000 + r)
        perm = np.random.default_rng(r).permutation(n)
        a.append(e1.counts_at(3.0)[1])
        b.append(e2.permuted(perm).counts_at(3.0)[1])
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_matches_continuous_time_at_fixed_spacing():
    f = constant_field([[0, 1.0], [0.5, 0]])
    delta = 0.25
    Q = matrix_exp(f.generator([0.5, 0.5]), delta).entries
    _, disc = simulate_discrete(fixed_sampler(Q), [0.7, 0.3], N, 4, seed=6)
    cont = simulate_finite(f, N, SimplexPoint([0.7, 0.3]), 4 * delta, seed=7)
    for m in range(4):
        q_d = estimate_transition(disc, float(m), float(m + 1)).entries
        q_c = estimate_transition(cont, m * delta, (m + 1) * delta).entries
        assert np.max(np.abs(q_d - q_c)) <= 5 / math.sqrt(N)


def test_trace_serializes():
    trace, _ = simulate_discrete(fixed_sampler(HALF), [1, 0], 10, 2, seed=0)
    d = trace.to_dict()
    assert d["matrices"][0] == HALF and len(d["marginals"]) == 3
