"""The property suite behind ``exmarkov verify-all``.

Each criterion is a function ``(seed, quick) -> Result``. Results carry only
deterministic quantities so that reports are byte-identical across runs;
wall-clock times are kept separately.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import fixtures, rng
from .discrete import fixed_sampler, identity_sampler, mixture_sampler, simulate_discrete, verify_discrete
from .meanfield import IsingParams, constant_field, glauber_field, simulate_finite, simulate_limit, solve_ode
from .projection import estimate_transition, exact_transition, frequencies, mass_transfer
from .semigroup import (
    build_minimal_semigroup,
    check_semigroup,
    feller_flow_check,
    jump_transport_matrix,
    opened_segment_transport,
    sample_inhomogeneous_chain,
)
from .simplex import SimplexPoint, StochasticMatrix, path_total_variation, tv_distance

__all__ = ["Result", "CRITERIA", "run_suite"]

N = 10_000
STAT_TOL = 5 / math.sqrt(N)  # 0.05


@dataclass
class Result:
    id: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget: float | None = None

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": bool(self.passed), "metrics": _clean(self.metrics)}

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (budget {self.budget:.0f}s)" if self.budget else ""
        return f"[{status}] {self.id:2d} {self.name}: {self.seconds:.1f}s{budget}"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _seed(seed: int, criterion: int, run: int = 0) -> int:
    return int(np.random.SeedSequence([seed, criterion, run]).generate_state(1)[0])


def kurtz(seed, quick=False) -> Result:
    """Fluid limit of the two-color constant-rate chain."""
    field_ = constant_field([[0, 1], [1, 0]])
    grid = np.linspace(0.0, 1.0, 20)
    ode = solve_ode(field_, [1, 0], 1.0, tol=1e-11, times=grid)
    exact = 0.5 * (1 - math.exp(-2.0))
    ode_err = abs(ode.at(1.0)[1] - exact)
    y = ode.values(grid)[:, 1]
    runs = 20 if quick else 100
    need = math.ceil(0.95 * runs)
    maxdev = []
    for r in range(runs):
        e = simulate_finite(field_, N, SimplexPoint([1, 0]), 1.0, _seed(seed, 1, r))
        emp = np.array([e.counts_at(t)[1] for t in grid]) / N
        maxdev.append(float(np.max(np.abs(emp - y))))
    good = sum(d <= 0.05 for d in maxdev)
    return Result(
        1, "Kurtz fluid limit", good >= need and ode_err <= 1e-8,
        {"runs": runs, "runs_within_0.05": good, "required": need, "worst_max_dev": max(maxdev),
         "ode_y1_at_1": ode.at(1.0)[1], "ode_error": ode_err},
        budget=60,
    )


def construction(seed, quick=False) -> Result:
    """Minimal semigroup passes compatibility/minimality on the path corpus."""
    out, ok = {}, True
    for name, (path, grid) in fixtures.path_corpus().items():
        rep = check_semigroup(build_minimal_semigroup(path, grid), path, tol=1e-6)
        out[name] = {
            "compatibility": rep.compatibility_residual,
            "minimality_gap": rep.minimality_gap,
            "transfer_excess": rep.transfer_excess,
            "cocycle": rep.cocycle_residual,
            "subadditivity_violations": len(rep.subadditivity_violations),
        }
        ok &= rep.passed
    return Result(2, "semigroup construction contract", ok, out, budget=30)


def jump_oracle(seed, quick=False) -> Result:
    """Closed-form jump transport against integration along the opened segment."""
    pairs = 20 if quick else 100
    worst = {}
    for k in (2, 3):
        g = rng.stream(_seed(seed, 3), k)
        w = 0.0
        for _ in range(pairs):
            y, z = g.dirichlet(np.ones(k), size=2)
            w = max(w, float(np.max(np.abs(jump_transport_matrix(y, z).entries - opened_segment_transport(y, z)))))
        worst[f"k={k}"] = w
    return Result(3, "jump-transport oracle", max(worst.values()) <= 1e-6, {"pairs_per_k": pairs, "worst": worst}, budget=30)


def closure(seed, quick=False) -> Result:
    """Build, sample, re-estimate: factors and path recovered to 5/sqrt(n)."""
    out, ok = {}, True
    for c, (name, (path, grid)) in enumerate(fixtures.path_corpus().items()):
        tab = build_minimal_semigroup(path, grid)
        e = sample_inhomogeneous_chain(tab, path.at(grid[0]), N, _seed(seed, 4, c))
        factor_gap = 0.0
        for i, (s, t) in enumerate(zip(grid[:-1], grid[1:])):
            sup = e.counts_at(s) > 0
            q = estimate_transition(e, s, t).entries
            factor_gap = max(factor_gap, float(np.max(np.abs(q - tab.factors[i].entries)[sup])))
        path_gap = max(float(np.abs(frequencies(e, t) - path.at(t)).sum()) for t in grid)
        out[name] = {"factor_gap": factor_gap, "path_gap_l1": path_gap}
        ok &= factor_gap <= STAT_TOL and path_gap <= STAT_TOL
    return Result(4, "de Finetti closure", ok, {"tol": STAT_TOL, **out}, budget=120)


def non_uniqueness(seed, quick=False) -> Result:
    """Two covers of one frequency path, told apart by their jump matrices."""
    horizon = 5.0
    X, Z = fixtures.poisson_recolor_pair(N, horizon, _seed(seed, 5))
    jumps = fixtures.poisson_jump_times(horizon, _seed(seed, 5))
    rows = []
    ok = len(jumps) > 0
    for m, t in enumerate(jumps):
        qx = estimate_transition(X, t, t, left_s=True).entries
        qz = estimate_transition(Z, t, t, left_s=True).entries
        # the color whose sites keep their color in X: 0 before a 2/3 -> 1/3 jump, else 1
        row = 0 if m % 2 == 0 else 1
        r = {
            "time": t,
            "projection_gap": tv_distance(frequencies(X, t), frequencies(Z, t)),
            "row_gap": float(np.max(np.abs(qx[row] - qz[row]))),
            "max_gap": float(np.max(np.abs(qx - qz))),
            "transfer_X": mass_transfer(X, t, t, left_s=True),
            "transfer_Z": mass_transfer(Z, t, t, left_s=True),
        }
        ok &= (
            r["projection_gap"] <= STAT_TOL
            and r["row_gap"] >= 0.2
            and abs(r["transfer_X"] - 1 / 3) <= STAT_TOL
            and abs(r["transfer_Z"] - 5 / 9) <= STAT_TOL
        )
        rows.append(r)
    target = fixtures.recolor_target_path(jumps, horizon)
    grid = np.array([0.0, *jumps, horizon])
    tab = build_minimal_semigroup(target, grid)
    minimal = [float(x) for x in tab.transfer[:-1]]
    ok &= all(abs(x - 1 / 3) <= 1e-12 for x in minimal)
    return Result(5, "non-uniqueness witness", ok, {"jumps": rows, "minimal_transfer": minimal}, budget=30)


def non_feller(seed, quick=False) -> Result:
    a = fixtures.threshold_process(0.501, N, _seed(seed, 6, 0))
    b = fixtures.threshold_process(0.499, N, _seed(seed, 6, 1))
    gap = abs(frequencies(a, 1.0)[1] - frequencies(b, 1.0)[1])
    exact = float(fixtures.threshold_flow(0.501, 1.0) - fixtures.threshold_flow(0.499, 1.0))
    return Result(6, "non-Feller flow gap", gap >= 0.55, {"gap": gap, "limit_gap": exact}, budget=10)


def singular_clock(seed, quick=False) -> Result:
    e = fixtures.singular_clock_process(fixtures.MonotoneClock.cantor(), N, _seed(seed, 7))
    times = [1 / 9, 1 / 3, 1 / 2, 2 / 3]
    want = [0.25, 0.5, 0.5, 0.5]
    got = [float(frequencies(e, t)[1]) for t in times]
    tv = path_total_variation(fixtures.clock_path(fixtures.MonotoneClock.cantor()), 0.0, 1.0)
    ok = all(abs(g - w) <= STAT_TOL for g, w in zip(got, want)) and abs(tv - 1) <= 1e-6
    return Result(7, "singular clock", ok, {"projection": got, "expected": want, "limit_path_tv": tv})


def feller_flow(seed, quick=False) -> Result:
    rep = feller_flow_check(constant_field([[0, 1], [1, 0]]), 1.0, np.linspace(0, 1, 11))
    ok = rep["cocycle"] <= 1e-9 and rep["stationarity"] <= 1e-9 and rep["continuity_monotone"] and rep["continuity"][-1] <= 1e-2
    return Result(8, "Feller constant-rate flow", ok, rep)


def _marginal_consistency(e, times) -> bool:
    for s, t in zip(times[:-1], times[1:]):
        q = exact_transition(e, s, t)
        ys = [Fraction(int(c), e.n) for c in e.counts_at(s)]
        yt = [Fraction(int(c), e.n) for c in e.counts_at(t)]
        pushed = [sum(ys[i] * q[i][j] for i in range(e.k)) for j in range(e.k)]
        if pushed != yt:
            return False
    return True


def algebra(seed, quick=False) -> Result:
    """Empirical ``Y_t = Y_s Q_st`` in exact rationals; exact discrete recursion."""
    n = 2_000
    ensembles = {}
    f2 = constant_field([[0, 1], [1, 0]])
    ensembles["finite"] = simulate_finite(f2, n, SimplexPoint([1, 0]), 1.0, _seed(seed, 9, 0))
    ensembles["finite-glauber"] = simulate_finite(glauber_field(IsingParams(1, 0, 2)), n, SimplexPoint([0.9, 0.1]), 1.0, _seed(seed, 9, 1))
    ensembles["limit-glauber"] = simulate_limit(glauber_field(IsingParams(1, 0, 2)), n, [0.9, 0.1], 1.0, seed=_seed(seed, 9, 2))
    ensembles["singular-clock"] = fixtures.singular_clock_process(None, n, _seed(seed, 9, 3))
    ensembles["threshold"] = fixtures.threshold_process(0.3, n, _seed(seed, 9, 4))
    X, Z = fixtures.poisson_recolor_pair(n, 3.0, _seed(seed, 9, 5))
    ensembles["recolor-X"], ensembles["recolor-Z"] = X, Z
    A, B = fixtures.feller_degenerate_pair(0.3, n, 3.0, _seed(seed, 9, 6))
    ensembles["feller-A"], ensembles["feller-B"] = A, B
    path, grid = fixtures.path_corpus()["mixed-k3"]
    ensembles["inhomogeneous"] = sample_inhomogeneous_chain(build_minimal_semigroup(path, grid), path.at(0), n, _seed(seed, 9, 7))
    traces = {}
    for name, G, y0 in (
        ("identity", identity_sampler(2), [0.4, 0.6]),
        ("fixed", fixed_sampler([[0.5, 0.5], [0, 1]]), [1, 0]),
        ("mix", mixture_sampler([[[0.5, 0.5], [0, 1]], [[1, 0], [0.3, 0.7]]]), [0.5, 0.5]),
    ):
        tr, e = simulate_discrete(G, y0, n, 5, _seed(seed, 9, 8))
        traces[name] = verify_discrete(tr, e)["recursion_residual"]
        ensembles[f"discrete-{name}"] = e

    consistent = {}
    for name, e in ensembles.items():
        times = sorted({0.0, e.horizon, *np.linspace(0, e.horizon, 7).tolist(), *np.unique(e.times)[:20].tolist()})
        consistent[name] = _marginal_consistency(e, times)
    ok = all(consistent.values()) and all(v == 0.0 for v in traces.values())
    return Result(9, "empirical algebra exactness", ok, {"marginal_consistency": consistent, "recursion_residual": traces})


CRITERIA = [kurtz, construction, jump_oracle, closure, non_uniqueness, non_feller, singular_clock, feller_flow, algebra]


def run_suite(seed: int = 7, quick: bool = False, only=None, echo=None) -> list[Result]:
    results = []
    for cid, fn in enumerate(CRITERIA, start=1):
        if only is not None and cid not in only:
            continue
        t0 = time.perf_counter()
        res = fn(seed, quick)
        res.seconds = time.perf_counter() - t0
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
