"""Compatible stochastic-matrix semigroups over simplex paths.

Given a cadlag path ``Y`` of bounded variation on the simplex,
:func:`build_minimal_semigroup` produces per-step factors ``Q_{t_i, t_i+1}``
with ``Y_s Q_{s,t} = Y_t`` that move the least possible mass: the summed
step transfers equal the total variation of the path. Mass leaves shrinking
colors and is handed to growing colors in proportion to their growth
(:func:`rate_matrix`). Along a straight chord this flow integrates in closed
form (:func:`jump_transport_matrix`), which is also how jumps are crossed:
each jump is opened into a straight chord.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from . import rng
from .ensemble import EnsemblePath
from .simplex import (
    ConstantSegment,
    FunctionSegment,
    GeneratorMatrix,
    LinearSegment,
    SampledSegment,
    SimplexError,
    SimplexPath,
    SimplexPoint,
    StochasticMatrix,
    matrix_exp,
    path_total_variation,
    tv_distance,
)

__all__ = [
    "SemigroupError",
    "SemigroupTable",
    "SemigroupReport",
    "rate_matrix",
    "jump_transport_matrix",
    "opened_segment_transport",
    "build_minimal_semigroup",
    "estimate_table",
    "check_semigroup",
    "sample_inhomogeneous_chain",
    "feller_flow_check",
    "write_table",
    "read_table",
]

OCCUPANCY_FLOOR = 1e-10
REFINE_TOL = 1e-8
MAX_REFINE_LEVEL = 16
MAX_PIECES = 2**18
# a stretch with no movement on this many dyadic levels is treated as flat
FLAT_LEVEL = 8

CONSTRUCTED = "constructed-from-path"
ESTIMATED = "estimated-from-ensemble"


class SemigroupError(ValueError):
    pass


def rate_matrix(v, y, eps: float = OCCUPANCY_FLOOR) -> GeneratorMatrix:
    """Minimal-flux generator realizing the velocity ``v`` at ``y``.

    A color ``i`` with ``v_i < 0`` empties at relative rate ``-v_i / y_i``
    and its outflow is split among the growing colors in proportion to
    ``(v_j)_+``. Rows of non-shrinking colors are zero, so ``y R = v``.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    if v.shape != y.shape or v.ndim != 1:
        raise SimplexError("rate_matrix: v and y must be vectors of the same length")
    if abs(v.sum()) > 1e-12 * max(1.0, np.abs(v).sum()):
        raise SimplexError(f"rate_matrix: direction sums to {v.sum()!r}, not 0")
    k = v.size
    R = np.zeros((k, k))
    gain = np.clip(v, 0.0, None)
    total = gain.sum()
    if total == 0:
        return GeneratorMatrix(R)
    for i in np.flatnonzero(v < 0):
        if y[i] <= eps:
            raise SimplexError(f"rate_matrix: color {i} loses mass at rate {v[i]!r} but holds only {y[i]!r}")
        R[i] = -v[i] * gain / (total * y[i])
        R[i, i] = v[i] / y[i]
    return GeneratorMatrix(R)


def jump_transport_matrix(y, y_new) -> StochasticMatrix:
    """Closed-form transport from ``y`` to ``y_new`` along the straight chord.

    Shrinking colors keep the fraction ``y_new_i / y_i`` of their mass and
    send the rest to growing colors in proportion to their gains; growing
    colors keep everything. The induced transfer equals ``tv_distance``.
    """
    y = SimplexPoint(y).weights
    z = SimplexPoint(y_new).weights
    if y.shape != z.shape:
        raise SimplexError("jump_transport_matrix: dimension mismatch")
    k = y.size
    Q = np.eye(k)
    gain = np.clip(z - y, 0.0, None)
    D = gain.sum()
    if D == 0:
        return StochasticMatrix(Q)
    for i in np.flatnonzero(z < y):
        if y[i] <= 0:
            raise SimplexError(f"jump_transport_matrix: color {i} has no mass to give")
        keep = z[i] / y[i]
        Q[i] = (1.0 - keep) * gain / D
        Q[i, i] = keep
    return StochasticMatrix(Q)


def opened_segment_transport(y, y_new, rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """Integrate ``dQ/du = Q R(v, y + u v)`` over ``u in [0, 1]``, ``v = y_new - y``.

    Independent numerical route to :func:`jump_transport_matrix`.
    """
    y = SimplexPoint(y).weights
    z = SimplexPoint(y_new).weights
    v = z - y
    k = y.size

    def rhs(u, q):
        R = rate_matrix(v, y + u * v, eps=0.0).entries
        return (q.reshape(k, k) @ R).ravel()

    sol = solve_ivp(rhs, (0.0, 1.0), np.eye(k).ravel(), method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise SemigroupError(f"opened-segment integration failed: {sol.message}")
    return sol.y[:, -1].reshape(k, k)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemigroupTable:
    """Per-step factors on a time grid; ``Q_{t_i, t_j}`` is their ordered product."""

    grid: np.ndarray
    factors: tuple[StochasticMatrix, ...]
    transfer: np.ndarray
    origin: str = CONSTRUCTED
    initial: np.ndarray | None = None
    direct: Callable[[float, float], StochasticMatrix] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 1 or np.any(np.diff(g) <= 0):
            raise SemigroupError("grid must be strictly increasing")
        if len(self.factors) != g.size - 1 or len(self.transfer) != g.size - 1:
            raise SemigroupError("need one factor and one transfer per grid step")
        ks = {f.k for f in self.factors}
        if len(ks) > 1:
            raise SemigroupError("factors disagree on k")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "transfer", np.asarray(self.transfer, dtype=float))

    @property
    def k(self) -> int:
        if self.factors:
            return self.factors[0].k
        return int(np.size(self.initial))

    def index(self, t: float) -> int:
        i = int(np.searchsorted(self.grid, t))
        if i >= self.grid.size or self.grid[i] != t:
            raise SemigroupError(f"time {t} is not a grid point")
        return i

    def product(self, i: int, j: int) -> np.ndarray:
        """``Q_{t_i, t_j}`` as a raw array (``i <= j``)."""
        if i > j:
            raise SemigroupError(f"grid indices out of order: {i} > {j}")
        q = np.eye(self.k)
        for f in self.factors[i:j]:
            q = q @ f.entries
        return q

    def q(self, s: float, t: float) -> StochasticMatrix:
        if self.direct is not None:
            return self.direct(s, t)
        return StochasticMatrix(self.product(self.index(s), self.index(t)))

    def to_dict(self) -> dict:
        d = {
            "k": self.k,
            "grid": self.grid.tolist(),
            "factors": [f.entries.ravel().tolist() for f in self.factors],
            "transfer": self.transfer.tolist(),
            "origin": self.origin,
        }
        if self.initial is not None:
            d["initial"] = np.asarray(self.initial).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SemigroupTable":
        k = int(d["k"])
        factors = tuple(StochasticMatrix(np.reshape(f, (k, k))) for f in d["factors"])
        return cls(
            np.asarray(d["grid"], dtype=float),
            factors,
            np.asarray(d["transfer"], dtype=float),
            origin=d.get("origin", CONSTRUCTED),
            initial=None if d.get("initial") is None else np.asarray(d["initial"], dtype=float),
        )


def write_table(tab: SemigroupTable, path) -> None:
    with open(path, "w") as fh:
        json.dump(tab.to_dict(), fh, indent=1)
        fh.write("\n")


def read_table(path) -> SemigroupTable:
    with open(path) as fh:
        return SemigroupTable.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# construction


def _chord_stack(A, B, method: str) -> np.ndarray:
    """Transports for the chords ``A[m] -> B[m]``, shape ``(m, k, k)``."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    m, k = A.shape
    gain = np.clip(B - A, 0.0, None)
    D = gain.sum(axis=1)
    moving = D > 0
    lose = (B < A) & moving[:, None]
    if np.any(lose & (A <= 0)):
        raise SimplexError("chord transport: a color with no mass loses mass")
    Q = np.broadcast_to(np.eye(k), (m, k, k)).copy()
    Dm = np.where(moving, D, 1.0)
    safeA = np.where(lose, A, 1.0)
    keep = np.where(lose, B / safeA, 1.0)
    out = (1.0 - keep)[:, :, None] * (gain / Dm[:, None])[:, None, :]
    Q = np.where(lose[:, :, None], out, Q)
    idx = np.arange(k)
    Q[:, idx, idx] = np.where(lose, keep, Q[:, idx, idx])
    if method == "chord":
        return Q
    # frozen-rate exponential at the chord midpoint, in total-variation time;
    # an exponential never empties a color, so those chords stay exact
    use = moving & ~np.any((B == 0) & (A > 0), axis=1)
    if not use.any():
        return Q
    a, b = A[use], B[use]
    dT = 0.5 * np.abs(b - a).sum(axis=1)
    v = (b - a) / dT[:, None]
    v -= v.mean(axis=1, keepdims=True)
    mid = 0.5 * (a + b)
    if np.any((v < 0) & (mid <= OCCUPANCY_FLOOR)):
        raise SimplexError("chord transport: a color with no mass loses mass")
    g = np.clip(v, 0.0, None)
    S = g.sum(axis=1)
    neg = v < 0
    R = np.where(neg[:, :, None], (-v / np.where(neg, mid, 1.0))[:, :, None] * (g / S[:, None])[:, None, :], 0.0)
    R[:, idx, idx] = np.where(neg, v / np.where(neg, mid, 1.0), 0.0)
    E = scipy.linalg.expm(dT[:, None, None] * R)
    E[np.abs(E) < 1e-12] = 0.0
    E = np.clip(E, 0.0, None)
    Q[use] = E / E.sum(axis=2, keepdims=True)
    return Q


def _ordered_product(Q: np.ndarray) -> np.ndarray:
    """``Q[0] @ Q[1] @ ...`` by pairwise reduction."""
    k = Q.shape[-1]
    if Q.shape[0] == 0:
        return np.eye(k)
    while Q.shape[0] > 1:
        if Q.shape[0] % 2:
            Q = np.concatenate([Q, np.eye(k)[None]])
        Q = Q[0::2] @ Q[1::2]
    return Q[0]


def _chord(a, b, method: str) -> np.ndarray:
    return _chord_stack(a, b, method)[0]


def _continuous_piece(seg, lo: float, hi: float, method: str, tol: float) -> np.ndarray:
    """Transport across the continuous part of ``seg`` on ``[lo, hi)``."""
    k = seg.k
    if isinstance(seg, (ConstantSegment, SampledSegment)):
        return np.eye(k)
    a, b = seg.value(lo), seg.left(hi)
    if isinstance(seg, LinearSegment) and method == "chord":
        return _chord(a, b, method)
    if isinstance(seg, LinearSegment):
        sample = lambda ts: np.array([seg.value(t) for t in ts])  # noqa: E731
    elif isinstance(seg, FunctionSegment):
        sample = seg.values
    else:
        raise SemigroupError(f"unsupported segment kind {type(seg).__name__}")

    def norm(pts):
        pts = np.clip(np.atleast_2d(pts), 0.0, None)
        return pts / pts.sum(axis=1, keepdims=True)

    # partition refined in total-variation time: at level L every piece has
    # chord variation <= 2^-L and length <= (hi - lo) 2^-L
    ts = np.array([lo, hi])
    ys = norm(sample(ts))
    prev, prev_moving = None, -1
    for level in range(1, MAX_REFINE_LEVEL + 1):
        while True:
            chord = 0.5 * np.abs(np.diff(ys, axis=0)).sum(axis=1)
            split = (chord > 2.0**-level) | (np.diff(ts) > (hi - lo) * 2.0**-level)
            if not split.any():
                break
            if ts.size + split.sum() > MAX_PIECES:
                raise SemigroupError(f"variation on [{lo}, {hi}] is not resolvable within {MAX_PIECES} pieces")
            mids = 0.5 * (ts[:-1][split] + ts[1:][split])
            ts_new = np.concatenate([ts, mids])
            order = np.argsort(ts_new, kind="stable")
            ts = ts_new[order]
            ys = np.concatenate([ys, norm(sample(mids))])[order]
        moving = int(np.count_nonzero(np.abs(np.diff(ys, axis=0)).sum(axis=1)))
        if moving == 0 and level >= FLAT_LEVEL:
            return np.eye(k)
        if prev is not None and moving == prev_moving:
            # only flat pieces were split; the product cannot have moved
            continue
        q = _ordered_product(_chord_stack(ys[:-1], ys[1:], method))
        if prev is not None and np.max(np.abs(q - prev)) < tol:
            return q
        prev, prev_moving = q, moving
    raise SemigroupError(f"factor product on [{lo}, {hi}] did not converge; variation unresolvable")


def build_minimal_semigroup(path: SimplexPath, grid=None, method: str = "chord", tol: float = REFINE_TOL) -> SemigroupTable:
    """Minimal compatible semigroup for ``path`` on ``grid``.

    ``grid`` defaults to the path's breakpoints. Each step factor is the
    ordered product of: chord transports over continuous stretches (refined
    until the product moves less than ``tol``) and opened-jump transports at
    every jump in ``(t_i, t_i+1]``. ``method="expm"`` replaces each chord by
    a frozen-rate matrix exponential in total-variation time.
    """
    if method not in ("chord", "expm"):
        raise ValueError(f"unknown method {method!r}")
    grid = np.asarray(path.breakpoints() if grid is None else sorted(float(t) for t in grid))
    if grid.size < 1 or grid[0] < path.start or grid[-1] > path.horizon:
        raise SemigroupError("grid must lie within the path's domain")
    if np.any(np.diff(grid) <= 0):
        raise SemigroupError("grid must be strictly increasing")
    cuts = path.breakpoints()
    factors, transfer = [], []
    for a, b in zip(grid[:-1], grid[1:]):
        pts = [a] + [c for c in cuts if a < c < b] + [b]
        q = np.eye(path.k)
        for lo, hi in zip(pts[:-1], pts[1:]):
            seg = path._segment(lo)
            try:
                q = q @ _continuous_piece(seg, lo, hi, method, tol)
                left, right = path.at(hi, left=True), path.at(hi)
                if tv_distance(left, right) > 0:
                    q = q @ jump_transport_matrix(left, right).entries
            except SimplexError as exc:
                raise SemigroupError(f"on [{lo}, {hi}]: {exc}") from exc
        f = StochasticMatrix(q)
        factors.append(f)
        transfer.append(f.mass_transfer(path.at(a)))
    return SemigroupTable(grid, tuple(factors), np.array(transfer), CONSTRUCTED, initial=path.at(grid[0]))


def estimate_table(e: EnsemblePath, grid) -> SemigroupTable:
    """Empirical table of an ensemble; ``q(s, t)`` re-estimates directly from the sites."""
    from .projection import estimate_transition, mass_transfer

    grid = np.asarray(sorted(float(t) for t in grid))
    factors = tuple(estimate_transition(e, a, b) for a, b in zip(grid[:-1], grid[1:]))
    transfer = [mass_transfer(e, a, b) for a, b in zip(grid[:-1], grid[1:])]
    return SemigroupTable(
        grid, factors, np.array(transfer), ESTIMATED,
        initial=e.counts_at(grid[0]) / e.n,
        direct=lambda s, t: estimate_transition(e, s, t),
    )


# ---------------------------------------------------------------------------
# verification


@dataclass
class SemigroupReport:
    cocycle_residual: float
    compatibility_residual: float
    minimality_gap: float
    transfer_excess: float
    subadditivity_violations: list
    path_variation: float
    step_transfer_total: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.cocycle_residual <= self.tol
            and self.compatibility_residual <= self.tol
            and self.minimality_gap <= self.tol
            and self.transfer_excess <= self.tol
            and not self.subadditivity_violations
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "cocycle_residual": self.cocycle_residual,
            "compatibility_residual": self.compatibility_residual,
            "minimality_gap": self.minimality_gap,
            "transfer_excess": self.transfer_excess,
            "subadditivity_violations": self.subadditivity_violations,
            "path_variation": self.path_variation,
            "step_transfer_total": self.step_transfer_total,
        }


def _triples(m: int, limit: int = 400, seed: int = 0):
    all_ = list(itertools.combinations(range(m), 3))
    if len(all_) <= limit:
        return all_
    pick = rng.stream(seed, 7).choice(len(all_), size=limit, replace=False)
    return [all_[i] for i in sorted(pick)]


def check_semigroup(tab: SemigroupTable, path: SimplexPath, tol: float = 1e-6) -> SemigroupReport:
    """Residuals of the cocycle, compatibility and minimality laws.

    Compatibility is measured in total-variation distance between
    ``Y_s Q_{s,t}`` and ``Y_t`` over consecutive steps and all ``(t_0, t_j)``.
    """
    g = tab.grid
    if g[0] < path.start or g[-1] > path.horizon:
        raise SemigroupError("table grid outside the path domain")
    m = g.size
    ys = [path.at(t) for t in g]

    if tab.direct is None:
        prods = {}

        def Q(i, j):
            if (i, j) not in prods:
                prods[(i, j)] = tab.product(i, j)
            return prods[(i, j)]
    else:
        cache = {}

        def Q(i, j):
            if (i, j) not in cache:
                cache[(i, j)] = tab.direct(g[i], g[j]).entries
            return cache[(i, j)]

    cocycle = 0.0
    subadd = []
    for r, s, t in _triples(m):
        cocycle = max(cocycle, float(np.max(np.abs(Q(r, t) - Q(r, s) @ Q(s, t)))))
        T_rt = float(ys[r] @ (1 - np.diag(Q(r, t))))
        T_rs = float(ys[r] @ (1 - np.diag(Q(r, s))))
        T_st = float(ys[s] @ (1 - np.diag(Q(s, t))))
        if T_rt > T_rs + T_st + tol:
            subadd.append([float(g[r]), float(g[s]), float(g[t]), T_rt - T_rs - T_st])

    compat = 0.0
    pairs = [(i, i + 1) for i in range(m - 1)] + [(0, j) for j in range(2, m)]
    for i, j in pairs:
        compat = max(compat, tv_distance(ys[i] @ Q(i, j), ys[j]))

    # a factor cannot move more mass than its step records
    excess = 0.0
    for i in range(m - 1):
        moved = float(ys[i] @ (1 - np.diag(Q(i, i + 1))))
        excess = max(excess, moved - float(tab.transfer[i]))

    tv = path_total_variation(path, g[0], g[-1])
    total = float(np.sum(tab.transfer))
    return SemigroupReport(
        cocycle_residual=cocycle,
        compatibility_residual=compat,
        minimality_gap=abs(total - tv),
        transfer_excess=excess,
        subadditivity_violations=subadd,
        path_variation=tv,
        step_transfer_total=total,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# sampling


def sample_inhomogeneous_chain(tab: SemigroupTable, y0, n: int, seed: int, threads=None) -> EnsemblePath:
    """``n`` i.i.d. coordinates moving by the table's factors.

    Initial colors are i.i.d. from ``y0``; across each grid step every
    coordinate jumps independently by its row of the step factor, and the
    flip is recorded at the step's end time.
    """
    y0 = SimplexPoint(y0).weights
    if y0.size != tab.k:
        raise SemigroupError(f"y0 has {y0.size} colors, table has {tab.k}")
    if n < 1:
        raise SemigroupError("n must be >= 1")
    if tab.grid[0] != 0.0:
        raise SemigroupError("table grid must start at 0")
    if tab.origin == CONSTRUCTED and tab.initial is not None and tv_distance(y0, tab.initial) > 1e-9:
        raise SemigroupError("y0 does not match the table's initial marginal")
    colors0 = rng.sample_colors(y0, n, seed, rng.INIT)
    cums = []
    for f in tab.factors:
        c = np.cumsum(f.entries, axis=1)
        c[:, -1] = 1.0
        cums.append(c)
    k = tab.k

    def block(b, lo, hi):
        g = rng.stream(seed, rng.DYNAMICS, b)
        col = colors0[lo:hi].copy()
        out = []
        for step, c in enumerate(cums):
            u = g.random(hi - lo)
            new = np.minimum((c[col] <= u[:, None]).sum(axis=1), k - 1)
            moved = np.flatnonzero(new != col)
            if moved.size:
                out.append((step, lo + moved, col[moved], new[moved]))
            col = new
        return out

    parts = rng.map_blocks(block, n, threads)
    by_step: dict[int, list] = {}
    for part in parts:
        for step, s, a, b in part:
            by_step.setdefault(step, []).append((s, a, b))
    ts, ss, aa, bb = [], [], [], []
    for step in sorted(by_step):
        s = np.concatenate([x[0] for x in by_step[step]])
        a = np.concatenate([x[1] for x in by_step[step]])
        b = np.concatenate([x[2] for x in by_step[step]])
        order = np.argsort(s, kind="stable")
        ts.append(np.full(s.size, tab.grid[step + 1]))
        ss.append(s[order])
        aa.append(a[order])
        bb.append(b[order])
    cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)  # noqa: E731
    return EnsemblePath(
        k, n, float(tab.grid[-1]), colors0,
        cat(ts, float), cat(ss, np.int64), cat(aa, np.int64), cat(bb, np.int64),
        seed={"seed": int(seed), "scheme": "inhomogeneous-chain", "origin": tab.origin},
    )


# ---------------------------------------------------------------------------


def feller_flow_check(field, horizon: float, grid=None, small_times=(1e-1, 1e-2, 1e-3)) -> dict:
    """Deterministic flow checks for a constant-rate field.

    With constant rates the matrix flow is ``Q_{s,t} = exp((t - s) R)``.
    Reports the worst cocycle deviation, the worst spread between factors of
    equal gap, and ``max |Q_{0,t} - I|`` along ``small_times``.
    """
    if not field.is_constant():
        raise SemigroupError("feller_flow_check needs a field that is constant on the simplex")
    R = field.generator(np.full(field.k, 1.0 / field.k))
    if grid is None:
        grid = np.linspace(0.0, horizon, 11)
    grid = np.asarray(sorted(float(t) for t in grid))
    if grid[0] < 0 or grid[-1] > horizon:
        raise SemigroupError("grid must lie within [0, horizon]")
    m = grid.size
    Q = {(i, j): matrix_exp(R, grid[j] - grid[i]).entries for i in range(m) for j in range(i, m)}

    cocycle = 0.0
    for r, s, t in _triples(m):
        cocycle = max(cocycle, float(np.max(np.abs(Q[(r, t)] - Q[(r, s)] @ Q[(s, t)]))))

    by_gap: dict[float, list] = {}
    for (i, j), q in Q.items():
        by_gap.setdefault(round(grid[j] - grid[i], 9), []).append(q)
    stationarity = 0.0
    for qs in by_gap.values():
        for q in qs[1:]:
            stationarity = max(stationarity, float(np.max(np.abs(q - qs[0]))))

    eye = np.eye(field.k)
    continuity = [float(np.max(np.abs(matrix_exp(R, t).entries - eye))) for t in small_times]
    monotone = all(b <= a for a, b in zip(continuity, continuity[1:]))
    return {
        "cocycle": cocycle,
        "stationarity": stationarity,
        "continuity": continuity,
        "continuity_monotone": monotone,
        "small_times": list(small_times),
    }
