"""Small exchangeable processes with known, unusual behavior.

* :func:`singular_clock_process` -- every site flips once, at a time driven by
  a monotone clock (Cantor by default), so flips concentrate on a null set.
* :func:`threshold_process` -- frequencies follow a flow that is discontinuous
  in the initial frequency at 1/2.
* :func:`poisson_recolor_pair` and :func:`feller_degenerate_pair` -- pairs of
  different processes with the same frequency path.

:func:`path_corpus` collects simplex paths used to exercise the semigroup
construction.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import rng
from .ensemble import EnsemblePath
from .simplex import (
    ConstantSegment,
    FunctionSegment,
    LinearSegment,
    SampledSegment,
    SimplexPath,
)

__all__ = [
    "MonotoneClock",
    "cantor",
    "singular_clock_process",
    "clock_path",
    "threshold_process",
    "threshold_flow",
    "poisson_jump_times",
    "recolor_target_path",
    "poisson_recolor_pair",
    "feller_degenerate_pair",
    "path_corpus",
]

CANTOR_LEVELS = 42  # 2**-42 < 1e-12


def cantor(x) -> np.ndarray:
    """Cantor function by the ternary recursion, to absolute error ``2**-42``."""
    x = np.array(x, dtype=float, ndmin=1)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("cantor is defined on [0, 1]")
    out = np.zeros_like(x)
    live = np.ones(x.shape, dtype=bool)
    scale = 0.5
    for _ in range(CANTOR_LEVELS):
        lo = live & (x < 1 / 3)
        hi = live & (x > 2 / 3)
        mid = live & ~lo & ~hi
        out[mid] += scale
        out[hi] += scale
        x = np.where(lo, 3 * x, np.where(hi, 3 * x - 2, x))
        live &= ~mid
        scale /= 2
    # unresolved remainder, linearized; exact at x = 0 and x = 1
    out[live] += x[live] * 2 * scale
    return out


class MonotoneClock:
    """Nondecreasing ``f: [0, 1] -> [0, 1]`` with ``f(0) = 0`` and ``f(1) = 1``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "custom", check_points: int = 4097):
        self.fn = fn
        self.name = name
        ends = np.asarray(fn(np.array([0.0, 1.0])), dtype=float)
        if ends[0] != 0.0 or ends[1] != 1.0:
            raise ValueError(f"clock must satisfy f(0)=0, f(1)=1; got {ends.tolist()}")
        vals = self(np.linspace(0.0, 1.0, check_points))
        if np.any(np.diff(vals) < 0):
            raise ValueError("clock is not monotone")

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float)

    def inverse(self, u, tol: float = 1e-12) -> np.ndarray:
        """``inf {t : f(t) >= u}`` by vectorized bisection."""
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(int(math.ceil(math.log2(1 / tol))) + 1):
            mid = 0.5 * (lo + hi)
            ok = self(mid) >= u
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        return hi

    @classmethod
    def identity(cls):
        return cls(lambda t: np.clip(t, 0.0, 1.0), name="identity")

    @classmethod
    def cantor(cls):
        return cls(cantor, name="cantor")

    @classmethod
    def from_table(cls, ts, vals):
        """Piecewise-linear clock through ``(ts[i], vals[i])``."""
        ts = np.asarray(ts, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if ts[0] != 0 or ts[-1] != 1 or np.any(np.diff(ts) <= 0):
            raise ValueError("table times must increase from 0 to 1")
        if np.any(np.diff(vals) < 0):
            raise ValueError("clock table is not monotone")
        return cls(lambda t: np.interp(t, ts, vals), name="table")


def clock_path(clock: MonotoneClock) -> SimplexPath:
    """Frequency path ``(1 - f(t), f(t))`` of the infinite singular-clock process."""
    return SimplexPath([FunctionSegment(0.0, 1.0, lambda t: np.stack([1 - clock(t), clock(t)], axis=-1))])


def singular_clock_process(clock: MonotoneClock | None, n: int, seed: int) -> EnsemblePath:
    """Site ``i`` is 0 until ``f(t)`` reaches its uniform label ``U_i``, then 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    clock = clock or MonotoneClock.cantor()
    u = np.concatenate([rng.stream(seed, rng.CLOCK, b).random(hi - lo) for b, lo, hi in rng.blocks(n)])
    tau = clock.inverse(u)
    order = np.lexsort((np.arange(n), tau))
    sites = order[u[order] > 0]
    return EnsemblePath(
        2, n, 1.0, np.zeros(n, dtype=np.int64),
        tau[sites], sites, np.zeros(sites.size, dtype=np.int64), np.ones(sites.size, dtype=np.int64),
        seed={"seed": int(seed), "fixture": "singular-clock", "clock": clock.name},
    )


def threshold_flow(y0: float, t) -> np.ndarray:
    """Limiting frequency of color 1 in :func:`threshold_process`."""
    b = 1.0 if y0 >= 0.5 else 0.0
    t = np.asarray(t, dtype=float)
    return y0 * np.exp(-t) + b * (1 - np.exp(-t))


def threshold_process(y0: float, n: int, seed: int, horizon: float = 2.0) -> EnsemblePath:
    """Sites start i.i.d. Bernoulli(``y0``); site ``i`` switches to ``1{y0 >= 1/2}`` at an Exp(1) time."""
    if not 0 <= y0 <= 1:
        raise ValueError("y0 must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    colors0 = rng.sample_colors([1 - y0, y0], n, seed, rng.INIT)
    b = int(y0 >= 0.5)
    tau = np.concatenate([rng.stream(seed, rng.CLOCK, blk).exponential(1.0, hi - lo) for blk, lo, hi in rng.blocks(n)])
    moves = np.flatnonzero((colors0 != b) & (tau <= horizon))
    moves = moves[np.lexsort((moves, tau[moves]))]
    return EnsemblePath(
        2, n, horizon, colors0,
        tau[moves], moves, colors0[moves], np.full(moves.size, b, dtype=np.int64),
        seed={"seed": int(seed), "fixture": "threshold", "y0": y0},
    )


def poisson_jump_times(horizon: float, seed: int, rate: float = 1.0) -> np.ndarray:
    g = rng.stream(seed, rng.JUMPS)
    m = g.poisson(rate * horizon)
    return np.sort(g.uniform(0.0, horizon, m))


def recolor_target_path(jumps, horizon: float) -> SimplexPath:
    """Color-1 frequency alternating ``2/3 -> 1/3 -> 2/3 ...`` at ``jumps``."""
    hi, lo = np.array([1 / 3, 2 / 3]), np.array([2 / 3, 1 / 3])
    times = [0.0] + [float(t) for t in jumps if 0 < t < horizon]
    pts = [hi if m % 2 == 0 else lo for m in range(len(times))]
    return SimplexPath.step(times, pts, horizon)


def poisson_recolor_pair(n: int, horizon: float = 3.0, seed: int = 0):
    """Two processes over the same 2/3 <-> 1/3 frequency path.

    At each rate-1 Poisson time: in ``X`` the majority color's sites toss fair
    coins for their new colors; in ``Z`` every site is recolored independently
    with probability of color 1 equal to the new frequency. Returns ``(X, Z)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    jumps = poisson_jump_times(horizon, seed)
    x = rng.sample_colors([1 / 3, 2 / 3], n, seed, rng.INIT)
    z = x.copy()
    x0, z0 = x.copy(), z.copy()
    xev, zev = [], []
    for m, t in enumerate(jumps):
        pre_high = m % 2 == 0  # color-1 frequency 2/3 just before the jump
        post = 1 / 3 if pre_high else 2 / 3
        g = rng.stream(seed, rng.DYNAMICS, m)
        coins = (g.random(n) < 0.5).astype(np.int64)
        tossers = x == (1 if pre_high else 0)
        new_x = np.where(tossers, coins, x)
        new_z = (g.random(n) < post).astype(np.int64)
        for old, new, ev in ((x, new_x, xev), (z, new_z, zev)):
            moved = np.flatnonzero(old != new)
            ev.append((np.full(moved.size, t), moved, old[moved], new[moved]))
        x, z = new_x, new_z

    def build(init, ev, name):
        cols = [np.concatenate(c) if c else np.zeros(0) for c in zip(*ev)] if ev else [(), (), (), ()]
        return EnsemblePath(2, n, horizon, init, *cols, seed={"seed": int(seed), "fixture": name})

    return build(x0, xev, "recolor-X"), build(z0, zev, "recolor-Z")


def feller_degenerate_pair(p: float, n: int, horizon: float = 3.0, seed: int = 0):
    """Two processes with frequency path fixed at ``(p, 1 - p)``.

    ``A`` never moves. In ``B``, at rate-1 Poisson times every color-0 site
    becomes 1 and every color-1 site becomes 0 with probability ``p/(1-p)``.
    Returns ``(A, B)``.
    """
    if not 0 < p < 0.5:
        raise ValueError(f"need 0 < p < 1/2, got {p!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    init = rng.sample_colors([p, 1 - p], n, seed, rng.INIT)
    a = EnsemblePath(2, n, horizon, init, seed={"seed": int(seed), "fixture": "feller-A", "p": p})
    jumps = poisson_jump_times(horizon, seed)
    x = init.copy()
    ev = []
    q = p / (1 - p)
    for m, t in enumerate(jumps):
        flip = rng.stream(seed, rng.DYNAMICS, m).random(n) < q
        new = np.where(x == 0, 1, np.where(flip, 0, 1))
        moved = np.flatnonzero(new != x)
        ev.append((np.full(moved.size, t), moved, x[moved], new[moved]))
        x = new
    cols = [np.concatenate(c) for c in zip(*ev)] if ev else [(), (), (), ()]
    b = EnsemblePath(2, n, horizon, init, *cols, seed={"seed": int(seed), "fixture": "feller-B", "p": p})
    return a, b


# ---------------------------------------------------------------------------


def _mixed_k3() -> SimplexPath:
    a = np.array([0.6, 0.3, 0.1])
    b = np.array([0.2, 0.5, 0.3])
    c = np.array([0.5, 0.1, 0.4])
    d = np.array([-0.3, 0.4, -0.1])

    def smooth(t):
        s = np.sin(np.pi * (np.asarray(t) - 0.6) / 0.8)
        return c + np.multiply.outer(s, d)

    return SimplexPath(
        [
            LinearSegment(0.0, 0.4, a, b),
            ConstantSegment(0.4, 0.6, b),
            FunctionSegment(0.6, 1.0, smooth),
        ]
    )


def path_corpus() -> dict[str, tuple[SimplexPath, np.ndarray]]:
    """Named ``(path, grid)`` pairs: constant, linear, Cantor, single jump,
    alternating 1/3 <-> 2/3, and a k=3 path mixing linear, constant, jump
    and smooth pieces."""
    alt_jumps = [0.3, 0.7, 1.2, 1.9]
    mixed = _mixed_k3()
    return {
        "constant": (SimplexPath.constant([0.3, 0.7]), np.linspace(0.0, 1.0, 5)),
        "linear": (SimplexPath.linear([0.8, 0.2], [0.2, 0.8]), np.array([0.0, 1.0])),
        "cantor": (clock_path(MonotoneClock.cantor()), np.linspace(0.0, 1.0, 11)),
        "single-jump": (
            SimplexPath([SampledSegment(0.0, 1.0, [0.0, 0.5], [[1.0, 0.0], [0.0, 1.0]])]),
            np.array([0.0, 0.5, 1.0]),
        ),
        "alternating": (recolor_target_path(alt_jumps, 2.5), np.array([0.0, *alt_jumps, 2.5])),
        "mixed-k3": (mixed, np.array([0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0])),
    }
