"""Mean-field particle systems on ``[k]^n`` and their large-``n`` limits.

A model is a :class:`RateField`: per ordered color pair ``(i, j)`` a
nonnegative rate ``f_ij(y)`` depending only on the current color frequencies
``y``. Three views of the same model are provided:

* :func:`simulate_finite` -- the exact ``n``-site chain, by Poisson thinning
  against the running empirical frequencies;
* :func:`solve_ode` -- the deterministic fluid limit of the frequencies;
* :func:`simulate_limit` -- ``n`` coordinates of the infinite exchangeable
  limit, i.e. independent time-inhomogeneous chains thinned against the
  fluid-limit path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import rng
from .ensemble import EnsemblePath
from .simplex import (
    FunctionSegment,
    GeneratorMatrix,
    SimplexError,
    SimplexPath,
    SimplexPoint,
    project_to_simplex,
)

__all__ = [
    "RateBoundError",
    "OdeError",
    "RateField",
    "IsingParams",
    "ReedFrostParams",
    "constant_field",
    "glauber_field",
    "reed_frost_field",
    "zero_field",
    "solve_ode",
    "ode_flow",
    "simulate_finite",
    "simulate_limit",
]

# slack allowed when comparing a rate against its declared bound
_BOUND_SLACK = 1e-12


class RateBoundError(ValueError):
    pass


class OdeError(RuntimeError):
    pass


def _lattice(k: int, r: int):
    for cut in itertools.combinations(range(r + k - 1), k - 1):
        parts = np.diff((-1,) + cut + (r + k - 1,)) - 1
        yield parts / r


class RateField:
    """Per-pair flip rates ``rate(i, j, y)`` on the ``k``-simplex.

    ``sup_bounds[i, j]`` is the thinning bound ``lambda_ij``; if omitted it is
    estimated by a lattice search over the simplex plus a Lipschitz margin.
    Every evaluation through :meth:`evaluate` is checked against
    ``0 <= rate <= lambda_ij``.
    """

    def __init__(
        self,
        k: int,
        rate: Callable[[int, int, np.ndarray], float],
        sup_bounds=None,
        lipschitz_bound: float = 0.0,
        constant: bool = False,
        name: str = "custom",
        resolution: int = 24,
    ):
        if k < 2:
            raise ValueError("a rate field needs k >= 2 colors")
        self.k = int(k)
        self.rate = rate
        self.lipschitz_bound = float(lipschitz_bound)
        self.constant = bool(constant)
        self.name = name
        if sup_bounds is None:
            sup_bounds = self._estimate_sup(resolution)
        lam = np.array(sup_bounds, dtype=float)
        if lam.shape != (k, k) or np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("sup_bounds must be a finite nonnegative k x k array")
        np.fill_diagonal(lam, 0.0)
        lam.setflags(write=False)
        self.sup_bounds = lam

    def _estimate_sup(self, resolution):
        k = self.k
        if math.comb(resolution + k - 1, k - 1) > 200_000:
            raise ValueError("simplex too large for a lattice sup search; declare sup_bounds")
        lam = np.zeros((k, k))
        for y in _lattice(k, resolution):
            for i in range(k):
                for j in range(k):
                    if i != j:
                        lam[i, j] = max(lam[i, j], float(self.rate(i, j, y)))
        margin = self.lipschitz_bound * k / resolution
        lam[lam > 0] += margin
        if margin:
            lam[lam == 0] = margin
        return lam

    def evaluate(self, i: int, j: int, y) -> float:
        r = float(self.rate(i, j, y))
        lam = self.sup_bounds[i, j]
        if not (r >= 0.0) or r > lam * (1 + _BOUND_SLACK) + _BOUND_SLACK:
            raise RateBoundError(
                f"rate({i}->{j}) = {r!r} at y={np.asarray(y).tolist()} violates bound [0, {lam!r}]"
            )
        return r

    def rates(self, y) -> np.ndarray:
        """Off-diagonal rate matrix at ``y`` (zero diagonal), bound-checked."""
        y = np.asarray(y, dtype=float)
        out = np.zeros((self.k, self.k))
        for i in range(self.k):
            for j in range(self.k):
                if i != j:
                    out[i, j] = self.evaluate(i, j, y)
        return out

    def generator(self, y) -> GeneratorMatrix:
        return GeneratorMatrix.from_rates(self.rates(y))

    def drift(self, y) -> np.ndarray:
        """``dy/dt`` of the fluid limit."""
        f = self.rates(y)
        y = np.asarray(y, dtype=float)
        return y @ f - y * f.sum(axis=1)

    def is_constant(self, seed: int = 0, points: int = 3, tol: float = 1e-12) -> bool:
        g = rng.stream(seed, 99)
        ys = g.dirichlet(np.ones(self.k), size=points)
        ref = self.rates(ys[0])
        return all(np.max(np.abs(self.rates(y) - ref)) <= tol for y in ys[1:])

    def __repr__(self):
        return f"RateField(name={self.name!r}, k={self.k})"


def constant_field(rates, name: str = "constant") -> RateField:
    """Rates independent of ``y``; ``rates`` is a k x k matrix (diagonal ignored)."""
    f = np.array(rates, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError("constant rates must be a square matrix")
    np.fill_diagonal(f, 0.0)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("constant rates must be finite and nonnegative")
    f.setflags(write=False)
    return RateField(f.shape[0], lambda i, j, y: f[i, j], sup_bounds=f, constant=True, name=name)


def zero_field(k: int) -> RateField:
    return constant_field(np.zeros((k, k)), name="zero")


@dataclass(frozen=True)
class IsingParams:
    """Mean-field Glauber dynamics; color 0 is spin -1, color 1 is spin +1."""

    beta: float
    h: float = 0.0
    J: float = 1.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"inverse temperature must be >= 0, got {self.beta!r}")


@dataclass(frozen=True)
class ReedFrostParams:
    beta: float
    rho: float

    def __post_init__(self):
        if not (self.beta >= 0 and self.rho >= 0):
            raise ValueError("Reed-Frost rates must be >= 0")


def glauber_field(p: IsingParams) -> RateField:
    """Spin-flip rates ``exp(+-beta (h + J m))`` with magnetization ``m = y+ - y-``."""
    beta, h, J = p.beta, p.h, p.J

    def rate(i, j, y):
        field = h + J * (y[1] - y[0])
        return math.exp(beta * field) if i == 0 else math.exp(-beta * field)

    bound = math.exp(beta * (abs(h) + abs(J)))
    sup = np.array([[0.0, bound], [bound, 0.0]])
    # |d rate / d y| <= 2 beta |J| bound in L1
    return RateField(2, rate, sup_bounds=sup, lipschitz_bound=2 * beta * abs(J) * bound, name="glauber")


def reed_frost_field(p: ReedFrostParams) -> RateField:
    """Colors ordered ``S, I, R``: ``S->I`` at ``beta * y_I``, ``I->R`` at ``rho``."""
    beta, rho = p.beta, p.rho

    def rate(i, j, y):
        if i == 0 and j == 1:
            return beta * y[1]
        if i == 1 and j == 2:
            return rho
        return 0.0

    sup = np.zeros((3, 3))
    sup[0, 1] = beta
    sup[1, 2] = rho
    return RateField(3, rate, sup_bounds=sup, lipschitz_bound=beta, name="reedfrost")


# ---------------------------------------------------------------------------
# fluid limit


def _integrate(field: RateField, y0, horizon: float, tol: float, t_eval=None):
    y0 = SimplexPoint(y0).weights
    if y0.size != field.k:
        raise SimplexError(f"y0 has {y0.size} colors, field has {field.k}")
    if not (math.isfinite(horizon) and horizon >= 0):
        raise ValueError(f"bad horizon {horizon!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if horizon == 0:
        return None
    sol = solve_ivp(
        lambda t, y: field.drift(np.clip(y, 0.0, None)),
        (0.0, horizon),
        y0,
        method="RK45",
        rtol=tol,
        atol=tol,
        dense_output=True,
        t_eval=t_eval,
    )
    if sol.status != 0:
        raise OdeError(f"ODE integration failed at t={sol.t[-1]!r}: {sol.message}")
    return sol


def ode_flow(field: RateField, y0, horizon: float, tol: float = 1e-9) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized dense solution ``times -> (m, k)``, each row projected onto the simplex."""
    y0w = SimplexPoint(y0).weights
    sol = _integrate(field, y0w, horizon, tol)

    def flow(times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if sol is None:
            return np.tile(y0w, (times.size, 1))
        y = np.clip(sol.sol(times).T, 0.0, None)
        return y / y.sum(axis=1, keepdims=True)

    return flow


def solve_ode(field: RateField, y0, horizon: float, tol: float = 1e-9, times=None, dense: bool = False) -> SimplexPath:
    """Fluid-limit path ``dy_j/dt = sum_i f_ij(y) y_i - y_j sum_l f_jl(y)``.

    Returns a sampled (step) path through the solver's accepted steps, a
    101-point uniform grid and any requested ``times``. With ``dense=True``
    the path wraps the continuous dense output instead.
    """
    if not horizon > 0:
        raise ValueError(f"solve_ode needs a positive horizon, got {horizon!r}")
    y0w = SimplexPoint(y0).weights
    sol = _integrate(field, y0w, horizon, tol)
    if dense:
        def fn(ts):
            y = np.clip(sol.sol(np.atleast_1d(ts)).T, 0.0, None)
            return y / y.sum(axis=1, keepdims=True)

        return SimplexPath([FunctionSegment(0.0, horizon, fn)])
    grid = set(sol.t.tolist()) | set(np.linspace(0.0, horizon, 101).tolist())
    if times is not None:
        for t in times:
            if not 0 <= t <= horizon:
                raise ValueError(f"requested time {t} outside [0, {horizon}]")
            grid.add(float(t))
    ts = np.array(sorted(grid))
    ys = np.clip(sol.sol(ts).T, 0.0, None)
    ys[0] = y0w
    pts = [project_to_simplex(y / y.sum()) for y in ys]
    return SimplexPath.step(ts, pts, horizon)


# ---------------------------------------------------------------------------
# particle simulation


def _initial_colors(x0, n: int, k: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(x0, SimplexPoint):
        w = x0.weights
    else:
        a = np.asarray(x0)
        if np.issubdtype(a.dtype, np.integer):
            if a.shape != (n,):
                raise ValueError(f"initial colors must have length n={n}")
            if a.min() < 0 or a.max() >= k:
                raise ValueError("initial color out of range")
            return a.astype(np.int64)
        w = SimplexPoint(a).weights
    if w.size != k:
        raise ValueError(f"initial distribution has {w.size} colors, expected {k}")
    return rng.sample_colors(w, n, seed, rng.INIT)


def _pairs(field: RateField):
    lam = field.sup_bounds
    pi, pj = np.nonzero(lam)
    return pi, pj, lam[pi, pj]


def simulate_finite(field: RateField, n: int, x0, horizon: float, seed: int) -> EnsemblePath:
    """Exact ``n``-site mean-field chain by Poisson thinning.

    Each site carries a rate-``lambda_ij`` candidate clock per ordered pair.
    A candidate for ``(i, j)`` at time ``tau`` flips the site iff it currently
    has color ``i`` and ``U <= f_ij(Y_tau-) / lambda_ij``. The superposition
    of all ``n * sum(lambda)`` clocks is drawn at once and the site/pair of
    each candidate is then chosen uniformly / proportionally to ``lambda``.
    """
    if not math.isfinite(horizon) or horizon < 0:
        raise ValueError(f"horizon must be finite and >= 0, got {horizon!r}")
    k = field.k
    colors0 = _initial_colors(x0, n, k, seed)
    pi, pj, lam = _pairs(field)
    total = float(lam.sum())
    g = rng.stream(seed, rng.DYNAMICS)
    m = int(g.poisson(n * total * horizon)) if total > 0 else 0
    times = np.sort(g.uniform(0.0, horizon, m))
    sites = g.integers(0, n, m)
    pick = np.searchsorted(np.cumsum(lam) / total, g.random(m), side="right") if m else np.zeros(0, int)
    pick = np.minimum(pick, max(len(lam) - 1, 0))
    thresh = g.random(m) * lam[pick] if m else np.zeros(0)

    colors = colors0.tolist()
    counts = np.bincount(colors0, minlength=k).astype(float)
    y = counts / n
    cache: dict = {}
    ev_t, ev_s, ev_a, ev_b = [], [], [], []
    for t, s, p, th in zip(times.tolist(), sites.tolist(), pick.tolist(), thresh.tolist()):
        i = int(pi[p])
        if colors[s] != i:
            continue
        j = int(pj[p])
        r = cache.get(p)
        if r is None:
            r = cache[p] = field.evaluate(i, j, y)
        if th <= r:
            colors[s] = j
            counts[i] -= 1
            counts[j] += 1
            y = counts / n
            cache.clear()
            ev_t.append(t)
            ev_s.append(s)
            ev_a.append(i)
            ev_b.append(j)
    provenance = {"seed": int(seed), "scheme": "finite-thinning", "field": field.name}
    return EnsemblePath(k, n, horizon, colors0, ev_t, ev_s, ev_a, ev_b, seed=provenance)


def simulate_limit(field: RateField, n: int, y0, horizon: float, tol: float = 1e-9, seed: int = 0, threads=None) -> EnsemblePath:
    """``n`` coordinates of the infinite exchangeable limit process.

    Coordinates are i.i.d.: initial colors from ``y0``, then thinning of
    rate-``lambda_ij`` candidate clocks with acceptance ``f_ij(y_tau) /
    lambda_ij`` where ``y`` is the fluid-limit path. Coordinates are processed
    in fixed blocks with one RNG stream each, so output does not depend on
    ``threads``.
    """
    k = field.k
    y0w = SimplexPoint(y0).weights
    colors0 = _initial_colors(SimplexPoint(y0w), n, k, seed)
    flow = ode_flow(field, y0w, horizon, tol)
    pi, pj, lam = _pairs(field)
    total = float(lam.sum())
    cum = np.cumsum(lam) / total if total > 0 else lam

    def block(b, lo, hi):
        size = hi - lo
        g = rng.stream(seed, rng.DYNAMICS, b)
        m = int(g.poisson(size * total * horizon)) if total > 0 else 0
        if m == 0:
            return [], [], [], []
        t = g.uniform(0.0, horizon, m)
        site = g.integers(0, size, m)
        pick = np.minimum(np.searchsorted(cum, g.random(m), side="right"), len(lam) - 1)
        u = g.random(m) * lam[pick]
        ys = flow(t)
        accept = np.fromiter(
            (u[c] <= field.evaluate(int(pi[pick[c]]), int(pj[pick[c]]), ys[c]) for c in range(m)),
            dtype=bool,
            count=m,
        )
        keep = np.flatnonzero(accept)
        order = keep[np.lexsort((t[keep], site[keep]))]
        colors = colors0[lo:hi].tolist()
        out_t, out_s, out_a, out_b = [], [], [], []
        for c in order.tolist():
            s = int(site[c])
            i = int(pi[pick[c]])
            if colors[s] == i:
                j = int(pj[pick[c]])
                colors[s] = j
                out_t.append(float(t[c]))
                out_s.append(lo + s)
                out_a.append(i)
                out_b.append(j)
        return out_t, out_s, out_a, out_b

    parts = rng.map_blocks(block, n, threads)
    ts = np.array([x for p in parts for x in p[0]], dtype=float)
    ss = np.array([x for p in parts for x in p[1]], dtype=np.int64)
    aa = np.array([x for p in parts for x in p[2]], dtype=np.int64)
    bb = np.array([x for p in parts for x in p[3]], dtype=np.int64)
    order = np.lexsort((ss, ts))
    provenance = {"seed": int(seed), "scheme": "limit-thinning", "field": field.name}
    return EnsemblePath(k, n, horizon, colors0, ts[order], ss[order], aa[order], bb[order], seed=provenance)
