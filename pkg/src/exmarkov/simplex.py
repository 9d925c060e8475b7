"""Simplex points, stochastic/generator matrices and cadlag simplex paths.

Everything here is immutable after construction. Arrays handed out by the
``weights`` / ``entries`` attributes are read-only views.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "SimplexError",
    "SimplexPoint",
    "StochasticMatrix",
    "GeneratorMatrix",
    "SimplexPath",
    "ConstantSegment",
    "LinearSegment",
    "SampledSegment",
    "FunctionSegment",
    "tv_distance",
    "matrix_exp",
    "path_total_variation",
    "project_to_simplex",
]

SUM_TOL = 1e-12
RENORM_TOL = 1e-9
CLAMP_TOL = 1e-12
MAX_K = 64


class SimplexError(ValueError):
    """Raised when an object violates a simplex / stochastic invariant."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def project_to_simplex(w, tol: float = RENORM_TOL) -> np.ndarray:
    """Clamp round-off negatives and renormalize a near-probability vector.

    Entries below ``-tol`` or a raw sum off by more than ``tol`` raise.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise SimplexError(f"expected a non-empty vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise SimplexError(f"non-finite weights {w!r}")
    if np.any(w < -tol):
        raise SimplexError(f"negative weight in {w!r}")
    total = w.sum()
    if abs(total - 1.0) >= tol:
        raise SimplexError(f"weights sum to {total!r}, not 1")
    w = np.clip(w, 0.0, None)
    return w / w.sum()


class SimplexPoint:
    """A probability vector on ``k`` colors."""

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = project_to_simplex(weights)
        if w.size > MAX_K:
            raise SimplexError(f"k={w.size} exceeds the supported maximum {MAX_K}")
        object.__setattr__(self, "weights", _frozen(w))

    def __setattr__(self, name, value):
        raise AttributeError("SimplexPoint is immutable")

    @property
    def k(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return self.k

    def __getitem__(self, i):
        return self.weights[i]

    def __eq__(self, other):
        if not isinstance(other, SimplexPoint):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"SimplexPoint({self.weights.tolist()})"

    def act(self, q: "StochasticMatrix") -> "SimplexPoint":
        """Right action ``y -> y Q``."""
        return SimplexPoint(self.weights @ _entries(q))

    @classmethod
    def vertex(cls, k: int, i: int) -> "SimplexPoint":
        w = np.zeros(k)
        w[i] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, k: int) -> "SimplexPoint":
        return cls(np.full(k, 1.0 / k))


def _weights(y) -> np.ndarray:
    if isinstance(y, SimplexPoint):
        return y.weights
    return np.asarray(y, dtype=float)


def _entries(m) -> np.ndarray:
    if isinstance(m, (StochasticMatrix, GeneratorMatrix)):
        return m.entries
    return np.asarray(m, dtype=float)


def _square(a, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise SimplexError(f"{what} must be a non-empty square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_K:
        raise SimplexError(f"k={a.shape[0]} exceeds the supported maximum {MAX_K}")
    if not np.all(np.isfinite(a)):
        raise SimplexError(f"{what} has non-finite entries")
    return a


class StochasticMatrix:
    """A ``k x k`` row-stochastic matrix.

    Rows are accepted when they sum to 1 within ``RENORM_TOL`` and have no
    entry below ``-CLAMP_TOL``; they are then clamped and renormalized so the
    stored rows sum to 1 within ``SUM_TOL``.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = _square(entries, "stochastic matrix")
        if np.any(a < -CLAMP_TOL):
            bad = np.argwhere(a < -CLAMP_TOL)[0]
            raise SimplexError(f"negative entry {a[tuple(bad)]!r} at {tuple(bad)}")
        sums = a.sum(axis=1)
        if np.any(np.abs(sums - 1.0) >= RENORM_TOL):
            row = int(np.argmax(np.abs(sums - 1.0)))
            raise SimplexError(f"row {row} sums to {sums[row]!r}")
        clipped = np.clip(a, 0.0, None)
        fix = np.any(clipped != a, axis=1) | (np.abs(clipped.sum(axis=1) - 1.0) > SUM_TOL)
        # rows already stochastic are stored bit for bit
        clipped[fix] /= clipped[fix].sum(axis=1, keepdims=True)
        object.__setattr__(self, "entries", _frozen(clipped))

    def __setattr__(self, name, value):
        raise AttributeError("StochasticMatrix is immutable")

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __matmul__(self, other):
        if isinstance(other, StochasticMatrix):
            return StochasticMatrix(self.entries @ other.entries)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, StochasticMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None

    def __repr__(self):
        return f"StochasticMatrix({self.entries.tolist()})"

    @classmethod
    def identity(cls, k: int) -> "StochasticMatrix":
        return cls(np.eye(k))

    def mass_transfer(self, y) -> float:
        """Mass moved off the diagonal when ``y`` is pushed through this matrix."""
        w = _weights(y)
        return float(w @ (1.0 - np.diag(self.entries)))


class GeneratorMatrix:
    """A ``k x k`` rate matrix: nonnegative off-diagonals, zero row sums."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = _square(entries, "generator")
        off = a - np.diag(np.diag(a))
        if np.any(off < 0):
            bad = np.argwhere(off < 0)[0]
            raise SimplexError(f"negative off-diagonal rate {a[tuple(bad)]!r} at {tuple(bad)}")
        sums = a.sum(axis=1)
        scale = np.maximum(1.0, np.abs(np.diag(a)))
        if np.any(np.abs(sums) > SUM_TOL * scale):
            row = int(np.argmax(np.abs(sums) / scale))
            raise SimplexError(f"generator row {row} sums to {sums[row]!r}")
        object.__setattr__(self, "entries", _frozen(a))

    def __setattr__(self, name, value):
        raise AttributeError("GeneratorMatrix is immutable")

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self):
        return f"GeneratorMatrix({self.entries.tolist()})"

    @classmethod
    def from_rates(cls, rates) -> "GeneratorMatrix":
        """Build from off-diagonal rates; the diagonal is overwritten."""
        a = np.array(rates, dtype=float)
        np.fill_diagonal(a, 0.0)
        np.fill_diagonal(a, -a.sum(axis=1))
        return cls(a)


def tv_distance(a, b) -> float:
    """Total-variation distance, i.e. half the L1 distance."""
    a, b = _weights(a), _weights(b)
    if a.shape != b.shape:
        raise SimplexError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def matrix_exp(R, delta: float) -> StochasticMatrix:
    """``exp(delta * R)`` for a generator ``R``.

    Uses scipy's scaling-and-squaring Pade approximant, then clamps round-off
    negatives and renormalizes rows.
    """
    a = _entries(R)
    if not np.all(np.isfinite(a)) or not math.isfinite(delta):
        raise SimplexError("matrix_exp: non-finite input")
    if delta < 0:
        raise SimplexError(f"matrix_exp: negative time step {delta!r}")
    if not isinstance(R, GeneratorMatrix):
        R = GeneratorMatrix(a)
    if delta == 0:
        return StochasticMatrix.identity(a.shape[0])
    e = scipy.linalg.expm(delta * a)
    e[np.abs(e) < CLAMP_TOL] = 0.0
    return StochasticMatrix(e)


# ---------------------------------------------------------------------------
# paths


class _Segment:
    start: float
    end: float

    def _check(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise SimplexError("segment times must be finite")
        if not self.start < self.end:
            raise SimplexError(f"segment [{self.start}, {self.end}] is empty")

    def value(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def left(self, t: float) -> np.ndarray:
        """Left limit at ``t`` (``start < t <= end``)."""
        return self.value(t)

    def variation(self, c: float, d: float) -> float:
        """Variation over ``[c, d]`` inside this segment, jumps in ``(c, d]`` included."""
        raise NotImplementedError

    def jumps(self) -> list[float]:
        return []

    @property
    def k(self) -> int:
        return self.value(self.start).size


class ConstantSegment(_Segment):
    kind = "constant"

    def __init__(self, start, end, point):
        self.start, self.end = float(start), float(end)
        self.point = SimplexPoint(point).weights
        self._check()

    def value(self, t):
        return self.point

    def variation(self, c, d):
        return 0.0


class LinearSegment(_Segment):
    kind = "linear"

    def __init__(self, start, end, p0, p1):
        self.start, self.end = float(start), float(end)
        self.p0 = SimplexPoint(p0).weights
        self.p1 = SimplexPoint(p1).weights
        if self.p0.shape != self.p1.shape:
            raise SimplexError("linear segment endpoints differ in k")
        self._check()

    def value(self, t):
        u = (t - self.start) / (self.end - self.start)
        return (1.0 - u) * self.p0 + u * self.p1

    def variation(self, c, d):
        return tv_distance(self.p0, self.p1) * (d - c) / (self.end - self.start)


class SampledSegment(_Segment):
    """Piecewise-constant, right-continuous interpolation of a sample table."""

    kind = "sampled"

    def __init__(self, start, end, times, points):
        self.start, self.end = float(start), float(end)
        times = np.asarray(times, dtype=float)
        pts = np.array([SimplexPoint(p).weights for p in points])
        if times.ndim != 1 or len(times) != len(pts) or len(times) == 0:
            raise SimplexError("sample table times/points mismatch")
        if times[0] != self.start:
            raise SimplexError("sample table must start at the segment start")
        if np.any(np.diff(times) <= 0) or times[-1] > self.end:
            raise SimplexError("sample times must strictly increase within the segment")
        self.times = _frozen(times)
        self.points = _frozen(pts)
        self._check()

    def _index(self, t, left=False):
        side = "left" if left else "right"
        return int(np.searchsorted(self.times, t, side=side)) - 1

    def value(self, t):
        return self.points[max(self._index(t), 0)]

    def left(self, t):
        return self.points[max(self._index(t, left=True), 0)]

    def variation(self, c, d):
        i = np.searchsorted(self.times, c, side="right")
        j = np.searchsorted(self.times, d, side="right")
        if j <= i:
            return 0.0
        # jumps at sample times in (c, d]
        pts = self.points[i - 1 : j]
        return 0.5 * float(np.abs(np.diff(pts, axis=0)).sum())

    def jumps(self):
        return [float(t) for t in self.times[1:]]


class FunctionSegment(_Segment):
    """A continuous path given by a vectorized callable ``times -> (m, k)``.

    Variation is computed on dyadic grids, doubling until two successive
    estimates agree to ``tv_tol`` (grid sums increase monotonically to the
    true variation for continuous paths).
    """

    kind = "function"

    def __init__(self, start, end, fn: Callable[[np.ndarray], np.ndarray], tv_tol=1e-10, max_level=22):
        self.start, self.end = float(start), float(end)
        self.fn = fn
        self.tv_tol = tv_tol
        self.max_level = max_level
        self._check()

    def values(self, times) -> np.ndarray:
        out = np.atleast_2d(np.asarray(self.fn(np.asarray(times, dtype=float)), dtype=float))
        return out

    def value(self, t):
        return project_to_simplex(self.values(np.array([t]))[0])

    def variation(self, c, d):
        if d <= c:
            return 0.0
        prev = None
        for level in range(6, self.max_level + 1):
            grid = np.linspace(c, d, 2**level + 1)
            tv = 0.5 * float(np.abs(np.diff(self.values(grid), axis=0)).sum())
            if prev is not None and abs(tv - prev) <= self.tv_tol * max(1.0, tv):
                return tv
            prev = tv
        raise SimplexError(f"variation on [{c}, {d}] did not converge; path may have unbounded variation")


class SimplexPath:
    """A cadlag path on the simplex, tiled by segments over ``[t0, horizon]``.

    The value at a segment boundary is the value of the later segment, so the
    path is right-continuous. A mismatch between the end of one segment and
    the start of the next is a jump.
    """

    def __init__(self, segments: Sequence[_Segment]):
        segments = list(segments)
        if not segments:
            raise SimplexError("a path needs at least one segment")
        k = segments[0].k
        for a, b in zip(segments, segments[1:]):
            if a.end != b.start:
                raise SimplexError(f"segments do not tile: {a.end} != {b.start}")
        if any(s.k != k for s in segments):
            raise SimplexError("segments disagree on k")
        self.segments = tuple(segments)
        self.k = k
        self._starts = np.array([s.start for s in segments])

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def horizon(self) -> float:
        return self.segments[-1].end

    def _check_time(self, t):
        if not (self.start <= t <= self.horizon):
            raise SimplexError(f"time {t} outside path domain [{self.start}, {self.horizon}]")

    def _segment(self, t, left=False) -> _Segment:
        side = "left" if left else "right"
        i = int(np.searchsorted(self._starts, t, side=side)) - 1
        return self.segments[max(i, 0)]

    def at(self, t: float, left: bool = False) -> np.ndarray:
        """Raw weights at ``t`` (or the left limit when ``left``)."""
        self._check_time(t)
        if left and t > self.start:
            return self._segment(t, left=True).left(t)
        return self._segment(t).value(t)

    def __call__(self, t: float, left: bool = False) -> SimplexPoint:
        return SimplexPoint(self.at(t, left=left))

    def values(self, times, left: bool = False) -> np.ndarray:
        return np.array([self.at(float(t), left=left) for t in times])

    def breakpoints(self) -> list[float]:
        """Segment boundaries and internal sample times, sorted."""
        pts = {s.start for s in self.segments} | {self.horizon}
        for s in self.segments:
            pts.update(s.jumps())
        return sorted(pts)

    def jump_times(self, tol: float = 0.0) -> list[float]:
        """Times ``t`` with ``tv(Y_{t-}, Y_t) > tol``."""
        out = []
        for t in self.breakpoints():
            if t > self.start and tv_distance(self.at(t, left=True), self.at(t)) > tol:
                out.append(t)
        return out

    # constructors ---------------------------------------------------------

    @classmethod
    def constant(cls, point, horizon=1.0, start=0.0):
        return cls([ConstantSegment(start, horizon, point)])

    @classmethod
    def linear(cls, p0, p1, horizon=1.0, start=0.0):
        return cls([LinearSegment(start, horizon, p0, p1)])

    @classmethod
    def step(cls, times, points, horizon):
        """Right-continuous step path through ``(times[i], points[i])``."""
        return cls([SampledSegment(times[0], horizon, times, points)])

    @classmethod
    def piecewise_linear(cls, times, points):
        times = list(times)
        return cls(
            [LinearSegment(a, b, p, q) for a, b, p, q in zip(times, times[1:], points, points[1:])]
        )

    @classmethod
    def from_function(cls, fn, horizon=1.0, start=0.0, **kw):
        return cls([FunctionSegment(start, horizon, fn, **kw)])


def path_total_variation(path: SimplexPath, c: float, d: float) -> float:
    """Total variation (half-L1) of ``path`` over ``[c, d]``.

    Jumps at times in ``(c, d]`` count; a jump exactly at ``c`` does not.
    """
    if c > d:
        raise SimplexError(f"interval [{c}, {d}] is reversed")
    path._check_time(c)
    path._check_time(d)
    total = 0.0
    for i, seg in enumerate(path.segments):
        lo, hi = max(seg.start, c), min(seg.end, d)
        if lo < hi:
            total += seg.variation(lo, hi)
        if i > 0 and c < seg.start <= d:
            total += tv_distance(path.segments[i - 1].left(seg.start), seg.value(seg.start))
    return total
