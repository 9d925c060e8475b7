"""Empirical statistics of an ensemble: frequencies, transition matrices,
mass transfer and a classifier for the two kinds of discontinuity.

All counting is done in integers; floats appear only in the returned values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .ensemble import EnsemblePath
from .simplex import SimplexPath, StochasticMatrix

__all__ = [
    "ProjectionError",
    "project",
    "frequencies",
    "transition_counts",
    "estimate_transition",
    "exact_transition",
    "mass_transfer",
    "Discontinuity",
    "DiscontinuityReport",
    "classify_discontinuities",
    "EmpiricalSemigroup",
    "empirical_semigroup",
]


class ProjectionError(ValueError):
    pass


def _check_times(e: EnsemblePath, *times):
    for t in times:
        if not (0.0 <= t <= e.horizon):
            raise ProjectionError(f"time {t} outside [0, {e.horizon}]")


def project(e: EnsemblePath, times, left: bool = False) -> SimplexPath:
    """Occupancy fractions at each of ``times`` as a step path.

    The returned path's domain is ``[times[0], e.horizon]``.
    """
    times = sorted(float(t) for t in times)
    if not times:
        raise ProjectionError("need at least one time")
    _check_times(e, *times)
    if len(set(times)) != len(times):
        raise ProjectionError("times must be distinct")
    pts = [e.counts_at(t, left=left) / e.n for t in times]
    # a lone sample at the horizon still needs a non-empty domain
    horizon = e.horizon if e.horizon > times[0] else times[0] + 1.0
    return SimplexPath.step(times, pts, horizon)


def frequencies(e: EnsemblePath, t: float, left: bool = False) -> np.ndarray:
    _check_times(e, t)
    return e.counts_at(t, left=left) / e.n


def transition_counts(e: EnsemblePath, s: float, t: float, left_s: bool = False, left_t: bool = False) -> np.ndarray:
    """Integer ``k x k`` table: sites with color ``i`` at ``s`` and ``j`` at ``t``."""
    if s > t:
        raise ProjectionError(f"s={s} > t={t}")
    _check_times(e, s, t)
    a = e.colors_at(s, left=left_s)
    b = e.colors_at(t, left=left_t)
    return np.bincount(a * e.k + b, minlength=e.k * e.k).reshape(e.k, e.k)


def _rows(counts: np.ndarray):
    k = counts.shape[0]
    out = np.eye(k)
    totals = counts.sum(axis=1)
    sup = totals > 0
    out[sup] = counts[sup] / totals[sup, None]
    return out


def estimate_transition(e: EnsemblePath, s: float, t: float, left_s: bool = False, left_t: bool = False) -> StochasticMatrix:
    """Empirical ``Q_{s,t}``; rows of colors absent at ``s`` are unit rows."""
    return StochasticMatrix(_rows(transition_counts(e, s, t, left_s, left_t)))


def exact_transition(e: EnsemblePath, s: float, t: float) -> list[list[Fraction]]:
    """Same as :func:`estimate_transition` with rational entries."""
    c = transition_counts(e, s, t)
    k = e.k
    out = []
    for i in range(k):
        tot = int(c[i].sum())
        if tot == 0:
            out.append([Fraction(int(i == j)) for j in range(k)])
        else:
            out.append([Fraction(int(c[i, j]), tot) for j in range(k)])
    return out


def mass_transfer(e: EnsemblePath, s: float, t: float, left_s: bool = False) -> float:
    """Fraction of sites whose colors at ``s`` and ``t`` differ."""
    c = transition_counts(e, s, t, left_s=left_s)
    return float(c.sum() - np.trace(c)) / e.n


# ---------------------------------------------------------------------------
# discontinuities


@dataclass(frozen=True)
class Discontinuity:
    time: float
    kind: str  # "I", "I-multiple" or "II"
    sites: tuple[int, ...]
    jump: StochasticMatrix | None = None
    pre: np.ndarray | None = None
    post: np.ndarray | None = None
    counts: np.ndarray | None = None

    @property
    def warning(self) -> bool:
        return self.kind == "I-multiple"

    def to_dict(self) -> dict:
        d = {"time": self.time, "kind": self.kind, "flips": len(self.sites)}
        if self.kind == "II":
            d["jump"] = self.jump.entries.tolist()
            d["pre"] = self.pre.tolist()
            d["post"] = self.post.tolist()
        else:
            d["sites"] = list(self.sites)
        if self.warning:
            d["warning"] = "simultaneous flips below threshold (finite-n artifact)"
        return d


@dataclass
class DiscontinuityReport:
    theta: float
    n: int
    entries: list[Discontinuity] = field(default_factory=list)

    def kinds(self) -> list[str]:
        return [d.kind for d in self.entries]

    def type_ii(self) -> list[Discontinuity]:
        return [d for d in self.entries if d.kind == "II"]

    def to_dict(self) -> dict:
        return {"theta": self.theta, "n": self.n, "entries": [d.to_dict() for d in self.entries]}


def classify_discontinuities(e: EnsemblePath, theta: float = 0.05) -> DiscontinuityReport:
    """Label each event time by how many sites flip there.

    At least ``ceil(theta * n)`` simultaneous flips is a type II jump and
    carries the empirical jump matrix between the left limit and the value
    at that time. A single flip is type I; anything in between is reported
    as ``"I-multiple"`` with a warning.
    """
    if not 0 < theta <= 1:
        raise ProjectionError(f"theta must be in (0, 1], got {theta!r}")
    need = max(2, math.ceil(theta * e.n))
    report = DiscontinuityReport(theta, e.n)
    for t, sl in e.event_groups():
        sites = tuple(int(s) for s in e.sites[sl])
        if len(sites) >= need:
            c = transition_counts(e, t, t, left_s=True)
            report.entries.append(
                Discontinuity(
                    t, "II", sites,
                    jump=StochasticMatrix(_rows(c)),
                    pre=c.sum(axis=1) / e.n,
                    post=c.sum(axis=0) / e.n,
                    counts=c,
                )
            )
        elif len(sites) == 1:
            report.entries.append(Discontinuity(t, "I", sites))
        else:
            report.entries.append(Discontinuity(t, "I-multiple", sites))
    return report


# ---------------------------------------------------------------------------


@dataclass
class EmpiricalSemigroup:
    grid: np.ndarray
    factors: list[StochasticMatrix]
    marginals: np.ndarray
    support_mask: np.ndarray
    counts: list[np.ndarray]


def empirical_semigroup(e: EnsemblePath, grid) -> EmpiricalSemigroup:
    """Per-step empirical factors and marginals on ``grid``."""
    grid = np.asarray(sorted(float(t) for t in grid))
    _check_times(e, *grid)
    cnts = [transition_counts(e, a, b) for a, b in zip(grid[:-1], grid[1:])]
    marg = np.array([e.counts_at(t) for t in grid])
    return EmpiricalSemigroup(
        grid=grid,
        factors=[StochasticMatrix(_rows(c)) for c in cnts],
        marginals=marg / e.n,
        support_mask=marg > 0,
        counts=cnts,
    )
