"""Finite ensembles of color-swatch paths stored as initial colors plus flip events."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

__all__ = ["EnsembleError", "EnsemblePath", "read_jsonl", "write_jsonl"]


class EnsembleError(ValueError):
    pass


class EnsemblePath:
    """``n`` color paths on ``[0, horizon]``.

    Parameters
    ----------
    k, n : int
        Number of colors and of sites.
    horizon : float
    initial : array of int, shape (n,)
    times, sites, src, dst : arrays, one entry per flip event
        Events must be sorted by ``(time, site)`` with no repeated pair, and
        each ``src`` must equal the site's color just before the event.
    seed : provenance record (anything JSON-serializable)
    """

    def __init__(self, k, n, horizon, initial, times=(), sites=(), src=(), dst=(), seed=None, validate=True):
        self.k = int(k)
        self.n = int(n)
        self.horizon = float(horizon)
        self.seed = seed
        self.initial = np.asarray(initial, dtype=np.int64).copy()
        self.times = np.asarray(times, dtype=float).copy()
        self.sites = np.asarray(sites, dtype=np.int64).copy()
        self.src = np.asarray(src, dtype=np.int64).copy()
        self.dst = np.asarray(dst, dtype=np.int64).copy()
        for a in (self.initial, self.times, self.sites, self.src, self.dst):
            a.setflags(write=False)
        if validate:
            self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise EnsembleError("an ensemble needs n >= 1 sites")
        if not math.isfinite(self.horizon) or self.horizon < 0:
            raise EnsembleError(f"bad horizon {self.horizon!r}")
        if self.initial.shape != (self.n,):
            raise EnsembleError("initial colors must have length n")
        if self.initial.size and (self.initial.min() < 0 or self.initial.max() >= self.k):
            raise EnsembleError("initial color out of range")
        m = self.times.size
        if not (self.sites.size == self.src.size == self.dst.size == m):
            raise EnsembleError("event arrays differ in length")
        if m == 0:
            return
        if self.times.min() < 0 or self.times.max() > self.horizon:
            raise EnsembleError("event time outside [0, horizon]")
        if self.sites.min() < 0 or self.sites.max() >= self.n:
            raise EnsembleError("event site out of range")
        if np.any(self.src == self.dst):
            raise EnsembleError("event does not change color")
        dt = np.diff(self.times)
        same = dt == 0
        if np.any(dt < 0) or np.any(np.diff(self.sites)[same] <= 0):
            raise EnsembleError("events not strictly ordered by (time, site)")
        # each src must be the color left by the previous event at that site
        order = np.argsort(self.sites, kind="stable")
        s = self.sites[order]
        prev = np.where(
            np.r_[True, s[1:] != s[:-1]],
            self.initial[s],
            np.r_[0, self.dst[order][:-1]],
        )
        if np.any(prev != self.src[order]):
            i = order[np.argmax(prev != self.src[order])]
            raise EnsembleError(f"event {i} at site {self.sites[i]} has wrong from-color")

    @property
    def num_events(self) -> int:
        return int(self.times.size)

    def colors_at(self, t: float, left: bool = False) -> np.ndarray:
        """Site colors at ``t`` (right-continuous), or the left limit."""
        if not (0.0 <= t <= self.horizon):
            raise EnsembleError(f"time {t} outside [0, {self.horizon}]")
        m = int(np.searchsorted(self.times, t, side="left" if left else "right"))
        colors = self.initial.copy()
        if m:
            rev_sites = self.sites[:m][::-1]
            uniq, first = np.unique(rev_sites, return_index=True)
            colors[uniq] = self.dst[:m][::-1][first]
        return colors

    def counts_at(self, t: float, left: bool = False) -> np.ndarray:
        return np.bincount(self.colors_at(t, left=left), minlength=self.k)

    def final_counts(self) -> np.ndarray:
        """Occupancy at the horizon by replaying events one at a time."""
        counts = np.bincount(self.initial, minlength=self.k).astype(np.int64)
        np.subtract.at(counts, self.src, 1)
        np.add.at(counts, self.dst, 1)
        return counts

    def event_groups(self):
        """Yield ``(time, slice)`` for each distinct event time."""
        if not self.times.size:
            return
        cuts = np.flatnonzero(np.diff(self.times)) + 1
        starts = np.r_[0, cuts]
        ends = np.r_[cuts, self.times.size]
        for a, b in zip(starts, ends):
            yield float(self.times[a]), slice(int(a), int(b))

    def permuted(self, perm) -> "EnsemblePath":
        """Relabel sites: new site ``perm[i]`` carries old site ``i``'s path."""
        perm = np.asarray(perm, dtype=np.int64)
        initial = np.empty_like(self.initial)
        initial[perm] = self.initial
        sites = perm[self.sites]
        order = np.lexsort((sites, self.times))
        return EnsemblePath(
            self.k, self.n, self.horizon, initial,
            self.times[order], sites[order], self.src[order], self.dst[order], seed=self.seed,
        )

    @classmethod
    def from_events(cls, k, n, horizon, initial, events, seed=None):
        """Build from an iterable of ``(time, site, src, dst)``; sorts them."""
        ev = sorted(events, key=lambda e: (e[0], e[1]))
        cols = list(zip(*ev)) if ev else [(), (), (), ()]
        return cls(k, n, horizon, initial, *cols, seed=seed)

    def __repr__(self):
        return f"EnsemblePath(k={self.k}, n={self.n}, horizon={self.horizon}, events={self.num_events})"


def write_jsonl(e: EnsemblePath, path) -> None:
    with open(path, "w") as fh:
        header = {"k": e.k, "n": e.n, "horizon": e.horizon, "seed": e.seed, "initial": e.initial.tolist()}
        fh.write(json.dumps(header) + "\n")
        for t, s, a, b in zip(e.times.tolist(), e.sites.tolist(), e.src.tolist(), e.dst.tolist()):
            fh.write(json.dumps({"t": t, "site": s, "from": a, "to": b}) + "\n")


def read_jsonl(path) -> EnsemblePath:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise EnsembleError(f"{path}: empty file")
    header = json.loads(lines[0])
    recs = [json.loads(line) for line in lines[1:] if line.strip()]
    return EnsemblePath(
        header["k"], header["n"], header["horizon"], header["initial"],
        [r["t"] for r in recs], [r["site"] for r in recs],
        [r["from"] for r in recs], [r["to"] for r in recs],
        seed=header.get("seed"),
    )
