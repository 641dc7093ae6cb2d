"""Canonical lifts of piecewise-linear drivers to group-valued rough paths.

A linear segment lifts to the truncated exponential of its increment; a
piecewise-linear path lifts by Chen concatenation of segment exponentials,
which makes every increment exact up to floating error.  Increments over
arbitrary subintervals are assembled as X_{0s}^{-1} X_{0t} from memoized
knot-prefix products.
"""

from __future__ import annotations

import csv

import numpy as np

from . import tensor_algebra as ta


class PiecewiseLinearPath:
    """Piecewise-linear R^ell path given by knots (times strictly increasing)."""

    __slots__ = ("times", "points")

    def __init__(self, times, points):
        self.times = np.asarray(times, dtype=float).reshape(-1)
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(-1, 1)
        if len(self.times) != len(self.points):
            raise ValueError("times and points must have the same length")
        if len(self.times) < 2:
            raise ValueError("path needs at least two knots")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def width(self):
        return self.points.shape[1]

    @property
    def domain(self):
        return float(self.times[0]), float(self.times[-1])

    def value(self, t):
        """Linear interpolation at time t (within the domain)."""
        self._check_time(t)
        out = np.empty(self.width)
        for j in range(self.width):
            out[j] = np.interp(t, self.times, self.points[:, j])
        return out

    def increment(self, s, t):
        return self.value(t) - self.value(s)

    def slope(self, t):
        """Derivative on the segment containing t (t must not be a knot)."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k < 0 or k >= len(self.times) - 1:
            raise ValueError(f"time {t} outside the open domain")
        dt = self.times[k + 1] - self.times[k]
        return (self.points[k + 1] - self.points[k]) / dt

    def reversed(self):
        t0, t1 = self.domain
        return PiecewiseLinearPath((t0 + t1) - self.times[::-1], self.points[::-1])

    def restricted(self, s, t):
        """Knot sequence of the path clipped to [s, t] (endpoints included)."""
        self._check_time(s)
        self._check_time(t)
        if s > t:
            raise ValueError("need s <= t")
        if s == t:
            v = self.value(s)
            return np.array([s, s]), np.vstack([v, v])
        inner = (self.times > s) & (self.times < t)
        times = np.concatenate(([s], self.times[inner], [t]))
        points = np.vstack([self.value(s), self.points[inner], self.value(t)])
        return times, points

    def _check_time(self, t):
        t0, t1 = self.domain
        if t < t0 - 1e-12 or t > t1 + 1e-12:
            raise ValueError(f"time {t} outside domain [{t0}, {t1}]")

    @classmethod
    def from_csv(cls, path):
        """Load a path from CSV with header t,x1,...,xl."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0].strip() != "t":
                raise ValueError("path CSV must start with header t,x1,...,xl")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.asarray(rows)
        return cls(data[:, 0], data[:, 1:])

    @classmethod
    def random_walk(cls, width, knots, seed, scale=1.0, horizon=1.0):
        """Rescaled random walk on [0, horizon]; deterministic in the seed.

        Uses a counter-based generator so the same seed gives the same path
        on every platform.
        """
        rng = np.random.Generator(np.random.Philox(seed))
        dt = horizon / knots
        steps = rng.standard_normal((knots, width)) * np.sqrt(dt) * scale
        points = np.vstack([np.zeros(width), np.cumsum(steps, axis=0)])
        times = np.linspace(0.0, horizon, knots + 1)
        return cls(times, points)


def segment_signature(increment, depth):
    """Signature of one linear segment: exp of the level-1 increment."""
    return ta.exp_trunc(ta.from_level1(increment, depth))


class GeometricRoughPath:
    """Group-valued path evaluator backed by a piecewise-linear driver.

    Immutable after the prefix precompute; increment queries are pure and
    safe to issue concurrently.
    """

    def __init__(self, path, depth):
        self.path = path
        self.depth = int(depth)
        self.width = path.width
        self._prefix = [ta.unit(self.width, self.depth)]
        for k in range(len(path.times) - 1):
            seg = segment_signature(path.points[k + 1] - path.points[k], self.depth)
            self._prefix.append(ta.tensor_mul(self._prefix[-1], seg))

    @property
    def domain(self):
        return self.path.domain

    def _prefix_at(self, t):
        times = self.path.times
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 2)
        base = self._prefix[k]
        if t == times[k]:
            return base
        seg = segment_signature(self.path.value(t) - self.path.points[k], self.depth)
        return ta.tensor_mul(base, seg)

    def increment(self, s, t):
        """Signature increment X_{s,t} as a group tensor (requires s <= t)."""
        self.path._check_time(s)
        self.path._check_time(t)
        if s > t:
            raise ValueError("need s <= t")
        if s == t:
            return ta.unit(self.width, self.depth)
        out = ta.tensor_mul(ta.group_inverse(self._prefix_at(s)), self._prefix_at(t))
        out.levels[0][0] = 1.0
        return ta.GroupTensor(out.width, out.depth, out.levels)

    def log_increment(self, s, t):
        return ta.log_trunc(self.increment(s, t))


def lift(path, depth):
    """Canonical lift of a piecewise-linear path at the given depth."""
    return GeometricRoughPath(path, depth)


def dyadic_grid(domain, level):
    t0, t1 = domain
    return np.linspace(t0, t1, 2**level + 1)


def holder_ratio(rough_path, p, levels):
    """Sup of ||X_{s,t}|| / |t-s|^(1/p) over dyadic windows at the given levels."""
    best = 0.0
    for level in levels:
        grid = dyadic_grid(rough_path.domain, level)
        dt = grid[1] - grid[0]
        denom = dt ** (1.0 / p)
        for k in range(len(grid) - 1):
            norm = ta.homogeneous_norm(rough_path.increment(grid[k], grid[k + 1]))
            ratio = norm / denom
            if ratio > best:
                best = ratio
    return best
