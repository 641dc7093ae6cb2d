"""Tree-indexed lifts of piecewise-linear drivers and synthetic level-2 data.

Tree coefficients follow the integral recursion: a single node carries the
component increment, and a tree integrates the product of its children's
coefficient functions against the root component.  For piecewise-linear
drivers every integrand is a polynomial in the running time, so segment-wise
antiderivatives make the lift exact; forest coefficients extend tree values
multiplicatively, producing characters of the forest algebra.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as npoly

from .tree_hopf import (
    BranchedGroupElement,
    convolution,
    dual_inverse,
    enumerate_trees,
    grouplike_check,
    parse_tree,
)


def tree_increments(path, grade, s, t):
    """Exact per-tree coefficients over [s, t] for all trees of size <= grade.

    Piecewise-polynomial integration, segment by segment: on each segment the
    coefficient function of a tree (as a function of the running upper time,
    with the base time fixed at s) is a polynomial, and composite trees
    integrate products of child polynomials against the root slope.
    """
    times, points = path.restricted(s, t)
    widths = np.diff(times)
    if np.any(widths == 0.0):
        # degenerate s == t window
        return {tree: 0.0 for tree in enumerate_trees(grade, path.width)}
    slopes = (points[1:] - points[:-1]) / widths[:, None]
    n_seg = len(widths)
    trees = enumerate_trees(grade, path.width)

    # piecewise[tree][k] = coefficients (in the local segment variable) of the
    # running coefficient function on segment k; values[tree] = value at t.
    piecewise = {}
    values = {}
    for tree in trees:
        a = tree.label - 1
        if not tree.children:
            polys = []
            for k in range(n_seg):
                start = points[k, a] - points[0, a]
                polys.append(np.array([start, slopes[k, a]]))
        else:
            polys = []
            acc = 0.0
            for k in range(n_seg):
                integrand = np.array([slopes[k, a]])
                for child in tree.children:
                    integrand = npoly.polymul(integrand, piecewise[child][k])
                anti = npoly.polyint(integrand)
                anti[0] = acc
                polys.append(anti)
                acc = npoly.polyval(widths[k], anti)
        piecewise[tree] = polys
        values[tree] = npoly.polyval(widths[-1], polys[-1])
    return values


class BranchedRoughPath:
    """Character-valued increment evaluator on a time domain."""

    width: int
    grade: int

    def increment(self, s, t):
        raise NotImplementedError

    def log_increment(self, s, t):
        from .tree_hopf import log_star

        return log_star(self.increment(s, t))

    @property
    def domain(self):
        raise NotImplementedError


class LiftedBranchedPath(BranchedRoughPath):
    """Exact branched lift of a piecewise-linear driver; increments memoized."""

    def __init__(self, path, grade):
        self.path = path
        self.grade = int(grade)
        self.width = path.width
        self._memo = {}

    @property
    def domain(self):
        return self.path.domain

    def increment(self, s, t):
        self.path._check_time(s)
        self.path._check_time(t)
        if s > t:
            raise ValueError("need s <= t")
        key = (float(s), float(t))
        hit = self._memo.get(key)
        if hit is None:
            values = tree_increments(self.path, self.grade, s, t)
            hit = BranchedGroupElement.from_tree_values(self.width, self.grade, values)
            self._memo[key] = hit
        return hit


def branched_lift(path, grade):
    """Branched lift of a piecewise-linear path at the given grade cap."""
    return LiftedBranchedPath(path, grade)


def chen_star_increment(element_s, element_t):
    """Increment between two prefix characters: inverse(first) star second."""
    product = convolution(dual_inverse(element_s), element_t)
    return BranchedGroupElement.from_series(product)


class SyntheticLevel2(BranchedRoughPath):
    """Non-geometric level-2 branched path over a piecewise-linear base.

    Single-node coefficients are base increments; a two-node tree carries the
    exact iterated integral of the base plus a drift c * (t - s) on equal
    labels.  The drift is additive over adjacent intervals, so the star-Chen
    identity survives, while the symmetric-part identity satisfied by
    geometric lifts fails by 2c(t - s) on the diagonal.
    """

    def __init__(self, path, drift, area=None):
        self.path = path
        self.drift = float(drift)
        self.width = path.width
        self.grade = 2
        self._area = area
        self._memo = {}

    @property
    def domain(self):
        return self.path.domain

    def increment(self, s, t):
        self.path._check_time(s)
        self.path._check_time(t)
        if s > t:
            raise ValueError("need s <= t")
        key = (float(s), float(t))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if self._area is None:
            values = tree_increments(self.path, 2, s, t)
        else:
            values = dict(tree_increments(self.path, 1, s, t))
            area = np.asarray(self._area(s, t), dtype=float)
            for a in range(1, self.width + 1):
                for b in range(1, self.width + 1):
                    chain = parse_tree(f"{a}[{b}]")
                    values[chain] = float(area[a - 1, b - 1])
        if self.drift != 0.0:
            for a in range(1, self.width + 1):
                chain = parse_tree(f"{a}[{a}]")
                values[chain] = values[chain] + self.drift * (t - s)
        hit = BranchedGroupElement.from_tree_values(self.width, 2, values)
        self._memo[key] = hit
        return hit


def synthetic_level2(path, drift, area=None):
    """Level-2 branched data with an Ito-like diagonal drift (grade cap 2)."""
    return SyntheticLevel2(path, drift, area=area)


def symmetric_part_defect(rough_path, s, t):
    """Max deviation from the geometric symmetric-part identity.

    Geometric lifts satisfy X^{b under a} + X^{a under b} = X^a X^b for the
    two-node trees; synthetic drift data violates it on the diagonal.
    """
    element = rough_path.increment(s, t)
    width = rough_path.width
    worst = 0.0
    for a in range(1, width + 1):
        for b in range(a, width + 1):
            chain_ab = element.coefficient(_forest(f"{a}[{b}]"))
            chain_ba = element.coefficient(_forest(f"{b}[{a}]"))
            inc_a = element.coefficient(_forest(str(a)))
            inc_b = element.coefficient(_forest(str(b)))
            defect = abs(chain_ab + chain_ba - inc_a * inc_b)
            worst = max(worst, defect)
    return worst


def _forest(text):
    from .tree_hopf import Forest

    return Forest((parse_tree(text),))


def lift_ode_check(path, grade, t, step, s=0.0):
    """Central-difference check of the prefix-character evolution equation.

    Compares d/dt of the increment coefficients with the star product against
    the single-node duals weighted by the driver slope; t must sit strictly
    inside a path segment at distance > step from its knots.
    """
    from .tree_hopf import TreeSeries, dual_basis, enumerate_forests

    lifted = branched_lift(path, grade)
    plus = lifted.increment(s, t + step)
    minus = lifted.increment(s, t - step)
    middle = lifted.increment(s, t)
    slope = path.slope(t)
    expected = TreeSeries(path.width, grade, {})
    for a in range(1, path.width + 1):
        if slope[a - 1] == 0.0:
            continue
        term = convolution(middle, dual_basis(parse_tree(str(a)), path.width, grade))
        expected = expected + term.scale(slope[a - 1])
    worst = 0.0
    for forest in enumerate_forests(grade, path.width):
        if forest.grade == 0:
            continue
        numeric = (plus.coefficient(forest) - minus.coefficient(forest)) / (2 * step)
        worst = max(worst, abs(numeric - expected.coefficient(forest)))
    return worst


def branched_norm(rough_path, p, levels):
    """Max over forests of sup |X^phi_{ts}| / |t-s|^(grade/p) on dyadic windows."""
    t0, t1 = rough_path.domain
    worst = 0.0
    for level in levels:
        grid = np.linspace(t0, t1, 2**level + 1)
        dt = grid[1] - grid[0]
        for k in range(len(grid) - 1):
            element = rough_path.increment(grid[k], grid[k + 1])
            for forest, value in element.coeffs.items():
                if forest.grade == 0:
                    continue
                ratio = abs(value) / dt ** (forest.grade / p)
                worst = max(worst, ratio)
    return worst


def branched_distance(first, second, p, levels):
    """Distance between branched paths: the norm of the coefficient difference."""
    t0, t1 = first.domain
    worst = 0.0
    for level in levels:
        grid = np.linspace(t0, t1, 2**level + 1)
        dt = grid[1] - grid[0]
        for k in range(len(grid) - 1):
            a = first.increment(grid[k], grid[k + 1])
            b = second.increment(grid[k], grid[k + 1])
            diff = a - b
            for forest, value in diff.coeffs.items():
                if forest.grade == 0:
                    continue
                worst = max(worst, abs(value) / dt ** (forest.grade / p))
    return worst
