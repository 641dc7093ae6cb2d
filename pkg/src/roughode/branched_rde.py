"""Flows and Taylor residuals for equations driven by branched rough paths.

A step advances the state by the time-1 flow of the vector field assembled
from the tree-supported log of the increment character.  Residuals measure
the forest Taylor expansion of a solution path, in coordinates or against
observables; the flow-expansion gap and the composition defect quantify how
close the step maps sit to the expansion and to an exact flow.
"""

from __future__ import annotations

import numpy as np

from .differential_calculus import (
    CombinationField,
    TestFunction,
    TreeField,
    forest_operator_apply,
)
from .geometric_rde import LogOdeConfig, SolutionPath, rk4_flow
from .tree_hopf import TreeSeries, log_star

#: Largest proper-forest residue silently dropped when projecting a log onto trees.
TREE_PROJECTION_TOL = 1e-8


class TreeSupportError(ValueError):
    """A series expected on single trees carries proper-forest mass."""


def tree_projection(series, tol=TREE_PROJECTION_TOL):
    """Restrict a series to single-tree support, rejecting large residue.

    Logs of group-like elements are tree-supported up to floating error; the
    residue is dropped when below tol because only tree coefficients define a
    vector field.
    """
    defect = max(abs(series.unit_coefficient), series.proper_forest_mass())
    if defect > tol:
        raise TreeSupportError(
            f"proper-forest mass {defect:.3e} exceeds tolerance {tol:.1e}"
        )
    coeffs = {
        forest: value for forest, value in series.coeffs.items() if len(forest) == 1
    }
    return TreeSeries(series.width, series.grade_cap, coeffs), defect


def branched_field(system, lam):
    """Vector field of a tree-supported series: sum of weighted tree fields.

    The empty forest never contributes (its field is zero by convention).
    """
    lam, _ = tree_projection(lam)
    terms = [
        (value, TreeField(system, forest.trees[0]))
        for forest, value in lam.coeffs.items()
    ]
    return CombinationField(system.dim, terms)


def flow_step(system, increment, state, config=None):
    """One branched step: time-1 flow of the field of log-star increment."""
    config = config or LogOdeConfig()
    field = branched_field(system, log_star(increment))
    if not field.terms:
        return np.asarray(state, dtype=float).copy()
    return rk4_flow(field.value, state, config.substeps)


def solve_branched_rde(system, rough_path, partition, config=None, initial_state=None):
    """Compose branched flow steps over a partition."""
    config = config or LogOdeConfig()
    partition = np.asarray(partition, dtype=float)
    if initial_state is None:
        initial_state = np.zeros(system.dim)
    states = np.empty((len(partition), system.dim))
    states[0] = np.asarray(initial_state, dtype=float)
    for k in range(len(partition) - 1):
        increment = rough_path.increment(partition[k], partition[k + 1])
        states[k + 1] = flow_step(system, increment, states[k], config)
    return SolutionPath(partition, states)


# -- forest Taylor increments --------------------------------------------------------


def forest_taylor_scalar(system, increment, f, x):
    """sum over all forests (including the empty one) of X^phi (V(phi*) f)(x)."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for forest, value in increment.coeffs.items():
        total += value * forest_operator_apply(system, forest, f, x)
    return total


def forest_taylor_state(system, increment, x):
    """Vector forest Taylor increment over nonempty forests, at x."""
    x = np.asarray(x, dtype=float)
    out = np.empty(system.dim)
    for axis in range(system.dim):
        coord = TestFunction.coordinate(system.dim, axis)
        head = 0.0
        for forest, value in increment.coeffs.items():
            if forest.grade == 0:
                continue
            head += value * forest_operator_apply(system, forest, coord, x)
        out[axis] = head
    return out


def state_residual(system, solution, rough_path, s, t):
    """Coordinate forest-Taylor remainder of a solution path over [s, t]."""
    z_s = solution.at(s)
    z_t = solution.at(t)
    increment = rough_path.increment(s, t)
    return z_t - z_s - forest_taylor_state(system, increment, z_s)


def observable_residual(system, f, solution, rough_path, s, t):
    """Observable forest-Taylor remainder of a solution path over [s, t]."""
    z_s = solution.at(s)
    z_t = solution.at(t)
    increment = rough_path.increment(s, t)
    head = 0.0
    for forest, value in increment.coeffs.items():
        if forest.grade == 0:
            continue
        head += value * forest_operator_apply(system, forest, f, z_s)
    return f.taylor(z_t, 0).value() - f.taylor(z_s, 0).value() - head


def flow_expansion_gap(system, increment, f, points, config=None):
    """Sup over points of |f(flow(x)) - sum X^phi (V(phi*) f)(x)|.

    The sum runs over every stored forest; the empty forest contributes
    f(x) itself via the counit pairing.
    """
    config = config or LogOdeConfig()
    field = branched_field(system, log_star(increment))
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        flowed = rk4_flow(field.value, x, config.substeps) if field.terms else x.copy()
        expansion = forest_taylor_scalar(system, increment, f, x)
        worst = max(worst, abs(f.taylor(flowed, 0).value() - expansion))
    return worst


def flow_composition_defect(system, rough_path, s, u, t, points, config=None):
    """Sup over points of |step_{u,t}(step_{s,u}(x)) - step_{s,t}(x)|."""
    config = config or LogOdeConfig()
    inc_su = rough_path.increment(s, u)
    inc_ut = rough_path.increment(u, t)
    inc_st = rough_path.increment(s, t)
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        two = flow_step(system, inc_ut, flow_step(system, inc_su, x, config), config)
        one = flow_step(system, inc_st, x, config)
        worst = max(worst, float(np.linalg.norm(two - one)))
    return worst
