"""Log-ODE scheme and Taylor-residual diagnostics for group-valued drivers.

A step advances the state by the time-1 flow of the vector field built from
the log of the signature increment, realized through Dynkin weights on
nested-commutator fields.  Residual operations measure how well a solution
path satisfies the truncated Taylor expansion, either in coordinates
(state residual) or against scalar observables (observable residual); the
flow-expansion gap compares the step map itself with the Taylor increment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from . import tensor_algebra as ta
from .differential_calculus import (
    BracketField,
    CombinationField,
    TaylorPoly,
    _apply_letter,
)

#: Residual magnitudes below this are treated as floating noise in order fits.
NOISE_FLOOR = 1e-13


class NumericalBlowupError(RuntimeError):
    """The inner integrator produced a non-finite state."""


@dataclass
class LogOdeConfig:
    """Inner-integrator policy: classical 4th-order one-step with substeps."""

    substeps: int = 8
    partition: np.ndarray | None = None

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.partition is not None:
            self.partition = np.asarray(self.partition, dtype=float)
            if len(self.partition) < 2 or not np.all(np.diff(self.partition) > 0):
                raise ValueError("partition must be strictly increasing")


def rk4_flow(field_value, x, substeps):
    """Time-1 flow of an autonomous field via classical RK4 substeps."""
    y = np.asarray(x, dtype=float).copy()
    h = 1.0 / substeps
    for _ in range(substeps):
        k1 = field_value(y)
        k2 = field_value(y + 0.5 * h * k1)
        k3 = field_value(y + 0.5 * h * k2)
        k4 = field_value(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise NumericalBlowupError("non-finite state during time-1 flow")
    return y


def log_ode_field(system, lam, lie_tol=ta.LIE_TOL):
    """Vector field of a Lie tensor via Dynkin weights on bracket fields.

    A word w of length k contributes lam_w / k times the right-nested
    commutator field of w, which realizes the bracket expansion of any Lie
    element without choosing a basis.  Rejects tensors failing the Lie test.
    """
    if lam.levels[0][0] != 0.0:
        raise ValueError("log-ODE field needs a tensor with zero scalar part")
    defect = ta.lie_defect(lam)
    if defect > lie_tol:
        raise ValueError(f"tensor fails the Lie test (defect {defect:.3e})")
    terms = []
    for k in range(1, lam.depth + 1):
        level = lam.levels[k]
        for idx in np.nonzero(level)[0]:
            word = ta.index_word(int(idx), k, lam.width)
            terms.append((level[idx] / k, BracketField(system, word)))
    return CombinationField(system.dim, terms)


def log_ode_step(system, lam, state, config):
    """One log-ODE step: time-1 flow of the field of the log increment."""
    field = log_ode_field(system, lam)
    if not field.terms:
        return np.asarray(state, dtype=float).copy()
    return rk4_flow(field.value, state, config.substeps)


class SolutionPath:
    """States on a partition with exact-time lookup."""

    def __init__(self, times, states):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)

    def at(self, t, atol=1e-9):
        idx = int(np.searchsorted(self.times, t))
        for k in (idx - 1, idx, idx + 1):
            if 0 <= k < len(self.times) and abs(self.times[k] - t) <= atol:
                return self.states[k]
        raise KeyError(f"time {t} is not a partition point of the solution")

    @property
    def endpoint(self):
        return self.states[-1]

    def __len__(self):
        return len(self.times)


def solve_rde(system, rough_path, partition=None, config=None, initial_state=None):
    """Compose log-ODE steps over a partition of the driver's domain."""
    config = config or LogOdeConfig()
    if partition is None:
        partition = config.partition
    if partition is None:
        raise ValueError("a partition is required")
    if initial_state is None:
        initial_state = np.zeros(system.dim)
    return solve_rde_from(system, rough_path, partition, initial_state, config)


def solve_rde_from(system, rough_path, partition, initial_state, config=None):
    config = config or LogOdeConfig()
    partition = np.asarray(partition, dtype=float)
    states = np.empty((len(partition), system.dim))
    states[0] = np.asarray(initial_state, dtype=float)
    for k in range(len(partition) - 1):
        lam = rough_path.log_increment(partition[k], partition[k + 1])
        states[k + 1] = log_ode_step(system, lam, states[k], config)
    return SolutionPath(partition, states)


# -- Taylor increments and residuals -------------------------------------------------


def signature_taylor_polys(system, increment, f, x):
    """sum over nonempty words of X^I (V_I f)(x), via a shared-prefix walk.

    Applying letters innermost-first means the letters applied so far, read
    in reverse, form the word whose coefficient multiplies the current jet.
    """
    x = np.asarray(x, dtype=float)
    depth = increment.depth
    cache = {}
    total = 0.0

    def walk(poly, letters):
        nonlocal total
        if len(letters) == depth:
            return
        for letter in range(1, increment.width + 1):
            applied = _apply_letter(system, letter, poly, x, cache)
            word = (letter,) + letters
            total += increment.coefficient(word) * applied.value()
            walk(applied, word)

    walk(f.taylor(x, depth), ())
    return total


def state_taylor_increment(system, increment, x):
    """Vector Taylor increment sum_{1<=|I|<=N} X^I V_I(x)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(system.dim)
    for axis in range(system.dim):
        coord = _CoordinateFunction(system.dim, axis)
        out[axis] = signature_taylor_polys(system, increment, coord, x)
    return out


class _CoordinateFunction:
    def __init__(self, dim, axis):
        self.dim = dim
        self.axis = axis

    def taylor(self, x, order):
        return TaylorPoly.coordinate(self.dim, self.axis, x, order)


def state_residual(system, solution, rough_path, s, t):
    """Coordinate Taylor remainder z_t - z_s - sum X^I V_I(z_s)."""
    z_s = solution.at(s)
    z_t = solution.at(t)
    increment = rough_path.increment(s, t)
    return z_t - z_s - state_taylor_increment(system, increment, z_s)


def observable_residual(system, f, solution, rough_path, s, t):
    """Observable Taylor remainder f(z_t) - f(z_s) - sum X^I (V_I f)(z_s)."""
    z_s = solution.at(s)
    z_t = solution.at(t)
    increment = rough_path.increment(s, t)
    head = signature_taylor_polys(system, increment, f, z_s)
    return f.taylor(z_t, 0).value() - f.taylor(z_s, 0).value() - head


def flow_expansion_gap(system, lam, increment, points, config=None):
    """Sup over sample points of |flow(x) - x - Taylor increment at x|.

    The flow is the time-1 map of the log field; the gap measures how far the
    step map sits from the truncated signature expansion.
    """
    config = config or LogOdeConfig()
    field = log_ode_field(system, lam)
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        if field.terms:
            flowed = rk4_flow(field.value, x, config.substeps)
        else:
            flowed = x.copy()
        gap = flowed - x - state_taylor_increment(system, increment, x)
        worst = max(worst, float(np.linalg.norm(gap)))
    return worst


def flow_composition_defect(system, rough_path, s, u, t, points, config=None):
    """Sup over sample points of |step_{u,t}(step_{s,u}(x)) - step_{s,t}(x)|."""
    config = config or LogOdeConfig()
    lam_su = rough_path.log_increment(s, u)
    lam_ut = rough_path.log_increment(u, t)
    lam_st = rough_path.log_increment(s, t)
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        two = log_ode_step(system, lam_ut, log_ode_step(system, lam_su, x, config), config)
        one = log_ode_step(system, lam_st, x, config)
        worst = max(worst, float(np.linalg.norm(two - one)))
    return worst


# -- order fitting ---------------------------------------------------------------


@dataclass
class ResidualReport:
    """Dyadic residual magnitudes with a fitted log-log slope."""

    scales: np.ndarray
    values: np.ndarray
    slope: float | None
    r_squared: float | None
    n_used: int
    below_noise_floor: bool
    kind: str = ""
    f_id: str = ""

    def to_dict(self):
        return {
            "kind": self.kind,
            "f_id": self.f_id,
            "scales": [float(s) for s in self.scales],
            "values": [float(v) for v in self.values],
            "slope": None if self.slope is None else float(self.slope),
            "r_squared": None if self.r_squared is None else float(self.r_squared),
            "n_used": self.n_used,
            "below_noise_floor": self.below_noise_floor,
        }


def fit_order(scales, values, noise_floor=NOISE_FLOOR, kind="", f_id=""):
    """Least-squares slope of log(value) against log(scale).

    Scales whose residual sits at or below the noise floor are excluded; if
    fewer than two scales survive, the report is flagged instead of fitted.
    """
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    if scales.shape != values.shape:
        raise ValueError("scales and values must align")
    mask = values > noise_floor
    if int(mask.sum()) < 2:
        return ResidualReport(
            scales, values, None, None, int(mask.sum()), True, kind=kind, f_id=f_id
        )
    fit = linregress(np.log(scales[mask]), np.log(values[mask]))
    return ResidualReport(
        scales,
        values,
        float(fit.slope),
        float(fit.rvalue**2),
        int(mask.sum()),
        False,
        kind=kind,
        f_id=f_id,
    )
