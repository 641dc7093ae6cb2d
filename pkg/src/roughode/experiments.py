"""Experiment orchestration: configs, drivers, residual sweeps, reports.

Everything here is deterministic given the config and seed: drivers are built
from a counter-based generator, sweeps iterate in fixed order, and CSV/JSON
emission uses shortest-roundtrip float formatting, so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import branched_rde as br
from . import branched_signature as bs
from . import differential_calculus as dc
from . import geometric_rde as gr
from . import geometric_signature as gs
from . import tree_hopf as th

DEFAULT_THRESHOLDS = {
    "slope_min": 1.0,
    "r2_min": 0.95,
    "agreement": 0.3,
    "flow_gap_slope_min": 1.0,
}

_EXP_WEIGHTS = [0.3, -0.2, 0.25, -0.15]
_SIN_WEIGHTS = [0.5, 0.4, -0.3, 0.2]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    theory: str
    p: float
    depth: int
    driver: dict
    field: dict
    levels: tuple[int, int]
    fine_level: int
    substeps: int = 8
    battery: list[str] = dataclass_field(default_factory=lambda: ["coords", "sumsq"])
    seed: int = 0
    initial_state: list[float] | None = None
    sample_points: int = 2
    gap_levels: tuple[int, int] | None = None
    thresholds: dict = dataclass_field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        if self.theory not in ("geometric", "branched"):
            raise ConfigError(f"unknown theory {self.theory!r}")
        if self.depth != math.floor(self.p):
            raise ConfigError(
                f"depth must equal floor(p): got depth={self.depth}, p={self.p}"
            )
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        jmin, jmax = self.levels
        if not (1 <= jmin <= jmax):
            raise ConfigError("levels must satisfy 1 <= jmin <= jmax")
        if self.fine_level < jmax:
            raise ConfigError("fine_level must be at least the largest sweep level")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if self.sample_points < 1:
            raise ConfigError("sample_points must be >= 1")
        if self.gap_levels is None:
            self.gap_levels = (jmin, min(jmax, 6))
        kind = self.driver.get("kind")
        if kind not in ("fourier", "walk", "csv", "synthetic_level2"):
            raise ConfigError(f"unknown driver kind {kind!r}")
        if kind == "synthetic_level2":
            if self.theory != "branched":
                raise ConfigError("synthetic_level2 drivers need theory=branched")
            if self.depth != 2:
                raise ConfigError("synthetic_level2 drivers need depth 2")
        merged = dict(DEFAULT_THRESHOLDS)
        merged.update(self.thresholds)
        self.thresholds = merged


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def config_from_dict(raw, base_dir="."):
    known = {
        "theory", "p", "depth", "driver", "field", "levels", "fine_level",
        "substeps", "battery", "seed", "initial_state", "sample_points",
        "gap_levels", "thresholds",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(
            theory=raw["theory"],
            p=float(raw["p"]),
            depth=int(raw["depth"]),
            driver=dict(raw["driver"]),
            field=dict(raw["field"]),
            levels=tuple(int(j) for j in raw["levels"]),
            fine_level=int(raw.get("fine_level", max(raw["levels"]) + 2)),
            substeps=int(raw.get("substeps", 8)),
            battery=list(raw.get("battery", ["coords", "sumsq"])),
            seed=int(raw.get("seed", 0)),
            initial_state=raw.get("initial_state"),
            sample_points=int(raw.get("sample_points", 2)),
            gap_levels=(
                tuple(int(j) for j in raw["gap_levels"])
                if "gap_levels" in raw
                else None
            ),
            thresholds=dict(raw.get("thresholds", {})),
            base_dir=base_dir,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from exc
    return cfg


# -- drivers and fields --------------------------------------------------------------


def fourier_path(width, knots, seed, harmonics=4, amplitude=0.5, horizon=1.0):
    """Smooth deterministic driver: seeded low-order trigonometric polynomial."""
    rng = np.random.Generator(np.random.Philox(seed))
    times = np.linspace(0.0, horizon, knots + 1)
    points = np.zeros((knots + 1, width))
    for j in range(width):
        coeff_sin = rng.standard_normal(harmonics)
        coeff_cos = rng.standard_normal(harmonics)
        drift = rng.standard_normal()
        col = drift * amplitude * times / horizon
        for k in range(1, harmonics + 1):
            arg = 2.0 * np.pi * k * times / horizon
            col = col + amplitude / k * (
                coeff_sin[k - 1] * np.sin(arg) + coeff_cos[k - 1] * (np.cos(arg) - 1.0)
            )
        points[:, j] = col
    return gs.PiecewiseLinearPath(times, points)


def build_base_path(driver, seed):
    kind = driver["kind"]
    if kind == "csv":
        return gs.PiecewiseLinearPath.from_csv(driver["path"])
    if kind == "fourier":
        return fourier_path(
            int(driver.get("width", 2)),
            int(driver.get("knots", 256)),
            int(driver.get("seed", seed)),
            harmonics=int(driver.get("harmonics", 4)),
            amplitude=float(driver.get("amplitude", 0.5)),
        )
    if kind == "walk":
        return gs.PiecewiseLinearPath.random_walk(
            int(driver.get("width", 2)),
            int(driver.get("knots", 256)),
            int(driver.get("seed", seed)),
            scale=float(driver.get("scale", 0.5)),
        )
    raise ConfigError(f"driver kind {kind!r} has no base path")


def build_driver(cfg):
    """Returns (piecewise-linear base path, rough-path evaluator)."""
    driver = dict(cfg.driver)
    if driver["kind"] == "synthetic_level2":
        base = build_base_path(dict(driver["base"]), cfg.seed)
        rough = bs.synthetic_level2(base, float(driver.get("c", 0.0)))
        return base, rough
    if driver["kind"] == "csv":
        driver["path"] = os.path.join(cfg.base_dir, driver["path"])
    base = build_base_path(driver, cfg.seed)
    if cfg.theory == "geometric":
        return base, gs.lift(base, cfg.depth)
    return base, bs.branched_lift(base, cfg.depth)


def build_fields(cfg):
    spec = cfg.field
    if "path" in spec:
        path = os.path.join(cfg.base_dir, spec["path"])
        if not os.path.exists(path):
            raise ConfigError(f"field file does not exist: {path}")
        return dc.VectorFieldSystem.load(path)
    if "inline" in spec:
        return dc.VectorFieldSystem.from_json_dict(spec["inline"])
    raise ConfigError("field spec needs 'path' or 'inline'")


def battery_functions(ids, dim):
    """Ordered observable battery; 'coords' expands to one function per axis."""
    out = []
    for name in ids:
        if name == "coords":
            out.extend(dc.TestFunction.coordinate(dim, j) for j in range(dim))
        elif name == "sumsq":
            out.append(dc.TestFunction.squared_norm(dim))
        elif name == "expfn":
            out.append(dc.TestFunction.exponential(_EXP_WEIGHTS[:dim]))
        elif name == "sinfn":
            out.append(dc.TestFunction.sinusoid(_SIN_WEIGHTS[:dim], phase=0.3))
        else:
            raise ConfigError(f"unknown battery function {name!r}")
    return out


# -- sweeps -----------------------------------------------------------------------


def _dyadic_windows(domain, level):
    grid = np.linspace(domain[0], domain[1], 2**level + 1)
    return [(grid[k], grid[k + 1]) for k in range(len(grid) - 1)]


def _sample_states(solution, count):
    idx = np.unique(np.round(np.linspace(0, len(solution) - 1, count)).astype(int))
    return [solution.states[i] for i in idx]


@dataclass
class ExperimentResult:
    rows: list
    reports: dict
    passed: bool
    failures: list

    def report_dict(self, cfg):
        return {
            "theory": cfg.theory,
            "p": cfg.p,
            "depth": cfg.depth,
            "seed": cfg.seed,
            "thresholds": cfg.thresholds,
            "slopes": {
                f"{kind}/{f_id}": rep.to_dict()
                for (kind, f_id), rep in sorted(self.reports.items())
            },
            "passed": self.passed,
            "failures": self.failures,
        }


def _solve(cfg, system, rough):
    partition = np.linspace(*rough.domain, 2**cfg.fine_level + 1)
    ode_config = gr.LogOdeConfig(substeps=cfg.substeps)
    state0 = cfg.initial_state if cfg.initial_state is not None else np.zeros(system.dim)
    if cfg.theory == "geometric":
        solution = gr.solve_rde(system, rough, partition, ode_config, initial_state=state0)
    else:
        solution = br.solve_branched_rde(
            system, rough, partition, ode_config, initial_state=state0
        )
    return solution, ode_config


def _residual_sweep(cfg, system, rough, solution, functions):
    """Max Taylor remainders over dyadic windows, per scale and observable."""
    jmin, jmax = cfg.levels
    if cfg.theory == "geometric":
        state_res = gr.state_residual
        obs_res = gr.observable_residual
    else:
        state_res = br.state_residual
        obs_res = br.observable_residual
    rows = []
    series = {"state": ([], [])}
    for f in functions:
        series[f.name] = ([], [])
    for level in range(jmin, jmax + 1):
        windows = _dyadic_windows(rough.domain, level)
        scale = windows[0][1] - windows[0][0]
        worst_state = 0.0
        worst_obs = {f.name: 0.0 for f in functions}
        for s, t in windows:
            worst_state = max(
                worst_state,
                float(np.linalg.norm(state_res(system, solution, rough, s, t))),
            )
            for f in functions:
                worst_obs[f.name] = max(
                    worst_obs[f.name],
                    abs(obs_res(system, f, solution, rough, s, t)),
                )
        series["state"][0].append(scale)
        series["state"][1].append(worst_state)
        rows.append((scale, "state", "state", worst_state))
        for f in functions:
            series[f.name][0].append(scale)
            series[f.name][1].append(worst_obs[f.name])
            rows.append((scale, "observable", f.name, worst_obs[f.name]))
    reports = {}
    reports[("state", "state")] = gr.fit_order(*series["state"], kind="state", f_id="state")
    for f in functions:
        reports[("observable", f.name)] = gr.fit_order(
            *series[f.name], kind="observable", f_id=f.name
        )
    return rows, reports


def _gap_sweep(cfg, system, rough, solution, ode_config, gap_functions):
    """Flow-expansion gaps per dyadic scale (vector form for geometric drivers)."""
    jmin, jmax = cfg.gap_levels
    points = _sample_states(solution, cfg.sample_points)
    rows = []
    reports = {}
    scales = []
    if cfg.theory == "geometric":
        values = []
        for level in range(jmin, jmax + 1):
            windows = _dyadic_windows(rough.domain, level)
            scale = windows[0][1] - windows[0][0]
            worst = 0.0
            for s, t in windows:
                lam = rough.log_increment(s, t)
                inc = rough.increment(s, t)
                worst = max(
                    worst, gr.flow_expansion_gap(system, lam, inc, points, ode_config)
                )
            scales.append(scale)
            values.append(worst)
            rows.append((scale, "flow_gap", "state", worst))
        reports[("flow_gap", "state")] = gr.fit_order(
            scales, values, kind="flow_gap", f_id="state"
        )
        return rows, reports
    values = {f.name: [] for f in gap_functions}
    for level in range(jmin, jmax + 1):
        windows = _dyadic_windows(rough.domain, level)
        scale = windows[0][1] - windows[0][0]
        worst = {f.name: 0.0 for f in gap_functions}
        for s, t in windows:
            inc = rough.increment(s, t)
            field = br.branched_field(system, th.log_star(inc))
            for x in points:
                x = np.asarray(x, dtype=float)
                flowed = (
                    gr.rk4_flow(field.value, x, ode_config.substeps)
                    if field.terms
                    else x.copy()
                )
                for f in gap_functions:
                    expansion = br.forest_taylor_scalar(system, inc, f, x)
                    gap = abs(f.taylor(flowed, 0).value() - expansion)
                    worst[f.name] = max(worst[f.name], gap)
        scales.append(scale)
        for f in gap_functions:
            values[f.name].append(worst[f.name])
            rows.append((scale, "flow_gap", f.name, worst[f.name]))
    for f in gap_functions:
        reports[("flow_gap", f.name)] = gr.fit_order(
            scales, values[f.name], kind="flow_gap", f_id=f.name
        )
    return rows, reports


def _defect_sweep(cfg, system, rough, solution, ode_config):
    """Two-step versus one-step composition defect per dyadic scale."""
    jmin, jmax = cfg.gap_levels
    points = _sample_states(solution, cfg.sample_points)
    defect_fn = (
        gr.flow_composition_defect
        if cfg.theory == "geometric"
        else br.flow_composition_defect
    )
    rows = []
    scales, values = [], []
    for level in range(jmin, jmax + 1):
        windows = _dyadic_windows(rough.domain, level)
        scale = windows[0][1] - windows[0][0]
        worst = 0.0
        for s, t in windows:
            u = 0.5 * (s + t)
            worst = max(
                worst, defect_fn(system, rough, s, u, t, points, ode_config)
            )
        scales.append(scale)
        values.append(worst)
        rows.append((scale, "flow_defect", "state", worst))
    report = gr.fit_order(scales, values, kind="flow_defect", f_id="state")
    return rows, {("flow_defect", "state"): report}


# -- experiment runners ----------------------------------------------------------------


def _evaluate_thresholds(cfg, reports):
    """Pass/fail bookkeeping for fitted slopes against the config thresholds."""
    thr = cfg.thresholds
    failures = []
    state_report = reports.get(("state", "state"))

    def check(key, rep, slope_min):
        if rep.below_noise_floor:
            failures.append(f"{key}: below noise floor, no slope")
            return
        if rep.slope is None or rep.slope <= slope_min:
            failures.append(f"{key}: slope {rep.slope} <= {slope_min}")
        if rep.r_squared is None or rep.r_squared < thr["r2_min"]:
            failures.append(f"{key}: r2 {rep.r_squared} < {thr['r2_min']}")

    for (kind, f_id), rep in sorted(reports.items()):
        key = f"{kind}/{f_id}"
        if kind in ("state", "observable"):
            check(key, rep, thr["slope_min"])
            if (
                kind == "observable"
                and state_report is not None
                and rep.slope is not None
                and state_report.slope is not None
                and abs(rep.slope - state_report.slope) > thr["agreement"]
            ):
                failures.append(
                    f"{key}: slope {rep.slope:.3f} differs from state slope "
                    f"{state_report.slope:.3f} by more than {thr['agreement']}"
                )
        elif kind in ("flow_gap", "flow_defect"):
            check(key, rep, thr["flow_gap_slope_min"])
    return failures


def _all_below_noise(reports):
    return all(rep.below_noise_floor for rep in reports.values())


def run_residuals(cfg):
    """Residual-order experiment: Taylor remainders plus flow-expansion gaps."""
    system = build_fields(cfg)
    _, rough = build_driver(cfg)
    functions = battery_functions(cfg.battery, system.dim)
    solution, ode_config = _solve(cfg, system, rough)
    rows, reports = _residual_sweep(cfg, system, rough, solution, functions)
    gap_functions = [
        dc.TestFunction.coordinate(system.dim, 0),
        dc.TestFunction.squared_norm(system.dim),
    ]
    gap_rows, gap_reports = _gap_sweep(
        cfg, system, rough, solution, ode_config, gap_functions
    )
    rows.extend(gap_rows)
    reports.update(gap_reports)
    if _all_below_noise(reports):
        return ExperimentResult(rows, reports, True, ["below noise floor"])
    failures = _evaluate_thresholds(cfg, reports)
    return ExperimentResult(rows, reports, not failures, failures)


def run_equivalence(cfg):
    """State-versus-observable slope comparison over the battery."""
    system = build_fields(cfg)
    _, rough = build_driver(cfg)
    functions = battery_functions(cfg.battery, system.dim)
    solution, _ = _solve(cfg, system, rough)
    rows, reports = _residual_sweep(cfg, system, rough, solution, functions)
    if _all_below_noise(reports):
        return ExperimentResult(rows, reports, True, ["below noise floor"])
    failures = _evaluate_thresholds(cfg, reports)
    return ExperimentResult(rows, reports, not failures, failures)


def run_flow_check(cfg):
    """Approximate-flow composition defect experiment."""
    system = build_fields(cfg)
    _, rough = build_driver(cfg)
    solution, ode_config = _solve(cfg, system, rough)
    rows, reports = _defect_sweep(cfg, system, rough, solution, ode_config)
    if _all_below_noise(reports):
        return ExperimentResult(rows, reports, True, ["below noise floor"])
    failures = _evaluate_thresholds(cfg, reports)
    return ExperimentResult(rows, reports, not failures, failures)


def run_solve(cfg):
    """Plain solve on the fine partition; returns the solution path."""
    system = build_fields(cfg)
    _, rough = build_driver(cfg)
    solution, _ = _solve(cfg, system, rough)
    return solution


# -- output ------------------------------------------------------------------------


def format_float(x):
    return repr(float(x))


def write_residual_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("scale,kind,f_id,max_residual\n")
        for scale, kind, f_id, value in rows:
            fh.write(f"{format_float(scale)},{kind},{f_id},{format_float(value)}\n")


def write_solution_csv(solution, path):
    dim = solution.states.shape[1]
    header = ",".join(["t"] + [f"z{j + 1}" for j in range(dim)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, state in zip(solution.times, solution.states):
            cells = [format_float(t)] + [format_float(v) for v in state]
            fh.write(",".join(cells) + "\n")


def write_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
