"""Density approximation examples and the Monte-Carlo localization study.

Every random draw flows from ``ScenarioConfig.seed``: run ``r`` derives its own
streams from ``SeedSequence(seed, spawn_key=(r,))``, so results do not depend
on execution order or on which other filters are selected.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy.signal import find_peaks

from .baselines import (
    KalmanState,
    ParticleEnsemble,
    effective_sample_size,
    kalman_correct,
    kalman_predict,
    pf_propagate,
    pf_weight,
    systematic_resample,
    weighted_mean,
)
from .bayes_filter import (
    SystemModel,
    ThetaRule,
    filter_step,
    initial_state,
    measurement_update,
    time_update_oracle,
)
from .densities import (
    Density,
    Gaussian,
    GaussianMixture,
    GenLogisticMixture,
    GridDensity,
    Gumbel,
    LaplaceMixture,
    Uniform,
)
from .errors import PLFilterError
from .moments import log_moments_from_log_values, power_moments
from .quadrature import GridFunction, GridSpec, integrate
from .solver import SolverOptions, SurrogateParams, solve, solve_power_only

__all__ = [
    "FILTERS",
    "OUTPUT_DIR_ENV",
    "SolverSettings",
    "LocalizationModel",
    "ScenarioConfig",
    "RunReport",
    "example_density",
    "count_interior_maxima",
    "run_approx_example",
    "run_localization",
    "emit",
    "load_config",
]

FILTERS = ("kf", "pf", "dpbm", "dppm", "oracle")
OUTPUT_DIR_ENV = "PLFILTER_OUT"

# target density and reference density for each approximation example
_EXAMPLES = {
    1: (lambda: GaussianMixture([0.5, 0.5], [2.0, -2.0], [1.0, 1.0]), Gaussian(0.0, 25.0)),
    2: (lambda: GenLogisticMixture([0.4, 0.6], [2.0, -2.0], [2.0, 3.0]),
        Gaussian(0.90, 5.86**2)),
    3: (lambda: LaplaceMixture([0.3, 0.7], [1.0, -1.0], [2.0, 2.0]), Gaussian(-0.4, 1.5**2)),
}
_DEFAULT_BOUNDS = {"approx": (-20.0, 20.0), "localize": (-15.0, 10.0)}


@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 500
    grad_tol: float = 1e-6
    armijo_slope: float = 1e-4
    backtrack: float = 0.5

    def options(self) -> SolverOptions:
        return SolverOptions(max_iters=self.max_iters, grad_tol=self.grad_tol,
                             armijo_slope=self.armijo_slope, backtrack=self.backtrack)


@dataclass(frozen=True)
class LocalizationModel:
    """Robot on a line moving one unit per step toward a landmark.

    The signed distance ``z = x - landmark + v`` is observed with Gumbel noise
    ``v``; the Kalman baseline replaces ``v`` by ``N(0, kf_obs_sd^2)``.
    """

    start: float = -7.0
    init_mean_sd: float = 1.0
    init_var: float = 1.0
    landmark: float = 0.0
    drift: float = 1.0
    process_sd: float = 0.03
    obs_scale: float = 0.25
    kf_obs_sd: float = 0.35
    pf_low: float = -8.0
    pf_high: float = 8.0

    def system(self) -> SystemModel:
        return SystemModel(f=1.0, h=1.0, eta=Gaussian(0.0, self.process_sd**2),
                           eps=Gumbel(self.obs_scale), drift=self.drift)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one experiment.

    Grid bounds default per scenario when left as None.
    """

    scenario: str = "localize"
    example: int = 1
    order: int = 4
    xmin: float | None = None
    xmax: float | None = None
    nodes: int = 2001
    runs: int = 50
    steps: int = 13
    seed: int = 20240601
    filters: tuple[str, ...] = ("kf", "pf", "dpbm")
    particles: int = 5000
    resample: str = "always"
    dpbm_variance_factor: float = 1.0
    dppm_variance_factor: float = 4.0
    workers: int = 1
    out: str = "results"
    format: str = "both"
    solver: SolverSettings = field(default_factory=SolverSettings)
    model: LocalizationModel = field(default_factory=LocalizationModel)

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        if self.scenario not in _DEFAULT_BOUNDS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.example not in _EXAMPLES:
            raise ValueError(f"example must be 1, 2 or 3, got {self.example}")
        if self.order < 2 or self.order % 2:
            raise ValueError("order must be even and at least 2")
        if self.runs < 1 or self.steps < 1:
            raise ValueError("runs and steps must be at least 1")
        if not self.filters or any(f not in FILTERS for f in self.filters):
            raise ValueError(f"filters must be a nonempty subset of {FILTERS}")
        if self.particles < 1 or self.workers < 1:
            raise ValueError("particles and workers must be positive")
        if self.format not in ("csv", "json", "both"):
            raise ValueError(f"format must be csv, json or both, got {self.format!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.grid  # validates bounds

    @property
    def grid(self) -> GridSpec:
        lo, hi = _DEFAULT_BOUNDS[self.scenario]
        return GridSpec(lo if self.xmin is None else self.xmin,
                        hi if self.xmax is None else self.xmax, self.nodes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["filters"] = list(self.filters)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "solver" in data:
            data["solver"] = SolverSettings(**_coerce_floats(SolverSettings, data["solver"]))
        if "model" in data:
            data["model"] = LocalizationModel(**_coerce_floats(LocalizationModel, data["model"]))
        return cls(**_coerce_floats(cls, data))


def _coerce_floats(cls, data: dict[str, Any]) -> dict[str, Any]:
    # YAML 1.1 reads exponent literals such as 1e-6 as strings
    out = dict(data)
    for f in fields(cls):
        if f.name in out and isinstance(out[f.name], str) and f.type.startswith("float"):
            out[f.name] = float(out[f.name])
    return out


def load_config(path: str | os.PathLike | None = None, **overrides) -> ScenarioConfig:
    """Read a YAML (or JSON) config file and apply non-None overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        with open(path) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        if isinstance(data.get("config"), dict):  # a JSON report
            data = data["config"]
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.from_dict(data)


@dataclass
class RunReport:
    """Outcome of one experiment.

    ``tables`` maps a table name to ``(columns, rows)``; ``summary`` holds the
    deterministic machine-readable results; ``timings`` holds wall-clock data,
    which is kept apart because it differs between runs.
    """

    config: ScenarioConfig
    tables: dict[str, tuple[list[str], list[list[float]]]]
    summary: dict[str, Any]
    timings: dict[str, Any] = field(default_factory=dict)


def example_density(example: int) -> tuple[Density, Gaussian]:
    """Target density and reference density of an approximation example."""
    make, theta = _EXAMPLES[example]
    return make(), theta


def count_interior_maxima(values: np.ndarray, rel_height: float = 1e-3) -> int:
    """Strict interior local maxima whose height exceeds ``rel_height`` times the peak."""
    values = np.asarray(values, dtype=float)
    peaks, _ = find_peaks(values, height=rel_height * values.max())
    return len(peaks)


def _fit_summary(fit: SurrogateParams) -> dict[str, Any]:
    info = fit.info
    return {
        "p": fit.p.tolist(),
        "q": fit.q.tolist(),
        "status": info.status,
        "iterations": info.iterations,
        "objective": info.objective,
        "grad_norm": info.grad_norm,
        "sigma_residual": info.sigma_residual.tolist(),
        "xi_residual": info.xi_residual.tolist(),
        "mass": info.mass,
    }


def run_approx_example(example: int, config: ScenarioConfig | None = None) -> RunReport:
    """Fit both surrogates to an example density and tabulate them on the grid."""
    config = replace(config or ScenarioConfig(scenario="approx"), example=example)
    grid, two_n, opts = config.grid, config.order, config.solver.options()
    target, theta = example_density(example)
    x = grid.nodes
    true_vals = target.pdf(x)
    sigma = power_moments(target, two_n, grid)
    xi = log_moments_from_log_values(target.logpdf(x), theta, grid, two_n)

    t0 = time.perf_counter()
    dpbm = solve(sigma, xi, theta, two_n, opts, grid)
    t1 = time.perf_counter()
    dppm = solve_power_only(sigma, theta, two_n, opts, grid)
    t2 = time.perf_counter()

    b_vals, m_vals = dpbm.pdf(x), dppm.pdf(x)
    l1 = {name: integrate(GridFunction(grid, np.abs(v - true_vals)))
          for name, v in (("dpbm", b_vals), ("dppm", m_vals))}
    rows = [list(r) for r in zip(x, true_vals, b_vals, m_vals)]
    summary = {
        "scenario": "approx",
        "example": example,
        "seed": config.seed,
        "sigma": sigma.tolist(),
        "xi": xi.tolist(),
        "theta": {"mean": theta.mu, "variance": theta.var},
        "l1": l1,
        "interior_maxima": {"true": count_interior_maxima(true_vals),
                            "dpbm": count_interior_maxima(b_vals),
                            "dppm": count_interior_maxima(m_vals)},
        "dpbm": _fit_summary(dpbm),
        "dppm": _fit_summary(dppm),
        "config": config.to_dict(),
    }
    return RunReport(config, {"density": (["x", "true", "dpbm", "dppm"], rows)}, summary,
                     {"dpbm_seconds": t1 - t0, "dppm_seconds": t2 - t1})


def _run_streams(seed: int, run: int) -> tuple[np.random.Generator, np.random.Generator]:
    truth, pf = np.random.SeedSequence(seed, spawn_key=(run,)).spawn(2)
    return np.random.default_rng(truth), np.random.default_rng(pf)


def _simulate_truth(model: LocalizationModel, steps: int, rng: np.random.Generator):
    m0 = model.start + model.init_mean_sd * rng.normal()
    xs, zs = np.empty(steps), np.empty(steps)
    x = model.start
    for t in range(steps):
        xs[t] = x
        zs[t] = x - model.landmark + model.obs_scale * rng.gumbel()
        x = x + model.drift + model.process_sd * rng.normal()
    return m0, xs, zs


def _surrogate_track(config, model, m0, ys, power_only):
    grid, two_n, opts = config.grid, config.order, config.solver.options()
    system = model.system()
    factor = config.dppm_variance_factor if power_only else config.dpbm_variance_factor
    rule = ThetaRule(factor)
    state = initial_state(Gaussian(m0, model.init_var), two_n, grid, rule)
    estimates, fits, seconds = [], [], []
    for t, y in enumerate(ys):
        t0 = time.perf_counter()
        post = measurement_update(state.prior, y, 1.0, system.eps, grid)
        estimates.append(float(grid.weights @ (grid.nodes * post.values)))
        if t < len(ys) - 1:
            state = filter_step(state, y, system.row(t), grid, two_n, opts, rule, power_only)
            fits.append(_fit_summary(state.fit))
        seconds.append(time.perf_counter() - t0)
    return estimates, fits, seconds


def _oracle_track(config, model, m0, ys):
    grid = config.grid
    system = model.system()
    prior = GridFunction(grid, Gaussian(m0, model.init_var).pdf(grid.nodes))
    estimates = []
    for t, y in enumerate(ys):
        post = measurement_update(GridDensity(grid, prior.values), y, 1.0, system.eps, grid)
        estimates.append(float(grid.weights @ (grid.nodes * post.values)))
        prior = time_update_oracle(post, 1.0, model.drift, system.eta, grid)
    return estimates


def _kf_track(model, m0, ys):
    state = KalmanState(m0, model.init_var)
    q_var, r_var = model.process_sd**2, model.kf_obs_sd**2
    estimates = []
    for t, y in enumerate(ys):
        if t > 0:
            state = kalman_predict(state, 1.0, model.drift, q_var)
        state = kalman_correct(state, y, 1.0, r_var)
        estimates.append(state.mean)
    return estimates


def _pf_track(config, model, ys, rng):
    system = model.system()
    ens = ParticleEnsemble.uniform(Uniform(model.pf_low, model.pf_high).sample(rng, config.particles))
    estimates = []
    for t, y in enumerate(ys):
        if t > 0:
            ens = pf_propagate(ens, 1.0, model.drift, system.eta, rng)
        weighted = pf_weight(ens, y, 1.0, system.eps)
        estimates.append(weighted_mean(weighted))
        if config.resample == "always" or effective_sample_size(weighted) < 0.5 * len(weighted):
            ens = systematic_resample(weighted, rng)
        else:
            ens = weighted
    return estimates


def _localization_run(args) -> dict[str, Any]:
    config, run = args
    model = config.model
    truth_rng, pf_rng = _run_streams(config.seed, run)
    m0, xs, zs = _simulate_truth(model, config.steps, truth_rng)
    ys = zs + model.landmark
    out: dict[str, Any] = {"run": run, "m0": m0, "truth": xs.tolist(), "observations": zs.tolist(),
                           "estimates": {}, "failures": {}, "fits": {}, "seconds": {}}
    for name in config.filters:
        t0 = time.perf_counter()
        try:
            if name == "kf":
                est = _kf_track(model, m0, ys)
            elif name == "pf":
                est = _pf_track(config, model, ys, pf_rng)
            elif name == "oracle":
                est = _oracle_track(config, model, m0, ys)
            else:
                est, fits, secs = _surrogate_track(config, model, m0, ys, name == "dppm")
                out["fits"][name] = fits
                out["seconds"][name + "_steps"] = secs
            out["estimates"][name] = [float(e) for e in est]
        except PLFilterError as exc:
            out["failures"][name] = f"{type(exc).__name__}: {exc}"
        out["seconds"][name] = time.perf_counter() - t0
    return out


def run_localization(config: ScenarioConfig | None = None) -> RunReport:
    """Monte-Carlo localization study; RMSE per step across runs for each filter.

    The estimate at step ``t`` is the posterior mean after observing ``z_t``.
    A filter that fails on a run is excluded from that run's RMSE and the
    failure is recorded.
    """
    config = config or ScenarioConfig()
    jobs = [(config, r) for r in range(config.runs)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_localization_run, jobs))
    else:
        results = [_localization_run(j) for j in jobs]

    names = [f for f in FILTERS if f in config.filters]
    rmse, included = {}, {}
    for name in names:
        ok = [r for r in results if name in r["estimates"]]
        included[name] = len(ok)
        if ok:
            err = np.array([np.subtract(r["estimates"][name], r["truth"]) for r in ok])
            rmse[name] = np.sqrt(np.mean(err**2, axis=0)).tolist()
        else:
            rmse[name] = [float("nan")] * config.steps
    rows = [[t] + [rmse[n][t] for n in names] for t in range(config.steps)]
    timings = {"runs": [{k: r["seconds"][k] for k in r["seconds"]} for r in results]}
    for r in results:
        del r["seconds"]
    summary = {
        "scenario": "localize",
        "seed": config.seed,
        "rmse": rmse,
        "included_runs": included,
        "runs": results,
        "config": config.to_dict(),
    }
    return RunReport(config, {"rmse": (["t"] + names, rows)}, summary, timings)


def _csv_text(columns: list[str], rows: list[list[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([v if isinstance(v, (int, np.integer)) else repr(float(v)) for v in row])
    return buf.getvalue()


def emit(report: RunReport, fmt: str | None = None, path: str | os.PathLike | None = None
         ) -> list[Path]:
    """Write CSV tables and/or the JSON report under ``path``.

    The directory defaults to ``$PLFILTER_OUT`` and then ``config.out``. Output
    files are byte-identical for identical configs; wall-clock timings go to a
    separate ``timings.json``.
    """
    fmt = fmt or report.config.format
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    out_dir = Path(path or os.environ.get(OUTPUT_DIR_ENV) or report.config.out)
    stem = report.config.scenario
    if stem == "approx":
        stem = f"approx{report.config.example}"
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if fmt in ("csv", "both"):
            for name, (columns, rows) in report.tables.items():
                target = out_dir / f"{stem}_{name}.csv"
                target.write_text(_csv_text(columns, rows))
                written.append(target)
        if fmt in ("json", "both"):
            target = out_dir / f"{stem}_report.json"
            target.write_text(json.dumps(report.summary, indent=1, sort_keys=True) + "\n")
            written.append(target)
        target = out_dir / f"{stem}_timings.json"
        target.write_text(json.dumps(report.timings, indent=1, sort_keys=True) + "\n")
        written.append(target)
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc}") from exc
    return written
