"""Configuration-driven experiment harness.

A scenario turns one :class:`ScenarioConfig` into a set of CSV files plus a
list of threshold checks. The config is a flat ``key = value`` text file;
every CSV starts with the fully resolved config as ``# key = value`` lines,
so any output file can be fed back as ``--config`` to reproduce it exactly.

Measurement-noise levels are fractions of the clean signal's per-state
standard deviation unless ``noise_relative = false``. Process-noise levels
are the absolute diffusion coefficient of the Euler-Maruyama simulation.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import typing
from dataclasses import dataclass, field

import numpy as np

from sindycp.conformal_ts import OnlineConfig, achieved_coverage, coverage_metrics, run_online_methods
from sindycp.errors import ConfigError, SindyCPError
from sindycp.featurecp import (
    check_skip_rate,
    coefficient_intervals,
    esindy_intervals,
    featurecp_scores,
)
from sindycp.importance import (
    ImportanceConfig,
    ImportanceReport,
    LambdaGrid,
    inclusion_report,
    loco_importance,
    loco_path_importance,
    normalize_columns,
)
from sindycp.preprocess import LibrarySpec, prepare_regression
from sindycp.sindy import bootstrap_ensemble, jackknife_ensemble
from sindycp.systems import NoiseSpec, TimeSeries, draw_noise, make_system, simulate_ode, simulate_sde

COMMANDS = ("simulate", "forecast", "sweep-coverage", "sweep-importance", "sweep-coefficients")
FULL_REALIZATIONS = 100


def _f(default, help):
    return field(default=default, metadata={"help": help})


@dataclass(frozen=True)
class ScenarioConfig:
    command: str = _f("forecast", "scenario to run")
    system: str = _f("lotka_volterra", "registered system name")
    params: tuple[float, ...] = _f((), "system parameters (empty: registry defaults)")
    x0: tuple[float, ...] = _f((), "initial state (empty: registry default)")
    dt: float = _f(0.1, "sampling interval")
    n: int = _f(1400, "samples in a forecast stream")
    train_len: int = _f(200, "training prefix of a forecast stream")
    noise_kind: str = _f("gaussian", "measurement noise: gaussian | gamma")
    noise_level: float = _f(0.05, "measurement noise level")
    noise_relative: bool = _f(True, "measurement levels are fractions of the signal std")
    noise_levels: tuple[float, ...] = _f((0.05, 0.2), "low/high levels for the coverage sweep")
    gamma_shape: float = _f(2.0, "gamma noise shape")
    process_level: float = _f(0.0, "process noise diffusion (0: deterministic)")
    substeps: int = _f(20, "Euler-Maruyama substeps per sample")
    alpha: float = _f(0.1, "target miscoverage")
    targets: tuple[float, ...] = _f((0.5, 0.6, 0.7, 0.8, 0.9, 0.95), "coverage-sweep targets")
    methods: tuple[str, ...] = _f(("enbpi", "cppid"), "online methods")
    horizon: int = _f(2, "forecast horizon in samples")
    window: int = _f(100, "EnbPI score window l_r")
    burn_in: int = _f(100, "steps excluded from achieved coverage")
    rolling_window: int = _f(50, "trailing window for rolling metrics")
    smoother_window: int = _f(9, "Savitzky-Golay window")
    polyorder: int = _f(3, "Savitzky-Golay polynomial order")
    library_degree: int = _f(2, "polynomial library degree")
    lam: float = _f(0.05, "STLSQ threshold")
    B: int = _f(50, "bootstrap ensemble size")
    max_iter: int = _f(20, "STLSQ iteration cap")
    refit_every: int = _f(50, "online refit period in steps (0: never)")
    eta_scale: float = _f(0.05, "PID proportional gain as a fraction of the initial width")
    k_i_scale: float = _f(5.0, "PID integral gain as a fraction of the initial width")
    c_sat: float = _f(0.5, "PID saturation constant")
    saturation: str = _f("tan", "PID integrator: tan | identity")
    data_lengths: tuple[int, ...] = _f((25, 50, 100, 200, 400), "importance-sweep data lengths")
    grid_points: int = _f(10, "LOCO-path lambda grid size")
    loo_limit: int = _f(200, "largest n using leave-one-out jackknife")
    n_batches: int = _f(50, "jackknife batches above loo_limit")
    coef_n: int = _f(200, "samples per coefficient-sweep series")
    coef_kinds: tuple[str, ...] = _f(("gaussian", "gamma", "process"), "coefficient-sweep noise kinds")
    gaussian_levels: tuple[float, ...] = _f((0.02, 0.05, 0.1), "gaussian measurement levels")
    gamma_levels: tuple[float, ...] = _f((0.02, 0.05, 0.1), "gamma measurement levels")
    process_levels: tuple[float, ...] = _f((0.02, 0.05, 0.1), "process noise levels")
    jackknife_batch: int = _f(1, "feature-CP jackknife batch size")
    aggregation: str = _f("median", "ensemble aggregate: median | mean")
    realizations: int = _f(20, "noise realizations")
    log_realizations: int = _f(1, "realizations whose full forecast logs are written")
    seed: int = _f(0, "base seed")
    coverage_tol: float = _f(0.05, "allowed |achieved - target| coverage gap")
    pid_err_tol: float = _f(0.03, "allowed |mean err - alpha| for CP-PID")
    min_steps: int = _f(1000, "minimum logged steps for the long-run checks")
    max_nstar: int = _f(400, "largest acceptable importance n*")
    inert_max: float = _f(0.15, "cap on inert normalized LOCO scores beyond n*")
    max_skip_rate: float = _f(0.2, "largest tolerated surrogate skip rate")

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.n < 2 or self.dt <= 0:
            raise ConfigError("n must be >= 2 and dt > 0")
        if not 0 < self.train_len < self.n - self.horizon:
            raise ConfigError("train_len must leave at least one horizon of stream")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        for m in self.methods:
            if m not in ("enbpi", "cppid"):
                raise ConfigError(f"unknown method {m!r}")
        for k in self.coef_kinds:
            if k not in ("gaussian", "gamma", "process"):
                raise ConfigError(f"unknown coefficient-sweep noise kind {k!r}")
        if any(not 0 < t < 1 for t in self.targets):
            raise ConfigError("targets must lie in (0, 1)")
        if list(self.data_lengths) != sorted(set(self.data_lengths)):
            raise ConfigError("data_lengths must be strictly increasing")
        if self.aggregation not in ("median", "mean"):
            raise ConfigError("aggregation must be median or mean")
        if self.process_level < 0 or any(v < 0 for v in self.process_levels):
            raise ConfigError("process levels must be >= 0")
        # make sure the component-level validation fires early
        try:
            self.online_config(self.alpha, 0)
            LibrarySpec(self.library_degree)
            make_system(self.system, self.params or None)
            NoiseSpec(self.noise_kind, self.noise_level, self.gamma_shape)
        except (SindyCPError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def online_config(self, alpha, seed) -> OnlineConfig:
        return OnlineConfig(
            alpha=alpha, horizon=self.horizon, window=self.window,
            smoother_window=self.smoother_window, polyorder=self.polyorder,
            library_degree=self.library_degree, lam=self.lam, B=self.B, max_iter=self.max_iter,
            refit_every=self.refit_every, eta_scale=self.eta_scale, k_i_scale=self.k_i_scale,
            c_sat=self.c_sat, saturation=self.saturation, seed=seed,
        )

    # -- text form -----------------------------------------------------------

    def lines(self) -> list[str]:
        return [f"{f.name} = {_format(getattr(self, f.name))}" for f in dataclasses.fields(self)]

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


_HINTS = None


def _hints():
    global _HINTS
    if _HINTS is None:
        _HINTS = typing.get_type_hints(ScenarioConfig)
    return _HINTS


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _parse_scalar(kind, raw, key):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def _parse_value(key, raw):
    kind = _hints()[key]
    if typing.get_origin(kind) is tuple:
        inner = typing.get_args(kind)[0]
        parts = [p.strip() for p in raw.split(",")] if raw.strip() else []
        return tuple(_parse_scalar(inner, p, key) for p in parts)
    return _parse_scalar(kind, raw.strip(), key)


def parse_config(text: str, **overrides) -> ScenarioConfig:
    """Read ``key = value`` lines; ``#`` starts a comment line.

    Lines copied from a CSV header (``# key = value``) are accepted too.
    Unknown keys and malformed values raise :class:`ConfigError`.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("# ") and " = " in s:
            s = s[2:]
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in s.split("=", 1))
        if key not in _hints():
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ScenarioConfig:
    """Load a config file or the header of a CSV written by a scenario."""
    with open(path) as fh:
        if path.endswith(".csv"):
            text = "".join(line for line in fh if line.startswith("#"))
        else:
            text = fh.read()
    return parse_config(text, **overrides)


def config_help() -> str:
    rows = []
    for f in dataclasses.fields(ScenarioConfig):
        rows.append(f"  {f.name} = {_format(f.default)}    ({f.metadata['help']})")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# shared pieces


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ScenarioResult:
    command: str
    files: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, passed, detail):
        self.checks.append(Check(name, bool(passed), detail))


def realization_seeds(seed: int, idx: int) -> tuple[int, int, int]:
    """Noise, process and ensemble seeds for one realization."""
    a, b, c = np.random.SeedSequence([seed, idx]).generate_state(3)
    return int(a), int(b), int(c)


def _header(cfg):
    return cfg.lines()


def _write_rows(path, header_lines, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _r(v):
    return repr(float(v))


def _level_tag(v):
    return repr(float(v)).replace(".", "p")


def simulate_clean(cfg, n, process_level, proc_seed) -> TimeSeries:
    system = make_system(cfg.system, cfg.params or None)
    x0 = cfg.x0 or system.default_x0
    if process_level > 0:
        return simulate_sde(system, x0, cfg.dt, n - 1, process_level, proc_seed, cfg.substeps)
    return simulate_ode(system, x0, cfg.dt, n - 1)


def corrupt(cfg, clean: TimeSeries, kind, level, seed) -> TimeSeries:
    """Add measurement noise; relative levels scale with each state's std."""
    if level == 0:
        return clean.with_states(clean.states.copy(), kind="noisy", noise=kind, noise_level=0.0)
    unit = draw_noise(NoiseSpec(kind, 1.0, cfg.gamma_shape, seed=seed), clean.states.shape)
    scale = level * clean.states.std(axis=0) if cfg.noise_relative else np.full(clean.m, level)
    return clean.with_states(clean.states + unit * scale, kind="noisy", noise=kind,
                             noise_level=level)


def _stream(cfg, idx, level):
    noise_seed, proc_seed, ens_seed = realization_seeds(cfg.seed, idx)
    clean = simulate_clean(cfg, cfg.n, cfg.process_level, proc_seed)
    return corrupt(cfg, clean, cfg.noise_kind, level, noise_seed), ens_seed


# ---------------------------------------------------------------------------
# simulate


def run_simulate(cfg: ScenarioConfig, out_dir) -> ScenarioResult:
    res = ScenarioResult("simulate")
    noise_seed, proc_seed, _ = realization_seeds(cfg.seed, 0)
    clean = simulate_clean(cfg, cfg.n, cfg.process_level, proc_seed)
    noisy = corrupt(cfg, clean, cfg.noise_kind, cfg.noise_level, noise_seed)
    for name, ts in (("simulation_clean.csv", clean), ("simulation.csv", noisy)):
        path = os.path.join(out_dir, name)
        ts.to_csv(path, _header(cfg))
        res.files.append(path)
    res.summary = {"samples": clean.n, "states": clean.m}
    return res


# ---------------------------------------------------------------------------
# forecast


def _log_stats(log, burn_in):
    cov = achieved_coverage(log, burn_in)
    return {
        "steps": len(log),
        "coverage_state": cov,
        "coverage": float(cov.mean()),
        "joint_coverage": float(np.mean(log.covered[burn_in:])),
        "mean_err": float(log.err.mean()),
        "mean_width": float(log.width[burn_in:].mean()),
        "median_width": float(np.median(log.width[burn_in:])),
    }


def run_forecast_scenario(cfg: ScenarioConfig, out_dir) -> ScenarioResult:
    """Online EnbPI and CP-PID on the same noisy stream, one stream per realization."""
    res = ScenarioResult("forecast")
    head = _header(cfg)
    stats = {m: [] for m in cfg.methods}
    rolling = {m: [] for m in cfg.methods}
    for r in range(cfg.realizations):
        stream, ens_seed = _stream(cfg, r, cfg.noise_level)
        logs = run_online_methods(stream, cfg.train_len, cfg.online_config(cfg.alpha, ens_seed),
                                  cfg.methods)
        for m, log in logs.items():
            stats[m].append(_log_stats(log, cfg.burn_in))
            roll = coverage_metrics(log, cfg.rolling_window)
            rolling[m].append((roll["coverage"].mean(axis=1), roll["width"].mean(axis=1)))
            if r < cfg.log_realizations:
                path = os.path.join(out_dir, f"forecast_log_{m}_r{r:03d}.csv")
                log.to_csv(path, cfg.rolling_window, head)
                res.files.append(path)

    rows = []
    for m in cfg.methods:
        for r, s in enumerate(stats[m]):
            rows.append([r, m, s["steps"], *[_r(c) for c in s["coverage_state"]], _r(s["coverage"]),
                         _r(s["joint_coverage"]), _r(s["mean_err"]), _r(s["mean_width"]),
                         _r(s["median_width"])])
    m_states = len(stats[cfg.methods[0]][0]["coverage_state"])
    path = os.path.join(out_dir, "forecast_summary.csv")
    _write_rows(path, head, ["realization", "method", "steps",
                             *[f"coverage_x{i + 1}" for i in range(m_states)], "coverage",
                             "joint_coverage", "mean_err", "mean_width", "median_width"], rows)
    res.files.append(path)

    # realization-averaged rolling curves
    rows = []
    curves = {}
    for m in cfg.methods:
        steps = min(len(c) for c, _ in rolling[m])
        cov = np.mean([c[:steps] for c, _ in rolling[m]], axis=0)
        wid = np.mean([w[:steps] for _, w in rolling[m]], axis=0)
        curves[m] = (cov, wid)
        rows += [[k, m, _r(cov[k]), _r(wid[k])] for k in range(steps)]
    path = os.path.join(out_dir, "forecast_rolling.csv")
    _write_rows(path, head, ["step", "method", "rolling_coverage", "rolling_width"], rows)
    res.files.append(path)

    target = 1 - cfg.alpha
    for m in cfg.methods:
        cov = float(np.mean([s["coverage"] for s in stats[m]]))
        steps = min(s["steps"] for s in stats[m]) - cfg.burn_in
        res.summary[m] = {"coverage": cov, "steps_after_burn_in": steps}
        res.check(f"{m} coverage", abs(cov - target) <= cfg.coverage_tol,
                  f"achieved {cov:.4f} vs target {target:.2f} +/- {cfg.coverage_tol} "
                  f"over {steps} post-burn-in steps")
    if "cppid" in cfg.methods:
        err = float(np.mean([s["mean_err"] for s in stats["cppid"]]))
        steps = min(s["steps"] for s in stats["cppid"])
        res.summary["cppid"].update(mean_err=err, steps=steps)
        res.check("cppid long-run miscoverage",
                  abs(err - cfg.alpha) <= cfg.pid_err_tol and steps >= cfg.min_steps,
                  f"mean err {err:.4f} vs alpha {cfg.alpha} +/- {cfg.pid_err_tol} over {steps} steps")
        _, wid = curves["cppid"]
        early = float(wid[: cfg.window].max())
        steady = float(np.median(wid[cfg.burn_in :])) if wid.size > cfg.burn_in else np.inf
        res.summary["cppid"].update(early_width=early, steady_width=steady)
        res.check("cppid early transient", early > steady,
                  f"max rolling width in first {cfg.window} steps {early:.4g} "
                  f"vs steady median {steady:.4g}")
    return res


# ---------------------------------------------------------------------------
# coverage sweep


def run_coverage_sweep(cfg: ScenarioConfig, out_dir) -> ScenarioResult:
    """Achieved coverage and width over a list of targets at each noise level."""
    if len(cfg.targets) < 2:
        raise ConfigError("the coverage sweep needs at least two targets")
    res = ScenarioResult("sweep-coverage")
    targets = sorted(cfg.targets)
    alphas = tuple(1.0 - t for t in targets)
    acc = {}
    for level in cfg.noise_levels:
        for r in range(cfg.realizations):
            stream, ens_seed = _stream(cfg, r, level)
            logs = run_online_methods(stream, cfg.train_len,
                                      cfg.online_config(cfg.alpha, ens_seed), cfg.methods, alphas)
            for (m, a), log in logs.items():
                s = _log_stats(log, cfg.burn_in)
                acc.setdefault((m, level, a), []).append((s["coverage"], s["mean_width"]))
    rows = []
    table = {}
    for m in cfg.methods:
        for level in cfg.noise_levels:
            for t, a in zip(targets, alphas):
                vals = np.array(acc[m, level, a])
                cov, wid = vals.mean(axis=0)
                table[m, level, t] = (cov, wid)
                rows.append([m, _r(level), _r(t), _r(cov), _r(wid), cfg.realizations])
    path = os.path.join(out_dir, "coverage_sweep.csv")
    _write_rows(path, _header(cfg), ["method", "noise_level", "target", "achieved", "mean_width",
                                     "realizations"], rows)
    res.files.append(path)

    for m in cfg.methods:
        for level in cfg.noise_levels:
            gaps = [abs(table[m, level, t][0] - t) for t in targets]
            worst = int(np.argmax(gaps))
            res.check(f"{m} noise {level} coverage", max(gaps) <= cfg.coverage_tol,
                      f"worst gap {gaps[worst]:.4f} at target {targets[worst]}")
            widths = [table[m, level, t][1] for t in targets]
            res.check(f"{m} noise {level} width monotone", all(np.diff(widths) > 0),
                      "widths " + ", ".join(f"{w:.4g}" for w in widths))
        lo, hi = min(cfg.noise_levels), max(cfg.noise_levels)
        if lo != hi:
            ok = all(table[m, hi, t][1] >= table[m, lo, t][1] for t in targets)
            res.check(f"{m} width grows with noise", ok, f"noise {hi} vs {lo} at every target")
    res.summary = {f"{m}/{lv}/{t}": v for (m, lv, t), v in table.items()}
    return res


# ---------------------------------------------------------------------------
# importance sweep

IMPORTANCE_METHODS = ("inclusion", "loco", "loco_path")


def importance_reports(cfg, noisy: TimeSeries, n, ens_seed) -> dict:
    theta, xdot = prepare_regression(noisy.slice(0, n), LibrarySpec(cfg.library_degree),
                                     cfg.smoother_window, cfg.polyorder)
    icfg = ImportanceConfig(cfg.max_iter, None, cfg.loo_limit, cfg.n_batches)
    ens = bootstrap_ensemble(theta, xdot, cfg.B, cfg.lam, ens_seed, cfg.max_iter)
    return {
        "inclusion": inclusion_report(ens),
        "loco": loco_importance(theta, xdot, cfg.lam, icfg),
        "loco_path": loco_path_importance(theta, xdot, LambdaGrid.around(cfg.lam, cfg.grid_points),
                                          icfg),
    }


def _n_star(lengths, separated):
    """Smallest length from which separation holds at every longer length."""
    n_star = None
    for n, ok in zip(reversed(lengths), reversed(separated)):
        if not ok:
            break
        n_star = n
    return n_star


def run_importance_sweep(cfg: ScenarioConfig, out_dir) -> ScenarioResult:
    """Importance curves versus data length, averaged over realizations."""
    res = ScenarioResult("sweep-importance")
    lengths = list(cfg.data_lengths)
    system = make_system(cfg.system, cfg.params or None)
    true = system.true_coeffs.support
    sums = {}
    for r in range(cfg.realizations):
        noise_seed, proc_seed, ens_seed = realization_seeds(cfg.seed, r)
        clean = simulate_clean(cfg, lengths[-1], cfg.process_level, proc_seed)
        noisy = corrupt(cfg, clean, cfg.noise_kind, cfg.noise_level, noise_seed)
        for n in lengths:
            for meth, rep in importance_reports(cfg, noisy, n, ens_seed).items():
                key = (meth, n)
                prev = sums.get(key)
                sums[key] = (rep, rep.scores, rep.raw) if prev is None else (
                    prev[0], prev[1] + rep.scores, prev[2] + rep.raw)
    head = _header(cfg)
    summary_rows = []
    n_stars = {}
    for meth in IMPORTANCE_METHODS:
        separated = []
        for n in lengths:
            rep, s, raw = sums[meth, n]
            avg = ImportanceReport(normalize_columns(s / cfg.realizations), raw / cfg.realizations,
                                   meth, n, rep.features, rep.labels)
            path = os.path.join(out_dir, f"importance_{meth}_n{n}.csv")
            avg.to_csv(path, head)
            res.files.append(path)
            t_min = min(avg.scores[true[:, k], k].min() for k in range(true.shape[1]))
            i_max = max(avg.scores[~true[:, k], k].max() for k in range(true.shape[1]))
            sep = bool(t_min > i_max)
            separated.append(sep)
            summary_rows.append([meth, n, int(sep), _r(t_min), _r(i_max)])
        n_stars[meth] = _n_star(lengths, separated)
    overall = None if None in n_stars.values() else max(n_stars.values())
    path = os.path.join(out_dir, "importance_summary.csv")
    _write_rows(path, head + [f"result: n_star {overall}"],
                ["method", "data_len", "separated", "true_min", "inert_max"], summary_rows)
    res.files.append(path)

    res.summary = {"n_star": overall, **{f"n_star_{m}": v for m, v in n_stars.items()}}
    res.check("importance separation", overall is not None and overall <= cfg.max_nstar,
              "n* per method: " + ", ".join(f"{m}={v}" for m, v in n_stars.items())
              + f"; overall {overall} (limit {cfg.max_nstar})")
    if overall is not None:
        worst = max(float(r[4]) for r in summary_rows
                    if r[0] in ("loco", "loco_path") and r[1] >= overall)
        res.check("inert LOCO scores capped", worst <= cfg.inert_max,
                  f"largest inert normalized LOCO/LOCO-path score for n >= {overall}: {worst:.4f}"
                  f" (cap {cfg.inert_max})")
    return res


# ---------------------------------------------------------------------------
# coefficient sweep


def _coef_configs(cfg):
    levels = {"gaussian": cfg.gaussian_levels, "gamma": cfg.gamma_levels,
              "process": cfg.process_levels}
    return [(k, lv) for k in cfg.coef_kinds for lv in levels[k]]


def coefficient_realization(cfg, kind, level, idx):
    """Feature-CP and E-SINDy intervals for one noisy series."""
    noise_seed, proc_seed, ens_seed = realization_seeds(cfg.seed, idx)
    if kind == "process":
        noisy = simulate_clean(cfg, cfg.coef_n, level, proc_seed)
    else:
        clean = simulate_clean(cfg, cfg.coef_n, 0.0, proc_seed)
        noisy = corrupt(cfg, clean, kind, level, noise_seed)
    theta, xdot = prepare_regression(noisy, LibrarySpec(cfg.library_degree),
                                     cfg.smoother_window, cfg.polyorder)
    jk = jackknife_ensemble(theta, xdot, cfg.lam, cfg.jackknife_batch, cfg.max_iter)
    fs = featurecp_scores(jk, theta, xdot)
    check_skip_rate(fs, cfg.max_skip_rate)
    boot = bootstrap_ensemble(theta, xdot, cfg.B, cfg.lam, ens_seed, cfg.max_iter)
    return (coefficient_intervals(jk, fs, cfg.alpha, cfg.aggregation),
            esindy_intervals(boot, cfg.alpha, cfg.aggregation), fs)


def run_coefficient_sweep(cfg: ScenarioConfig, out_dir) -> ScenarioResult:
    """Feature-CP versus E-SINDy coefficient intervals across noise kinds and levels."""
    res = ScenarioResult("sweep-coefficients")
    system = make_system(cfg.system, cfg.params or None)
    true = system.true_coeffs.coeffs
    active = true != 0
    head = _header(cfg)
    flag_rows, summary_rows = [], []
    stats = {}
    for kind, level in _coef_configs(cfg):
        cover = {"feature_cp": [], "esindy": []}
        widths = {"feature_cp": [], "esindy": []}
        for r in range(cfg.realizations):
            fcp, esi, fs = coefficient_realization(cfg, kind, level, r)
            for name, iv in (("feature_cp", fcp), ("esindy", esi)):
                c = iv.contains(true)
                w = iv.width[active]
                cover[name].append(c)
                widths[name].append(w)
                flag_rows.append([kind, _r(level), r, name, int(c), _r(w.mean()),
                                  _r(iv.half_width) if name == "feature_cp" else "",
                                  iv.n_scores, fs.skipped if name == "feature_cp" else 0])
                if r == 0:
                    path = os.path.join(out_dir, f"coefficients_{name}_{kind}_{_level_tag(level)}.csv")
                    iv.to_csv(path, head)
                    res.files.append(path)
        for name in cover:
            frac = float(np.mean(cover[name]))
            mw = np.mean(widths[name], axis=0)
            stats[kind, level, name] = (frac, mw)
            summary_rows.append([kind, _r(level), name, _r(frac), _r(mw.mean()), cfg.realizations])
    path = os.path.join(out_dir, "coefficients_flags.csv")
    _write_rows(path, head, ["kind", "level", "realization", "method", "covers_truth",
                             "mean_width", "half_width", "n_scores", "skipped"], flag_rows)
    res.files.append(path)
    path = os.path.join(out_dir, "coefficients_summary.csv")
    _write_rows(path, head, ["kind", "level", "method", "truth_coverage", "mean_width",
                             "realizations"], summary_rows)
    res.files.append(path)

    narrow = [(k, lv) for k, lv in _coef_configs(cfg)
              if np.any(stats[k, lv, "feature_cp"][1] < stats[k, lv, "esindy"][1])]
    res.check("feature-CP width >= E-SINDy width", not narrow,
              "every configuration" if not narrow else f"narrower at {narrow}")
    if "gamma" in cfg.coef_kinds and cfg.gamma_levels:
        mid = sorted(cfg.gamma_levels)[len(cfg.gamma_levels) // 2]
        f, e = stats["gamma", mid, "feature_cp"][0], stats["gamma", mid, "esindy"][0]
        res.check("feature-CP truth coverage beats E-SINDy (gamma)", f > e,
                  f"gamma level {mid}: feature-CP {f:.3f} vs E-SINDy {e:.3f} "
                  f"over {cfg.realizations} realizations")
    res.summary = {f"{k}/{lv}/{n}": v[0] for (k, lv, n), v in stats.items()}
    return res


RUNNERS = {
    "simulate": run_simulate,
    "forecast": run_forecast_scenario,
    "sweep-coverage": run_coverage_sweep,
    "sweep-importance": run_importance_sweep,
    "sweep-coefficients": run_coefficient_sweep,
}


def run_scenario(cfg: ScenarioConfig, out_dir) -> ScenarioResult:
    os.makedirs(out_dir, exist_ok=True)
    return RUNNERS[cfg.command](cfg, out_dir)
