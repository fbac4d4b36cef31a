"""Command-line runner for the cooling, swap, control and frame-validation scenarios.

Every run writes into its output directory:

* ``timeseries.csv`` (or one file per frame for ``validate-frames``) with
  columns ``t_s, n_target, n_aux, re_a, im_a, trace`` and, for the
  trajectory engine, ``sem_n_target``;
* ``summary.txt`` with headline metrics as ``key = value`` lines, each
  followed by a ``source.<key>`` line naming the CSV column it came from;
* ``parameters.txt`` echoing every resolved value and unit conversion, and
  ``scenario.ini`` with the merged configuration that reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis, config as cfgmod, langevin
from .config import ConfigError, ScenarioConfig
from .fock import DensityOperator, fock_state, product_state, thermal_state
from .lindblad import propagate, steady_state
from .mcwf import ThermalSpec, TrajectoryConfig, run_diffusive_ensemble, run_ensemble
from .model import CouplingParams, DriveParams, build_model, estimate_cooling

log = logging.getLogger("sidebandsim")

COLUMNS = ("t_s", "n_target", "n_aux", "re_a", "im_a", "trace")
COMMANDS = ("cool", "swap", "control", "validate-frames", "sweep")
SWAP_WINDOW = 1.6  # propagate to this multiple of pi/(2g) when searching for the swap minimum


class CommandError(RuntimeError):
    """A run that produced output but failed its own post-condition."""

    def __init__(self, msg: str, report: RunReport | None = None):
        super().__init__(msg)
        self.report = report


@dataclass
class RunReport:
    command: str
    name: str
    parameters: dict[str, float | str]
    metrics: dict[str, float | str] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    echo: tuple[str, ...] = ()
    series: dict[str, dict[str, np.ndarray]] = field(default_factory=dict, repr=False)

    def add(self, key: str, value, source: str) -> None:
        self.metrics[key] = value
        self.sources[key] = source


# -- helpers ---------------------------------------------------------------------

def _parameters(cfg: ScenarioConfig) -> dict:
    return {
        "omega_target_rad_s": cfg.target.angular_frequency,
        "gamma_per_s": cfg.target.damping_rate,
        "quality_factor_target": cfg.target.quality_factor,
        "n_thermal_target": cfg.target.n_bath,
        "truncation_target": cfg.target.truncation,
        "omega_aux_rad_s": cfg.aux.angular_frequency,
        "kappa_per_s": cfg.aux.damping_rate,
        "n_thermal_aux": cfg.aux.n_bath,
        "truncation_aux": cfg.aux.truncation,
        "g_rad_s": cfg.coupling.g,
        "frame": cfg.coupling.frame,
        "beta_re": cfg.drive.beta.real,
        "beta_im": cfg.drive.beta.imag,
        "initial_n_target": cfg.initial_target,
        "initial_n_aux": cfg.initial_aux,
        "engine": cfg.run.engine,
        "seed": cfg.run.seed,
    }


def swap_time(g: float) -> float:
    return math.pi / (2 * g)


def slow_time(cfg: ScenarioConfig) -> float:
    """Inverse of the slowest energy-decay rate of the linear RWA system."""
    lm = langevin.linear_model(cfg.target.damping_rate, cfg.aux.damping_rate, cfg.coupling.g)
    rate = 2 * float(np.min(np.linalg.eigvals(-lm.drift).real))
    return math.inf if rate <= 0 else 1.0 / rate


def cooling_duration(cfg: ScenarioConfig) -> float:
    """Five times the slower of the decay time and the swap time, extended if needed
    so the initial excess has decayed to about 1% of the simple estimate."""
    ts = slow_time(cfg)
    if not math.isfinite(ts):
        raise ConfigError("no dissipation: set [run] t_final_s explicitly")
    base = 5 * max(ts, swap_time(cfg.coupling.g) if cfg.coupling.g > 0 else 0.0)
    est = _estimate(cfg)
    excess = abs(cfg.initial_target - est)
    if est > 0 and excess > 0:
        base = max(base, ts * math.log(100 * excess / est))
    return base


def _estimate(cfg: ScenarioConfig) -> float:
    kappa = cfg.aux.damping_rate if cfg.coupling.g > 0 else 0.0
    if cfg.target.damping_rate + kappa == 0:
        return cfg.target.n_bath
    return estimate_cooling(cfg.target.damping_rate, kappa, cfg.target.n_bath)


def _mode_state(model, which: str, n: float, fock: int | None) -> DensityOperator:
    if fock is None:
        return thermal_state(model.space, which, n)
    d = model.space.mode_dim(which)
    m = np.zeros((d, d), complex)
    m[fock, fock] = 1.0
    return DensityOperator(m)


def _initial(model, cfg: ScenarioConfig) -> DensityOperator:
    return product_state(_mode_state(model, "target", cfg.initial_target, cfg.fock_target),
                         _mode_state(model, "aux", cfg.initial_aux, cfg.fock_aux))


def time_series(cfg: ScenarioConfig, t_final: float, model=None) -> dict[str, np.ndarray]:
    """Run the configured engine and return the fixed CSV columns."""
    model = model or build_model(cfg.target, cfg.aux, cfg.coupling, cfg.drive)
    run = cfg.run
    if run.engine == "master_equation":
        res = propagate(model, _initial(model, cfg), t_final, n_samples=run.samples, dt=run.dt)
        ob = res.observables
        return {"t_s": res.times, "n_target": ob["n_target"].real, "n_aux": ob["n_aux"].real,
                "re_a": ob["a"].real, "im_a": ob["a"].imag, "trace": ob["trace"].real}
    if run.engine == "trajectories":
        tc = TrajectoryConfig(run.trajectories, run.seed, t_final, run.samples, run.dt,
                              n_jobs=run.n_jobs)
        if cfg.fock_target is not None or cfg.fock_aux is not None:
            if cfg.fock_target is None or cfg.fock_aux is None:
                raise ConfigError("trajectories need both modes thermal or both in Fock states")
            spec = fock_state(model.space, cfg.fock_target, cfg.fock_aux)
        else:
            spec = ThermalSpec(cfg.initial_target, cfg.initial_aux)
        ens = (run_ensemble(model, spec, tc) if run.unraveling == "jump"
               else run_diffusive_ensemble(model, spec, tc))
        m = ens.mean
        return {"t_s": ens.times, "n_target": m["n_target"], "n_aux": m["n_aux"],
                "re_a": m["re_a"], "im_a": m["im_a"], "trace": np.ones_like(ens.times),
                "sem_n_target": ens.sem["n_target"]}
    if cfg.coupling.frame == "lab_modulated":
        raise ConfigError("the langevin engine supports the interaction frames only")
    lm = langevin.from_system(model)
    times = np.linspace(0.0, t_final, run.samples)
    cr = cfg.target.angular_frequency if cfg.coupling.frame == "interaction_full" else None
    traj = langevin.moment_dynamics(lm, times, n0_target=cfg.initial_target,
                                    n0_aux=cfg.initial_aux, counter_rotating_frequency=cr)
    return {"t_s": times, "n_target": traj.n_target, "n_aux": traj.n_aux,
            "re_a": traj.mean[:, 0].real, "im_a": traj.mean[:, 0].imag,
            "trace": np.ones_like(times)}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10e}"
    if isinstance(x, (complex, np.complexfloating)):
        return f"{x.real:.10e}{x.imag:+.10e}j"
    return str(x)


def write_csv(path: Path, series: dict[str, np.ndarray]) -> Path:
    cols = list(COLUMNS) + (["sem_n_target"] if "sem_n_target" in series else [])
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(len(series["t_s"])):
            w.writerow([f"{float(series[c][i]):.10e}" for c in cols])
    return path


def write_outputs(report: RunReport, cfg: ScenarioConfig, out: Path) -> RunReport:
    out.mkdir(parents=True, exist_ok=True)
    for label, series in report.series.items():
        report.files.append(write_csv(out / f"{label}.csv", series))
    lines = [f"command = {report.command}", f"scenario = {report.name}"]
    for k, v in report.metrics.items():
        lines.append(f"{k} = {_fmt(v)}")
        lines.append(f"source.{k} = {report.sources[k]}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    params = [f"{k} = {_fmt(v)}" for k, v in report.parameters.items()]
    params += ["", "# unit conversions"] + list(cfg.echo)
    (out / "parameters.txt").write_text("\n".join(params) + "\n", encoding="utf-8")
    (out / "scenario.ini").write_text(cfgmod.to_ini(cfg.raw), encoding="utf-8")
    report.files += [out / "summary.txt", out / "parameters.txt", out / "scenario.ini"]
    return report


def _report(command: str, cfg: ScenarioConfig) -> RunReport:
    return RunReport(command, cfg.name, _parameters(cfg), echo=cfg.echo)


# -- commands --------------------------------------------------------------------

def cmd_cool(cfg: ScenarioConfig) -> RunReport:
    """Relax to the steady state and compare with the simple estimate."""
    report = _report("cool", cfg)
    model = build_model(cfg.target, cfg.aux, cfg.coupling, cfg.drive)
    t_final = cfg.run.t_final or cooling_duration(cfg)
    series = time_series(cfg, t_final, model)
    report.series["timeseries"] = series
    t, n = series["t_s"], series["n_target"]
    report.add("t_final_s", t_final, "timeseries.csv:t_s (last row)")
    report.add("initial_n_target", float(n[0]), "timeseries.csv:n_target (first row)")
    try:
        plateau = analysis.plateau(t, n)
    except analysis.NotStationaryError as exc:
        report.add("plateau_drift", exc.drift, "timeseries.csv:n_target, final two 5% windows")
        raise CommandError(str(exc), report) from exc
    report.add("plateau_n_target", plateau, "timeseries.csv:n_target, mean over final 5%")
    steady, source = plateau, "plateau_n_target"
    if cfg.run.steady_solve and not model.time_dependent:
        if cfg.run.engine == "master_equation":
            ss = steady_state(model)
            steady = float(ss.observables["n_target"].real)
            source = f"steady_state {ss.method} solve (checks timeseries.csv:n_target plateau)"
        elif cfg.run.engine == "langevin":
            steady = langevin.steady_covariance(langevin.from_system(model)).n_target
            source = "Lyapunov solve (checks timeseries.csv:n_target plateau)"
    report.add("steady_n_target", steady, source)
    est = _estimate(cfg)
    report.add("estimate_n_target", est, "gamma/(gamma+kappa) n_T from parameters.txt")
    report.add("ratio_to_estimate", steady / est if est > 0 else math.nan,
               "steady_n_target / estimate_n_target")
    report.add("cooling_factor", analysis.cooling_factor(float(n[0]), steady),
               "timeseries.csv:n_target first row / steady_n_target")
    return report


def cmd_swap(cfg: ScenarioConfig) -> RunReport:
    """Propagate through the first minimum of the target occupation."""
    if cfg.coupling.g <= 0:
        raise ConfigError("swap needs g > 0")
    report = _report("swap", cfg)
    tau = swap_time(cfg.coupling.g)
    t_final = cfg.run.t_final or SWAP_WINDOW * tau
    series = time_series(cfg, t_final)
    report.series["timeseries"] = series
    t, n = series["t_s"], series["n_target"]
    report.add("initial_n_target", float(n[0]), "timeseries.csv:n_target (first row)")
    try:
        m = analysis.first_minimum(t, n)
    except analysis.NoMinimumError as exc:
        raise CommandError(f"{exc} (t_final = {t_final:.4g} s)", report) from exc
    src = "timeseries.csv:n_target, parabola through the three samples around the first minimum"
    report.add("swap_time_s", m.time, src)
    report.add("swap_time_over_tau", m.time / tau, "swap_time_s / (pi/(2g))")
    report.add("swap_min_n_target", m.value, src)
    report.add("cooling_factor", analysis.cooling_factor(float(n[0]), m.value),
               "timeseries.csv:n_target first row / swap_min_n_target")
    return report


def cmd_control(cfg: ScenarioConfig) -> RunReport:
    """Driven steady state: coherent amplitude and occupation decomposition."""
    if not cfg.raw.get("drive"):
        raise ConfigError("control needs a [drive] section")
    if cfg.run.engine not in ("master_equation", "langevin"):
        raise ConfigError("control supports the master_equation and langevin engines")
    if cfg.coupling.frame == "lab_modulated":
        raise ConfigError("control is defined in the interaction frames only")
    report = _report("control", cfg)
    model = build_model(cfg.target, cfg.aux, cfg.coupling, cfg.drive)
    t_final = cfg.run.t_final or cooling_duration(cfg)
    series = time_series(cfg, t_final, model)
    report.series["timeseries"] = series
    t = series["t_s"]
    a_plateau = complex(analysis.plateau(t, series["re_a"], check=False),
                        analysis.plateau(t, series["im_a"], check=False))
    report.add("plateau_re_a", a_plateau.real, "timeseries.csv:re_a, mean over final 5%")
    report.add("plateau_im_a", a_plateau.imag, "timeseries.csv:im_a, mean over final 5%")
    report.add("plateau_n_target", analysis.plateau(t, series["n_target"], check=False),
               "timeseries.csv:n_target, mean over final 5%")

    undriven = replace(cfg, drive=DriveParams())
    if model.time_dependent:
        a_ss, n_ss = a_plateau, report.metrics["plateau_n_target"]
        n_c = analysis.plateau(*_pair(time_series(undriven, t_final)), check=False)
        src = "plateau of timeseries.csv"
    elif cfg.run.engine == "master_equation":
        ss = steady_state(model)
        a_ss, n_ss = complex(ss.observables["a"]), float(ss.observables["n_target"].real)
        m0 = build_model(cfg.target, cfg.aux, cfg.coupling)
        n_c = float(steady_state(m0).observables["n_target"].real)
        src = "steady_state solve (checks timeseries.csv plateau)"
    else:
        mom = langevin.steady_covariance(langevin.from_system(model))
        a_ss, n_ss, n_c = complex(mom.mean[0]), mom.n_target, mom.n_target_thermal
        src = "Lyapunov solve (checks timeseries.csv plateau)"
    amp = langevin.coherent_amplitude(cfg.drive.beta, cfg.target.damping_rate,
                                      cfg.aux.damping_rate, cfg.coupling.g)
    report.add("re_a_ss", a_ss.real, src)
    report.add("im_a_ss", a_ss.imag, src)
    report.add("re_a_exact", amp.exact.real, "exact solve of the linear drift equations")
    report.add("im_a_exact", amp.exact.imag, "exact solve of the linear drift equations")
    rel = abs(a_ss - amp.exact) / abs(amp.exact) if amp.exact != 0 else abs(a_ss)
    report.add("a_relative_error", rel, "|a_ss - a_exact| / |a_exact|")
    if amp.formula_singular:
        report.add("a_formula_singular", "true", "rational closed form at kappa = 3g")
    else:
        report.add("re_a_formula", amp.formula.real, "closed-form rational expression")
        report.add("im_a_formula", amp.formula.imag, "closed-form rational expression")
        dev = abs(amp.formula - amp.exact) / abs(amp.exact) if amp.exact != 0 else math.nan
        report.add("a_formula_deviation", dev, "|a_formula - a_exact| / |a_exact|")
    report.add("steady_n_target", n_ss, src)
    report.add("n_cooled_undriven", n_c, src + ", with beta = 0")
    decomposed = abs(a_ss) ** 2 + n_c
    report.add("decomposition_n_target", decomposed, "|a_ss|^2 + n_cooled_undriven")
    report.add("decomposition_relative_error", abs(n_ss - decomposed) / n_ss if n_ss else math.nan,
               "|steady_n_target - decomposition_n_target| / steady_n_target")
    return report


def _pair(series):
    return series["t_s"], series["n_target"]


def cmd_validate_frames(cfg: ScenarioConfig) -> RunReport:
    """Lab frame with a modulated coupling against the interaction picture."""
    if cfg.run.engine != "master_equation":
        raise ConfigError("validate-frames runs the master_equation engine only")
    if cfg.drive.beta != 0:
        raise ConfigError("validate-frames does not support a drive")
    report = _report("validate-frames", cfg)
    g = cfg.coupling.g
    t_final = cfg.run.t_final or (swap_time(g) if g > 0 else 5 * slow_time(cfg))
    lab = replace(cfg, coupling=CouplingParams(g, "lab_modulated"))
    ip = replace(cfg, coupling=CouplingParams(g, "interaction_full"))
    s_lab = time_series(lab, t_final)
    s_ip = time_series(ip, t_final)
    report.series["timeseries_lab"] = s_lab
    report.series["timeseries_interaction"] = s_ip
    dev = np.abs(s_lab["n_target"] - s_ip["n_target"])
    n0 = float(s_ip["n_target"][0])
    report.add("t_final_s", t_final, "timeseries_lab.csv:t_s (last row)")
    report.add("max_abs_deviation", float(dev.max()),
               "max |timeseries_lab.csv:n_target - timeseries_interaction.csv:n_target|")
    report.add("deviation_over_n0", float(dev.max()) / n0 if n0 > 0 else math.nan,
               "max_abs_deviation / timeseries_interaction.csv:n_target first row")
    report.add("omega_aux_over_omega_target", cfg.aux.angular_frequency / cfg.target.angular_frequency,
               "parameters.txt")
    return report


RUNNERS = {"cool": cmd_cool, "swap": cmd_swap, "control": cmd_control,
           "validate-frames": cmd_validate_frames}


def parse_grid(params: list[str]) -> list[tuple[str, str, list[str]]]:
    """``SECTION.KEY=v1,v2,...`` strings to ``(section, key, values)``."""
    grid = []
    for p in params:
        name, sep, values = p.partition("=")
        sec, dot, key = name.partition(".")
        if not sep or not dot or not values:
            raise ConfigError(f"--param expects SECTION.KEY=v1,v2,... got {p!r}")
        grid.append((sec.strip(), key.strip(), [v.strip() for v in values.split(",")]))
    if not 1 <= len(grid) <= 2:
        raise ConfigError("sweep takes one or two swept parameters")
    return grid


def cmd_sweep(raw: dict, grid: list[tuple[str, str, list[str]]], out: Path,
              command: str = "cool", name: str = "sweep") -> RunReport:
    """Run ``command`` at every grid point; one row per point in ``sweep.csv``."""
    if command not in RUNNERS:
        raise ConfigError(f"sweep command must be one of {sorted(RUNNERS)}")
    base = cfgmod.resolve(raw, name)
    points = list(itertools.product(*[vals for _, _, vals in grid]))
    if len(points) > base.run.max_grid_points:
        raise ConfigError(f"grid has {len(points)} points, above max_grid_points = "
                          f"{base.run.max_grid_points}")
    cfgs = []
    for values in points:
        over: dict = {}
        for (sec, key, _), v in zip(grid, values):
            over.setdefault(sec, {})[key] = v
        cfgs.append(cfgmod.resolve(cfgmod.merge(raw, over), name))

    def one(i, c):
        try:
            r = RUNNERS[command](c)
        except CommandError as exc:
            r = exc.report or _report(command, c)
            r.add("error", str(exc), "command post-condition")
        write_outputs(r, c, out / f"point_{i:03d}")
        return r

    if base.run.n_jobs == 1:
        reports = [one(i, c) for i, c in enumerate(cfgs)]
    else:
        from joblib import Parallel, delayed
        reports = Parallel(n_jobs=base.run.n_jobs)(delayed(one)(i, c) for i, c in enumerate(cfgs))

    keys: list[str] = []
    for r in reports:
        keys += [k for k in r.metrics if k not in keys]
    header = ["point"] + [f"{s}.{k}" for s, k, _ in grid] + keys
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, (values, r) in enumerate(zip(points, reports)):
            w.writerow([i, *values, *(_fmt(r.metrics.get(k, "")) for k in keys)])
    report = RunReport("sweep", name, _parameters(base), echo=base.echo)
    report.files.append(path)
    report.add("grid_points", len(points), "sweep.csv:point")
    report.per_point = reports  # type: ignore[attr-defined]
    return report


# -- argument handling -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidebandsim",
        description="Simulate sideband cooling of a low-frequency resonator by a fast, lossy one.",
        epilog="presets: " + ", ".join(sorted(cfgmod.PRESETS)))
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=(RUNNERS[name].__doc__ or "parameter sweep").split("\n")[0]
                           if name in RUNNERS else "sweep one or two parameters")
        p.add_argument("--preset", help="named parameter set")
        p.add_argument("--config", type=Path, help="INI file; values override the preset")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="trajectory seed")
        p.add_argument("--engine", choices=cfgmod.ENGINES)
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration value")
        if name == "sweep":
            p.add_argument("--param", action="append", required=True,
                           metavar="SECTION.KEY=v1,v2", help="swept values (at most two)")
            p.add_argument("--command", dest="sweep_command", default="cool",
                           choices=sorted(RUNNERS))
    return parser


def _overrides(args) -> dict:
    over: dict = {}
    for item in args.set:
        name, sep, value = item.partition("=")
        sec, dot, key = name.partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        over.setdefault(sec.strip(), {})[key.strip()] = value.strip()
    if args.seed is not None:
        over.setdefault("run", {})["seed"] = str(args.seed)
    if args.engine is not None:
        over.setdefault("run", {})["engine"] = args.engine
    return over


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        if args.preset is None and args.config is None:
            raise ConfigError("give --preset, --config, or both")
        raw = cfgmod.preset(args.preset) if args.preset else {}
        if args.config:
            raw = cfgmod.merge(raw, cfgmod.read_ini(args.config))
        raw = cfgmod.merge(raw, _overrides(args))
        name = args.preset or args.config.stem
        if args.command == "sweep":
            cfg = cfgmod.resolve(raw, name)
            out = args.out or Path(cfg.run.output) / f"sweep_{name}"
            report = cmd_sweep(raw, parse_grid(args.param), out, args.sweep_command, name)
        else:
            cfg = cfgmod.resolve(raw, name)
            out = args.out or Path(cfg.run.output) / f"{args.command}_{name}"
            try:
                report = RUNNERS[args.command](cfg)
            except CommandError as exc:
                if exc.report is not None:
                    exc.report.add("error", str(exc), "command post-condition")
                    write_outputs(exc.report, cfg, out)
                print(f"error: {exc}; partial outputs in {out}", file=sys.stderr)
                return 3
            write_outputs(report, cfg, out)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for k, v in report.metrics.items():
        print(f"{k} = {_fmt(v)}")
    print(f"# outputs in {out} ({time.perf_counter() - start:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
