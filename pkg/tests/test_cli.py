from __future__ import annotations

import math
import textwrap

import numpy as np
import pytest

from sidebandsim import cli, config


def _small(name: str, **over) -> dict:
    raw = config.preset(name)
    raw["target"]["truncation"] = "10"
    raw["aux"]["truncation"] = "6"
    for key, value in over.items():
        sec, k = key.split("__")
        raw[sec][k] = value
    return raw


def test_presets_resolve_with_expected_units():
    cfg = config.load("cool-q1e4")
    w = 2 * math.pi * 20e6
    assert cfg.target.angular_frequency == pytest.approx(w)
    assert cfg.coupling.g == pytest.approx(w / (20 * math.pi))
    assert cfg.aux.damping_rate == pytest.approx(cfg.coupling.g / 2)
    assert cfg.target.damping_rate == pytest.approx(w / 1e4)
    assert cfg.target.truncation == 32 and cfg.run.trajectories == 4096
    wide = config.load("cool-q5e5-full-40pi")
    narrow = config.load("cool-q5e5-full")
    assert wide.target.angular_frequency == pytest.approx(2 * narrow.target.angular_frequency)
    for attr in ("g",):
        assert getattr(wide.coupling, attr) == pytest.approx(getattr(narrow.coupling, attr))
    assert wide.target.damping_rate == pytest.approx(narrow.target.damping_rate)
    assert any("2 pi f" in line for line in cfg.echo)
    for name in config.PRESETS:
        config.load(name)


def test_config_file_overrides_and_rejections(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text(textwrap.dedent("""
        [target]
        quality_factor = 2e4
        temperature_k = 0.02
        [run]
        seed = 7
    """))
    cfg = config.load("cool-q1e4", ini)
    assert cfg.target.quality_factor == pytest.approx(2e4)
    assert cfg.target.n_bath == pytest.approx(1 / math.expm1(1.0545718176461565e-34 * cfg.target.angular_frequency
                                                             / (1.380649e-23 * 0.02)))
    assert cfg.run.seed == 7
    bad = tmp_path / "bad.ini"
    bad.write_text("[target]\nfrequncy_hz = 1\n")
    with pytest.raises(config.ConfigError, match="frequncy_hz"):
        config.load("cool-q1e4", bad)
    with pytest.raises(config.ConfigError):
        config.resolve({**config.preset("cool-q1e4"), "extra": {}})
    with pytest.raises(config.ConfigError):
        config.resolve(config.merge(config.preset("cool-q1e4"), {"run": {"engine": "magic"}}))
    with pytest.raises(config.ConfigError):
        config.resolve(config.merge(config.preset("cool-q1e4"), {"target": {"quality_factor": "-3"}}))


def test_cool_with_zero_coupling_returns_bath_occupation(tmp_path):
    raw = _small("cool-q1e4", coupling__omega_over_g_pi="", target__initial_n="1.0")
    raw["coupling"]["g_per_s"] = "0"
    raw["run"]["t_final_s"] = str(8 / (2 * math.pi * 20e6 / 1e4))
    cfg = config.resolve(raw)
    rep = cli.cmd_cool(cfg)
    from sidebandsim.fock import thermal_populations
    p = thermal_populations(3.68, 10)
    assert rep.metrics["steady_n_target"] == pytest.approx((np.arange(10) * p).sum(), rel=1e-6)
    assert rep.metrics["estimate_n_target"] == pytest.approx(3.68)


def test_cli_writes_deterministic_csv_and_summary(tmp_path):
    args = ["swap", "--preset", "swap-ideal", "--out", str(tmp_path / "a")]
    assert cli.main(args) == 0
    assert cli.main(["swap", "--preset", "swap-ideal", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "timeseries.csv").read_bytes()
    assert a == (tmp_path / "b" / "timeseries.csv").read_bytes()
    assert b"\r" not in a
    assert a.splitlines()[0] == b"t_s,n_target,n_aux,re_a,im_a,trace"
    summary = (tmp_path / "a" / "summary.txt").read_text().splitlines()
    values = dict(line.split(" = ", 1) for line in summary)
    assert float(values["swap_time_over_tau"]) == pytest.approx(1.0, abs=1e-6)
    assert float(values["swap_min_n_target"]) < 1e-6
    for key in ("swap_time_s", "swap_min_n_target", "cooling_factor"):
        assert "source." + key in values
    assert "omega = 2 pi f" in (tmp_path / "a" / "parameters.txt").read_text()


def test_trajectory_csv_has_sem_column_and_is_reproducible(tmp_path):
    raw = _small("cool-q1e4")
    raw["target"]["truncation"] = "5"
    raw["aux"]["truncation"] = "3"
    raw["target"]["initial_n"] = "0.5"
    raw["run"].update(engine="trajectories", trajectories="24", samples="5", t_final_s="5e-7")
    paths = []
    for sub, jobs in (("x", "1"), ("y", "2")):
        raw["run"]["n_jobs"] = jobs
        ini = tmp_path / f"{sub}.ini"
        ini.write_text(config.to_ini(raw))
        assert cli.main(["swap", "--config", str(ini), "--out", str(tmp_path / sub), "--seed", "3"]) in (0, 3)
        paths.append(tmp_path / sub / "timeseries.csv")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_text().splitlines()[0].endswith(",sem_n_target")


def test_control_reports_amplitude_and_phase_covariance():
    raw = _small("control")
    r0 = cli.cmd_control(config.resolve(raw))
    assert r0.metrics["a_relative_error"] < 0.01
    assert r0.metrics["decomposition_relative_error"] < 0.02
    raw["drive"]["phase_rad"] = "0.7"
    r1 = cli.cmd_control(config.resolve(raw))
    a0 = complex(r0.metrics["re_a_ss"], r0.metrics["im_a_ss"])
    a1 = complex(r1.metrics["re_a_ss"], r1.metrics["im_a_ss"])
    assert a1 == pytest.approx(a0 * complex(math.cos(0.7), math.sin(0.7)), abs=1e-9 * abs(a0))


def test_control_without_drive_matches_cool():
    raw = _small("control")
    raw["drive"]["beta"] = "0"
    ctl = cli.cmd_control(config.resolve(raw))
    cool = cli.cmd_cool(config.resolve(raw))
    assert ctl.metrics["steady_n_target"] == pytest.approx(cool.metrics["steady_n_target"], rel=1e-9)
    assert abs(complex(ctl.metrics["re_a_ss"], ctl.metrics["im_a_ss"])) < 1e-12
    raw.pop("drive")
    with pytest.raises(config.ConfigError):
        cli.cmd_control(config.resolve(raw))


def test_validate_frames_zero_coupling_identical():
    raw = config.preset("validate-frames")
    raw["target"]["truncation"] = "4"
    raw["aux"]["truncation"] = "3"
    raw["coupling"] = {"g_per_s": "0", "frame": "interaction_full"}
    raw["run"]["t_final_s"] = "2e-7"
    rep = cli.cmd_validate_frames(config.resolve(raw))
    assert rep.metrics["max_abs_deviation"] < 1e-9


def test_sweep_orders_plateaus_and_single_point_matches_cool(tmp_path):
    raw = _small("cool-q1e4")
    grid = cli.parse_grid(["target.quality_factor=1e4,1e5,5e5"])
    rep = cli.cmd_sweep(raw, grid, tmp_path / "sw")
    values = [r.metrics["steady_n_target"] for r in rep.per_point]
    assert values[0] > values[1] > values[2]
    rows = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("point,target.quality_factor,") and len(rows) == 4
    single = cli.cmd_sweep(raw, cli.parse_grid(["target.quality_factor=1e4"]), tmp_path / "one")
    direct = cli.cmd_cool(config.resolve(raw))
    assert single.per_point[0].metrics["steady_n_target"] == direct.metrics["steady_n_target"]
    raw["run"]["max_grid_points"] = "2"
    with pytest.raises(config.ConfigError):
        cli.cmd_sweep(raw, grid, tmp_path / "big")
    with pytest.raises(config.ConfigError):
        cli.parse_grid(["a.b=1", "c.d=2", "e.f=3"])


def test_coupling_sweep_in_rwa_is_nonincreasing_below_kappa():
    from sidebandsim.langevin import linear_model, steady_covariance
    kappa, gamma = 1e6, 1e3
    gs = np.linspace(0.02, 1.0, 30) * kappa
    n = [steady_covariance(linear_model(gamma, kappa, g, n_target=3.68)).n_target for g in gs]
    assert np.all(np.diff(n) <= 1e-15)


def test_main_reports_config_errors(capsys):
    assert cli.main(["cool"]) == 2
    assert cli.main(["cool", "--preset", "nope"]) == 2
    assert "unknown preset" in capsys.readouterr().err
