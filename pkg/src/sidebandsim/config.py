"""Scenario configuration: INI files, named presets and unit resolution.

A scenario is an INI document with sections ``[target]``, ``[aux]``,
``[coupling]``, ``[drive]`` and ``[run]``. Frequencies carry an ``_hz``
suffix and are converted to angular frequency here; rates carry ``_per_s``.
Unknown sections or keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

from .model import FRAMES, CouplingParams, DriveParams, ModeParams

ENGINES = ("master_equation", "trajectories", "langevin")
UNRAVELINGS = ("jump", "diffusive")

_MODE_KEYS = {"frequency_hz", "quality_factor", "damping_per_s", "damping_over_g",
              "n_thermal", "temperature_k", "initial_n", "initial_fock", "truncation"}
_ALLOWED = {
    "target": _MODE_KEYS,
    "aux": _MODE_KEYS,
    "coupling": {"g_per_s", "omega_over_g", "omega_over_g_pi", "frame"},
    "drive": {"beta", "phase_rad", "power_w"},
    "run": {"engine", "unraveling", "t_final_s", "dt_s", "samples", "trajectories",
            "seed", "n_jobs", "output", "max_grid_points", "steady_solve"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSettings:
    engine: str = "master_equation"
    unraveling: str = "jump"
    t_final: float | None = None
    dt: float | None = None
    samples: int = 401
    trajectories: int = 4096
    seed: int = 0
    n_jobs: int = 1
    output: str = "runs"
    max_grid_points: int = 64
    steady_solve: bool = True

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.unraveling not in UNRAVELINGS:
            raise ConfigError(f"unraveling must be one of {UNRAVELINGS}, got {self.unraveling!r}")
        for name in ("t_final", "dt"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.samples < 3 or self.trajectories < 1 or self.n_jobs == 0:
            raise ConfigError("samples >= 3, trajectories >= 1 and n_jobs != 0 are required")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    target: ModeParams
    aux: ModeParams
    coupling: CouplingParams
    drive: DriveParams
    initial_target: float
    initial_aux: float
    run: RunSettings
    fock_target: int | None = None
    fock_aux: int | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)
    echo: tuple[str, ...] = field(default=(), repr=False, compare=False)


# -- presets -------------------------------------------------------------------

_BASE = {
    "target": {"frequency_hz": "20e6", "quality_factor": "1e5", "n_thermal": "3.68",
               "initial_n": "3.68", "truncation": "32"},
    "aux": {"frequency_hz": "5e9", "damping_over_g": "0.5", "n_thermal": "0",
            "initial_n": "0", "truncation": "32"},
    "coupling": {"omega_over_g_pi": "20", "frame": "interaction_full"},
    "drive": {},
    "run": {"engine": "master_equation", "samples": "401", "trajectories": "4096", "seed": "0"},
}


def _variant(**sections) -> dict:
    out = copy.deepcopy(_BASE)
    for sec, kv in sections.items():
        out[sec].update(kv)
    return out


PRESETS: dict[str, dict] = {
    # steady-state cooling, one per target damping rate (RWA, direct solve)
    "cool-q1e4": _variant(target={"quality_factor": "1e4"}, coupling={"frame": "interaction_rwa"}),
    "cool-q1e5": _variant(target={"quality_factor": "1e5"}, coupling={"frame": "interaction_rwa"}),
    "cool-q5e5": _variant(target={"quality_factor": "5e5"}, coupling={"frame": "interaction_rwa"}),
    # counter-rotating heating: time-dependent, so propagated at reduced truncation
    "cool-q5e5-full": _variant(target={"quality_factor": "5e5", "truncation": "12"},
                                aux={"truncation": "6"}),
    "cool-q5e5-rwa-small": _variant(target={"quality_factor": "5e5", "truncation": "12"},
                                     aux={"truncation": "6"}, coupling={"frame": "interaction_rwa"}),
    # omega doubled with g, gamma, kappa and n_T held fixed
    "cool-q5e5-full-40pi": _variant(target={"quality_factor": "", "damping_per_s": "251.327412287",
                                             "truncation": "12", "frequency_hz": "40e6"},
                                     aux={"truncation": "6"},
                                     coupling={"omega_over_g_pi": "", "g_per_s": "2e6"}),
    # single swap from a hot target
    "swap-n3.68": _variant(),
    "swap-n20": _variant(target={"initial_n": "20", "n_thermal": "20"}),
    # perfect swap sanity preset
    "swap-ideal": _variant(target={"quality_factor": "", "damping_per_s": "0", "n_thermal": "0",
                                   "initial_n": "", "initial_fock": "1", "truncation": "4"},
                           aux={"damping_over_g": "", "damping_per_s": "0", "initial_n": "",
                                "initial_fock": "0", "truncation": "4"},
                           coupling={"frame": "interaction_rwa"}),
    # coherent control with a weak drive on the auxiliary input
    "control": _variant(target={"truncation": "16"}, aux={"truncation": "6"},
                        coupling={"frame": "interaction_rwa"},
                        drive={"beta": "1000", "phase_rad": "0"}),
    # lab frame at a scaled-down auxiliary frequency
    "validate-frames": _variant(target={"initial_n": "1", "truncation": "8"},
                                aux={"frequency_hz": "200e6", "truncation": "6"},
                                coupling={"omega_over_g_pi": "40"}),
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])


# -- parsing ---------------------------------------------------------------------

def read_ini(path: str | Path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    return {s: dict(parser[s]) for s in parser.sections()}


_EXCLUSIVE = {
    "target": (("quality_factor", "damping_per_s", "damping_over_g"),
               ("n_thermal", "temperature_k"), ("initial_n", "initial_fock")),
    "coupling": (("g_per_s", "omega_over_g", "omega_over_g_pi"),),
    "drive": (("beta", "power_w"),),
}
_EXCLUSIVE["aux"] = _EXCLUSIVE["target"]


def merge(base: dict, override: dict) -> dict:
    """Layer ``override`` on ``base``. Setting one key of a mutually exclusive
    group (e.g. ``temperature_k``) removes its alternatives from ``base``."""
    out = copy.deepcopy(base)
    for sec, kv in override.items():
        tgt = out.setdefault(sec, {})
        for group in _EXCLUSIVE.get(sec, ()):
            if any(k in kv for k in group):
                for k in group:
                    if k not in kv:
                        tgt.pop(k, None)
        tgt.update(kv)
    return out


def _clean(raw: dict) -> dict:
    """Drop blank values (a preset's way of unsetting a base key) and validate names."""
    out = {}
    for sec, kv in raw.items():
        if sec not in _ALLOWED:
            raise ConfigError(f"unknown section [{sec}]; expected {sorted(_ALLOWED)}")
        bad = set(kv) - _ALLOWED[sec]
        if bad:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(bad))}")
        out[sec] = {k: v.strip() for k, v in kv.items() if v is not None and v.strip() != ""}
    for sec in _ALLOWED:
        out.setdefault(sec, {})
    return out


def _num(sec: str, kv: dict, key: str, default=None, positive=False) -> float | None:
    if key not in kv:
        return default
    try:
        v = float(kv[key])
    except ValueError:
        raise ConfigError(f"[{sec}] {key} = {kv[key]!r} is not a number") from None
    if positive and not v > 0:
        raise ConfigError(f"[{sec}] {key} must be positive, got {v}")
    if not math.isfinite(v):
        raise ConfigError(f"[{sec}] {key} must be finite")
    return v


def _one_of(sec: str, kv: dict, keys: tuple[str, ...]) -> str:
    present = [k for k in keys if k in kv]
    if len(present) != 1:
        raise ConfigError(f"[{sec}] needs exactly one of {', '.join(keys)}; got {present or 'none'}")
    return present[0]


def _coupling_g(kv: dict, omega: float, echo: list) -> float:
    key = _one_of("coupling", kv, ("g_per_s", "omega_over_g", "omega_over_g_pi"))
    v = _num("coupling", kv, key, positive=key != "g_per_s")
    if key == "g_per_s":
        if v < 0:
            raise ConfigError("[coupling] g_per_s must be >= 0")
        g = v
        echo.append(f"coupling.g_per_s = {v:.6g} -> g = {g:.6g} rad/s")
    elif key == "omega_over_g":
        g = omega / v
        echo.append(f"coupling.omega_over_g = {v:.6g} -> g = omega / {v:.6g} = {g:.6g} rad/s")
    else:
        g = omega / (v * math.pi)
        echo.append(f"coupling.omega_over_g_pi = {v:.6g} -> g = omega / ({v:.6g} pi) = {g:.6g} rad/s")
    return g


def _mode(sec: str, kv: dict, g: float, echo: list) -> tuple[ModeParams, float, int | None]:
    f = _num(sec, kv, "frequency_hz", positive=True)
    if f is None:
        raise ConfigError(f"[{sec}] frequency_hz is required")
    w = 2 * math.pi * f
    echo.append(f"{sec}.frequency_hz = {f:.6g} -> omega = 2 pi f = {w:.6g} rad/s")
    dk = _one_of(sec, kv, ("quality_factor", "damping_per_s", "damping_over_g"))
    dv = _num(sec, kv, dk)
    if dv is None or dv < 0 or (dk == "quality_factor" and dv == 0):
        raise ConfigError(f"[{sec}] {dk} must be positive")
    if dk == "quality_factor":
        rate = w / dv
        echo.append(f"{sec}.quality_factor = {dv:.6g} -> damping = omega / Q = {rate:.6g} 1/s")
    elif dk == "damping_over_g":
        rate = dv * g
        echo.append(f"{sec}.damping_over_g = {dv:.6g} -> damping = {dv:.6g} g = {rate:.6g} 1/s")
    else:
        rate = dv
        echo.append(f"{sec}.damping_per_s = {dv:.6g} -> damping = {rate:.6g} 1/s")
    tk = _one_of(sec, kv, ("n_thermal", "temperature_k"))
    tv = _num(sec, kv, tk)
    if tv is None or tv < 0:
        raise ConfigError(f"[{sec}] {tk} must be >= 0")
    trunc = _num(sec, kv, "truncation", positive=True)
    if trunc is None or trunc != int(trunc):
        raise ConfigError(f"[{sec}] truncation must be a positive integer")
    if tk == "n_thermal":
        mode = ModeParams(w, rate, int(trunc), n_thermal=tv)
    else:
        mode = ModeParams(w, rate, int(trunc), temperature=tv)
        echo.append(f"{sec}.temperature_k = {tv:.6g} -> n_T = 1/(exp(hbar omega / k T) - 1) "
                    f"= {mode.n_bath:.6g}")
    fock = _num(sec, kv, "initial_fock")
    if fock is not None:
        if "initial_n" in kv:
            raise ConfigError(f"[{sec}] give initial_n or initial_fock, not both")
        if fock != int(fock) or not 0 <= fock < trunc:
            raise ConfigError(f"[{sec}] initial_fock must be an integer in [0, truncation)")
        echo.append(f"{sec}.initial_fock = {int(fock)} (pure Fock state); truncation = {int(trunc)}")
        return mode, float(fock), int(fock)
    n0 = _num(sec, kv, "initial_n", default=mode.n_bath)
    if n0 < 0:
        raise ConfigError(f"[{sec}] initial_n must be >= 0")
    echo.append(f"{sec}.initial_n = {n0:.6g} (thermal); truncation = {int(trunc)}")
    return mode, n0, None


def _drive(kv: dict, aux_w: float, echo: list) -> DriveParams:
    if not kv:
        return DriveParams()
    phase = _num("drive", kv, "phase_rad", default=0.0)
    if "beta" in kv and "power_w" in kv:
        raise ConfigError("[drive] give beta or power_w, not both")
    if "power_w" in kv:
        p = _num("drive", kv, "power_w")
        d = DriveParams.from_power(p, aux_w, phase)
        echo.append(f"drive.power_w = {p:.6g} -> |beta| = sqrt(P / (hbar Omega)) = "
                    f"{abs(d.beta):.6g} s^-1/2, phase {phase:.6g} rad")
        return d
    mag = _num("drive", kv, "beta", default=0.0)
    beta = mag * complex(math.cos(phase), math.sin(phase))
    echo.append(f"drive.beta = {mag:.6g} s^-1/2, phase {phase:.6g} rad")
    return DriveParams(beta)


def _run(kv: dict) -> RunSettings:
    def _int(key, default):
        v = _num("run", kv, key)
        if v is None:
            return default
        if v != int(v):
            raise ConfigError(f"[run] {key} must be an integer")
        return int(v)
    steady = kv.get("steady_solve", "true").lower()
    if steady not in ("true", "false", "yes", "no", "1", "0"):
        raise ConfigError("[run] steady_solve must be a boolean")
    return RunSettings(
        engine=kv.get("engine", "master_equation"),
        unraveling=kv.get("unraveling", "jump"),
        t_final=_num("run", kv, "t_final_s"),
        dt=_num("run", kv, "dt_s"),
        samples=_int("samples", 401),
        trajectories=_int("trajectories", 4096),
        seed=_int("seed", 0),
        n_jobs=_int("n_jobs", 1),
        output=kv.get("output", "runs"),
        max_grid_points=_int("max_grid_points", 64),
        steady_solve=steady in ("true", "yes", "1"),
    )


def resolve(raw: dict, name: str = "custom") -> ScenarioConfig:
    """Validate a section dictionary and convert it to model parameters."""
    raw = _clean(raw)
    echo: list[str] = []
    f_target = _num("target", raw["target"], "frequency_hz", positive=True)
    if f_target is None:
        raise ConfigError("[target] frequency_hz is required")
    g = _coupling_g(raw["coupling"], 2 * math.pi * f_target, echo)
    frame = raw["coupling"].get("frame", "interaction_full")
    if frame not in FRAMES:
        raise ConfigError(f"[coupling] frame must be one of {FRAMES}, got {frame!r}")
    echo.append(f"coupling.frame = {frame}")
    target, n0, fock_t = _mode("target", raw["target"], g, echo)
    aux, n0_aux, fock_a = _mode("aux", raw["aux"], g, echo)
    drive = _drive(raw["drive"], aux.angular_frequency, echo)
    run = _run(raw["run"])
    echo.append(f"run.engine = {run.engine}; seed = {run.seed}")
    return ScenarioConfig(name, target, aux, CouplingParams(g, frame), drive, n0, n0_aux,
                          run, fock_t, fock_a, raw, tuple(echo))


def load(preset_name: str | None = None, path: str | Path | None = None,
         overrides: dict | None = None) -> ScenarioConfig:
    """Preset values, then the file on top, then command-line overrides."""
    if preset_name is None and path is None:
        raise ConfigError("give a preset, a config file, or both")
    raw = preset(preset_name) if preset_name else {}
    if path is not None:
        raw = merge(raw, read_ini(path))
    if overrides:
        raw = merge(raw, overrides)
    name = preset_name or Path(path).stem
    return resolve(raw, name)


def to_ini(raw: dict) -> str:
    """Render a section dictionary as INI text with sorted keys."""
    lines = []
    for sec in _ALLOWED:
        kv = raw.get(sec, {})
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {kv[k]}" for k in sorted(kv))
        lines.append("")
    return "\n".join(lines)
