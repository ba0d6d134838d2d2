"""Command-line front end: TOML configs, four subcommands, CSV artifacts.

A run is described by a TOML document with a [params] (or [raw_params])
section and exactly one command section among [analyze], [bifurcate],
[simulate], [steady], plus an optional [output] section. Unknown keys are
rejected outright: a typo in a parameter name would silently invalidate a
scientific run.

Every run directory receives a ``manifest.toml`` that mirrors the resolved
configuration (re-parseable by this module) plus a [run] section with
metadata; wall-clock time lives only there, never in data files. All numeric
CSV output is written with 17 significant digits so repeated runs are
byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 model-domain error (for example a receptor positivity breach).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bifurcation import BranchClassification, classify, classify_log
from .errors import ChemopatternError, ConfigError, ModelDomainError, NumericalError
from .linstab import is_unstable, mode_analysis
from .model import LINEAR, LOGARITHMIC, ModelParams, RawParams, nondimensionalize
from .pde import (
    Grid,
    SimControls,
    SimulationState,
    cosine_state,
    default_n_cells,
    simulate,
)
from .steady import ContinuationControls, detect_bifurcation, fit_pitchfork, trace_branch

__all__ = [
    "RunConfig",
    "parse_config",
    "parse_config_dict",
    "config_to_dict",
    "load_manifest",
    "run_analyze",
    "run_bifurcate",
    "run_simulate",
    "run_steady",
    "run_sweep",
    "main",
]

_SENSITIVITIES = {"linear": LINEAR, "logarithmic": LOGARITHMIC}
_COMMANDS = ("analyze", "bifurcate", "simulate", "steady")
_TOP_SECTIONS = set(_COMMANDS) | {"params", "raw_params", "output"}

# Parameter presets straight from the simulation regimes the model is known
# for; fig56 is a family over domain sizes (one run per length).
_PARAM_PRESETS: dict[str, dict[str, Any]] = {
    "fig2": {
        "params": {"d1": 1.0, "d2": 1.0, "chi": 20.0, "lambda": 1.0, "length": 1.0,
                   "sensitivity": "logarithmic"},
        "t_end": 60.0,
        "initial": "default",
    },
    "fig3": {
        "params": {"d1": 1.0, "d2": 1.0, "chi": 20.0, "lambda": 1.0, "length": 10.0,
                   "sensitivity": "logarithmic"},
        "t_end": 500.0,
        "initial": "default",
    },
    "fig56": {
        "params": {"d1": 0.1, "d2": 1.0, "chi": 5.0, "lambda": 1.0,
                   "sensitivity": "logarithmic"},
        "lengths": (1.0, 5.0, 10.0),
        "t_end": 200.0,
        "initial": "default",
    },
}

_INITIAL_PRESETS = ("default", "fig4d_first", "fig4d_second", "fig6")


@dataclass(frozen=True)
class InitialSpec:
    """Initial data: a named preset, or base + amp cos(mode pi x / L) pairs."""

    preset: str | None = None
    u_amp: float = 0.0
    u_mode: int = 0
    v_amp: float = 0.0
    v_mode: int = 0
    u_base: float | None = None
    v_base: float | None = None


@dataclass(frozen=True)
class AnalyzeBlock:
    k_max: int = 1000


@dataclass(frozen=True)
class BifurcateBlock:
    modes: tuple[int, ...] = (1,)


@dataclass(frozen=True)
class SimulateBlock:
    preset: str | None = None
    n_cells: int | None = None
    t_end: float = 50.0
    dt_max: float = 1e-2
    snapshot_times: tuple[float, ...] = ()
    initial: InitialSpec = InitialSpec(preset="default")
    lengths: tuple[float, ...] | None = None  # set only by the fig56 family


@dataclass(frozen=True)
class SteadyBlock:
    k: int = 1
    s_max: float = 0.05
    n_cells: int = 256
    s0: float | None = None
    write_profiles: bool = False


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    cadence: int = 10


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams
    raw: RawParams | None
    analyze: AnalyzeBlock | None
    bifurcate: BifurcateBlock | None
    simulate: SimulateBlock | None
    steady: SteadyBlock | None
    output: OutputBlock


class _Validator:
    """Collects every validation problem instead of stopping at the first."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def err(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")

    def number(self, section: dict, path: str, key: str, default=None, positive=False,
               nonnegative=False):
        if key not in section:
            return default
        value = section[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.err(f"{path}.{key}", f"expected a number, got {value!r}")
            return default
        value = float(value)
        if not math.isfinite(value):
            self.err(f"{path}.{key}", "must be finite")
            return default
        if positive and value <= 0.0:
            self.err(f"{path}.{key}", f"must be > 0, got {value:g}")
            return default
        if nonnegative and value < 0.0:
            self.err(f"{path}.{key}", f"must be >= 0, got {value:g}")
            return default
        return value

    def integer(self, section: dict, path: str, key: str, default=None, minimum=None):
        if key not in section:
            return default
        value = section[key]
        if isinstance(value, bool) or not isinstance(value, int):
            self.err(f"{path}.{key}", f"expected an integer, got {value!r}")
            return default
        if minimum is not None and value < minimum:
            self.err(f"{path}.{key}", f"must be >= {minimum}, got {value}")
            return default
        return value

    def unknown_keys(self, section: dict, path: str, allowed: set[str]) -> None:
        for key in section:
            if key not in allowed:
                self.err(f"{path}.{key}", "unknown key")


def _parse_params(section: dict, path: str, v: _Validator) -> ModelParams | None:
    keys = ("d1", "d2", "chi", "lambda", "length", "sensitivity")
    v.unknown_keys(section, path, set(keys))
    for key in keys:
        if key not in section:
            v.err(f"{path}.{key}", "missing required key")
    d1 = v.number(section, path, "d1", positive=True)
    d2 = v.number(section, path, "d2", positive=True)
    chi = v.number(section, path, "chi")
    lam = v.number(section, path, "lambda", positive=True)
    length = v.number(section, path, "length", positive=True)
    sens_name = section.get("sensitivity")
    if "sensitivity" in section and sens_name not in _SENSITIVITIES:
        v.err(f"{path}.sensitivity",
              f"must be one of {sorted(_SENSITIVITIES)}, got {sens_name!r}")
    if None in (d1, d2, chi, lam, length) or sens_name not in _SENSITIVITIES:
        return None
    return ModelParams(d1=d1, d2=d2, chi=chi, lam=lam, length=length,
                       sensitivity=_SENSITIVITIES[sens_name])


def _parse_raw_params(section: dict, path: str, v: _Validator) -> tuple[RawParams, ModelParams] | None:
    number_keys = ("d1", "d2", "chi", "lambda", "mu", "alpha", "beta", "length")
    v.unknown_keys(section, path, set(number_keys) | {"sensitivity"})
    for key in (*number_keys, "sensitivity"):
        if key not in section:
            v.err(f"{path}.{key}", "missing required key")
    values = {key: v.number(section, path, key, positive=True) for key in number_keys}
    sens_name = section.get("sensitivity")
    if "sensitivity" in section and sens_name not in _SENSITIVITIES:
        v.err(f"{path}.sensitivity",
              f"must be one of {sorted(_SENSITIVITIES)}, got {sens_name!r}")
    if any(val is None for val in values.values()) or sens_name not in _SENSITIVITIES:
        return None
    raw = RawParams(d1=values["d1"], d2=values["d2"], chi=values["chi"], lam=values["lambda"],
                    mu=values["mu"], alpha=values["alpha"], beta=values["beta"])
    params = nondimensionalize(raw, values["length"], _SENSITIVITIES[sens_name])
    return raw, params


def _parse_initial(section: dict, path: str, v: _Validator) -> InitialSpec:
    pair_keys = {"u_amp", "u_mode", "v_amp", "v_mode", "u_base", "v_base"}
    has_preset = "initial" in section
    has_pairs = any(k in section for k in pair_keys)
    if has_preset and has_pairs:
        v.err(path, "give either an initial preset or amplitude/mode pairs, not both")
        return InitialSpec(preset="default")
    if has_preset:
        name = section["initial"]
        if name not in _INITIAL_PRESETS:
            v.err(f"{path}.initial", f"unknown initial preset {name!r}; "
                  f"expected one of {list(_INITIAL_PRESETS)}")
            return InitialSpec(preset="default")
        return InitialSpec(preset=name)
    if has_pairs:
        return InitialSpec(
            preset=None,
            u_amp=v.number(section, path, "u_amp", default=0.0),
            u_mode=v.integer(section, path, "u_mode", default=0, minimum=0),
            v_amp=v.number(section, path, "v_amp", default=0.0),
            v_mode=v.integer(section, path, "v_mode", default=0, minimum=0),
            u_base=v.number(section, path, "u_base"),
            v_base=v.number(section, path, "v_base"),
        )
    return InitialSpec(preset="default")


def parse_config_dict(data: dict) -> RunConfig:
    """Validate a parsed TOML mapping; raises ConfigError listing all problems."""
    v = _Validator()
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a table of sections"])
    for key in data:
        if key not in _TOP_SECTIONS:
            v.err(key, "unknown section")

    present = [c for c in _COMMANDS if c in data]
    if len(present) != 1:
        v.err("top level",
              f"exactly one command section required ({', '.join(_COMMANDS)}); "
              f"found {present or 'none'}")
        raise ConfigError(v.errors)
    command = present[0]

    # Parameter source: [params], [raw_params], or a simulate preset.
    params: ModelParams | None = None
    raw: RawParams | None = None
    if "params" in data and "raw_params" in data:
        v.err("top level", "give either [params] or [raw_params], not both")
    preset_name = None
    sim_section = dict(data.get("simulate", {})) if command == "simulate" else {}
    if command == "simulate" and "preset" in sim_section:
        preset_name = sim_section["preset"]
        if preset_name not in _PARAM_PRESETS:
            v.err("simulate.preset",
                  f"unknown preset {preset_name!r}; expected one of {sorted(_PARAM_PRESETS)}")
            preset_name = None

    if "raw_params" in data:
        parsed = _parse_raw_params(dict(data["raw_params"]), "raw_params", v)
        if parsed is not None:
            raw, params = parsed
    elif "params" in data or preset_name is not None:
        section = dict(_PARAM_PRESETS[preset_name]["params"]) if preset_name else {}
        explicit = dict(data.get("params", {}))
        if preset_name == "fig56" and "length" in explicit:
            v.err("params.length", "preset fig56 varies the domain length; do not fix it")
            explicit.pop("length")
        section.update(explicit)
        if preset_name == "fig56":
            section.setdefault("length", _PARAM_PRESETS["fig56"]["lengths"][0])
        params = _parse_params(section, "params", v)
    else:
        v.err("top level", "missing [params] or [raw_params] (or a simulate preset)")

    analyze = bifurcate = sim_block = steady = None
    if command == "analyze":
        section = dict(data["analyze"])
        v.unknown_keys(section, "analyze", {"k_max"})
        analyze = AnalyzeBlock(k_max=v.integer(section, "analyze", "k_max", default=1000, minimum=1))
    elif command == "bifurcate":
        section = dict(data["bifurcate"])
        v.unknown_keys(section, "bifurcate", {"modes"})
        modes_raw = section.get("modes", [1])
        modes: list[int] = []
        if not isinstance(modes_raw, (list, tuple)) or not modes_raw:
            v.err("bifurcate.modes", f"expected a nonempty array of integers, got {modes_raw!r}")
        else:
            for i, m in enumerate(modes_raw):
                if isinstance(m, bool) or not isinstance(m, int) or m < 1:
                    v.err(f"bifurcate.modes[{i}]", f"expected an integer >= 1, got {m!r}")
                else:
                    modes.append(m)
        bifurcate = BifurcateBlock(modes=tuple(modes) or (1,))
    elif command == "simulate":
        allowed = {"preset", "n_cells", "t_end", "dt_max", "snapshot_times", "initial",
                   "u_amp", "u_mode", "v_amp", "v_mode", "u_base", "v_base"}
        v.unknown_keys(sim_section, "simulate", allowed)
        preset_defaults = _PARAM_PRESETS.get(preset_name, {}) if preset_name else {}
        t_end = v.number(sim_section, "simulate", "t_end",
                         default=float(preset_defaults.get("t_end", 50.0)), nonnegative=True)
        dt_max = v.number(sim_section, "simulate", "dt_max", default=1e-2, positive=True)
        n_cells = v.integer(sim_section, "simulate", "n_cells", default=None, minimum=8)
        snaps_raw = sim_section.get("snapshot_times", [])
        snaps: list[float] = []
        if not isinstance(snaps_raw, (list, tuple)):
            v.err("simulate.snapshot_times", f"expected an array of numbers, got {snaps_raw!r}")
        else:
            for i, t in enumerate(snaps_raw):
                if isinstance(t, bool) or not isinstance(t, (int, float)) or t < 0:
                    v.err(f"simulate.snapshot_times[{i}]", f"expected a number >= 0, got {t!r}")
                else:
                    snaps.append(float(t))
        if "initial" not in sim_section and not any(
            k in sim_section for k in ("u_amp", "u_mode", "v_amp", "v_mode", "u_base", "v_base")
        ) and preset_defaults.get("initial"):
            sim_section["initial"] = preset_defaults["initial"]
        initial = _parse_initial(sim_section, "simulate", v)
        lengths = tuple(preset_defaults["lengths"]) if preset_name == "fig56" else None
        sim_block = SimulateBlock(
            preset=preset_name,
            n_cells=n_cells,
            t_end=t_end,
            dt_max=dt_max,
            snapshot_times=tuple(sorted(snaps)),
            initial=initial,
            lengths=lengths,
        )
    elif command == "steady":
        section = dict(data["steady"])
        v.unknown_keys(section, "steady", {"k", "s_max", "n_cells", "s0", "write_profiles"})
        k = v.integer(section, "steady", "k", default=1, minimum=1)
        s_max = v.number(section, "steady", "s_max", default=0.05, nonnegative=True)
        n_cells = v.integer(section, "steady", "n_cells", default=256, minimum=8)
        s0 = v.number(section, "steady", "s0", default=None, positive=True)
        write_profiles = section.get("write_profiles", False)
        if not isinstance(write_profiles, bool):
            v.err("steady.write_profiles", f"expected a boolean, got {write_profiles!r}")
            write_profiles = False
        steady = SteadyBlock(k=k, s_max=s_max, n_cells=n_cells, s0=s0,
                             write_profiles=write_profiles)

    out_section = dict(data.get("output", {}))
    v.unknown_keys(out_section, "output", {"directory", "cadence"})
    directory = out_section.get("directory", "out")
    if not isinstance(directory, str):
        v.err("output.directory", f"expected a string, got {directory!r}")
        directory = "out"
    cadence = v.integer(out_section, "output", "cadence", default=10, minimum=1)
    output = OutputBlock(directory=directory, cadence=cadence)

    if v.errors:
        raise ConfigError(v.errors)
    assert params is not None
    return RunConfig(
        command=command,
        params=params,
        raw=raw,
        analyze=analyze,
        bifurcate=bifurcate,
        simulate=sim_block,
        steady=steady,
        output=output,
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML configuration document."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax: {exc}"]) from exc
    return parse_config_dict(data)


def config_to_dict(config: RunConfig) -> dict:
    """Canonical, fully resolved mapping that re-parses to an equal RunConfig."""
    out: dict[str, Any] = {}
    if config.raw is not None:
        out["raw_params"] = {
            "d1": config.raw.d1, "d2": config.raw.d2, "chi": config.raw.chi,
            "lambda": config.raw.lam, "mu": config.raw.mu, "alpha": config.raw.alpha,
            "beta": config.raw.beta, "length": config.params.length,
            "sensitivity": config.params.sensitivity.kind,
        }
    else:
        out["params"] = {
            "d1": config.params.d1, "d2": config.params.d2, "chi": config.params.chi,
            "lambda": config.params.lam, "length": config.params.length,
            "sensitivity": config.params.sensitivity.kind,
        }
        if config.simulate is not None and config.simulate.lengths is not None:
            # a family preset varies the length; fixing it would not re-parse
            del out["params"]["length"]
    if config.command == "analyze":
        out["analyze"] = {"k_max": config.analyze.k_max}
    elif config.command == "bifurcate":
        out["bifurcate"] = {"modes": list(config.bifurcate.modes)}
    elif config.command == "simulate":
        block = config.simulate
        section: dict[str, Any] = {}
        if block.preset is not None:
            section["preset"] = block.preset
        if block.n_cells is not None:
            section["n_cells"] = block.n_cells
        section["t_end"] = block.t_end
        section["dt_max"] = block.dt_max
        if block.snapshot_times:
            section["snapshot_times"] = list(block.snapshot_times)
        init = block.initial
        if init.preset is not None:
            section["initial"] = init.preset
        else:
            section.update({"u_amp": init.u_amp, "u_mode": init.u_mode,
                            "v_amp": init.v_amp, "v_mode": init.v_mode})
            if init.u_base is not None:
                section["u_base"] = init.u_base
            if init.v_base is not None:
                section["v_base"] = init.v_base
        out["simulate"] = section
    elif config.command == "steady":
        block = config.steady
        section = {"k": block.k, "s_max": block.s_max, "n_cells": block.n_cells,
                   "write_profiles": block.write_profiles}
        if block.s0 is not None:
            section["s0"] = block.s0
        out["steady"] = section
    out["output"] = {"directory": config.output.directory, "cadence": config.output.cadence}
    return out


# ---------------------------------------------------------------------------
# Deterministic serialization


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _fmt_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return _fmt_float(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(c) for c in row) + "\n")


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        text = _fmt_float(value)
        # a float that prints like an integer must stay a TOML float
        if text.lstrip("+-").isdigit():
            text += ".0"
        return text
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(item) for item in value) + "]"
    raise TypeError(f"cannot serialize {value!r} to TOML")


def write_toml(path: Path, sections: dict[str, dict]) -> None:
    lines: list[str] = []
    for name, table in sections.items():
        lines.append(f"[{name}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_scalar(value)}")
        lines.append("")
    path.write_text("\n".join(lines))


def _write_manifest(out_dir: Path, config: RunConfig, run_meta: dict) -> None:
    sections = config_to_dict(config)
    sections["run"] = run_meta
    write_toml(out_dir / "manifest.toml", sections)


def load_manifest(path: Path) -> tuple[RunConfig, dict]:
    """Read a manifest back into (RunConfig, run metadata)."""
    data = tomllib.loads(Path(path).read_text())
    meta = dict(data.pop("run", {}))
    return parse_config_dict(data), meta


def _snapshot_name(t: float) -> str:
    return f"snap_t{t:g}.csv"


def _write_profile_csv(path: Path, grid: Grid, u: np.ndarray, v: np.ndarray) -> None:
    x = grid.cell_centers()
    write_csv(path, ["x", "u", "v"], zip(x, u, v))


# ---------------------------------------------------------------------------
# Runners


def run_analyze(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    params = config.params
    k_max = config.analyze.k_max
    verdict = is_unstable(params, k_max)
    rows = []
    for k in range(1, k_max + 1):
        ma = mode_analysis(params, k)
        r1, r2 = ma.growth_rates
        rows.append((k, ma.mu_k, ma.chi_k, ma.trace, ma.det,
                     r1.real, r1.imag, r2.real, r2.imag))
    write_csv(out_dir / "analysis.csv",
              ["k", "mu_k", "chi_k", "trace", "det",
               "rate1_real", "rate1_imag", "rate2_real", "rate2_imag"],
              rows)
    lines = [
        f"chi = {_fmt_float(params.chi)}",
        f"chi_0 = {_fmt_float(verdict.chi0)} at k* = {verdict.k_star}",
        f"verdict: {'unstable' if verdict.unstable else 'stable'}"
        + (f" (witness mode k = {verdict.witness_k})" if verdict.witness_k else ""),
    ]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, config, {
        "command": "analyze", "version": __version__,
        "wall_time_s": time.perf_counter() - start,
    })
    return {"chi0": verdict.chi0, "k_star": verdict.k_star, "unstable": verdict.unstable,
            "summary": lines}


def _classification_row(c: BranchClassification) -> list:
    return [c.k, c.q_k, c.chi_k, c.k2, c.k3, c.k3_sign, c.direction, c.stability,
            c.nondegenerate, c.near_degenerate]


def run_bifurcate(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    params = config.params
    is_log = params.sensitivity.kind == "logarithmic"
    header = ["k", "q_k", "chi_k", "k2", "k3", "k3_sign", "direction", "stability",
              "nondegenerate", "near_degenerate"]
    if is_log:
        header += ["delta", "q_hat", "q_tilde", "d2_star", "d2_star_formula", "d2_double_star"]
    rows = []
    lines = []
    results = []
    for k in config.bifurcate.modes:
        if is_log:
            cls, inter = classify_log(params, k)
            row = _classification_row(cls) + [inter.delta, inter.q_hat, inter.q_tilde,
                                              inter.d2_star, inter.d2_star_formula,
                                              inter.d2_double_star]
        else:
            cls = classify(params, k)
            row = _classification_row(cls)
        rows.append(row)
        results.append(cls)
        kind = {"right": "supercritical", "left": "subcritical"}.get(cls.direction,
                                                                     "indeterminate")
        lines.append(
            f"mode {k}: chi_k = {_fmt_float(cls.chi_k)}, K3 sign {cls.k3_sign}, "
            f"{kind}, {cls.stability}"
            + ("" if cls.nondegenerate else " [degenerate]")
        )
    write_csv(out_dir / "bifurcation.csv", header, rows)
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, config, {
        "command": "bifurcate", "version": __version__,
        "wall_time_s": time.perf_counter() - start,
    })
    return {"classifications": results, "summary": lines}


def _resolve_mode(length: float, factor: float, label: str) -> int:
    mode = factor * length
    if abs(mode - round(mode)) > 1e-9:
        raise ConfigError([
            f"simulate.initial: preset {label!r} needs {factor:g} * length to be an "
            f"integer mode; got {mode:g} (use explicit amplitude/mode pairs instead)"
        ])
    return int(round(mode))


def _build_initial_state(spec: InitialSpec, params: ModelParams, grid: Grid) -> SimulationState:
    if spec.preset is None:
        return cosine_state(grid, params, spec.u_amp, spec.u_mode, spec.v_amp, spec.v_mode,
                            u_base=spec.u_base, v_base=spec.v_base)
    length = params.length
    if spec.preset == "default":
        m = _resolve_mode(length, 1.0, "default")
        return cosine_state(grid, params, 0.01, m, 0.01, m)
    if spec.preset == "fig4d_first":
        m = _resolve_mode(length, 3.0, "fig4d_first")
        return cosine_state(grid, params, 0.01, m, 0.01, m, u_base=2.0, v_base=2.0)
    if spec.preset == "fig4d_second":
        mu = _resolve_mode(length, 1.5, "fig4d_second")
        mv = _resolve_mode(length, 1.0, "fig4d_second")
        return cosine_state(grid, params, 1.0, mu, 0.5, mv)
    if spec.preset == "fig6":
        m = _resolve_mode(length, 1.5, "fig6")
        return cosine_state(grid, params, 0.01, m, 0.01, m)
    raise ConfigError([f"simulate.initial: unknown preset {spec.preset!r}"])


def _run_single_simulation(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    params = config.params
    block = config.simulate
    n_cells = block.n_cells if block.n_cells is not None else default_n_cells(params.length)
    grid = Grid(n_cells=n_cells, length=params.length)
    controls = SimControls(
        dt_max=block.dt_max,
        diag_every=config.output.cadence,
        snapshot_times=block.snapshot_times,
    )
    start = time.perf_counter()
    meta: dict[str, Any] = {
        "command": "simulate", "version": __version__,
        "n_cells": n_cells, "dx": grid.dx,
    }
    try:
        initial = _build_initial_state(block.initial, params, grid)
        result = simulate(initial, params, block.t_end, controls)
    except ChemopatternError as exc:
        meta.update({"termination": "error", "error": str(exc),
                     "wall_time_s": time.perf_counter() - start})
        _write_manifest(out_dir, config, meta)
        raise

    write_csv(
        out_dir / "diagnostics.csv",
        ["t", "mass_u", "mass_v", "min_u", "max_u", "min_v", "max_v",
         "spike_count", "amplitude", "residual_inf"],
        [(d.time, d.mass_u, d.mass_v, d.min_u, d.max_u, d.min_v, d.max_v,
          d.spike_count, d.amplitude, d.residual_inf) for d in result.diagnostics],
    )
    for t_req, snap_state in result.snapshots:
        _write_profile_csv(out_dir / _snapshot_name(t_req), grid, snap_state.u, snap_state.v)
    final = result.diagnostics[-1]
    meta.update({
        "termination": result.termination,
        "t_final": result.state.time,
        "accepted_steps": result.accepted_steps,
        "rejected_steps": result.rejected_steps,
        "wall_time_s": time.perf_counter() - start,
    })
    _write_manifest(out_dir, config, meta)
    return {
        "termination": result.termination,
        "t_final": result.state.time,
        "spike_count": final.spike_count,
        "amplitude": final.amplitude,
        "max_u": final.max_u,
        "summary": [
            f"terminated: {result.termination} at t = {result.state.time:g}",
            f"final amplitude = {final.amplitude:g}, spikes = {final.spike_count}",
        ],
    }


def run_simulate(config: RunConfig, out_dir: Path) -> dict:
    block = config.simulate
    if block.lengths is None:
        return _run_single_simulation(config, out_dir)
    # Family preset: one run per domain length, each in its own directory
    # with a concrete (preset-free) manifest.
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    spikes = []
    for length in block.lengths:
        sub_params = replace(config.params, length=length)
        sub_block = replace(block, preset=None, lengths=None)
        sub_config = replace(config, params=sub_params, simulate=sub_block)
        sub_out = out_dir / f"L{length:g}"
        result = _run_single_simulation(sub_config, sub_out)
        spikes.append((length, result["spike_count"]))
        summaries.append(f"L = {length:g}: spikes = {result['spike_count']}, "
                         f"amplitude = {result['amplitude']:g} ({result['termination']})")
    (out_dir / "summary.txt").write_text("\n".join(summaries) + "\n")
    return {"family": spikes, "summary": summaries}


def run_steady(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    params = config.params
    block = config.steady
    controls = ContinuationControls(n_cells=block.n_cells, s0=block.s0)
    grid = Grid(n_cells=block.n_cells, length=params.length)

    meta: dict[str, Any] = {"command": "steady", "version": __version__,
                            "n_cells": block.n_cells}
    try:
        branch = trace_branch(params, block.k, block.s_max, controls)
        measured_onset = detect_bifurcation(params, block.k, grid)
    except ChemopatternError as exc:
        meta.update({"termination": "error", "error": str(exc),
                     "wall_time_s": time.perf_counter() - start})
        _write_manifest(out_dir, config, meta)
        raise

    write_csv(
        out_dir / "branch.csv",
        ["chi", "amplitude", "stability_sign", "residual_inf"],
        [(p.chi, p.amplitude, p.stability_sign if p.stability_sign is not None else 0,
          p.residual_inf) for p in branch.points],
    )
    if block.write_profiles:
        for i, point in enumerate(branch.points):
            _write_profile_csv(out_dir / f"profile_{i:04d}.csv", grid, point.u, point.v)

    lines = [
        f"mode k = {block.k}",
        f"analytic onset chi_k = {_fmt_float(branch.chi_onset)}",
        f"measured onset (eigenvalue crossing) = {_fmt_float(measured_onset)}",
    ]
    predicted = classify(params, block.k)
    if not branch.points:
        if block.s_max == 0.0:
            lines.append("no continuation performed (s_max = 0): trivial branch only")
        else:
            lines.append("continuation failed to leave the trivial branch (stalled)")
    elif len(branch.points) < 5:
        lines.append(f"only {len(branch.points)} branch points "
                     f"(stalled = {branch.stalled}); too few for a pitchfork fit")
    else:
        fit = fit_pitchfork(branch)
        agreement = "indeterminate"
        if predicted.k3_sign in ("positive", "negative"):
            measured_sign = "positive" if fit.quadratic_coef > 0 else "negative"
            agreement = "yes" if measured_sign == predicted.k3_sign else "no"
        lines += [
            f"points = {fit.n_points}, stalled = {branch.stalled}",
            f"fitted onset chi_c = {_fmt_float(fit.chi_c)}",
            f"fitted amplitude exponent = {_fmt_float(fit.exponent)}",
            f"fitted linear coefficient (should vanish) = {_fmt_float(fit.linear_coef)}",
            f"fitted quadratic coefficient = {_fmt_float(fit.quadratic_coef)}",
            f"predicted K3 sign: {predicted.k3_sign}",
            f"K3 sign agreement: {agreement}",
        ]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    meta.update({"termination": "ok", "points": len(branch.points),
                 "stalled": branch.stalled,
                 "wall_time_s": time.perf_counter() - start})
    _write_manifest(out_dir, config, meta)
    return {"branch": branch, "measured_onset": measured_onset, "summary": lines}


_RUNNERS = {
    "analyze": run_analyze,
    "bifurcate": run_bifurcate,
    "simulate": run_simulate,
    "steady": run_steady,
}


# ---------------------------------------------------------------------------
# Sweep


def _parse_vary(spec: str) -> tuple[str, list[float]]:
    try:
        key, rng = spec.split("=", 1)
        start_s, stop_s, count_s = rng.split(":")
        start, stop, count = float(start_s), float(stop_s), int(count_s)
    except ValueError as exc:
        raise ConfigError(
            [f"--vary: expected key=start:stop:n, got {spec!r}"]
        ) from exc
    if count < 1:
        raise ConfigError([f"--vary: n must be >= 1, got {count}"])
    values = [start] if count == 1 else list(np.linspace(start, stop, count))
    return key.strip(), [float(v) for v in values]


def _set_dotted(data: dict, dotted: str, value: float) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError([f"--vary: section {part!r} not found in config"])
        node = node[part]
    node[parts[-1]] = value


def _sweep_worker(args: tuple[str, str, float, str]) -> str:
    text, key, value, out_dir = args
    data = tomllib.loads(text)
    _set_dotted(data, key, value)
    config = parse_config_dict(data)
    _RUNNERS[config.command](config, Path(out_dir))
    return out_dir


def run_sweep(text: str, vary: str, out_root: Path, jobs: int = 1) -> list[Path]:
    """Fan out one run per value of the varied key, each in its own directory."""
    key, values = _parse_vary(vary)
    base = tomllib.loads(text)
    parse_config_dict(base)  # validate once before spawning anything
    leaf = key.split(".")[-1]
    tasks = []
    for value in values:
        sub_dir = out_root / f"{leaf}={value:.10g}"
        tasks.append((text, key, value, str(sub_dir)))
    if jobs <= 1:
        for task in tasks:
            _sweep_worker(task)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_sweep_worker, tasks))
    return [Path(t[3]) for t in tasks]


# ---------------------------------------------------------------------------
# Entry point


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chemopattern",
        description="Stability, bifurcation, and pattern-formation runs for a "
                    "1D receptor-ligand chemotaxis model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("analyze", "per-mode linear stability and the instability threshold"),
        ("bifurcate", "pitchfork classification of the requested modes"),
        ("simulate", "time integration with diagnostics and snapshots"),
        ("steady", "branch continuation of the stationary system"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, default=None, help="output directory override")
    p = sub.add_parser("sweep", help="fan out runs over one varied config key")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--vary", required=True, metavar="KEY=START:STOP:N")
    p.add_argument("--jobs", type=int, default=1)

    args = parser.parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "sweep":
            config = parse_config(text)
            out_root = args.out or Path(config.output.directory)
            dirs = run_sweep(text, args.vary, out_root, jobs=args.jobs)
            print(f"sweep complete: {len(dirs)} runs under {out_root}")
        else:
            config = parse_config(text)
            if config.command != args.command:
                raise ConfigError([
                    f"config declares command [{config.command}] but "
                    f"'{args.command}' was invoked"
                ])
            out_dir = args.out or Path(config.output.directory)
            result = _RUNNERS[config.command](config, out_dir)
            for line in result.get("summary", []):
                print(line)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except ModelDomainError as exc:
        print(f"model-domain error: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
