"""Flat ``section.key = value`` experiment configuration.

Lines starting with ``#`` or ``;`` are comments.  Matrices are written row
by row, entries separated by commas and rows by semicolons
(``1, 0; 0, 1``).  Every key is documented in :data:`SCHEMA`; unknown keys
are rejected so typos surface as errors.
"""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


SCHEMA: dict[str, str] = {
    "run.seed": "integer seed for all randomized probes (default 0)",
    "system.preset": "scalar | random | wave | inline | file (default scalar)",
    "system.kind": "left | right (default left; wave systems are right)",
    "system.n": "state dimension for the random preset (default 4)",
    "system.A": "inline matrix", "system.B": "inline matrix",
    "system.C": "inline matrix", "system.D": "inline matrix",
    "system.file": "realization JSON for the file preset",
    "path.preset": "constant | linear | sinusoidal | random (default constant)",
    "path.P0": "matrix (default I)", "path.P1": "matrix (default 0)",
    "path.G0": "matrix (default 0)", "path.G1": "matrix (default 0)",
    "path.omega": "angular frequency of the sinusoidal/random presets",
    "path.phase": "phase of the sinusoidal preset",
    "path.p_amp": "random preset: amplitude of the P oscillation (default 0.4)",
    "path.g_scale": "random preset: size of G (default 1)",
    "wave.preset": "uniform | sine-rho | moving-object (default uniform)",
    "wave.N_cells": "number of cells (default 32)",
    "wave.b": "scattering parameter (default 1)",
    "wave.L_x": "string length (default 1)",
    "wave.rho": "uniform: density", "wave.Tmod": "uniform/sine-rho: Young's modulus",
    "wave.Q": "uniform/sine-rho: damping", "wave.eps": "sine-rho: density modulation",
    "wave.omega": "sine-rho/moving-object: angular frequency",
    "wave.amplitude": "moving-object: excursion of the centre",
    "wave.rho_amp": "moving-object: density bump", "wave.T_amp": "moving-object: modulus bump",
    "wave.Q_amp": "moving-object: damping bump", "wave.width": "moving-object: bump width",
    "grid.t0": "start time (required)", "grid.h": "step (required)", "grid.N": "steps (required)",
    "input.kind": "zero | sine | step | samples (default zero)",
    "input.amplitude": "sine/step amplitude (default 1)",
    "input.omega": "sine angular frequency (default 1)",
    "input.t_step": "step switching time (default grid.t0)",
    "input.file": "CSV with one column per input and N+1 rows",
    "state.x0": "zero | random | standing (wave) | comma-separated vector (default zero)",
    "output.dir": "output directory (overridden by --out; default out)",
    "output.table": "also write the propagator table CSV (default false)",
    "output.fields": "wave only: write field snapshots (default true)",
    "tol.standing": "derivative-consistency tolerance (default 1e-6)",
    "tol.passivity": "passivity tolerance (default 1e-10 * scale)",
    "tol.composition": "evolution composition tolerance (default 1e-12)",
    "tol.wellposed": "relative defect tolerance of the composition laws (default 10 h^2)",
    "tol.ledger": "relative one-sided ledger tolerance (default 10 h^2)",
    "verify.checks": "comma list from statespace, standing, evolution, wellposed, "
                     "ledger, gronwall, wave (default all that apply)",
    "converge.studies": "comma list from stepping, averaging (default both)",
    "converge.levels": "refinement levels h, h/2, ... (default 3)",
    "converge.n_list": "averaging parameters (default 2,4,8,16,32)",
}

REQUIRED = ("grid.t0", "grid.h", "grid.N")


class ExperimentConfig:
    """Validated key/value view with typed getters."""

    def __init__(self, values: dict[str, str], source: str = "<string>"):
        self.values = dict(values)
        self.source = source
        for key in self.values:
            if key not in SCHEMA:
                raise ConfigError(key, "unknown key")
        for key in REQUIRED:
            if key not in self.values:
                raise ConfigError(key, "missing required key")
        if self.int("grid.N") < 1:
            raise ConfigError("grid.N", "must be >= 1")
        if not self.float("grid.h") > 0:
            raise ConfigError("grid.h", "must be positive")
        for key in self.values:
            if key.startswith("tol.") and not self.float(key) > 0:
                raise ConfigError(key, "tolerances must be positive")

    def __contains__(self, key):
        return key in self.values

    def set(self, key: str, value):
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        self.values[key] = str(value)

    def str(self, key: str, default=None, choices=None) -> str:
        if key not in self.values:
            if default is None:
                raise ConfigError(key, "missing required key")
            return default
        v = self.values[key].strip()
        if choices is not None and v not in choices:
            raise ConfigError(key, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def float(self, key: str, default=None) -> float:
        if key not in self.values and default is not None:
            return float(default)
        raw = self.str(key)
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
        if not np.isfinite(v):
            raise ConfigError(key, "must be finite")
        return v

    def int(self, key: str, default=None) -> int:
        if key not in self.values and default is not None:
            return int(default)
        raw = self.str(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None

    def bool(self, key: str, default: bool = False) -> bool:
        if key not in self.values:
            return default
        raw = self.values[key].strip().lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected true/false, got {raw!r}")

    def list(self, key: str, default=()) -> list[str]:
        if key not in self.values:
            return list(default)
        return [p.strip() for p in self.values[key].split(",") if p.strip()]

    def int_list(self, key: str, default=()) -> list[int]:
        try:
            return [int(p) for p in self.list(key, [str(d) for d in default])]
        except ValueError:
            raise ConfigError(key, "expected a comma-separated list of integers") from None

    def vector(self, key: str) -> np.ndarray:
        try:
            return np.array([float(p) for p in self.list(key)], dtype=float)
        except ValueError:
            raise ConfigError(key, "expected a comma-separated list of numbers") from None

    def matrix(self, key: str, default=None) -> np.ndarray:
        if key not in self.values:
            if default is None:
                raise ConfigError(key, "missing required key")
            return np.asarray(default, dtype=float)
        rows = [r for r in self.values[key].split(";") if r.strip()]
        try:
            data = [[float(v) for v in r.split(",")] for r in rows]
        except ValueError:
            raise ConfigError(key, "matrix entries must be numbers") from None
        if not data or len({len(r) for r in data}) != 1:
            raise ConfigError(key, "matrix rows must be nonempty and of equal length")
        return np.array(data, dtype=float)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(exc.option, "given more than once") from None
    except configparser.Error as exc:
        raise ConfigError("<syntax>", str(exc).splitlines()[0]) from None
    return ExperimentConfig(dict(cp["experiment"]), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
