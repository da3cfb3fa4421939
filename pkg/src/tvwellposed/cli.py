"""Command-line harness: ``tvwp verify|simulate|converge|wave``.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import (CoefficientPath, DELTA_MIN, constant_path, linear_path,
                           random_path, sinusoidal_path, validate_standing)
from .config import SCHEMA, ConfigError, ExperimentConfig, load_config
from .evolution import (GeneratorKind, StepSizeError, build_family, refinement_study,
                        trotter_kato_left, verify_evolution_axioms)
from .io import (atomic_write_text, write_csv, write_field_csv, write_table_csv,
                 write_trajectory_csv)
from .statespace import (PassiveRealization, check_passive, default_passivity_tol,
                         random_passive_realization)
from .timegrid import TimeGrid
from .wavelab import (WAVE_PRESETS, WaveSetup, deflection_reconstruct, discrete_int_by_parts_check,
                      split_state, wave_power_balance, wave_preset, wave_state)
from .wellposed import (SampledSignal, energy_ledger, gronwall_envelope, simulate,
                        verify_wellposed_axioms)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
ROUNDOFF_FLOOR = 1e-11
COMPOSITION_TRIPLES = 50
STANDING_NODES = 513
COMPOSITION_FLOPS = 5 * 10 ** 9
ALL_CHECKS = ("statespace", "standing", "evolution", "wellposed", "ledger", "gronwall", "wave")


@dataclass
class Experiment:
    sys: PassiveRealization
    path: CoefficientPath
    grid: TimeGrid
    kind: GeneratorKind
    x0: np.ndarray
    u: SampledSignal
    wave: WaveSetup | None
    seed: int


@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool


# ---------------------------------------------------------------- building

def _system(cfg: ExperimentConfig, rng) -> PassiveRealization:
    preset = cfg.str("system.preset", "scalar", ("scalar", "random", "wave", "inline", "file"))
    if preset == "scalar":
        return PassiveRealization([[-1.0]], [[1.0]], [[1.0]], [[0.0]], name="scalar")
    if preset == "random":
        n = cfg.int("system.n", 4)
        if n < 1:
            raise ConfigError("system.n", "must be >= 1")
        return random_passive_realization(n, rng)
    if preset == "inline":
        mats = {k: cfg.matrix(f"system.{k}") for k in "ABCD"}
        try:
            return PassiveRealization(**mats, name="inline")
        except ValueError as exc:
            raise ConfigError("system.A", str(exc)) from None
    from .io import load_realization
    try:
        return load_realization(cfg.str("system.file"))
    except (OSError, ValueError) as exc:
        raise ConfigError("system.file", str(exc)) from None


def _path(cfg: ExperimentConfig, n: int, interval, rng) -> CoefficientPath:
    preset = cfg.str("path.preset", "constant", ("constant", "linear", "sinusoidal", "random"))
    if preset == "random":
        p_amp = cfg.float("path.p_amp", 0.4)
        if not 0 <= p_amp < 1:
            raise ConfigError("path.p_amp", "must lie in [0, 1)")
        omega = cfg.float("path.omega") if "path.omega" in cfg else None
        return random_path(n, rng, interval, p_amp, cfg.float("path.g_scale", 1.0), omega)
    I, Z = np.eye(n), np.zeros((n, n))
    mats = {}
    for key, default in (("P0", I), ("P1", Z), ("G0", Z), ("G1", Z)):
        M = cfg.matrix(f"path.{key}", default)
        if M.shape != (n, n):
            raise ConfigError(f"path.{key}", f"expected a {n}x{n} matrix, got {M.shape}")
        mats[key] = M
    if preset == "constant":
        return constant_path(mats["P0"], mats["G0"], interval)
    if preset == "linear":
        return linear_path(mats["P0"], mats["P1"], mats["G0"], mats["G1"], interval)
    return sinusoidal_path(mats["P0"], mats["P1"], mats["G0"], mats["G1"],
                           cfg.float("path.omega", 1.0), cfg.float("path.phase", 0.0), interval)


def _wave(cfg: ExperimentConfig, interval) -> WaveSetup:
    preset = cfg.str("wave.preset", "uniform", WAVE_PRESETS)
    allowed = {"uniform": ("rho", "Tmod", "Q", "L_x"),
               "sine-rho": ("eps", "omega", "Tmod", "Q", "L_x"),
               "moving-object": ("amplitude", "omega", "rho_amp", "T_amp", "Q_amp", "width", "L_x")}
    params = {}
    for key in cfg.values:
        if key.startswith("wave.") and key not in ("wave.preset", "wave.N_cells", "wave.b"):
            name = key[5:]
            if name not in allowed[preset]:
                raise ConfigError(key, f"not a parameter of the {preset} preset")
            params[name] = cfg.float(key)
    b = cfg.float("wave.b", 1.0)
    if not b > 0:
        raise ConfigError("wave.b", "must be positive")
    try:
        return wave_preset(preset, cfg.int("wave.N_cells", 32), interval, b, **params)
    except ValueError as exc:
        raise ConfigError("wave.preset", str(exc)) from None


def _input(cfg: ExperimentConfig, grid: TimeGrid, m: int) -> SampledSignal:
    kind = cfg.str("input.kind", "zero", ("zero", "sine", "step", "samples"))
    amp = cfg.float("input.amplitude", 1.0)
    t = grid.nodes[:, None]
    if kind == "zero":
        return SampledSignal.zeros(grid, m)
    if kind == "sine":
        w = cfg.float("input.omega", 1.0)
        return SampledSignal(grid, amp * np.sin(w * t) * np.ones((1, m)))
    if kind == "step":
        ts = cfg.float("input.t_step", grid.t0)
        return SampledSignal(grid, amp * (t >= ts) * np.ones((1, m)))
    fname = cfg.str("input.file")
    try:
        data = np.loadtxt(fname, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError("input.file", str(exc)) from None
    if data.shape != (grid.N + 1, m):
        raise ConfigError("input.file", f"expected {grid.N + 1} rows x {m} columns, got {data.shape}")
    return SampledSignal(grid, data)


def _initial_state(cfg: ExperimentConfig, n: int, rng, wave: WaveSetup | None) -> np.ndarray:
    choice = cfg.str("state.x0", "zero")
    if choice == "zero":
        return np.zeros(n)
    if choice == "random":
        return rng.standard_normal(n)
    if choice == "standing":
        if wave is None:
            raise ConfigError("state.x0", "'standing' needs system.preset = wave")
        mesh = wave.mesh
        z = np.sin(0.5 * np.pi * mesh.nodes / mesh.L_x)
        return wave_state(mesh, np.diff(z) / mesh.h_x, np.zeros(mesh.N_cells))
    x0 = cfg.vector("state.x0")
    if x0.shape != (n,):
        raise ConfigError("state.x0", f"expected {n} entries, got {x0.size}")
    return x0


def build_experiment(cfg: ExperimentConfig, seed: int) -> Experiment:
    rng = np.random.default_rng(seed)
    grid = TimeGrid(cfg.float("grid.t0"), cfg.float("grid.h"), cfg.int("grid.N"))
    interval = (grid.t0, grid.t_end)
    wave = None
    if cfg.str("system.preset", "scalar") == "wave":
        wave = _wave(cfg, interval)
        sys_, path = wave.sys, wave.path
        kind = GeneratorKind.parse(cfg.str("system.kind", "right", ("left", "right")))
    else:
        sys_ = _system(cfg, rng)
        path = _path(cfg, sys_.n_state, interval, rng)
        kind = GeneratorKind.parse(cfg.str("system.kind", "left", ("left", "right")))
    u = _input(cfg, grid, sys_.n_in)
    x0 = _initial_state(cfg, sys_.n_state, rng, wave)
    return Experiment(sys_, path, grid, kind, x0, u, wave, seed)


# ---------------------------------------------------------------- checks

def run_checks(exp: Experiment, cfg: ExperimentConfig, tol: float | None = None,
               traj=None) -> list[CheckResult]:
    selected = cfg.list("verify.checks", ALL_CHECKS)
    for name in selected:
        if name not in ALL_CHECKS:
            raise ConfigError("verify.checks", f"unknown check group {name!r}")
    h2 = 10.0 * exp.grid.h ** 2
    tol_wp = tol if tol is not None else cfg.float("tol.wellposed", h2)
    tol_led = tol if tol is not None else cfg.float("tol.ledger", h2)
    tol_comp = cfg.float("tol.composition", 1e-12)
    results: list[CheckResult] = []

    def add(name, measured, tolerance, passed):
        results.append(CheckResult(name, float(measured), float(tolerance), bool(passed)))

    def guarded(group, fn):
        try:
            fn()
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            add(f"{group}.error", float("nan"), 0.0, False)
            print(f"{group}: {type(exc).__name__}: {exc}", file=sys.stderr)

    standing_ok = True
    if "statespace" in selected:
        def _ss():
            ptol = cfg.float("tol.passivity", default_passivity_tol(exp.sys))
            rep = check_passive(exp.sys, ptol)
            add("statespace.dissipative", rep.lambda_max_sym, ptol, rep.dissipative)
            add("statespace.passive", max(0.0, -rep.worst_value), ptol, rep.passive)
        guarded("statespace", _ss)
    if "standing" in selected:
        def _st():
            nonlocal standing_ok
            rep = validate_standing(exp.path, exp.grid, cfg.float("tol.standing", 1e-6),
                                   max_nodes=STANDING_NODES)
            failed = set(rep.failed_checks())
            standing_ok = not failed
            for name, val in rep.residuals.items():
                if name == "standing.positivity":
                    add(name, val, DELTA_MIN, name not in failed)
                else:
                    add(name, val, cfg.float("tol.standing", 1e-6) if name != "standing.symmetry"
                        else 1e-12, name not in failed)
        guarded("standing", _st)
    table = None
    if "evolution" in selected or "wellposed" in selected:
        try:
            table = build_family(exp.kind, exp.sys.A, exp.path, exp.grid)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            add("evolution.build", float("nan"), 0.0, False)
            print(f"evolution: {exc}", file=sys.stderr)
    if "evolution" in selected and table is not None:
        def _ev():
            # keep the matrix products of the composition probes near COMPOSITION_FLOPS
            n, N = exp.sys.n_state, exp.grid.N
            span = max(2, min(N, COMPOSITION_FLOPS // (COMPOSITION_TRIPLES * 2 * n ** 3)))
            rep = verify_evolution_axioms(table, tol_comp, n_triples=COMPOSITION_TRIPLES,
                                          seed=exp.seed, fit_bound=False, max_span=span)
            add("evolution.identity", 0.0 if rep.identity_exact else 1.0, 0.0, rep.identity_exact)
            add("evolution.composition", rep.composition_defect, tol_comp,
                rep.composition_defect <= tol_comp)
        guarded("evolution", _ev)
    if "wellposed" in selected and table is not None:
        def _wp():
            rep = verify_wellposed_axioms(exp.kind, exp.sys, exp.path, exp.grid, tol_wp,
                                          n_probes=20, seed=exp.seed, table=table)
            for name, val in (("phi", rep.phi_defect), ("psi", rep.psi_defect),
                              ("F", rep.F_defect)):
                add(f"wellposed.{name}", val, tol_wp, val <= tol_wp)
            add("wellposed.causality", rep.causality_defect, 0.0, rep.causality_defect == 0.0)
            if rep.shift_defect is not None:
                add("wellposed.shift", rep.shift_defect, tol_wp, rep.shift_defect <= tol_wp)
        guarded("wellposed", _wp)
    if traj is None and {"ledger", "gronwall", "wave"} & set(selected):
        try:
            traj = simulate(exp.kind, exp.sys, exp.path, exp.grid, exp.x0, exp.u)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            add("simulate.error", float("nan"), 0.0, False)
            print(f"simulate: {exc}", file=sys.stderr)
    if "ledger" in selected and traj is not None:
        def _led():
            led = energy_ledger(traj, exp.path)
            worst = float(np.max(led.residual)) / led.scale
            add("ledger.sign", worst, tol_led, worst <= tol_led)
        guarded("ledger", _led)
    if "gronwall" in selected and traj is not None:
        def _gr():
            g = gronwall_envelope(traj, exp.path)
            add("gronwall.envelope", g.worst_ratio, 1.0 + 1e-10, g.holds)
        guarded("gronwall", _gr)
    if "wave" in selected and exp.wave is not None:
        def _wv():
            w = exp.wave
            rep = check_passive(w.sys, 1e-12)
            add("wave.energy_preserving", rep.max_defect, 1e-12, rep.energy_preserving)
            ibp = discrete_int_by_parts_check(w.mesh)
            add("wave.int_by_parts", ibp.defect, 1e-13, ibp.defect <= 1e-13 and ibp.passed)
            if traj is not None and exp.kind.name == "right":
                led = energy_ledger(traj, exp.path)
                pb = wave_power_balance(traj, w.mesh, w.coeffs)
                d = float(np.max(np.abs(pb.residual - led.residual))) / led.scale
                add("wave.power_vs_ledger", d, 1e-12, d <= 1e-12)
        guarded("wave", _wv)
    if not standing_ok:
        print("standing assumptions fail; downstream results are not meaningful", file=sys.stderr)
    return results


# ---------------------------------------------------------------- commands

def _out_dir(args, cfg: ExperimentConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and "output.dir" in cfg:
        return Path(cfg.str("output.dir"))
    return Path("out")


def _seed(args, cfg: ExperimentConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.int("run.seed", 0)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("--seed", "must be an unsigned 64-bit integer")
    return seed


def _record_run(out: Path, command: str, cfg: ExperimentConfig, seed: int, extra=None):
    meta = {"command": command, "version": __version__, "seed": seed,
            "config": dict(sorted(cfg.values.items()))}
    meta.update(extra or {})
    atomic_write_text(out / "run.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _write_results(out: Path, results: list[CheckResult]) -> Path:
    return write_csv(out / "results.csv", ["check", "measured", "tolerance", "pass"],
                     [(r.name, r.measured, r.tolerance, "true" if r.passed else "false")
                      for r in results])


def _report(results: list[CheckResult]) -> int:
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<28} measured={r.measured:.3e}  tol={r.tolerance:.3e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAIL
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    seed = _seed(args, cfg)
    exp = build_experiment(cfg, seed)
    results = run_checks(exp, cfg, args.tol)
    out = _out_dir(args, cfg)
    _write_results(out, results)
    _record_run(out, "verify", cfg, seed)
    return _report(results)


def _simulate_and_write(exp: Experiment, cfg: ExperimentConfig, out: Path,
                        traj=None) -> tuple[float, object, object]:
    if traj is None:
        traj = simulate(exp.kind, exp.sys, exp.path, exp.grid, exp.x0, exp.u)
    led = energy_ledger(traj, exp.path)
    write_trajectory_csv(traj, led, out / "trajectory.csv")
    if cfg.bool("output.table", False):
        write_table_csv(build_family(exp.kind, exp.sys.A, exp.path, exp.grid), out / "table.csv")
    if exp.wave is not None and cfg.bool("output.fields", True):
        w = exp.wave
        mesh = w.mesh
        z0 = np.zeros(mesh.N_cells + 1)
        strain0, _ = split_state(mesh, exp.x0)
        z0[1:] = np.cumsum(strain0) * mesh.h_x
        z = deflection_reconstruct(traj, z0, mesh, w.coeffs)
        strain, mom = split_state(mesh, traj.x.values)
        rho = np.stack([w.coeffs.rho(t, mesh.state_nodes) for t in exp.grid.nodes])
        zdot = np.zeros_like(z)
        zdot[:, 1:] = mom / rho
        stride = max(1, exp.grid.N // 20)
        idx = np.arange(0, exp.grid.N + 1, stride)
        write_field_csv(exp.grid.nodes[idx], mesh.nodes, z[idx], zdot[idx], strain[idx],
                        out / "fields.csv")
    return led.max_abs_residual(), traj, led


def cmd_simulate(args, cfg: ExperimentConfig) -> int:
    seed = _seed(args, cfg)
    exp = build_experiment(cfg, seed)
    out = _out_dir(args, cfg)
    worst, _, led = _simulate_and_write(exp, cfg, out)
    _record_run(out, "simulate", cfg, seed, {"ledger_max_abs_residual": worst})
    print(f"wrote {out / 'trajectory.csv'}; ledger max |residual| = {worst:.3e} "
          f"(relative {worst / led.scale:.3e})")
    return EXIT_OK


def cmd_converge(args, cfg: ExperimentConfig) -> int:
    seed = _seed(args, cfg)
    exp = build_experiment(cfg, seed)
    studies = cfg.list("converge.studies", ("stepping", "averaging"))
    for s in studies:
        if s not in ("stepping", "averaging"):
            raise ConfigError("converge.studies", f"unknown study {s!r}")
    rows, ok = [], True
    if "stepping" in studies:
        levels = cfg.int("converge.levels", 3)
        if levels < 2:
            raise ConfigError("converge.levels", "must be >= 2")
        st = refinement_study(exp.kind, exp.sys.A, exp.path, exp.grid, levels,
                              reference_factor=2 ** (levels + 1))
        rows += [("stepping", h, e, st.slope) for h, e in zip(st.parameters, st.errors)]
        # an integrator that is exact for this problem leaves only round-off
        good = 1.7 <= st.slope <= 2.3 or max(st.errors) <= ROUNDOFF_FLOOR
        ok &= good
        print(f"stepping: errors {['%.3e' % e for e in st.errors]}, order {st.slope:.3f} "
              f"{'PASS' if good else 'FAIL'}")
    if "averaging" in studies:
        n_list = cfg.int_list("converge.n_list", (2, 4, 8, 16, 32))
        if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
            raise ConfigError("converge.n_list", "must be a nonempty increasing list of positive integers")
        av = trotter_kato_left(exp.sys.A, exp.path, exp.grid, n_list)
        rows += [("averaging", n, e, av.slope) for n, e in zip(av.parameters, av.errors)]
        good = av.non_increasing(0.10) or max(av.errors) <= ROUNDOFF_FLOOR
        ok &= good
        print(f"averaging: errors {['%.3e' % e for e in av.errors]}, slope {av.slope:.3f} "
              f"{'PASS' if good else 'FAIL'}")
    out = _out_dir(args, cfg)
    write_csv(out / "study.csv", ["study", "parameter", "error", "fitted_order"],
              [(s, float(p), float(e), float(o)) for s, p, e, o in rows])
    _record_run(out, "converge", cfg, seed)
    return EXIT_OK if ok else EXIT_FAIL


WAVE_DEFAULTS = {"system.preset": "wave", "system.kind": "right", "wave.preset": "uniform",
                 "wave.N_cells": "32", "grid.t0": "0", "grid.h": "0.005", "grid.N": "200",
                 "input.kind": "sine", "input.omega": "3", "state.x0": "standing"}


def cmd_wave(args, cfg: ExperimentConfig | None) -> int:
    values = dict(WAVE_DEFAULTS)
    if cfg is not None:
        values.update(cfg.values)
    if args.preset:
        values["wave.preset"] = args.preset
    if args.cells:
        values["wave.N_cells"] = str(args.cells)
    if args.steps:
        values["grid.N"] = str(args.steps)
    if args.h:
        values["grid.h"] = repr(args.h)
    cfg = ExperimentConfig(values, "wave")
    seed = _seed(args, cfg)
    exp = build_experiment(cfg, seed)
    out = _out_dir(args, cfg)
    traj = simulate(exp.kind, exp.sys, exp.path, exp.grid, exp.x0, exp.u)
    results = run_checks(exp, cfg, args.tol, traj=traj)
    _write_results(out, results)
    worst, _, led = _simulate_and_write(exp, cfg, out, traj)
    _record_run(out, "wave", cfg, seed, {"ledger_max_abs_residual": worst})
    print(f"ledger max |residual| = {worst:.3e} (relative {worst / led.scale:.3e})")
    return _report(results)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment file with 'section.key = value' lines")
    common.add_argument("--out", help="output directory (default: output.dir or ./out)")
    common.add_argument("--seed", type=int, help="seed for randomized probes (default: run.seed)")
    common.add_argument("--tol", type=float,
                        help="override the relative tolerance of the well-posedness and ledger checks")
    p = argparse.ArgumentParser(prog="tvwp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--list-keys", action="store_true", help="print the config key schema and exit")
    sub = p.add_subparsers(dest="command")
    sub.add_parser("verify", parents=[common], help="run the verification suite")
    sub.add_parser("simulate", parents=[common], help="simulate and write trajectory/ledger CSV")
    sub.add_parser("converge", parents=[common], help="h-refinement and averaging studies")
    w = sub.add_parser("wave", parents=[common], help="wave-equation preset shortcut")
    w.add_argument("--preset", choices=WAVE_PRESETS)
    w.add_argument("--cells", type=int, help="number of cells")
    w.add_argument("--steps", type=int, help="number of time steps")
    w.add_argument("--h", type=float, help="time step")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_keys:
        for key, doc in SCHEMA.items():
            print(f"{key:<20} {doc}")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if args.tol is not None and not args.tol > 0:
            raise ConfigError("--tol", "must be positive")
        cfg = load_config(args.config) if args.config else None
        if args.command == "wave":
            return cmd_wave(args, cfg)
        if cfg is None:
            raise ConfigError("--config", f"the {args.command} command needs a config file")
        return {"verify": cmd_verify, "simulate": cmd_simulate,
                "converge": cmd_converge}[args.command](args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepSizeError as exc:
        print(f"step-size error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
