"""Simulation of the perturbed systems and their well-posed-system structure.

For a passive core ``(A, B, C, D)`` and a coefficient path ``(P, G)``:

* left:  ``x' = P^-1 (A x + B u) + G x``,  ``y = C x + D u``
* right: ``x' = (A P + G) x + B u``,       ``y = C P x + D u``

Both are stepped with the implicit midpoint rule, inputs entering through
the average of the two node samples.  Signals live on grid nodes; the
output-type maps ``Psi`` and ``F`` truncate to the half-open node range
``[tau, t)`` so that concatenation and causality are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import CoefficientPath
from .evolution import (LEFT, RIGHT, GeneratorKind, PropagatorTable, StepSizeError,
                        build_family, generator_matrix)
from .statespace import PassiveRealization
from .timegrid import TimeGrid

__all__ = [
    "EnergyLedger",
    "GronwallCheck",
    "LaxPhillipsWindow",
    "MidpointSamples",
    "SampledSignal",
    "Trajectory",
    "WellposedReport",
    "energy_ledger",
    "gronwall_constant",
    "gronwall_envelope",
    "input_map_phi",
    "io_map_F",
    "lax_phillips_apply",
    "output_map_psi",
    "simulate",
    "simulate_left",
    "simulate_right",
    "verify_wellposed_axioms",
]


# ---------------------------------------------------------------- signals

@dataclass(frozen=True)
class SampledSignal:
    """Node samples ``values[i] = s(t_i)``, shape ``(N+1, dim)``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N + 1:
            raise ValueError(f"signal has {v.shape[0]} samples, grid has {self.grid.N + 1} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal has non-finite samples")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> "SampledSignal":
        return cls(grid, np.zeros((grid.N + 1, dim)))

    @classmethod
    def from_function(cls, grid: TimeGrid, f: Callable[[float], np.ndarray]) -> "SampledSignal":
        return cls(grid, np.array([np.atleast_1d(f(t)) for t in grid.nodes], dtype=float))

    def midpoints(self) -> np.ndarray:
        v = self.values
        return 0.5 * (v[1:] + v[:-1])

    def truncate(self, i0: int, i1: int) -> "SampledSignal":
        """Zero every sample outside the half-open node range ``[i0, i1)``."""
        v = np.zeros_like(self.values)
        v[i0:i1] = self.values[i0:i1]
        return SampledSignal(self.grid, v)

    def norm2(self) -> float:
        """Trapezoid ``int |s|^2``."""
        sq = np.sum(self.values ** 2, axis=1)
        return float(self.grid.h * (sq.sum() - 0.5 * (sq[0] + sq[-1])))

    def __add__(self, other: "SampledSignal") -> "SampledSignal":
        return SampledSignal(self.grid, self.values + other.values)

    def __sub__(self, other: "SampledSignal") -> "SampledSignal":
        return SampledSignal(self.grid, self.values - other.values)


def _as_signal(u, grid: TimeGrid, dim: int) -> SampledSignal:
    if u is None:
        return SampledSignal.zeros(grid, dim)
    if isinstance(u, SampledSignal):
        if u.grid != grid:
            raise ValueError("input signal lives on a different grid")
        sig = u
    elif callable(u):
        sig = SampledSignal.from_function(grid, u)
    else:
        sig = SampledSignal(grid, u)
    if sig.dim != dim:
        raise ValueError(f"input has dimension {sig.dim}, system has {dim} inputs")
    return sig


@dataclass(frozen=True)
class MidpointSamples:
    """``(u, x, y)`` at interval midpoints; ``x`` is the average of the nodes."""

    u: np.ndarray
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    u: SampledSignal
    x: SampledSignal
    y: SampledSignal
    kind: GeneratorKind
    midpoint_samples: MidpointSamples | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.x.grid


# ---------------------------------------------------------------- simulation

def _output_matrix(kind: GeneratorKind, sys: PassiveRealization, path: CoefficientPath,
                   t: float) -> np.ndarray:
    return sys.C @ path.P(t) if kind.name == "right" else sys.C


def _input_matrix(kind: GeneratorKind, sys: PassiveRealization, path: CoefficientPath,
                  t: float) -> np.ndarray:
    return sys.B if kind.name == "right" else np.linalg.solve(path.P(t), sys.B)


def _kind(kind) -> GeneratorKind:
    kind = GeneratorKind.parse(kind) if isinstance(kind, str) else kind
    if kind.name not in ("left", "right"):
        raise ValueError(f"systems are 'left' or 'right', got {kind}")
    return kind


def simulate(kind, sys: PassiveRealization, path: CoefficientPath, grid: TimeGrid, x0,
             u=None, keep_midpoints: bool = True) -> Trajectory:
    """Implicit-midpoint simulation of the left or right system.

    Each step solves
    ``(I - h/2 A_k(m)) x_{k+1} = (I + h/2 A_k(m)) x_k + h B_k(m) u_m``
    with ``u_m`` the mean of the two node samples.
    """
    kind = _kind(kind)
    if not path.contains(grid.t0, grid.t_end):
        raise ValueError(f"grid leaves the path interval {path.interval}")
    n = sys.n_state
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != n:
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {n}")
    u = _as_signal(u, grid, sys.n_in)
    h = grid.h
    I = np.eye(n)
    um = u.midpoints()
    x = np.empty((grid.N + 1, n))
    x[0] = x0
    for k, m in enumerate(grid.midpoints):
        Ak = generator_matrix(kind, sys.A, path, m)
        half = 0.5 * h * Ak
        rhs = x[k] + half @ x[k] + h * (_input_matrix(kind, sys, path, m) @ um[k])
        try:
            x[k + 1] = np.linalg.solve(I - half, rhs)
        except np.linalg.LinAlgError:
            norm = np.linalg.norm(Ak, 2)
            raise StepSizeError(m - 0.5 * h, h, 1.0 / norm if norm else h / 2) from None
        if not np.all(np.isfinite(x[k + 1])):
            raise StepSizeError(m - 0.5 * h, h, h / 2)
    D = sys.D
    y = np.stack([_output_matrix(kind, sys, path, t) @ xi + D @ ui
                  for t, xi, ui in zip(grid.nodes, x, u.values)])
    mid = None
    if keep_midpoints:
        xm = 0.5 * (x[1:] + x[:-1])
        ym = np.stack([_output_matrix(kind, sys, path, t) @ xi + D @ ui
                       for t, xi, ui in zip(grid.midpoints, xm, um)])
        mid = MidpointSamples(um, xm, ym)
    return Trajectory(u, SampledSignal(grid, x), SampledSignal(grid, y), kind, mid)


def simulate_left(sys, path, grid, x0, u=None, keep_midpoints: bool = True) -> Trajectory:
    return simulate(LEFT, sys, path, grid, x0, u, keep_midpoints)


def simulate_right(sys, path, grid, x0, u=None, keep_midpoints: bool = True) -> Trajectory:
    return simulate(RIGHT, sys, path, grid, x0, u, keep_midpoints)


# ---------------------------------------------------------------- four maps

def _check_indices(table: PropagatorTable, tau_index: int, t_index: int):
    if not (0 <= tau_index <= t_index <= table.N):
        raise ValueError(f"need 0 <= tau_index <= t_index <= {table.N}, "
                         f"got ({tau_index}, {t_index})")


def input_map_phi(kind, sys: PassiveRealization, path: CoefficientPath, table: PropagatorTable,
                  tau_index: int, t_index: int, u, method: str = "quadrature") -> np.ndarray:
    """Final state from zero initial state: ``int_tau^t T(t, s) B_k(s) u(s) ds``.

    ``B_k = P^-1 B`` (left) or ``B`` (right).  ``method="simulation"`` runs the
    simulator instead of the trapezoid quadrature.
    """
    kind = _kind(kind)
    _check_indices(table, tau_index, t_index)
    grid = table.grid
    u = _as_signal(u, grid, sys.n_in)
    if t_index == tau_index:
        return np.zeros(sys.n_state)
    if method == "simulation":
        sub = grid.sub(tau_index, t_index)
        us = SampledSignal(sub, u.values[tau_index: t_index + 1])
        return simulate(kind, sys, path, sub, np.zeros(sys.n_state), us,
                        keep_midpoints=False).x.values[-1]
    b = np.zeros((table.N + 1, sys.n_state))
    for s in range(tau_index, t_index + 1):
        b[s] = _input_matrix(kind, sys, path, grid.t(s)) @ u.values[s]
    return table.accumulate(tau_index, b, t_index)[-1]


def _phi_curve(kind, sys, path, table, tau_index, t_index, u) -> np.ndarray:
    grid = table.grid
    b = np.zeros((table.N + 1, sys.n_state))
    for s in range(tau_index, t_index + 1):
        b[s] = _input_matrix(kind, sys, path, grid.t(s)) @ u.values[s]
    return table.accumulate(tau_index, b, t_index)


def output_map_psi(kind, sys: PassiveRealization, path: CoefficientPath, table: PropagatorTable,
                   tau_index: int, t_index: int, x0, method: str = "quadrature") -> SampledSignal:
    """Free response ``s -> C_k(s) T(s, tau) x0`` on ``[tau, t)``, zero elsewhere."""
    kind = _kind(kind)
    _check_indices(table, tau_index, t_index)
    grid = table.grid
    out = np.zeros((grid.N + 1, sys.n_out))
    if t_index == tau_index:
        return SampledSignal(grid, out)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if method == "simulation":
        sub = grid.sub(tau_index, t_index)
        tr = simulate(kind, sys, path, sub, x0, None, keep_midpoints=False)
        out[tau_index:t_index] = tr.y.values[:-1]
        return SampledSignal(grid, out)
    xs = table.propagate(tau_index, x0, t_index)
    for r in range(tau_index, t_index):
        out[r] = _output_matrix(kind, sys, path, grid.t(r)) @ xs[r - tau_index]
    return SampledSignal(grid, out)


def io_map_F(kind, sys: PassiveRealization, path: CoefficientPath, table: PropagatorTable,
             tau_index: int, t_index: int, u, method: str = "quadrature") -> SampledSignal:
    """Forced response from zero state, ``C_k(s) Phi(s, tau) u + D u(s)``, on ``[tau, t)``."""
    kind = _kind(kind)
    _check_indices(table, tau_index, t_index)
    grid = table.grid
    u = _as_signal(u, grid, sys.n_in)
    out = np.zeros((grid.N + 1, sys.n_out))
    if t_index == tau_index:
        return SampledSignal(grid, out)
    if method == "simulation":
        sub = grid.sub(tau_index, t_index)
        us = SampledSignal(sub, u.values[tau_index: t_index + 1])
        tr = simulate(kind, sys, path, sub, np.zeros(sys.n_state), us, keep_midpoints=False)
        out[tau_index:t_index] = tr.y.values[:-1]
        return SampledSignal(grid, out)
    phi = _phi_curve(kind, sys, path, table, tau_index, t_index, u)
    for r in range(tau_index, t_index):
        out[r] = (_output_matrix(kind, sys, path, grid.t(r)) @ phi[r - tau_index]
                  + sys.D @ u.values[r])
    return SampledSignal(grid, out)


# ---------------------------------------------------------------- axioms

@dataclass
class WellposedReport:
    passed: bool
    tol: float
    phi_defect: float
    psi_defect: float
    F_defect: float
    causality_defect: float
    shift_defect: float | None
    n_probes: int
    seed: int
    worst: dict = field(default_factory=dict)


def _is_time_invariant(path: CoefficientPath, grid: TimeGrid) -> bool:
    P0, G0 = path.P(grid.t0), path.G(grid.t0)
    for t in np.linspace(grid.t0, grid.t_end, 9):
        if not (np.array_equal(path.P(t), P0) and np.array_equal(path.G(t), G0)):
            return False
    return True


def verify_wellposed_axioms(kind, sys: PassiveRealization, path: CoefficientPath,
                            grid: TimeGrid, tol: float | None = None, n_probes: int = 50,
                            seed: int = 0, table: PropagatorTable | None = None) -> WellposedReport:
    """Composition laws, causality and (for constant paths) shift invariance.

    Probes draw ``x0``, ``u`` and node triples ``tau <= s <= t`` from a
    seeded generator.  Defects are relative to the probe size.  The default
    tolerance is ``10 h^2`` times that scale.
    """
    kind = _kind(kind)
    if table is None:
        table = build_family(kind, sys.A, path, grid)
    if tol is None:
        tol = 10.0 * grid.h ** 2
    rng = np.random.default_rng(seed)
    N = grid.N
    d_phi = d_psi = d_F = d_caus = 0.0
    worst = {}
    for _ in range(n_probes):
        tau, s, t = sorted(rng.integers(0, N + 1, 3).tolist())
        x0 = rng.standard_normal(sys.n_state)
        u = SampledSignal(grid, rng.standard_normal((N + 1, sys.n_in)))
        scale = 1.0 + np.linalg.norm(x0) + np.abs(u.values).max()

        phi_ts = input_map_phi(kind, sys, path, table, tau, t, u)
        phi_ss = input_map_phi(kind, sys, path, table, s, t, u)
        phi_st = input_map_phi(kind, sys, path, table, tau, s, u)
        e = np.linalg.norm(phi_ts - phi_ss - table.apply(t, s, phi_st)) / scale
        if e > d_phi:
            d_phi, worst["phi"] = e, (tau, s, t)

        psi = output_map_psi(kind, sys, path, table, tau, t, x0).values
        cat = (output_map_psi(kind, sys, path, table, tau, s, x0).values
               + output_map_psi(kind, sys, path, table, s, t, table.apply(s, tau, x0)).values)
        e = np.abs(psi - cat).max() / scale
        if e > d_psi:
            d_psi, worst["psi"] = e, (tau, s, t)

        F = io_map_F(kind, sys, path, table, tau, t, u).values
        rhs = (io_map_F(kind, sys, path, table, s, t, u).values
               + io_map_F(kind, sys, path, table, tau, s, u).values
               + output_map_psi(kind, sys, path, table, s, t, phi_st).values)
        e = np.abs(F - rhs).max() / scale
        if e > d_F:
            d_F, worst["F"] = e, (tau, s, t)

        # inputs changed outside [tau, t] must not reach the state or the outputs
        v = u.values.copy()
        outside = np.ones(N + 1, dtype=bool)
        outside[tau: t + 1] = False
        v[outside] += rng.standard_normal((int(outside.sum()), sys.n_in))
        u2 = SampledSignal(grid, v)
        e = max(np.abs(input_map_phi(kind, sys, path, table, tau, t, u2) - phi_ts).max(initial=0.0),
                np.abs(io_map_F(kind, sys, path, table, tau, t, u2).values - F).max())
        d_caus = max(d_caus, float(e))

    d_shift = None
    if _is_time_invariant(path, grid) and N >= 4:
        d_shift = 0.0
        for _ in range(max(1, n_probes // 5)):
            length = int(rng.integers(1, N // 2 + 1))
            a = int(rng.integers(0, N - length + 1))
            b = int(rng.integers(0, N - length + 1))
            x0 = rng.standard_normal(sys.n_state)
            vals = rng.standard_normal((N + 1, sys.n_in))
            ua = np.zeros_like(vals)
            ub = np.zeros_like(vals)
            ua[a: a + length + 1] = vals[: length + 1]
            ub[b: b + length + 1] = vals[: length + 1]
            ua, ub = SampledSignal(grid, ua), SampledSignal(grid, ub)
            scale = 1.0 + np.linalg.norm(x0) + np.abs(vals).max()
            V = rng.standard_normal((sys.n_state, min(sys.n_state, 8)))
            e = [np.abs(table.apply(a + length, a, V) - table.apply(b + length, b, V)).max()
                 / np.abs(V).max(),
                 np.abs(input_map_phi(kind, sys, path, table, a, a + length, ua)
                        - input_map_phi(kind, sys, path, table, b, b + length, ub)).max() / scale]
            ya = output_map_psi(kind, sys, path, table, a, a + length, x0).values[a: a + length]
            yb = output_map_psi(kind, sys, path, table, b, b + length, x0).values[b: b + length]
            Fa = io_map_F(kind, sys, path, table, a, a + length, ua).values[a: a + length]
            Fb = io_map_F(kind, sys, path, table, b, b + length, ub).values[b: b + length]
            e += [np.abs(ya - yb).max(initial=0.0) / scale, np.abs(Fa - Fb).max(initial=0.0) / scale]
            d_shift = max(d_shift, float(max(e)))

    defects = [d_phi, d_psi, d_F] + ([d_shift] if d_shift is not None else [])
    passed = max(defects) <= tol and d_caus == 0.0
    return WellposedReport(passed=passed, tol=tol, phi_defect=d_phi, psi_defect=d_psi,
                           F_defect=d_F, causality_defect=d_caus, shift_defect=d_shift,
                           n_probes=n_probes, seed=seed, worst=worst)


# ---------------------------------------------------------------- energy

@dataclass(frozen=True)
class EnergyLedger:
    """Cumulative terms of the energy identity at the grid nodes.

    ``residual = stored - stored[0] + out_energy - in_energy - pdot_term - g_cross``;
    the energy inequality says ``residual <= 0``.
    """

    t: np.ndarray
    stored: np.ndarray
    in_energy: np.ndarray
    out_energy: np.ndarray
    pdot_term: np.ndarray
    g_cross: np.ndarray
    residual: np.ndarray

    @property
    def scale(self) -> float:
        """Size of the individual terms, for relative tolerances."""
        terms = (self.stored, self.in_energy, self.out_energy,
                 np.abs(self.pdot_term), np.abs(self.g_cross))
        return float(max(1e-300, max(np.max(np.abs(a)) for a in terms)))

    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def _cumulative(steps: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(steps)])


def energy_ledger(traj: Trajectory, path: CoefficientPath) -> EnergyLedger:
    """Energy ledger from the trajectory's midpoint samples (midpoint rule)."""
    mid = traj.midpoint_samples
    if mid is None:
        raise ValueError("trajectory has no midpoint samples; re-simulate with keep_midpoints=True")
    grid = traj.grid
    h = grid.h
    x = traj.x.values
    stored = np.array([xi @ path.P(t) @ xi for t, xi in zip(grid.nodes, x)])
    pdot = np.empty(grid.N)
    gcross = np.empty(grid.N)
    for k, m in enumerate(grid.midpoints):
        xm = mid.x[k]
        pdot[k] = xm @ path.Pdot(m) @ xm
        gcross[k] = 2.0 * (path.P(m) @ xm) @ (path.G(m) @ xm)
    ein = _cumulative(h * np.sum(mid.u ** 2, axis=1))
    eout = _cumulative(h * np.sum(mid.y ** 2, axis=1))
    pdot = _cumulative(h * pdot)
    gcross = _cumulative(h * gcross)
    residual = stored - stored[0] + eout - ein - pdot - gcross
    return EnergyLedger(grid.nodes, stored, ein, eout, pdot, gcross, residual)


def _spectral_norm(M: np.ndarray) -> float:
    d = np.diagonal(M)
    if np.array_equal(M, np.diag(d)):
        return float(np.abs(d).max(initial=0.0))
    return float(np.linalg.norm(M, 2))


def gronwall_constant(path: CoefficientPath, times) -> float:
    """Sampled ``sup |P^-1/2 P' P^-1/2| + 2 |P^1/2 G P^-1/2|``."""
    best = 0.0
    for t in np.atleast_1d(times):
        P = np.asarray(path.P(t), dtype=float)
        d = np.diagonal(P)
        if np.array_equal(P, np.diag(d)):
            r = np.sqrt(d)
            X = path.Pdot(t) / np.outer(r, r)
            Y = path.G(t) * np.outer(r, 1.0 / r)
        else:
            w, V = np.linalg.eigh(P)
            rt = (V * np.sqrt(w)) @ V.T
            irt = (V / np.sqrt(w)) @ V.T
            X = irt @ path.Pdot(t) @ irt
            Y = rt @ path.G(t) @ irt
        best = max(best, _spectral_norm(X) + 2.0 * _spectral_norm(Y))
    return best


@dataclass(frozen=True)
class GronwallCheck:
    holds: bool
    M: float
    phi: np.ndarray
    envelope: np.ndarray
    worst_ratio: float


def gronwall_envelope(traj: Trajectory, path: CoefficientPath, rel_slack: float = 1e-10) -> GronwallCheck:
    """Check ``phi(t) <= alpha(t) exp(M (t - tau))`` at every node.

    ``phi = <P x, x> + int |y|^2`` and ``alpha = <P x, x>(tau) + int |u|^2``,
    with ``M`` sampled at the nodes and midpoints of the trajectory's grid.
    """
    led = energy_ledger(traj, path)
    grid = traj.grid
    M = gronwall_constant(path, np.concatenate([grid.nodes, grid.midpoints]))
    phi = led.stored + led.out_energy
    alpha = led.stored[0] + led.in_energy
    env = alpha * np.exp(M * (grid.nodes - grid.t0))
    bound = env * (1.0 + rel_slack)
    holds = bool(np.all(phi <= bound + 1e-300))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(env > 0, phi / env, np.where(phi > 0, np.inf, 0.0))
    return GronwallCheck(holds, M, phi, env, float(np.max(ratio)))


# ---------------------------------------------------------------- Lax-Phillips

@dataclass(frozen=True)
class LaxPhillipsWindow:
    """Augmented state ``(y_past, x, u_future)`` at time ``t0``.

    Signals are sampled per grid cell (one value per step of length ``h``):
    ``y_past[k]`` covers ``[t0 - (W-k) h, t0 - (W-k-1) h]`` and
    ``u_future[k]`` covers ``[t0 + k h, t0 + (k+1) h]``, ``W`` cells each.
    """

    t0: float
    h: float
    y_past: np.ndarray
    x: np.ndarray
    u_future: np.ndarray

    def __post_init__(self):
        yp = np.atleast_2d(np.asarray(self.y_past, dtype=float))
        uf = np.atleast_2d(np.asarray(self.u_future, dtype=float))
        if yp.shape[0] != uf.shape[0]:
            raise ValueError("past and future windows must have the same number of cells")
        object.__setattr__(self, "y_past", yp)
        object.__setattr__(self, "u_future", uf)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))

    @property
    def cells(self) -> int:
        return self.y_past.shape[0]

    @property
    def width(self) -> float:
        return self.cells * self.h

    def norm2(self) -> float:
        """``|y_past|^2 + |x|^2 + |u_future|^2`` with cell-wise signal norms."""
        return float(self.h * np.sum(self.y_past ** 2) + self.x @ self.x
                     + self.h * np.sum(self.u_future ** 2))


def _forcing_factors(kind, sys, path, table: PropagatorTable, i0: int, i1: int):
    """``E_k = (I - h/2 A_k(m))^-1 h B_k(m)`` for steps ``k = i0..i1-1``."""
    grid = table.grid
    h = grid.h
    I = np.eye(sys.n_state)
    out = []
    for k in range(i0, i1):
        m = grid.t(k) + 0.5 * h
        Ak = generator_matrix(kind, sys.A, path, m)
        out.append(np.linalg.solve(I - 0.5 * h * Ak, h * _input_matrix(kind, sys, path, m)))
    return out


def lax_phillips_apply(kind, sys: PassiveRealization, path: CoefficientPath,
                       table: PropagatorTable, window: LaxPhillipsWindow,
                       steps: int) -> LaxPhillipsWindow:
    """Advance the augmented state by ``steps`` grid steps.

    The state block is ``T(t, t0) x + Phi(t, t0) u``, the produced output is
    ``Psi x + F u`` evaluated cell by cell, the past-output window is shifted
    left and extended by the produced output, and the future input is shifted
    left and padded with zeros.  The discrete ``Phi`` is the one-step
    (Cayley) input map, so a passive time-invariant core gives a window norm
    that cannot increase.
    """
    kind = _kind(kind)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    grid = table.grid
    if abs(window.h - grid.h) > 1e-12 * grid.h:
        raise ValueError(f"window step {window.h} differs from grid step {grid.h}")
    pos = (window.t0 - grid.t0) / grid.h
    i0 = int(round(pos))
    if abs(pos - i0) > 1e-9:
        raise ValueError(f"window time {window.t0} is not a grid node")
    if steps == 0:
        return window
    if i0 + steps > grid.N:
        raise ValueError("window would leave the grid")
    W = window.cells
    n_in = sys.n_in
    u_cells = np.concatenate([window.u_future, np.zeros((max(0, steps - W), n_in))])[:steps]
    E = _forcing_factors(kind, sys, path, table, i0, i0 + steps)
    x = window.x
    produced = np.empty((steps, sys.n_out))
    for k in range(steps):
        i = i0 + k
        x_new = table(i + 1, i) @ x + E[k] @ u_cells[k]
        m = grid.t(i) + 0.5 * grid.h
        produced[k] = (_output_matrix(kind, sys, path, m) @ (0.5 * (x + x_new))
                       + sys.D @ u_cells[k])
        x = x_new
    y_past = np.concatenate([window.y_past, produced])[-W:]
    u_future = np.concatenate([window.u_future[steps:], np.zeros((min(steps, W), n_in))])
    return LaxPhillipsWindow(grid.t(i0 + steps), grid.h, y_past, x, u_future)
