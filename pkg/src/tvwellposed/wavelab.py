"""Conservative 1-D discretization of the time-varying wave equation.

The string occupies ``[0, L_x]``.  The left endpoint is clamped (Dirichlet,
``Gamma_0``); the right endpoint carries the scattering input/output pair

    sqrt(2) b u = T z_xi + b^2 z_t,    sqrt(2) b y = T z_xi - b^2 z_t.

Strains live on cells and momenta ``rho z_t`` on the nodes ``1..N_cells``
(the clamped node is not part of the state).  Node weights are ``h_x`` with
a half weight at the boundary node, cell weights are ``h_x``; the state is
expressed in the orthonormal coordinates of these weights, so the discrete
gradient and its transpose form an exact summation-by-parts pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coefficients import CoefficientPath, DomainError
from .statespace import PassiveRealization
from .wellposed import Trajectory

__all__ = [
    "BumpProfile",
    "CoefficientError",
    "IntByPartsReport",
    "MovingObject",
    "PowerBalance",
    "WaveCoefficients",
    "WaveMesh1D",
    "WaveSetup",
    "build_wave_paths",
    "build_wave_realization",
    "deflection_reconstruct",
    "discrete_int_by_parts_check",
    "gradient_defect",
    "moving_object_coeffs",
    "sine_rho_coeffs",
    "split_state",
    "uniform_coeffs",
    "wave_power_balance",
    "wave_preset",
    "wave_state",
    "WAVE_PRESETS",
]

FieldFn = Callable[[float, np.ndarray], np.ndarray]


class CoefficientError(DomainError):
    """A wave coefficient violates its positivity/sign requirement."""


@dataclass(frozen=True)
class WaveMesh1D:
    N_cells: int
    L_x: float = 1.0

    def __post_init__(self):
        if int(self.N_cells) != self.N_cells or self.N_cells < 2:
            raise ValueError(f"need N_cells >= 2, got {self.N_cells}")
        if not self.L_x > 0:
            raise ValueError("L_x must be positive")

    @property
    def h_x(self) -> float:
        return self.L_x / self.N_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.L_x, self.N_cells + 1)

    @property
    def state_nodes(self) -> np.ndarray:
        """Nodes carrying a velocity unknown (all but the clamped one)."""
        return self.nodes[1:]

    @property
    def cell_centers(self) -> np.ndarray:
        return self.h_x * (np.arange(self.N_cells) + 0.5)

    @property
    def cell_weights(self) -> np.ndarray:
        return np.full(self.N_cells, self.h_x)

    @property
    def node_weights(self) -> np.ndarray:
        w = np.full(self.N_cells, self.h_x)
        w[-1] *= 0.5
        return w

    @property
    def n_state(self) -> int:
        return 2 * self.N_cells

    def gradient(self) -> np.ndarray:
        """Forward difference from nodes ``1..N`` to cells, ``v_0 = 0``."""
        N, h = self.N_cells, self.h_x
        Gd = np.eye(N) / h
        Gd[np.arange(1, N), np.arange(N - 1)] = -1.0 / h
        return Gd


def _orthonormal_ops(mesh: WaveMesh1D):
    """``L`` (node space -> cell space) and the Gamma_1 trace row ``k``."""
    sc = np.sqrt(mesh.cell_weights)
    isn = 1.0 / np.sqrt(mesh.node_weights)
    L = (sc[:, None] * (-mesh.gradient())) * isn[None, :]
    trace = np.zeros(mesh.N_cells)
    trace[-1] = isn[-1]
    return L, trace


def build_wave_realization(mesh: WaveMesh1D, b: float = 1.0) -> PassiveRealization:
    """Scattering realization ``A = [[0, -L], [L^T, -K^T K / 2]]``, ``B = [0; K^T]``,
    ``C = [0, -K]``, ``D = I`` with ``K = sqrt(2) b gamma_1``."""
    if not b > 0:
        raise ValueError("scattering parameter b must be positive")
    N = mesh.N_cells
    L, trace = _orthonormal_ops(mesh)
    K = (np.sqrt(2.0) * b * trace)[None, :]
    Z = np.zeros((N, N))
    A = np.block([[Z, -L], [L.T, -0.5 * (K.T @ K)]])
    B = np.vstack([np.zeros((N, 1)), K.T])
    C = np.hstack([np.zeros((1, N)), -K])
    D = np.eye(1)
    return PassiveRealization(A, B, C, D, name=f"wave1d[N={N}, b={b:g}]")


@dataclass(frozen=True)
class IntByPartsReport:
    defect: float
    rank_K0: int
    n_trace: int

    @property
    def passed(self) -> bool:
        return self.rank_K0 == self.n_trace


def discrete_div(mesh: WaveMesh1D) -> np.ndarray:
    """``div f = L' f + K0' gamma_perp f`` in physical (weighted) variables.

    ``L'`` is the weighted adjoint of ``L = -grad``, ``K0'`` the weighted
    adjoint of the Gamma_1 trace and ``gamma_perp f`` the normal component
    (``nu = +1``) of the last cell value.
    """
    Wc = np.diag(mesh.cell_weights)
    Wn_inv = np.diag(1.0 / mesh.node_weights)
    Lp = -mesh.gradient()
    K0t = Wn_inv[:, -1:]
    gperp = np.zeros((1, mesh.N_cells))
    gperp[0, -1] = 1.0
    return Wn_inv @ Lp.T @ Wc + K0t @ gperp


def discrete_int_by_parts_check(mesh: WaveMesh1D) -> IntByPartsReport:
    """Max of ``|<div f, g> + <f, grad g> - <gamma_perp f, gamma_0 g>|`` over basis pairs."""
    N = mesh.N_cells
    div = discrete_div(mesh)
    Gd = mesh.gradient()
    # bilinear forms in (g, f): rows index nodes 1..N, columns index cells
    lhs = np.diag(mesh.node_weights) @ div + Gd.T @ np.diag(mesh.cell_weights)
    rhs = np.zeros((N, N))
    rhs[-1, -1] = 1.0                                   # gamma_0 g * gamma_perp f
    defect = float(np.abs(lhs - rhs).max())
    K0t = np.diag(1.0 / mesh.node_weights)[:, -1:]
    return IntByPartsReport(defect=defect, rank_K0=int(np.linalg.matrix_rank(K0t)), n_trace=1)


# ---------------------------------------------------------------- coefficients

def _zero_field(t, xi):
    return np.zeros_like(np.asarray(xi, dtype=float))


@dataclass(frozen=True)
class WaveCoefficients:
    """Space-time coefficient fields ``f(t, xi)`` (vectorized in ``xi``).

    Second derivatives (``rhoddot``, ``Tmodddot``) and ``Qdot`` are optional;
    when present, the coefficient path is declared ``P:C2+G:C1``.
    """

    rho: FieldFn
    rhodot: FieldFn
    Tmod: FieldFn
    Tmoddot: FieldFn
    Q: FieldFn = _zero_field
    b: float = 1.0
    interval: tuple[float, float] = (0.0, 1.0)
    rhoddot: FieldFn | None = None
    Tmodddot: FieldFn | None = None
    Qdot: FieldFn | None = None
    name: str = ""

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 0:
            if b.size != 1:
                raise ValueError("Gamma_1 is a single point in 1-D; b must be scalar")
            b = b.reshape(())
        if not float(b) > 0:
            raise ValueError("scattering parameter b must be positive")
        object.__setattr__(self, "b", float(b))

    @property
    def has_second_derivatives(self) -> bool:
        return self.rhoddot is not None and self.Tmodddot is not None and self.Qdot is not None


def uniform_coeffs(rho: float = 1.0, Tmod: float = 1.0, Q: float = 0.0, b: float = 1.0,
                   interval=(0.0, 1.0)) -> WaveCoefficients:
    def c(v):
        return lambda t, xi: np.full_like(np.asarray(xi, dtype=float), v)
    return WaveCoefficients(c(rho), _zero_field, c(Tmod), _zero_field, c(Q), b, interval,
                            _zero_field, _zero_field, _zero_field, name="uniform")


def sine_rho_coeffs(eps: float = 0.3, omega: float = 1.0, Tmod: float = 1.0, Q: float = 0.0,
                    b: float = 1.0, interval=(0.0, 1.0)) -> WaveCoefficients:
    """Spatially uniform density ``rho(t) = 1 + eps sin(omega t)``."""
    def rho(t, xi):
        return np.full_like(np.asarray(xi, dtype=float), 1 + eps * np.sin(omega * t))

    def rhodot(t, xi):
        return np.full_like(np.asarray(xi, dtype=float), eps * omega * np.cos(omega * t))

    def rhoddot(t, xi):
        return np.full_like(np.asarray(xi, dtype=float), -eps * omega ** 2 * np.sin(omega * t))

    def c(v):
        return lambda t, xi: np.full_like(np.asarray(xi, dtype=float), v)
    return WaveCoefficients(rho, rhodot, c(Tmod), _zero_field, c(Q), b, interval,
                            rhoddot, _zero_field, _zero_field, name="sine-rho")


def _check_positive(mesh: WaveMesh1D, coeffs: WaveCoefficients, samples: int = 33,
                    delta: float = 1e-8):
    a, b = coeffs.interval
    for t in np.linspace(a, b, samples):
        for label, fn, xi, floor in (("rho", coeffs.rho, mesh.state_nodes, delta),
                                     ("Tmod", coeffs.Tmod, mesh.cell_centers, delta),
                                     ("Q", coeffs.Q, mesh.state_nodes, 0.0)):
            v = np.asarray(fn(t, xi))
            bad = np.flatnonzero(v < floor)
            if bad.size:
                raise CoefficientError(
                    f"{label} = {v[bad[0]]:.3g} < {floor:g} at xi={xi[bad[0]]:.6g}, t={t:.6g}")


def build_wave_paths(mesh: WaveMesh1D, coeffs: WaveCoefficients) -> CoefficientPath:
    """``P = diag(T, 1/rho)``, ``G = diag(0, rho'/rho - Q/rho)`` on the mesh."""
    _check_positive(mesh, coeffs)
    xc, xn = mesh.cell_centers, mesh.state_nodes
    N = mesh.N_cells
    zeros = np.zeros(N)

    def P(t):
        return np.diag(np.concatenate([coeffs.Tmod(t, xc), 1.0 / coeffs.rho(t, xn)]))

    def Pdot(t):
        r = coeffs.rho(t, xn)
        return np.diag(np.concatenate([coeffs.Tmoddot(t, xc), -coeffs.rhodot(t, xn) / r ** 2]))

    def G(t):
        r = coeffs.rho(t, xn)
        return np.diag(np.concatenate([zeros, (coeffs.rhodot(t, xn) - coeffs.Q(t, xn)) / r]))

    Pddot = Gdot = None
    if coeffs.has_second_derivatives:
        def _Pddot(t):
            r, rd, rdd = coeffs.rho(t, xn), coeffs.rhodot(t, xn), coeffs.rhoddot(t, xn)
            return np.diag(np.concatenate([coeffs.Tmodddot(t, xc),
                                           -rdd / r ** 2 + 2 * rd ** 2 / r ** 3]))

        def _Gdot(t):
            r, rd, rdd = coeffs.rho(t, xn), coeffs.rhodot(t, xn), coeffs.rhoddot(t, xn)
            q, qd = coeffs.Q(t, xn), coeffs.Qdot(t, xn)
            return np.diag(np.concatenate([zeros, (rdd - qd) / r - (rd - q) * rd / r ** 2]))

        Pddot, Gdot = _Pddot, _Gdot

    return CoefficientPath(coeffs.interval, P, Pdot, G, Pddot, Gdot,
                           name=f"wave:{coeffs.name or 'custom'}")


@dataclass(frozen=True)
class BumpProfile:
    """``m(r2) = base + amp * exp(-r2 / width)`` with its first two derivatives."""

    base: float = 1.0
    amp: float = 0.0
    width: float = 0.01

    def value(self, r2):
        return self.base + self.amp * np.exp(-r2 / self.width)

    def d1(self, r2):
        return -self.amp / self.width * np.exp(-r2 / self.width)

    def d2(self, r2):
        return self.amp / self.width ** 2 * np.exp(-r2 / self.width)


@dataclass(frozen=True)
class MovingObject:
    """A rigid inclusion centred at ``eta(t)``; coefficients are ``m(|eta - xi|^2)``."""

    eta: Callable[[float], float]
    eta_dot: Callable[[float], float]
    eta_ddot: Callable[[float], float] | None = None
    rho: BumpProfile = BumpProfile(1.0, 0.0)
    Tmod: BumpProfile = BumpProfile(1.0, 0.0)
    Q: BumpProfile = BumpProfile(0.0, 0.0)
    interval: tuple[float, float] = (0.0, 1.0)
    b: float = 1.0

    @classmethod
    def oscillating(cls, L_x: float = 1.0, amplitude: float = 0.2, omega: float = 2.0,
                    **kw) -> "MovingObject":
        c = 0.5 * L_x
        return cls(lambda t: c + amplitude * np.sin(omega * t),
                   lambda t: amplitude * omega * np.cos(omega * t),
                   lambda t: -amplitude * omega ** 2 * np.sin(omega * t), **kw)


def moving_object_coeffs(mesh: WaveMesh1D, obj: MovingObject, samples: int = 257) -> WaveCoefficients:
    """Coefficient fields of a moving object, derivatives by the chain rule."""
    a, b = obj.interval
    margin = 2 * mesh.h_x
    for t in np.linspace(a, b, samples):
        e = float(obj.eta(t))
        if not (margin <= e <= mesh.L_x - margin):
            raise CoefficientError(
                f"object centre eta={e:.6g} leaves [{margin:.4g}, {mesh.L_x - margin:.4g}] at t={t:.6g}")
    for label, prof in (("rho", obj.rho), ("Tmod", obj.Tmod)):
        lo = min(prof.base, prof.base + prof.amp)
        if lo < 1e-8:
            raise CoefficientError(f"{label} profile drops to {lo:.3g}")

    def field(prof: BumpProfile):
        def f(t, xi):
            d = obj.eta(t) - np.asarray(xi, dtype=float)
            return prof.value(d * d)

        def fdot(t, xi):
            d = obj.eta(t) - np.asarray(xi, dtype=float)
            return prof.d1(d * d) * 2 * d * obj.eta_dot(t)

        def fddot(t, xi):
            d = obj.eta(t) - np.asarray(xi, dtype=float)
            ed = obj.eta_dot(t)
            r2 = d * d
            return (prof.d2(r2) * (2 * d * ed) ** 2
                    + prof.d1(r2) * (2 * ed ** 2 + 2 * d * obj.eta_ddot(t)))
        return f, fdot, (fddot if obj.eta_ddot is not None else None)

    rho, rhod, rhodd = field(obj.rho)
    T, Td, Tdd = field(obj.Tmod)
    Q, Qd, _ = field(obj.Q)
    return WaveCoefficients(rho, rhod, T, Td, Q, obj.b, obj.interval, rhodd, Tdd,
                            Qd if obj.eta_ddot is not None else None, name="moving-object")


# ---------------------------------------------------------------- state helpers

def wave_state(mesh: WaveMesh1D, strain, momentum) -> np.ndarray:
    """Orthonormal state from cell strains and nodal momenta ``rho z_t`` (nodes 1..N)."""
    return np.concatenate([np.sqrt(mesh.cell_weights) * np.asarray(strain, dtype=float),
                           np.sqrt(mesh.node_weights) * np.asarray(momentum, dtype=float)])


def split_state(mesh: WaveMesh1D, x) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`wave_state`; works on ``(..., 2N)`` arrays."""
    x = np.asarray(x, dtype=float)
    N = mesh.N_cells
    return (x[..., :N] / np.sqrt(mesh.cell_weights),
            x[..., N:] / np.sqrt(mesh.node_weights))


# ---------------------------------------------------------------- balances

@dataclass(frozen=True)
class PowerBalance:
    """Integrated wave power balance at the grid nodes.

    ``residual = E_strain + E_kin - (E_strain + E_kin)(t0) + out - in
    - strain_rate - density_rate + damping``
    """

    t: np.ndarray
    strain_energy: np.ndarray
    kinetic_energy: np.ndarray
    in_energy: np.ndarray
    out_energy: np.ndarray
    strain_rate: np.ndarray
    density_rate: np.ndarray
    damping: np.ndarray
    residual: np.ndarray

    @property
    def scale(self) -> float:
        terms = (self.strain_energy + self.kinetic_energy, self.in_energy, self.out_energy,
                 np.abs(self.strain_rate), np.abs(self.density_rate), self.damping)
        return float(max(1e-300, max(np.max(np.abs(a)) for a in terms)))


def wave_power_balance(traj: Trajectory, mesh: WaveMesh1D,
                       coeffs: WaveCoefficients) -> PowerBalance:
    """Terms of ``d/dt <T z', z'> + d/dt <rho z_t, z_t> + |y|^2
    = |u|^2 + <T' z', z'> + <rho' z_t, z_t> - 2 <Q z_t, z_t>`` integrated in time.

    Uses the physical blocks ``x1 ~ grad z`` and ``x2 ~ rho z_t`` and the
    trajectory's midpoint samples, so it can be compared term by term with
    the generic energy ledger.
    """
    if traj.x.dim != mesh.n_state or traj.u.dim != 1:
        raise ValueError(f"trajectory (state dim {traj.x.dim}) does not belong to "
                         f"a wave mesh with {mesh.N_cells} cells")
    if traj.kind.name != "right":
        raise ValueError("the wave system is the right (multiplicative) perturbation")
    mid = traj.midpoint_samples
    if mid is None:
        raise ValueError("trajectory has no midpoint samples; re-simulate with keep_midpoints=True")
    grid = traj.grid
    h = grid.h
    N = mesh.N_cells
    xc, xn = mesh.cell_centers, mesh.state_nodes
    x = traj.x.values
    E_s = np.array([np.sum(coeffs.Tmod(t, xc) * xi[:N] ** 2) for t, xi in zip(grid.nodes, x)])
    E_k = np.array([np.sum(xi[N:] ** 2 / coeffs.rho(t, xn)) for t, xi in zip(grid.nodes, x)])
    sr = np.empty(grid.N)
    dr = np.empty(grid.N)
    dq = np.empty(grid.N)
    for k, m in enumerate(grid.midpoints):
        x1, x2 = mid.x[k, :N], mid.x[k, N:]
        r = coeffs.rho(m, xn)
        zt2 = (x2 / r) ** 2                      # weighted z_t^2
        sr[k] = np.sum(coeffs.Tmoddot(m, xc) * x1 ** 2)
        dr[k] = np.sum(coeffs.rhodot(m, xn) * zt2)
        dq[k] = 2.0 * np.sum(coeffs.Q(m, xn) * zt2)

    def cum(a):
        return np.concatenate([[0.0], np.cumsum(h * a)])
    ein = cum(np.sum(mid.u ** 2, axis=1))
    eout = cum(np.sum(mid.y ** 2, axis=1))
    sr, dr, dq = cum(sr), cum(dr), cum(dq)
    E = E_s + E_k
    residual = E - E[0] + eout - ein - sr - dr + dq
    return PowerBalance(grid.nodes, E_s, E_k, ein, eout, sr, dr, dq, residual)


def deflection_reconstruct(traj: Trajectory, z0, mesh: WaveMesh1D,
                           coeffs: WaveCoefficients) -> np.ndarray:
    """Nodal deflections ``z(t_i)`` on all ``N+1`` nodes (clamped node included).

    ``z(t) = z0 + int z_t`` with ``z_t = (rho z_t) / rho`` from the momentum
    block, integrated by the trapezoid rule.  The clamped node stays zero.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (mesh.N_cells + 1,):
        raise ValueError(f"z0 must have {mesh.N_cells + 1} nodal values")
    if z0[0] != 0.0:
        raise ValueError("z0 must vanish at the clamped endpoint")
    grid = traj.grid
    _, mom = split_state(mesh, traj.x.values)
    xn = mesh.state_nodes
    zt = np.stack([m / coeffs.rho(t, xn) for t, m in zip(grid.nodes, mom)])
    inc = 0.5 * grid.h * (zt[1:] + zt[:-1])
    z = np.zeros((grid.N + 1, mesh.N_cells + 1))
    z[:, 1:] = z0[1:] + np.concatenate([np.zeros((1, mesh.N_cells)), np.cumsum(inc, axis=0)])
    return z


def gradient_defect(z: np.ndarray, traj: Trajectory, mesh: WaveMesh1D) -> float:
    """``max_t |grad z(t) - strain(t)|`` (max norm over cells)."""
    strain, _ = split_state(mesh, traj.x.values)
    grad = np.diff(z, axis=1) / mesh.h_x
    return float(np.abs(grad - strain).max())


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class WaveSetup:
    mesh: WaveMesh1D
    coeffs: WaveCoefficients
    sys: PassiveRealization
    path: CoefficientPath


def wave_preset(name: str, N_cells: int = 32, interval=(0.0, 1.0), b: float = 1.0,
                **params) -> WaveSetup:
    """Named mesh/coefficient presets: ``uniform``, ``sine-rho``, ``moving-object``.

    Extra keyword parameters are forwarded to the coefficient constructor
    (``rho``, ``Tmod``, ``Q`` for uniform; ``eps``, ``omega``, ``Tmod``, ``Q``
    for sine-rho; ``amplitude``, ``omega``, ``rho_amp``, ``T_amp``, ``Q_amp``,
    ``width`` for moving-object).
    """
    mesh = WaveMesh1D(int(N_cells), float(params.pop("L_x", 1.0)))
    if name == "uniform":
        coeffs = uniform_coeffs(b=b, interval=interval, **params)
    elif name == "sine-rho":
        coeffs = sine_rho_coeffs(b=b, interval=interval, **params)
    elif name == "moving-object":
        width = params.pop("width", 0.01)
        obj = MovingObject.oscillating(
            mesh.L_x, params.pop("amplitude", 0.2), params.pop("omega", 2.0),
            rho=BumpProfile(1.0, params.pop("rho_amp", 0.5), width),
            Tmod=BumpProfile(1.0, params.pop("T_amp", 0.5), width),
            Q=BumpProfile(0.0, params.pop("Q_amp", 0.0), width),
            interval=tuple(interval), b=b)
        if params:
            raise TypeError(f"unknown moving-object parameters: {sorted(params)}")
        coeffs = moving_object_coeffs(mesh, obj)
    else:
        raise KeyError(f"unknown wave preset {name!r}; choose from {WAVE_PRESETS}")
    return WaveSetup(mesh, coeffs, build_wave_realization(mesh, b), build_wave_paths(mesh, coeffs))


WAVE_PRESETS = ("uniform", "sine-rho", "moving-object")
