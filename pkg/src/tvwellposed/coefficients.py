"""Time-dependent coefficient paths ``P(t)``, ``G(t)``.

A path is a set of callables together with declared derivatives.  The
validator cross-checks the declarations against finite differences, so the
integrators downstream may evaluate the coefficients at whatever nodes
their quadrature needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.linalg

from .timegrid import TimeGrid

__all__ = [
    "SMOOTHNESS_CLASSES",
    "BoundConstants",
    "CoefficientPath",
    "DomainError",
    "ValidationReport",
    "average_G",
    "block_diagonal_path",
    "bound_constants",
    "constant_path",
    "linear_path",
    "random_path",
    "sinusoidal_path",
    "validate_standing",
]

SMOOTHNESS_CLASSES = ("P:C1+G:C0", "P:C1+G:C1", "P:C2+G:C1", "P:C2+G:C2")

# smallest admissible eigenvalue of P(t)
DELTA_MIN = 1e-8

MatrixFn = Callable[[float], np.ndarray]


class DomainError(ValueError):
    """Evaluation requested outside the interval of a path."""


@dataclass(frozen=True)
class CoefficientPath:
    """Operator pair ``(P(t), G(t))`` on ``interval`` with derivatives.

    ``P`` must return symmetric positive definite matrices; this is not
    enforced here but by :func:`validate_standing`.
    """

    interval: tuple[float, float]
    P: MatrixFn
    Pdot: MatrixFn
    G: MatrixFn
    Pddot: MatrixFn | None = None
    Gdot: MatrixFn | None = None
    smoothness: str = ""
    name: str = field(default="", compare=False)

    def __post_init__(self):
        a, b = (float(v) for v in self.interval)
        if not b > a:
            raise ValueError(f"interval must have positive length, got {self.interval}")
        object.__setattr__(self, "interval", (a, b))
        if not self.smoothness:
            p = "C2" if self.Pddot is not None else "C1"
            g = "C1" if self.Gdot is not None else "C0"
            object.__setattr__(self, "smoothness", f"P:{p}+G:{g}")
        if self.smoothness not in SMOOTHNESS_CLASSES:
            raise ValueError(f"unknown smoothness class {self.smoothness!r}")
        if self.p_order >= 2 and self.Pddot is None:
            raise ValueError(f"{self.smoothness} declared but Pddot is missing")
        if self.g_order >= 1 and self.Gdot is None:
            raise ValueError(f"{self.smoothness} declared but Gdot is missing")

    @property
    def p_order(self) -> int:
        return int(self.smoothness[3])

    @property
    def g_order(self) -> int:
        return int(self.smoothness[-1])

    @property
    def dim(self) -> int:
        return np.shape(self.P(self.interval[0]))[0]

    def Pinv(self, t: float) -> np.ndarray:
        P = np.asarray(self.P(t), dtype=float)
        d = np.diagonal(P)
        if np.array_equal(P, np.diag(d)):
            return np.diag(1.0 / d)
        return np.linalg.inv(P)

    def Pinv_dot(self, t: float) -> np.ndarray:
        Pi = self.Pinv(t)
        return -Pi @ self.Pdot(t) @ Pi

    def with_G(self, G: MatrixFn, Gdot: MatrixFn | None, name: str = "") -> "CoefficientPath":
        p = "C2" if self.p_order >= 2 else "C1"
        g = "C1" if Gdot is not None else "C0"
        return replace(self, G=G, Gdot=Gdot, smoothness=f"P:{p}+G:{g}",
                       name=name or self.name)

    def contains(self, t0: float, t1: float, slack: float = 1e-12) -> bool:
        a, b = self.interval
        eps = slack * max(1.0, abs(a), abs(b))
        return t0 >= a - eps and t1 <= b + eps


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    delta: float
    residuals: dict[str, float]
    failures: list[tuple[str, float]]

    def failed_checks(self) -> list[str]:
        return sorted({name for name, _ in self.failures})


@dataclass(frozen=True)
class BoundConstants:
    sup_P: float
    sup_Pinv: float
    sup_Pdot: float
    sup_G: float


def _fd(fn: MatrixFn, t: float, eps: float, a: float, b: float) -> np.ndarray:
    """Second-order difference quotient, one-sided near the endpoints."""
    if t - eps >= a and t + eps <= b:
        return (fn(t + eps) - fn(t - eps)) / (2 * eps)
    if t + 2 * eps <= b:
        return (-3 * fn(t) + 4 * fn(t + eps) - fn(t + 2 * eps)) / (2 * eps)
    return (3 * fn(t) - 4 * fn(t - eps) + fn(t - 2 * eps)) / (2 * eps)


def _derivative_residuals(fn, dfn, t, eps, a, b):
    d = np.asarray(dfn(t))
    r1 = np.linalg.norm(d - _fd(fn, t, eps, a, b))
    r2 = np.linalg.norm(d - _fd(fn, t, eps / 2, a, b))
    return r1, r2, np.linalg.norm(d)


def validate_standing(path: CoefficientPath, grid: TimeGrid, tol: float = 1e-6,
                      sym_tol: float = 1e-12, eps: float | None = None,
                      max_nodes: int | None = None) -> ValidationReport:
    """Check the standing assumptions on the nodes of ``grid``.

    ``max_nodes`` thins the node set evenly (endpoints kept) for large grids.

    Declared derivatives are compared with second-order difference
    quotients at steps ``eps`` and ``eps/2``; a node passes when the finer
    residual is below ``tol * (1 + |derivative|)`` or when it shrinks by at
    least the factor expected from second-order truncation.
    """
    a, b = path.interval
    if not path.contains(grid.t0, grid.t_end):
        raise DomainError(
            f"grid [{grid.t0}, {grid.t_end}] is not inside path interval [{a}, {b}]")
    if eps is None:
        eps = 1e-4 * max(1.0, b - a) if (b - a) > 4e-4 else (b - a) / 8
    residuals = {"standing.symmetry": 0.0, "standing.positivity": np.inf,
                 "standing.pdot": 0.0, "standing.pinv_derivative": 0.0}
    if path.Gdot is not None:
        residuals["standing.gdot"] = 0.0
    if path.Pddot is not None:
        residuals["standing.pddot"] = 0.0
    failures: list[tuple[str, float]] = []

    def fd_check(name, fn, dfn, t):
        r1, r2, scale = _derivative_residuals(fn, dfn, t, eps, a, b)
        residuals[name] = max(residuals[name], float(r2))
        if not (r2 <= tol * (1 + scale) or r2 <= 0.3 * r1):
            failures.append((name, float(t)))

    nodes = grid.nodes
    if max_nodes is not None and nodes.size > max_nodes:
        nodes = nodes[np.unique(np.linspace(0, nodes.size - 1, max(2, int(max_nodes))).round().astype(int))]
    delta = np.inf
    for t in nodes:
        t = min(max(float(t), a), b)
        P = np.asarray(path.P(t))
        scale = max(1.0, np.linalg.norm(P))
        asym = np.linalg.norm(P - P.T) / scale
        residuals["standing.symmetry"] = max(residuals["standing.symmetry"], float(asym))
        if asym > sym_tol:
            failures.append(("standing.symmetry", t))
        lam = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
        delta = min(delta, lam)
        if lam < DELTA_MIN:
            failures.append(("standing.positivity", t))
            continue
        fd_check("standing.pdot", path.P, path.Pdot, t)
        fd_check("standing.pinv_derivative", path.Pinv, path.Pinv_dot, t)
        if path.Gdot is not None:
            fd_check("standing.gdot", path.G, path.Gdot, t)
        if path.Pddot is not None:
            fd_check("standing.pddot", path.Pdot, path.Pddot, t)
    residuals["standing.positivity"] = float(delta)
    return ValidationReport(passed=not failures, delta=float(delta),
                            residuals=residuals, failures=failures)


def _integrate(fn: MatrixFn, lo: float, hi: float, panels: int) -> np.ndarray:
    s = np.linspace(lo, hi, panels + 1)
    vals = np.stack([np.asarray(fn(si), dtype=float) for si in s])
    return scipy.integrate.simpson(vals, x=s, axis=0)


def average_G(path: CoefficientPath, n: int, panels: int = 64) -> CoefficientPath:
    """Replace ``G`` by the sliding average ``n * int_t^{t+1/n} G``.

    ``G`` is continued by the constant ``G(b)`` past the right endpoint.
    The integral is split at ``b`` so Simpson's rule never straddles that
    kink.  The returned ``G`` is differentiable with
    ``G_n'(t) = n (G(t + 1/n) - G(t))``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"averaging index n must be a positive integer, got {n}")
    if panels < 8 or panels % 2:
        raise ValueError("Simpson needs an even number of panels, at least 8")
    n = int(n)
    b = path.interval[1]
    width = 1.0 / n
    G = path.G

    def G_ext(s):
        return G(min(s, b))

    def G_n(t):
        t = float(t)
        hi = t + width
        if hi <= b:
            return n * _integrate(G, t, hi, panels)
        if t >= b:
            return np.array(G(b), dtype=float)
        return n * (_integrate(G, t, b, panels) + (hi - b) * np.asarray(G(b)))

    def G_n_dot(t):
        return n * (np.asarray(G_ext(t + width)) - np.asarray(G_ext(t)))

    return path.with_G(G_n, G_n_dot, name=f"{path.name}|avg{n}")


def bound_constants(path: CoefficientPath, window=None, grid_density: int = 200) -> BoundConstants:
    """Sampled suprema of ``|P|, |P^-1|, |P'|, |G|`` over ``window``."""
    a, b = path.interval if window is None else window
    if not b > a:
        raise ValueError(f"empty window [{a}, {b}]")
    if not path.contains(a, b):
        raise DomainError(f"window [{a}, {b}] is outside {path.interval}")
    ts = np.linspace(a, b, max(int(grid_density), 2))
    sP = sPi = sPd = sG = 0.0
    for t in ts:
        P = path.P(t)
        sP = max(sP, np.linalg.norm(P, 2))
        sPi = max(sPi, np.linalg.norm(np.linalg.inv(P), 2))
        sPd = max(sPd, np.linalg.norm(path.Pdot(t), 2))
        sG = max(sG, np.linalg.norm(path.G(t), 2))
    return BoundConstants(float(sP), float(sPi), float(sPd), float(sG))


# ---------------------------------------------------------------- constructors

def _const(M):
    M = np.array(M, dtype=float)
    return lambda t: M


def constant_path(P, G=None, interval=(0.0, 1.0), name: str = "constant") -> CoefficientPath:
    P = np.atleast_2d(np.array(P, dtype=float))
    n = P.shape[0]
    G = np.zeros((n, n)) if G is None else np.atleast_2d(np.array(G, dtype=float))
    Z = np.zeros((n, n))
    return CoefficientPath(interval, _const(P), _const(Z), _const(G),
                           Pddot=_const(Z), Gdot=_const(Z), smoothness="P:C2+G:C2",
                           name=name)


def linear_path(P0, P1, G0=None, G1=None, interval=(0.0, 1.0),
                name: str = "linear") -> CoefficientPath:
    """``P(t) = P0 + t P1``, ``G(t) = G0 + t G1``."""
    P0 = np.atleast_2d(np.array(P0, dtype=float))
    P1 = np.atleast_2d(np.array(P1, dtype=float))
    n = P0.shape[0]
    Z = np.zeros((n, n))
    G0 = Z if G0 is None else np.atleast_2d(np.array(G0, dtype=float))
    G1 = Z if G1 is None else np.atleast_2d(np.array(G1, dtype=float))
    return CoefficientPath(
        interval,
        P=lambda t: P0 + t * P1,
        Pdot=_const(P1),
        G=lambda t: G0 + t * G1,
        Pddot=_const(Z),
        Gdot=_const(G1),
        smoothness="P:C2+G:C2",
        name=name,
    )


def sinusoidal_path(P0, P1, G0=None, G1=None, omega: float = 1.0, phase: float = 0.0,
                    interval=(0.0, 1.0), name: str = "sinusoidal") -> CoefficientPath:
    """``P(t) = P0 + sin(w t + phase) P1`` and the same modulation for ``G``."""
    P0 = np.atleast_2d(np.array(P0, dtype=float))
    P1 = np.atleast_2d(np.array(P1, dtype=float))
    n = P0.shape[0]
    Z = np.zeros((n, n))
    G0 = Z if G0 is None else np.atleast_2d(np.array(G0, dtype=float))
    G1 = Z if G1 is None else np.atleast_2d(np.array(G1, dtype=float))
    w, ph = float(omega), float(phase)
    return CoefficientPath(
        interval,
        P=lambda t: P0 + np.sin(w * t + ph) * P1,
        Pdot=lambda t: w * np.cos(w * t + ph) * P1,
        G=lambda t: G0 + np.sin(w * t + ph) * G1,
        Pddot=lambda t: -w * w * np.sin(w * t + ph) * P1,
        Gdot=lambda t: w * np.cos(w * t + ph) * G1,
        smoothness="P:C2+G:C2",
        name=name,
    )


def block_diagonal_path(*paths: CoefficientPath, name: str = "") -> CoefficientPath:
    """Block-diagonal composition on the intersection of the intervals."""
    if not paths:
        raise ValueError("need at least one path")
    a = max(p.interval[0] for p in paths)
    b = min(p.interval[1] for p in paths)

    def stack(attr):
        fns = [getattr(p, attr) for p in paths]
        if any(f is None for f in fns):
            return None
        return lambda t: scipy.linalg.block_diag(*(f(t) for f in fns))

    Pddot = stack("Pddot")
    Gdot = stack("Gdot")
    p = min(q.p_order for q in paths)
    g = min(q.g_order for q in paths)
    smooth = f"P:C{p}+G:C{g}"
    if smooth not in SMOOTHNESS_CLASSES:
        smooth = f"P:C{p}+G:C{min(g, 1)}"
    return CoefficientPath(
        (a, b), stack("P"), stack("Pdot"), stack("G"),
        Pddot=Pddot if p >= 2 else None,
        Gdot=Gdot if g >= 1 else None,
        smoothness=smooth,
        name=name or "+".join(q.name for q in paths),
    )


def random_path(n: int, rng: np.random.Generator, interval=(0.0, 1.0),
                p_amp: float = 0.4, g_scale: float = 1.0, omega: float | None = None,
                name: str = "random") -> CoefficientPath:
    """Smooth random path with ``P(t) >= (1 - p_amp) I`` (for ``p_amp < 1``).

    ``P(t) = I + p_amp * sin(w t + phi) S`` with ``|S| = 1`` symmetric and
    ``G(t) = g_scale * (G0 + cos(w t) G1) / 2`` with unit-norm ``G0, G1``.
    """
    if not 0 <= p_amp < 1:
        raise ValueError("p_amp must lie in [0, 1)")
    S = rng.standard_normal((n, n))
    S = S + S.T
    S /= np.linalg.norm(S, 2)
    G0 = rng.standard_normal((n, n))
    G1 = rng.standard_normal((n, n))
    G0 /= np.linalg.norm(G0, 2)
    G1 /= np.linalg.norm(G1, 2)
    w = float(rng.uniform(1.0, 4.0)) if omega is None else float(omega)
    phi = float(rng.uniform(0, 2 * np.pi))
    I = np.eye(n)
    c = 0.5 * g_scale
    return CoefficientPath(
        interval,
        P=lambda t: I + p_amp * np.sin(w * t + phi) * S,
        Pdot=lambda t: p_amp * w * np.cos(w * t + phi) * S,
        G=lambda t: c * (G0 + np.cos(w * t) * G1),
        Pddot=lambda t: -p_amp * w * w * np.sin(w * t + phi) * S,
        Gdot=lambda t: -c * w * np.sin(w * t) * G1,
        smoothness="P:C2+G:C2",
        name=name,
    )
