"""Discrete evolution families for perturbed generator families.

Families are built on a uniform :class:`~tvwellposed.timegrid.TimeGrid`,
either by implicit-midpoint (Cayley) stepping of a generator family or as
fixed points of Volterra integral equations solved by Picard iteration.
Both produce a :class:`PropagatorTable` indexed by grid nodes.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .coefficients import CoefficientPath, average_G
from .timegrid import TimeGrid

__all__ = [
    "AxiomReport",
    "BASE",
    "ConvergenceStudy",
    "DivergenceError",
    "GeneratorKind",
    "LEFT",
    "PropagatorTable",
    "RIGHT",
    "StepSizeError",
    "TimeGrid",
    "averaged_left",
    "backward_adjoint_family",
    "build_V_family",
    "build_family",
    "build_family_from_generator",
    "build_right_family_volterra",
    "fit_exponential_bound",
    "generator_matrix",
    "mild_residual",
    "picard_volterra",
    "refinement_study",
    "step_propagator",
    "sup_distance",
    "trotter_kato_left",
    "verify_evolution_axioms",
]


class StepSizeError(ArithmeticError):
    """The midpoint matrix of a Cayley step is singular or too ill-conditioned."""

    def __init__(self, t: float, h: float, suggested_h: float):
        super().__init__(
            f"singular implicit-midpoint system at t={t:.6g} with h={h:.3g}; "
            f"retry with h <= {suggested_h:.3g}")
        self.t = t
        self.h = h
        self.suggested_h = suggested_h


class DivergenceError(ArithmeticError):
    """Picard iteration did not reach the requested tolerance."""

    def __init__(self, last_correction: float, iterations: int):
        super().__init__(
            f"Picard iteration stalled after {iterations} iterations with "
            f"correction {last_correction:.3e}; shorten the window and compose")
        self.last_correction = last_correction
        self.iterations = iterations


@dataclass(frozen=True)
class GeneratorKind:
    """Which perturbed generator ``A_kind(t)`` to assemble.

    ``base``: ``P^-1 A``; ``left``: ``P^-1 A + G``; ``right``: ``A P + G``;
    ``averaged_left``: ``P^-1 A + G_n`` with ``G_n`` from
    :func:`~tvwellposed.coefficients.average_G`.
    """

    name: str
    n: int | None = None

    def __post_init__(self):
        if self.name not in ("base", "left", "right", "averaged_left"):
            raise ValueError(f"unknown generator kind {self.name!r}")
        if self.name == "averaged_left" and (self.n is None or self.n < 1):
            raise ValueError("averaged_left needs n >= 1")

    @classmethod
    def parse(cls, text: str) -> "GeneratorKind":
        text = text.strip().lower()
        if text.startswith("averaged_left"):
            return cls("averaged_left", int(text.split("(")[1].rstrip(")")))
        return cls(text)

    def __str__(self):
        return f"averaged_left({self.n})" if self.n else self.name


BASE = GeneratorKind("base")
LEFT = GeneratorKind("left")
RIGHT = GeneratorKind("right")


def averaged_left(n: int) -> GeneratorKind:
    return GeneratorKind("averaged_left", int(n))


def _resolve(kind: GeneratorKind, path: CoefficientPath) -> tuple[GeneratorKind, CoefficientPath]:
    if kind.name == "averaged_left":
        return LEFT, average_G(path, kind.n)
    return kind, path


def generator_matrix(kind: GeneratorKind, A: np.ndarray, path: CoefficientPath,
                     t: float) -> np.ndarray:
    kind, path = _resolve(kind, path)
    P = path.P(t)
    if kind.name == "base":
        return np.linalg.solve(P, A)
    if kind.name == "left":
        return np.linalg.solve(P, A) + path.G(t)
    return A @ P + path.G(t)


def _cayley(Ak: np.ndarray, t: float, h: float) -> np.ndarray:
    n = Ak.shape[0]
    I = np.eye(n)
    half = 0.5 * h * Ak
    try:
        S = np.linalg.solve(I - half, I + half)
    except np.linalg.LinAlgError:
        S = None
    if S is None or not np.all(np.isfinite(S)):
        norm = np.linalg.norm(Ak, 2)
        raise StepSizeError(t, h, 1.0 / norm if norm > 0 else h / 2)
    return S


def step_propagator(kind: GeneratorKind, A, path: CoefficientPath, t: float,
                    h: float) -> np.ndarray:
    """Cayley factor ``(I - h/2 A_k(m))^-1 (I + h/2 A_k(m))``, ``m = t + h/2``."""
    A = np.asarray(A, dtype=float)
    if not path.contains(t, t + h):
        raise ValueError(f"step [{t}, {t + h}] leaves the path interval {path.interval}")
    return _cayley(generator_matrix(kind, A, path, t + 0.5 * h), t, h)


# ---------------------------------------------------------------- tables

class PropagatorTable:
    """Two-parameter family ``T(i, j)``, ``i >= j``, on the nodes of a grid.

    Product tables store one-step factors ``S_k = T(k+1, k)`` and optional
    node factors so that ``T(i, j) = L_i S_{i-1} ... S_j R_j`` (the node
    factors carry conjugations such as ``P(t)^-1 (.) P(tau)``).  Segmented
    tables hold dense blocks on consecutive node windows and compose across
    window boundaries.  ``T(i, i)`` is the identity in both layouts.

    Prefix products of product tables are memoized per column; the least
    recently used columns are dropped once the cache exceeds ``cache_bytes``.
    """

    def __init__(self, grid: TimeGrid, one_step=None, *, left=None, right=None,
                 segments=None, label: str = "", meta: dict | None = None,
                 cache_bytes: int = 256 * 2 ** 20):
        self.grid = grid
        self.label = label
        self.meta = dict(meta or {})
        self.cache_bytes = int(cache_bytes)
        self._lock = threading.Lock()
        self._columns: OrderedDict[int, list[np.ndarray]] = OrderedDict()
        self._cached = 0
        if (one_step is None) == (segments is None):
            raise ValueError("give exactly one of one_step or segments")
        if one_step is not None:
            S = np.asarray(one_step, dtype=float)
            if S.ndim != 3 or S.shape[0] != grid.N or S.shape[1] != S.shape[2]:
                raise ValueError(f"one_step has shape {S.shape}, expected ({grid.N}, n, n)")
            S.setflags(write=False)
            self._S = S
            self.n = S.shape[1]
            self._L = None if left is None else np.asarray(left, dtype=float)
            self._R = None if right is None else np.asarray(right, dtype=float)
            self._segments = None
        else:
            bounds, blocks = segments
            self._segments = (list(bounds), list(blocks))
            self._S = None
            self._L = self._R = None
            self.n = blocks[0].shape[-1]
            if bounds[0] != 0 or bounds[-1] != grid.N:
                raise ValueError("segment bounds must cover 0..N")

    # -- layout helpers
    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def is_product(self) -> bool:
        return self._S is not None

    @property
    def one_step(self) -> np.ndarray:
        if self._S is not None and self._L is None and self._R is None:
            return self._S
        return np.stack([self(k + 1, k) for k in range(self.N)])

    def _check(self, i: int, j: int):
        if not (0 <= j <= i <= self.N):
            raise IndexError(f"need 0 <= j <= i <= {self.N}, got ({i}, {j})")

    def _seg_of(self, i: int) -> int:
        bounds = self._segments[0]
        # boundary nodes belong to the window that ends there
        k = int(np.searchsorted(bounds, i, side="left")) - 1
        return max(k, 0)

    def _column(self, j: int, i: int) -> list[np.ndarray]:
        """Memoized prefix products ``S_{k-1} ... S_j`` for ``k = j..i``."""
        with self._lock:
            col = self._columns.get(j)
            if col is None:
                col = [np.eye(self.n)]
                self._columns[j] = col
                self._cached += 1
            self._columns.move_to_end(j)
            while len(col) <= i - j:
                k = j + len(col) - 1
                col.append(self._S[k] @ col[-1])
                self._cached += 1
            limit = max(1, self.cache_bytes // (8 * self.n * self.n))
            while self._cached > limit and len(self._columns) > 1:
                _, old = self._columns.popitem(last=False)
                self._cached -= len(old)
            return col

    def __call__(self, i: int, j: int) -> np.ndarray:
        self._check(i, j)
        if i == j:
            return np.eye(self.n)
        if self._S is not None:
            M = self._column(j, i)[i - j]
            if self._L is not None:
                M = self._L[i] @ M
            if self._R is not None:
                M = M @ self._R[j]
            return M
        bounds, blocks = self._segments
        ki, kj = self._seg_of(i), self._seg_of(j)
        if ki == kj:
            a = bounds[ki]
            return blocks[ki][i - a, j - a].copy()
        M = blocks[kj][bounds[kj + 1] - bounds[kj], j - bounds[kj]]
        for k in range(kj + 1, ki):
            M = blocks[k][bounds[k + 1] - bounds[k], 0] @ M
        return blocks[ki][i - bounds[ki], 0] @ M

    matrix = __call__

    def clear_cache(self):
        with self._lock:
            self._columns.clear()
            self._cached = 0

    # -- vector operations
    def propagate(self, j: int, v, i_end: int | None = None) -> np.ndarray:
        """``T(i, j) v`` for ``i = j..i_end``; ``v`` may be ``(n,)`` or ``(n, m)``."""
        i_end = self.N if i_end is None else i_end
        self._check(i_end, j)
        v = np.asarray(v, dtype=float)
        out = np.empty((i_end - j + 1,) + v.shape)
        if self._S is None:
            for i in range(j, i_end + 1):
                out[i - j] = self(i, j) @ v
            return out
        w = v if self._R is None else self._R[j] @ v
        out[0] = v
        for i in range(j + 1, i_end + 1):
            w = self._S[i - 1] @ w
            out[i - j] = w if self._L is None else self._L[i] @ w
        return out

    def apply(self, i: int, j: int, v) -> np.ndarray:
        return self.propagate(j, v, i)[-1]

    def accumulate(self, j: int, b, i_end: int | None = None) -> np.ndarray:
        """Trapezoid integrals ``sum_s w_s T(i, s) b[s]`` over ``s in [j, i]``.

        ``b`` is indexed by absolute node, shape ``(N+1, n, ...)``.  Returns
        the integrals for ``i = j..i_end`` (zero at ``i = j``).
        """
        i_end = self.N if i_end is None else i_end
        self._check(i_end, j)
        b = np.asarray(b, dtype=float)
        h = self.grid.h
        out = np.zeros((i_end - j + 1,) + b.shape[1:])
        if self._S is None:
            for i in range(j + 1, i_end + 1):
                acc = 0.5 * h * (self(i, j) @ b[j]) + 0.5 * h * b[i]
                for s in range(j + 1, i):
                    acc = acc + h * (self(i, s) @ b[s])
                out[i - j] = acc
            return out
        R = self._R
        def rb(s):
            return b[s] if R is None else R[s] @ b[s]
        F = 0.5 * h * rb(j)
        for i in range(j + 1, i_end + 1):
            last = rb(i)
            F = self._S[i - 1] @ F + h * last
            acc = F - 0.5 * h * last
            if self._L is not None:
                acc = self._L[i] @ acc
            out[i - j] = acc
        return out

    # -- dense access
    def rows(self, i_end: int | None = None) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(i, R)`` with ``R[j] = T(i, j)`` for ``j = 0..i``."""
        i_end = self.N if i_end is None else i_end
        n = self.n
        I = np.eye(n)
        if self._S is not None:
            Pi = I[None].copy()
            for i in range(i_end + 1):
                if i > 0:
                    Pi = np.concatenate([(self._S[i - 1] @ Pi), I[None]])
                R = Pi
                if self._L is not None:
                    R = (self._L[i] @ R)
                if self._R is not None:
                    R = (R @ self._R[: i + 1])
                if self._L is not None or self._R is not None:
                    R = R.copy()
                    R[i] = I
                yield i, R
            return
        bounds, blocks = self._segments
        boundary_rows: dict[int, np.ndarray] = {0: I[None].copy()}
        for i in range(i_end + 1):
            k = self._seg_of(i)
            a = bounds[k]
            local = blocks[k][i - a, : i - a + 1]
            if a == 0:
                R = local.copy()
            else:
                prev = boundary_rows[a]
                R = np.concatenate([(local[0] @ prev[:-1]), local])
            if i in bounds:
                boundary_rows[i] = R
            yield i, R

    def norms_by_lag(self, ord=2) -> np.ndarray:
        """Maximum ``|T(i, j)|`` over pairs with ``i - j = d``, for ``d = 0..N``."""
        best = np.zeros(self.N + 1)
        for i, R in self.rows():
            nr = np.linalg.norm(R, ord=ord, axis=(1, 2))
            lags = i - np.arange(i + 1)
            np.maximum.at(best, lags, nr)
        return best


def sup_distance(T1: PropagatorTable, T2: PropagatorTable, ord=2,
                 i_end: int | None = None) -> float:
    """``max_{i >= j} |T1(i, j) - T2(i, j)|`` over shared nodes."""
    if T1.N != T2.N:
        raise ValueError("tables live on different grids")
    worst = 0.0
    for (i, R1), (_, R2) in zip(T1.rows(i_end), T2.rows(i_end)):
        d = np.linalg.norm(R1 - R2, ord=ord, axis=(1, 2)).max()
        worst = max(worst, float(d))
    return worst


# ---------------------------------------------------------------- building

def build_family_from_generator(gen: Callable[[float], np.ndarray], grid: TimeGrid,
                                label: str = "", **table_kw) -> PropagatorTable:
    """Cayley stepping of an arbitrary generator family ``gen(t)``."""
    h = grid.h
    S = np.stack([_cayley(np.asarray(gen(m), dtype=float), m - 0.5 * h, h)
                  for m in grid.midpoints])
    return PropagatorTable(grid, S, label=label, **table_kw)


def build_family(kind: GeneratorKind, A, path: CoefficientPath, grid: TimeGrid) -> PropagatorTable:
    """One-step Cayley factors of ``A_kind`` on every grid interval."""
    A = np.asarray(A, dtype=float)
    if not path.contains(grid.t0, grid.t_end):
        raise ValueError(f"grid leaves the path interval {path.interval}")
    eff_kind, eff_path = _resolve(kind, path)
    return build_family_from_generator(
        lambda t: generator_matrix(eff_kind, A, eff_path, t), grid,
        label=str(kind), meta={"kind": str(kind)})


def build_V_family(A, path: CoefficientPath, grid: TimeGrid) -> PropagatorTable:
    """``V(t, tau) = P(t)^-1 Tt(t, tau) P(tau)``.

    ``Tt`` is stepped from ``P A + P G P^-1``; the conjugation is kept as
    node factors so that ``P(t_i) V(i, j) P(t_j)^-1`` recovers ``Tt`` up to
    rounding.
    """
    A = np.asarray(A, dtype=float)

    def gen(t):
        P = path.P(t)
        return P @ A + P @ path.G(t) @ np.linalg.inv(P)

    inner = build_family_from_generator(gen, grid, label="Ttilde_l")
    nodes = grid.nodes
    Pn = np.stack([path.P(t) for t in nodes])
    Pinv = np.linalg.inv(Pn)
    table = PropagatorTable(grid, inner._S, left=Pinv, right=Pn, label="V",
                            meta={"kind": "V"})
    table.meta["inner"] = inner
    return table


def backward_adjoint_family(A, path: CoefficientPath, grid: TimeGrid) -> PropagatorTable:
    """Transpose of the backward family generated by ``P(t) A^T + G(t)^T``.

    The backward family is stepped in reverse time,
    ``(I - h/2 A'(m)) x_k = (I + h/2 A'(m)) x_{k+1}``, and
    ``S(i, j) = B_j ... B_{i-1}``; its transpose is the forward product of
    the transposed one-step factors.
    """
    A = np.asarray(A, dtype=float)
    h = grid.h
    factors = []
    for m in grid.midpoints:
        Adag = path.P(m) @ A.T + path.G(m).T
        Bk = _cayley(Adag, m - 0.5 * h, h)
        factors.append(Bk.T)
    return PropagatorTable(grid, np.stack(factors), label="adjoint_backward^T",
                           meta={"kind": "backward_adjoint"})


def _segment_bounds(N: int, h: float, kernel_sup: float, window_product: float,
                    max_segment_steps: int) -> list[int]:
    steps = max_segment_steps
    if kernel_sup > 0:
        steps = min(steps, max(1, int(np.floor(window_product / (kernel_sup * h)))))
    bounds = list(range(0, N, steps)) + [N]
    return bounds


def _volterra_fixed_point(kernel: PropagatorTable, K: np.ndarray, tol: float,
                          max_iter: int, window_product: float,
                          max_segment_steps: int, label: str) -> PropagatorTable:
    """Solve ``X(t, tau) = V(t, tau) + int V(t, s) K(s) X(s, tau) ds``.

    Trapezoid quadrature on the grid nodes; windows longer than
    ``window_product / sup|K|`` are solved separately and composed.
    """
    if not kernel.is_product:
        raise ValueError("kernel family must be a product table")
    grid = kernel.grid
    h, N, n = grid.h, grid.N, kernel.n
    Ksup = float(np.max(np.linalg.norm(K, 2, axis=(1, 2)))) if len(K) else 0.0
    bounds = _segment_bounds(N, h, Ksup, window_product, max_segment_steps)
    S, L, R = kernel._S, kernel._L, kernel._R
    blocks = []
    history = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        m = b - a
        X0 = np.zeros((m + 1, m + 1, n, n))
        for p, row in kernel_rows_local(kernel, a, b):
            X0[p, : p + 1] = row
        scale = max(1.0, float(np.abs(X0).max()))
        X = X0.copy()
        corrections = []
        Kloc = K[a: b + 1]
        RK = Kloc if R is None else R[a: b + 1] @ Kloc
        tri = np.tril(np.ones((m + 1, m + 1), dtype=bool))
        converged = False
        for it in range(max_iter):
            # W[s, q] = R_s K_s X(s, q), halved on the diagonal s == q
            W = RK[:, None] @ X
            W[~tri] = 0.0
            idx = np.arange(m + 1)
            W[idx, idx] *= 0.5
            Xn = np.zeros_like(X)
            F = h * W[0]
            Xn[0, 0] = X0[0, 0]
            for p in range(1, m + 1):
                F = (S[a + p - 1] @ F) + h * W[p]
                acc = F[: p + 1] - 0.5 * h * W[p, : p + 1]
                acc[p] = 0.0
                if L is not None:
                    acc = (L[a + p] @ acc)
                Xn[p, : p + 1] = X0[p, : p + 1] + acc
            corr = float(np.abs(Xn - X).max())
            corrections.append(corr)
            X = Xn
            if corr <= tol * scale:
                converged = True
                break
        if not converged:
            raise DivergenceError(corrections[-1], max_iter)
        idx = np.arange(m + 1)
        X[idx, idx] = np.eye(n)
        blocks.append(X)
        history.append(corrections)
    meta = {"kind": label, "corrections": history, "segment_bounds": bounds,
            "kernel_sup": Ksup}
    return PropagatorTable(grid, segments=(bounds, blocks), label=label, meta=meta)


def kernel_rows_local(table: PropagatorTable, a: int, b: int):
    """Yield ``(p, [T(a+p, a+q) for q <= p])`` for the window ``[a, b]``."""
    n = table.n
    I = np.eye(n)
    Pi = I[None].copy()
    for p in range(b - a + 1):
        i = a + p
        if p > 0:
            Pi = np.concatenate([(table._S[i - 1] @ Pi), I[None]])
        R = Pi
        if table._L is not None:
            R = (table._L[i] @ R)
        if table._R is not None:
            R = (R @ table._R[a: i + 1])
        R = R.copy()
        R[p] = I
        yield p, R


def picard_volterra(U: PropagatorTable, path: CoefficientPath, tol: float = 1e-12,
                    max_iter: int = 200, window_product: float = 0.5,
                    max_segment_steps: int = 256) -> PropagatorTable:
    """Fixed point of ``T(t, tau) = U(t, tau) + int U(t, s) G(s) T(s, tau) ds``.

    ``U`` is the family of ``P^-1 A`` (kind ``base``) on the grid where the
    equation is discretized.  Successive Picard corrections are recorded in
    ``meta["corrections"]`` (one list per window).
    """
    K = np.stack([path.G(t) for t in U.grid.nodes])
    return _volterra_fixed_point(U, K, tol, max_iter, window_product,
                                 max_segment_steps, label="picard_left")


def build_right_family_volterra(A, path: CoefficientPath, grid: TimeGrid,
                                tol: float = 1e-12, max_iter: int = 200,
                                window_product: float = 0.5,
                                max_segment_steps: int = 256) -> PropagatorTable:
    """``T_r = V + int V(t, s) P(s)^-1 P'(s) T_r(s, tau) ds`` by Picard iteration."""
    V = build_V_family(A, path, grid)
    K = np.stack([np.linalg.solve(path.P(t), path.Pdot(t)) for t in grid.nodes])
    return _volterra_fixed_point(V, K, tol, max_iter, window_product,
                                 max_segment_steps, label="picard_right")


# ---------------------------------------------------------------- checks

@dataclass
class AxiomReport:
    passed: bool
    identity_exact: bool
    composition_defect: float
    M: float
    omega: float
    n_triples: int
    tol: float
    worst_triple: tuple[int, int, int] | None = None
    details: dict = field(default_factory=dict)


def fit_exponential_bound(norms_by_lag: np.ndarray, h: float) -> tuple[float, float]:
    """Envelope ``|T(t, tau)| <= M exp(w (t - tau))`` from per-lag maxima.

    Least squares on the log-norms gives ``(log M, w)``; ``M >= 1`` is
    enforced (refitting the slope through the origin when needed), then ``w``
    is raised just enough for the envelope to hold at every lag.
    """
    g = np.log(np.maximum(np.asarray(norms_by_lag, dtype=float), 1e-300))
    d = h * np.arange(len(g))
    if len(g) < 2:
        return 1.0, 0.0
    slope, icpt = np.polyfit(d, g, 1)
    if icpt < 0:
        icpt = 0.0
        slope = float(d[1:] @ g[1:] / (d[1:] @ d[1:]))
    need = np.max((g[1:] - icpt) / d[1:])
    omega = max(float(slope), float(need))
    return float(np.exp(icpt)), omega


def verify_evolution_axioms(table: PropagatorTable, tol: float = 1e-12, n_triples: int = 200,
                            seed: int = 0, fit_bound: bool = True,
                            max_span: int | None = None) -> AxiomReport:
    """Identity, composition (random triples) and exponential-bound fit.

    ``max_span`` limits ``i - k`` of the sampled triples ``(i, j, k)``, which
    bounds the cost of forming ``T(i, k)`` for large systems.
    """
    N = table.N
    rng = np.random.default_rng(seed)
    identity_exact = all(np.array_equal(table(i, i), np.eye(table.n))
                         for i in sorted(set(rng.integers(0, N + 1, 20).tolist()) | {0, N}))
    worst, worst_triple = 0.0, None
    span = N if max_span is None else max(1, min(N, int(max_span)))
    for _ in range(n_triples):
        k = int(rng.integers(0, N - span + 1))
        i, j, k = sorted((k + rng.integers(0, span + 1, 3)).tolist(), reverse=True)
        Tik = table(i, k)
        defect = np.linalg.norm(table(i, j) @ table(j, k) - Tik, 2)
        rel = defect / max(1.0, np.linalg.norm(Tik, 2))
        if rel > worst:
            worst, worst_triple = float(rel), (i, j, k)
    M = omega = float("nan")
    if fit_bound:
        M, omega = fit_exponential_bound(table.norms_by_lag(), table.grid.h)
    return AxiomReport(passed=identity_exact and worst <= tol, identity_exact=identity_exact,
                       composition_defect=worst, M=M, omega=omega, n_triples=n_triples,
                       tol=tol, worst_triple=worst_triple)


def mild_residual(table: PropagatorTable, kind: GeneratorKind, A, path: CoefficientPath,
                  x0) -> np.ndarray:
    """``|T(i,0) x0 - x0 - int_0^{t_i} A_kind(s) T(s,0) x0 ds|`` (trapezoid)."""
    A = np.asarray(A, dtype=float)
    x = table.propagate(0, np.asarray(x0, dtype=float))
    f = np.stack([generator_matrix(kind, A, path, t) @ xi
                  for t, xi in zip(table.grid.nodes, x)])
    h = table.grid.h
    integral = np.concatenate([np.zeros((1,) + f.shape[1:]),
                               np.cumsum(0.5 * h * (f[1:] + f[:-1]), axis=0)])
    return np.linalg.norm(x - x[0] - integral, axis=-1)


@dataclass
class ConvergenceStudy:
    parameters: list
    errors: list[float]
    slope: float
    label: str = ""
    bounds: list[tuple[float, float]] = field(default_factory=list)

    def non_increasing(self, slack: float = 0.10) -> bool:
        e = self.errors
        return all(e[k + 1] <= (1 + slack) * e[k] for k in range(len(e) - 1))


def loglog_slope(params, errors) -> float:
    p = np.log(np.asarray(params, dtype=float))
    e = np.log(np.maximum(np.asarray(errors, dtype=float), 1e-300))
    if len(p) < 2:
        return float("nan")
    return float(np.polyfit(p, e, 1)[0])


def trotter_kato_left(A, path: CoefficientPath, grid: TimeGrid, n_list,
                      fit_bounds: bool = False) -> ConvergenceStudy:
    """Sup-pair distance between the averaged families ``T_n`` and ``T_l``."""
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be nonempty and increasing")
    Tl = build_family(LEFT, A, path, grid)
    errors, bounds = [], []
    for n in n_list:
        Tn = build_family(averaged_left(n), A, path, grid)
        errors.append(sup_distance(Tn, Tl))
        if fit_bounds:
            bounds.append(fit_exponential_bound(Tn.norms_by_lag(), grid.h))
    return ConvergenceStudy(n_list, errors, loglog_slope(n_list, errors),
                            label="averaging", bounds=bounds)


def refinement_study(kind: GeneratorKind, A, path: CoefficientPath, grid: TimeGrid,
                     levels: int = 3, reference_factor: int = 16) -> ConvergenceStudy:
    """Node agreement of families at ``h, h/2, ..`` against a finer reference.

    The error at level ``k`` is ``max_i |T_k(i, 0) - T_ref(i, 0)|`` over the
    coarse nodes; the reported slope is the fitted order in ``h``.
    """
    if levels < 2:
        raise ValueError("need at least two levels to fit an order")
    if reference_factor < 2 ** levels:
        raise ValueError("reference must be finer than every level")
    ref = build_family(kind, A, path, grid.refine(reference_factor))
    n = np.shape(A)[0]
    ref_col = ref.propagate(0, np.eye(n))[::reference_factor]
    hs, errors = [], []
    for k in range(levels):
        f = 2 ** k
        T = build_family(kind, A, path, grid.refine(f))
        col = T.propagate(0, np.eye(n))[::f]
        errors.append(float(np.max(np.linalg.norm(col - ref_col, 2, axis=(1, 2)))))
        hs.append(grid.h / f)
    return ConvergenceStudy(hs, errors, loglog_slope(hs, errors), label="stepping")
