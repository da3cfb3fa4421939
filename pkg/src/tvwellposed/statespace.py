"""Finite-dimensional passive realizations and their certificates.

A realization ``(A, B, C, D)`` lives on Euclidean spaces.  Weighted inner
products coming from a discretization have to be absorbed into the
coordinates (symmetric square-root scaling) before a realization is built,
so that passivity becomes a plain semidefiniteness test of one symmetric
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionError",
    "PassiveRealization",
    "PassivityReport",
    "check_dissipative",
    "check_passive",
    "default_passivity_tol",
    "lti_propagator",
    "passivity_form",
    "passivity_matrix",
    "random_passive_realization",
    "znorm",
]


class DimensionError(ValueError):
    """Raised for inconsistent shapes or non-finite matrix input."""


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise DimensionError(f"{name} has non-finite entries")
    return M


def _as_square(A, name: str = "A") -> np.ndarray:
    A = _as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


@dataclass(frozen=True)
class PassiveRealization:
    """State-space realization ``x' = Ax + Bu``, ``y = Cx + Du``.

    Matrices are copied and made read-only on construction.  The class
    does not itself enforce passivity; use :func:`check_passive`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        A = _as_square(self.A, "A")
        n = A.shape[0]
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(
                f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        for key, M in zip("ABCD", (A, B, C, D)):
            M = M.copy()
            M.setflags(write=False)
            object.__setattr__(self, key, M)

    @property
    def n_state(self) -> int:
        return self.A.shape[0]

    @property
    def n_in(self) -> int:
        return self.B.shape[1]

    @property
    def n_out(self) -> int:
        return self.C.shape[0]

    def norm_scale(self) -> float:
        """``1 + |A| + |B| + |C| + |D|`` in the spectral norm."""
        return 1.0 + sum(np.linalg.norm(M, 2) for M in (self.A, self.B, self.C, self.D))


@dataclass(frozen=True)
class PassivityReport:
    dissipative: bool
    passive: bool
    energy_preserving: bool
    worst_witness: tuple[np.ndarray, np.ndarray]
    worst_value: float
    lambda_max_sym: float
    max_defect: float
    tol: float


def check_dissipative(A, tol: float = 0.0) -> tuple[bool, float]:
    """Return ``(lam_max((A + A^T)/2) <= tol, lam_max)``."""
    A = _as_square(A)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    lam = float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])
    return lam <= tol, lam


def passivity_matrix(sys: PassiveRealization) -> np.ndarray:
    """Symmetric matrix ``M`` with ``Q(x, u) = [x; u]^T M [x; u]``.

    ``Q(x, u) = |u|^2 - |Cx + Du|^2 - 2 <Ax + Bu, x>``.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    m = sys.n_in
    Mxx = -(A + A.T) - C.T @ C
    Mxu = -(C.T @ D + B)
    Muu = np.eye(m) - D.T @ D
    return np.block([[Mxx, Mxu], [Mxu.T, Muu]])


def passivity_form(sys: PassiveRealization, x, u) -> float:
    """Evaluate ``|u|^2 - |Cx + Du|^2 - 2 <Ax + Bu, x>`` directly."""
    x = np.asarray(x, dtype=float).reshape(sys.n_state)
    u = np.asarray(u, dtype=float).reshape(sys.n_in)
    y = sys.C @ x + sys.D @ u
    return float(u @ u - y @ y - 2.0 * (sys.A @ x + sys.B @ u) @ x)


def default_passivity_tol(sys: PassiveRealization) -> float:
    return 1e-10 * sys.norm_scale()


def check_passive(sys: PassiveRealization, tol: float | None = None) -> PassivityReport:
    """Certify passivity and energy preservation of ``sys``.

    Passivity is the eigenvalue test ``lam_min(M) >= -tol`` on the matrix of
    :func:`passivity_matrix`; the witness is the corresponding unit
    eigenvector split into ``(x, u)``.  Energy preservation requires the form
    to vanish on the standard basis and on all pairwise sums of basis
    vectors, which by polarization is ``max |M_ij| <= tol``.
    """
    if tol is None:
        tol = default_passivity_tol(sys)
    M = passivity_matrix(sys)
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    worst = float(w[0])
    v = V[:, 0]
    n = sys.n_state
    witness = (v[:n].copy(), v[n:].copy())
    # max |Q| over e_i and e_i + e_j is governed by the entries of M
    dim = M.shape[0]
    d = np.diag(M)
    pair = np.abs(d[:, None] + d[None, :] + 2 * M) if dim else np.zeros((0, 0))
    basis_defect = float(max(np.abs(d).max(initial=0.0), pair.max(initial=0.0)))
    dissipative, lam = check_dissipative(sys.A, tol)
    passive = worst >= -tol
    energy_preserving = passive and basis_defect <= tol
    return PassivityReport(
        dissipative=dissipative,
        passive=passive,
        energy_preserving=energy_preserving,
        worst_witness=witness,
        worst_value=worst,
        lambda_max_sym=lam,
        max_defect=basis_defect,
        tol=float(tol),
    )


def lti_propagator(A, dt: float) -> np.ndarray:
    """``exp(A dt)`` by scaling and squaring (``scipy.linalg.expm``)."""
    A = _as_square(A)
    if not np.isfinite(dt):
        raise DimensionError("dt must be finite")
    return scipy.linalg.expm(A * float(dt))


def znorm(sys: PassiveRealization, x) -> float:
    """Squared solution-space norm ``min_u |Ax + Bu|^2 + |x|^2 + |u|^2``.

    In finite dimensions every ``u`` is admissible, so the infimum is an
    ordinary linear least-squares problem in ``u``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != sys.n_state:
        raise DimensionError(f"x has length {x.shape[0]}, expected {sys.n_state}")
    m = sys.n_in
    lhs = np.vstack([sys.B, np.eye(m)])
    rhs = np.concatenate([-(sys.A @ x), np.zeros(m)])
    u, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    r = sys.A @ x + sys.B @ u
    return float(r @ r + x @ x + u @ u)


def random_passive_realization(n: int, rng: np.random.Generator, n_in: int = 1,
                               n_out: int | None = None, margin: float = 0.1) -> PassiveRealization:
    """Random passive ``(A, B, C, 0)`` with ``A = J - R``.

    ``J`` is skew and ``R = (C^T C + B B^T)/2 + margin I``, which makes the
    passivity matrix block-diagonalizable with Schur complement
    ``2 margin I``.
    """
    n_out = n_in if n_out is None else n_out
    J = rng.standard_normal((n, n))
    J = J - J.T
    B = rng.standard_normal((n, n_in)) / np.sqrt(n)
    C = rng.standard_normal((n_out, n)) / np.sqrt(n)
    R = 0.5 * (C.T @ C + B @ B.T) + margin * np.eye(n)
    return PassiveRealization(J - R, B, C, np.zeros((n_out, n_in)), name=f"random{n}")
