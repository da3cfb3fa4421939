from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TimeGrid"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = t0 + i h`` for ``i = 0..N``."""

    t0: float
    h: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.h)):
            raise ValueError("t0 and h must be finite")
        if self.h <= 0:
            raise ValueError(f"step h must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def over(cls, t0: float, t1: float, N: int) -> "TimeGrid":
        return cls(t0, (t1 - t0) / N, N)

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.N + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.t0 + self.h * (np.arange(self.N) + 0.5)

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * self.N

    def t(self, i: int) -> float:
        return self.t0 + self.h * i

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.h / factor, self.N * factor)

    def sub(self, i0: int, i1: int) -> "TimeGrid":
        """Grid on nodes ``i0..i1`` of this one."""
        return TimeGrid(self.t(i0), self.h, i1 - i0)

    def inside(self, interval, slack: float = 1e-12) -> bool:
        a, b = interval
        eps = slack * max(1.0, abs(a), abs(b))
        return self.t0 >= a - eps and self.t_end <= b + eps
