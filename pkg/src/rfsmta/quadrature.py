"""Uniform 1-D trapezoid grids used by every quadrature check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    points: int = 400

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.points < 2:
            raise ValueError("grid needs at least 2 points")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def integrate(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        return np.tensordot(values, self.weights, axes=([axis], [0]))

    @classmethod
    def covering(cls, means: Iterable[float], sigmas: Iterable[float],
                 nsigma: float = 10.0, points: int = 400, extra: Iterable[float] = ()) -> "Grid":
        """Smallest grid containing every mean +- nsigma*sigma and every ``extra`` point."""
        means = np.asarray(list(means), dtype=float)
        sigmas = np.asarray(list(sigmas), dtype=float)
        lo = np.min(means - nsigma * sigmas)
        hi = np.max(means + nsigma * sigmas)
        extra = np.asarray(list(extra), dtype=float)
        if extra.size:
            lo, hi = min(lo, extra.min()), max(hi, extra.max())
        return cls(float(lo), float(hi), points)
