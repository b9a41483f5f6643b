"""Sampled curves over logarithmic grids.

A Curve holds interval (or point) values over a strictly monotone
abscissa grid: decreasing toward 0 for radius/time scales, increasing
for log-frame curves (z = -ln r).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError


@dataclass
class Curve:
    scale: str  # 'radius' | 'time' | 'log'
    normalization: str  # descriptive tag of the plotted quantity
    abscissa: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if not (len(self.abscissa) == len(self.lo) == len(self.hi)):
            raise PreconditionError("curve arrays must have equal length")
        if self.scale not in ("radius", "time", "log"):
            raise PreconditionError(f"unknown curve scale {self.scale!r}")
        if len(self.abscissa) > 1:
            d = np.diff(self.abscissa)
            if self.scale == "log":
                if not (d > 0).all():
                    raise PreconditionError("log-frame abscissas must increase")
            else:
                if not (d < 0).all():
                    raise PreconditionError("abscissas must decrease strictly toward 0")
                if not (self.abscissa > 0).all():
                    raise PreconditionError("abscissas must be positive")

    def __len__(self) -> int:
        return len(self.abscissa)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def is_interval(self) -> bool:
        return bool(np.any(self.hi > self.lo))

    def neg_log_abscissa(self) -> np.ndarray:
        if self.scale == "log":
            return self.abscissa
        return -np.log(self.abscissa)


def geometric_grid(top: float, base: float, per_period: int, periods: float) -> np.ndarray:
    """Descending grid top * base^(-j/per_period) covering ``periods`` periods."""
    if top <= 0 or base <= 1 or per_period < 1:
        raise PreconditionError("need top > 0, base > 1, per_period >= 1")
    npts = int(round(per_period * periods)) + 1
    j = np.arange(npts, dtype=float)
    return top * base ** (-j / per_period)
