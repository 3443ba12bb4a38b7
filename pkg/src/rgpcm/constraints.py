"""Eigenvalue bounds and the dynamic relaxation schedule.

A run starts with the interval squeezed to ``(beta, beta)`` and relaxes it
over ``k`` iterations along ``beta * (1 - v, 1 - log(1 - v))`` for ``v``
running from 0 to 1. A regime decides which side of that interval is used.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

INF = math.inf


class Regime(str, enum.Enum):
    NONE = "none"
    LOWER = "lower"
    UPPER = "upper"
    RANGE = "range"

    def __str__(self) -> str:
        return self.value


def schedule_bounds(v: float, beta: float = 1.0) -> tuple[float, float]:
    """Interval at relaxation level ``v``; ``v=1`` gives ``(0, inf)``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"relaxation level must lie in [0, 1], got {v}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if v == 1.0:
        return 0.0, INF
    return beta * (1.0 - v), beta * (1.0 - math.log1p(-v))


def equidistant_levels(k: int) -> np.ndarray:
    if k < 2:
        raise ValueError(f"schedule length must be at least 2, got {k}")
    return np.linspace(0.0, 1.0, k)


@dataclass(frozen=True)
class ConstraintSpec:
    """Static bounds ``[a, b]`` plus an optional relaxation schedule.

    The effective interval at EM iteration ``t`` is the schedule interval for
    the regime intersected with the static bounds. With the default static
    bounds ``(0, inf)`` the ``none`` regime is plain unconstrained EM.
    """

    a: float = 0.0
    b: float = INF
    regime: Regime = Regime.NONE
    schedule_len: int = 25
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if not 0.0 <= self.a <= self.b:
            raise ValueError(f"need 0 <= a <= b, got a={self.a}, b={self.b}")
        if self.regime is not Regime.NONE:
            if self.schedule_len < 2:
                raise ValueError("schedule length must be at least 2")
            if not self.beta > 0:
                raise ValueError("beta must be positive")
            if not self.a <= self.beta <= self.b:
                raise ValueError(
                    f"beta={self.beta} must lie inside the static bounds [{self.a}, {self.b}]"
                )

    @property
    def scheduled_steps(self) -> int:
        return 0 if self.regime is Regime.NONE else self.schedule_len

    def bounds_at(self, t: int) -> tuple[float, float]:
        """Effective interval for iteration ``t`` (1-based)."""
        lo, hi = regime_bounds(self, t)
        return max(lo, self.a), min(hi, self.b)

    @property
    def final_bounds(self) -> tuple[float, float]:
        return self.bounds_at(max(self.scheduled_steps, 1))


def regime_bounds(spec: ConstraintSpec, t: int) -> tuple[float, float]:
    """Schedule interval at iteration ``t`` before intersecting static bounds."""
    if t < 1:
        raise ValueError("iterations are counted from 1")
    if spec.regime is Regime.NONE:
        return 0.0, INF
    levels = equidistant_levels(spec.schedule_len)
    lo, hi = schedule_bounds(float(levels[min(t, spec.schedule_len) - 1]), spec.beta)
    if spec.regime is Regime.LOWER:
        return lo, INF
    if spec.regime is Regime.UPPER:
        return 0.0, hi
    return lo, hi


def static_bounds_from_data(x) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the sample covariance of ``x``."""
    from .linalg import eig_sym

    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if n <= p:
        raise ValueError(f"need more observations than variables (n={n}, p={p})")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    values = eig_sym(cov).values
    lo, hi = float(values[-1]), float(values[0])
    if not lo > 1e-12 * max(hi, 1.0):
        raise ValueError(
            "sample covariance is singular; standardize the data or reduce its dimension"
        )
    return lo, hi
