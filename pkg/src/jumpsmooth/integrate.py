"""Fixed-step classical Runge-Kutta machinery shared by all propagators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .exceptions import InvalidGrid, StepTooLarge

MAX_STEP_RATE = 0.1
# event times closer than this to a grid point are treated as lying on it
SNAP_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + h, ..., t1``."""

    t0: float
    t1: float
    h: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and math.isfinite(self.t1) and math.isfinite(self.h)):
            raise InvalidGrid("grid bounds must be finite")
        if self.t0 < 0.0:
            raise InvalidGrid("t0 must be >= 0")
        if not self.t1 > self.t0:
            raise InvalidGrid("t1 must exceed t0")
        if not self.h > 0.0:
            raise InvalidGrid("step must be positive")
        ratio = (self.t1 - self.t0) / self.h
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidGrid(f"(t1 - t0) / h = {ratio!r} is not an integer")

    @classmethod
    def covering(cls, t0: float, t1: float, max_step: float) -> "TimeGrid":
        """Finest uniform grid on ``[t0, t1]`` whose step does not exceed ``max_step``."""
        n = max(1, math.ceil((t1 - t0) / max_step - 1e-9))
        return cls(t0, t1, (t1 - t0) / n)

    @property
    def n_steps(self) -> int:
        return int(round((self.t1 - self.t0) / self.h))

    @cached_property
    def times(self) -> np.ndarray:
        t = self.t0 + self.h * np.arange(self.n_steps + 1)
        t[-1] = self.t1
        t.flags.writeable = False
        return t

    def index_of(self, t: float, tol: float = SNAP_TOL) -> int | None:
        """Grid index of ``t`` if it lies on the grid (within ``tol``), else None."""
        k = int(round((t - self.t0) / self.h))
        if 0 <= k <= self.n_steps and abs(self.times[k] - t) <= tol:
            return k
        return None


def check_step(h: float, max_rate: float) -> None:
    if h * max_rate > MAX_STEP_RATE:
        raise StepTooLarge(
            f"step {h:g} times max decay rate {max_rate:g} exceeds {MAX_STEP_RATE}; refine the step"
        )


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step for an autonomous ODE."""
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def linear_rk4_map(generator: np.ndarray, h: float) -> np.ndarray:
    """Matrix of one RK4 step for ``y' = G y``.

    For a linear autonomous right-hand side the four RK4 stages collapse to
    the degree-four Taylor polynomial ``I + hG + (hG)^2/2 + (hG)^3/6 + (hG)^4/24``.
    """
    a = h * np.asarray(generator)
    eye = np.eye(a.shape[0], dtype=a.dtype)
    return eye + a @ (eye + a @ (eye / 2.0 + a @ (eye / 6.0 + a / 24.0)))


class LinearStepper:
    """Caches RK4 step matrices for a linear generator, keyed by step length."""

    def __init__(self, generator: np.ndarray) -> None:
        self.generator = np.asarray(generator)
        self._cache: dict[float, np.ndarray] = {}

    def matrix(self, h: float) -> np.ndarray:
        m = self._cache.get(h)
        if m is None:
            m = linear_rk4_map(self.generator, h)
            if len(self._cache) < 64:
                self._cache[h] = m
        return m

    def step(self, y: np.ndarray, h: float) -> np.ndarray:
        return self.matrix(h) @ y
