"""Record-averaged evolution: Liouvillian integration and the rate equations."""

from __future__ import annotations

import logging

import numpy as np

from .exceptions import InvalidState
from .integrate import LinearStepper, TimeGrid, check_step
from .model import LevelSystem, check_density_matrix, liouvillian, superoperator
from .paths import Path

logger = logging.getLogger(__name__)

# allowed trace drift per unit time before renormalization
TRACE_DRIFT_PER_TIME = 1e-9


def default_grid(sys: LevelSystem, t1: float, t0: float = 0.0) -> TimeGrid:
    return TimeGrid.covering(t0, t1, sys.default_step())


def rate_equation_matrix(sys: LevelSystem) -> np.ndarray:
    """``R`` with ``dp/dt = R p``: gains ``gamma_rn p_n`` from above, loss ``Gamma_r p_r``."""
    return sys.rate_matrix - np.diag(sys.total_rates)


def population_derivative(sys: LevelSystem, p: np.ndarray) -> np.ndarray:
    return rate_equation_matrix(sys) @ np.asarray(p, dtype=float)


def evolve_unconditioned(sys: LevelSystem, rho0: np.ndarray, grid: TimeGrid) -> Path:
    """Integrate ``d rho / dt = L*(rho)`` with RK4 on ``grid``.

    Each step is re-symmetrized and trace-renormalized; the size of the trace
    correction is logged and must stay below ``1e-9`` per unit time.
    """
    rho = check_density_matrix(sys, rho0).copy()
    check_step(grid.h, sys.max_total_rate)
    n = sys.dim
    stepper = LinearStepper(superoperator(sys, lambda x: liouvillian(sys, x)))
    step = stepper.matrix(grid.h)
    out = np.empty((grid.n_steps + 1, n, n), dtype=complex)
    out[0] = rho
    worst = 0.0
    vec = rho.reshape(-1)
    for k in range(grid.n_steps):
        nxt = (step @ vec).reshape(n, n)
        nxt = 0.5 * (nxt + nxt.conj().T)
        tr = nxt.trace().real
        worst = max(worst, abs(tr - 1.0))
        nxt /= tr
        out[k + 1] = nxt
        vec = nxt.reshape(-1)
    logger.debug("evolve_unconditioned: max per-step trace correction %.3e", worst)
    if worst > TRACE_DRIFT_PER_TIME * grid.h:
        raise InvalidState(f"trace drift {worst:.3e} per step exceeds tolerance")
    return Path(grid.times, out)


def evolve_populations(sys: LevelSystem, p0: np.ndarray, grid: TimeGrid) -> Path:
    """RK4 on the closed rate equations for the level populations."""
    p = np.asarray(p0, dtype=float)
    if p.shape != (sys.dim,):
        raise InvalidState(f"population vector has shape {p.shape}, expected {(sys.dim,)}")
    if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidState("populations must be non-negative and sum to 1")
    check_step(grid.h, sys.max_total_rate)
    step = LinearStepper(rate_equation_matrix(sys)).matrix(grid.h)
    out = np.empty((grid.n_steps + 1, sys.dim))
    out[0] = p
    for k in range(grid.n_steps):
        p = step @ p
        out[k + 1] = p
    return Path(grid.times, out)
