"""Backward effect-operator propagation along an observed count record.

The effect ``E(t)`` starts from the identity at the record horizon and runs
backward under the exact trace-pairing adjoint of the forward Zakai
propagation, so ``tr{rho~(t) E(t)}`` is the same at every grid point.  Crossing
a count ``(m, n)`` backward maps ``E -> L_mn^dag E L_mn``, which leaves an
operator proportional to ``|n><n|``: the pre-transition level.
"""

from __future__ import annotations

import numpy as np

from .exceptions import EventOutsideHorizon, GridMismatch
from .integrate import SNAP_TOL, LinearStepper, TimeGrid, check_step
from .model import LevelSystem, collapse_operator, lindbladian, superoperator
from .filter import _walk_backward
from .paths import JumpLimits, Path


def effect_no_count_generator(sys: LevelSystem) -> np.ndarray:
    """Superoperator of ``L(E) - sum_{m<n} (L_mn^dag E L_mn - E)``."""
    ops = [collapse_operator(sys, ch) for ch in sys.channels]

    def gen(e: np.ndarray) -> np.ndarray:
        out = lindbladian(sys, e)
        for lop in ops:
            out -= lop.conj().T @ e @ lop - e
        return out

    return superoperator(sys, gen)


def backward_effect(sys, record, grid: TimeGrid) -> Path:
    """Effect operator on ``grid`` with ``E(horizon) = 1``.

    Values are left-continuous: at a count time the stored value is
    ``E(tau-)``; ``Path.right_limit`` returns ``E(tau+)``.  If the grid stops
    short of the horizon, the stretch in between is covered with steps no
    longer than ``grid.h``.
    """
    record.validate_for(sys)
    horizon = record.horizon
    if grid.t1 > horizon + SNAP_TOL:
        raise EventOutsideHorizon(f"grid ends at {grid.t1!r} beyond the record horizon {horizon!r}")
    check_step(grid.h, sys.max_total_rate)
    times = grid.times
    if horizon - grid.t1 > SNAP_TOL:
        tail = TimeGrid.covering(grid.t1, horizon, grid.h).times[1:]
        times = np.concatenate([times, tail])
    n = sys.dim
    stepper = LinearStepper(effect_no_count_generator(sys))
    ops = {ch: collapse_operator(sys, ch) for ch in sys.channels}
    vals, jumps = _walk_backward(
        times,
        record.events,
        np.eye(n, dtype=complex).reshape(-1),
        lambda v, dt: stepper.step(v, dt),
        lambda v, ch: (ops[ch].conj().T @ v.reshape(n, n) @ ops[ch]).reshape(-1),
    )
    keep = len(grid.times)
    jumps = tuple(
        JumpLimits(j.time, j.channel, j.left.reshape(n, n), j.right.reshape(n, n))
        for j in jumps
        if j.time <= grid.t1 + SNAP_TOL
    )
    return Path(grid.times, vals[:keep].reshape(-1, n, n), "left", jumps)


def record_likelihood(sys, zakai_path: Path, effect_path: Path) -> np.ndarray:
    """``c(t) = tr{rho~(t) E(t)}`` on the shared grid.

    At a count time the post-count Zakai state is paired with ``E(tau+)`` so
    both factors refer to the same side of the count.
    """
    if len(zakai_path) != len(effect_path) or np.max(np.abs(zakai_path.times - effect_path.times)) > SNAP_TOL:
        raise GridMismatch("Zakai and effect paths live on different grids")
    out = np.empty(len(zakai_path))
    for k, (t, rho) in enumerate(zakai_path):
        e = effect_path.right_limit(t) if zakai_path.continuity == "right" else effect_path.values[k]
        out[k] = np.einsum("ij,ji->", rho, e).real
    return out


def normalized_effect(effect: np.ndarray) -> np.ndarray:
    """Trace-normalized copy of an effect matrix (for display only)."""
    return effect / np.trace(effect).real


def numerical_rank(e: np.ndarray, rel_tol: float = 1e-10) -> int:
    w = np.abs(np.linalg.eigvalsh(0.5 * (e + e.conj().T)))
    return int(np.sum(w > rel_tol * max(w.max(), np.finfo(float).tiny)))
