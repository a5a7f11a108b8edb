"""Indirect (ancilla-mediated) measurements made during continuous counting.

An instrument ``{Omega_mu}`` acting just before time ``sigma`` gives outcome
probabilities that combine the filtered state at ``sigma`` with the backward
effect at ``sigma``; when the coupling coincides with a count the result
factorizes into pre- and post-transition pieces.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DimensionMismatch, InvalidConfig, NotAnInstrument, SigmaOnEvent, ZeroLikelihood
from .filter import filter_along_record
from .integrate import TimeGrid
from .model import LevelSystem
from .records import CountRecord
from .smoother import backward_effect

logger = logging.getLogger(__name__)

COMPLETENESS_TOL = 1e-10
SIGMA_EVENT_TOL = 1e-12


@dataclass(frozen=True)
class KrausInstrument:
    operators: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def __len__(self) -> int:
        return len(self.operators)


@dataclass(frozen=True)
class OutcomeProbabilities:
    """Unnormalized weights ``q_tilde`` and the conditional probabilities ``q``."""

    q_tilde: np.ndarray
    q: np.ndarray

    def to_dict(self) -> dict:
        return {"q_tilde": self.q_tilde.tolist(), "q": self.q.tolist()}


def validate_instrument(ops: Sequence[np.ndarray]) -> KrausInstrument:
    """Check ``sum_mu Omega_mu^dag Omega_mu = 1`` and wrap the operators.

    Instruments whose plain operator sum differs from the identity are still
    accepted; that is logged at warning level since it is the weaker
    condition that is sometimes quoted for such couplings.
    """
    mats = tuple(np.array(op, dtype=complex) for op in ops)
    if not mats:
        raise NotAnInstrument("an instrument needs at least one operator")
    n = mats[0].shape[0] if mats[0].ndim == 2 else -1
    for op in mats:
        if op.shape != (n, n):
            raise DimensionMismatch(f"instrument operators must all be square and equal-sized, got {op.shape}")
    eye = np.eye(n)
    err = np.max(np.abs(sum(op.conj().T @ op for op in mats) - eye))
    if err > COMPLETENESS_TOL:
        raise NotAnInstrument(f"sum of Omega^dag Omega deviates from identity by {err:.3e}")
    if np.max(np.abs(sum(mats) - eye)) > COMPLETENESS_TOL:
        logger.warning("instrument operators do not sum to the identity (isometry condition holds)")
    for op in mats:
        op.flags.writeable = False
    return KrausInstrument(mats)


def _check_dim(sys: LevelSystem, inst: KrausInstrument) -> None:
    if inst.dim != sys.dim:
        raise DimensionMismatch(f"instrument acts on dimension {inst.dim}, system has {sys.dim}")


def _normalize(q_tilde: np.ndarray) -> np.ndarray:
    total = q_tilde.sum()
    if not total > 0.0:
        raise ZeroLikelihood("outcome weights sum to zero; the record is impossible")
    return q_tilde / total


def smoothed_outcome_probs(
    sys: LevelSystem,
    rho0: np.ndarray,
    record: CountRecord,
    sigma: float,
    inst: KrausInstrument,
    grid: TimeGrid,
) -> OutcomeProbabilities:
    """Outcome probabilities of ``inst`` applied at ``sigma`` given the whole record.

    ``q_tilde[mu] = tr{Omega_mu rho(sigma) Omega_mu^dag E(sigma+)}`` with the
    filtered state ``rho(sigma)`` started from ``rho0`` at ``grid.t0``.  The
    forward and backward sweeps use the finest uniform steps not exceeding
    ``grid.h`` that land exactly on ``sigma``.
    """
    _check_dim(sys, inst)
    if not grid.t0 < sigma < record.horizon:
        raise ValueError(f"sigma={sigma!r} must lie strictly inside ({grid.t0}, {record.horizon})")
    for ev in record.events:
        if abs(ev.t - sigma) <= SIGMA_EVENT_TOL:
            raise SigmaOnEvent(f"sigma coincides with the count at t={ev.t!r}; use boundary_probs")
    rho = filter_along_record(sys, rho0, record, TimeGrid.covering(grid.t0, sigma, grid.h)).final
    eff = backward_effect(sys, record, TimeGrid.covering(sigma, record.horizon, grid.h)).values[0]
    q_tilde = np.array([np.einsum("ij,ji->", op @ rho @ op.conj().T, eff).real for op in inst.operators])
    return OutcomeProbabilities(q_tilde, _normalize(q_tilde))


def boundary_probs(
    rho_minus: np.ndarray,
    ch: tuple[int, int],
    e_plus: np.ndarray,
    gamma: float,
    inst: KrausInstrument,
) -> OutcomeProbabilities:
    """Closed form for an ancilla coupled at the instant of a count in ``ch``.

    ``q_tilde[mu] = gamma <n|Omega_mu rho_minus Omega_mu^dag|n> <m|E_plus|m>``;
    the normalized ``q`` depends only on the pre-count state and ``n``.
    """
    m, n = int(ch[0]), int(ch[1])
    if not m < n:
        raise ValueError(f"channel ({m},{n}) must satisfy m < n")
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    rho_minus = np.asarray(rho_minus, dtype=complex)
    e_plus = np.asarray(e_plus, dtype=complex)
    if rho_minus.shape != (inst.dim, inst.dim) or e_plus.shape != rho_minus.shape:
        raise DimensionMismatch("state, effect and instrument dimensions differ")
    pre = np.array([(op @ rho_minus @ op.conj().T)[n, n].real for op in inst.operators])
    q_tilde = gamma * pre * e_plus[m, m].real
    total = pre.sum()
    if not total > 0.0:
        raise ZeroLikelihood(f"pre-count weight of level {n} vanishes")
    return OutcomeProbabilities(q_tilde, pre / total)


def instrument_from_dict(obj: Mapping) -> KrausInstrument:
    if not isinstance(obj, Mapping) or set(obj) != {"operators"}:
        raise InvalidConfig('instrument file must be {"operators": [...]}')
    mats = []
    try:
        for op in obj["operators"]:
            arr = np.array(op, dtype=float)
            if arr.ndim == 2 and arr.shape[1] == 2:
                # flat row-major list of N*N pairs
                side = math.isqrt(arr.shape[0])
                if side * side != arr.shape[0]:
                    raise InvalidConfig(f"operator has {arr.shape[0]} entries, not a square count")
                arr = arr.reshape(side, side, 2)
            if arr.ndim != 3 or arr.shape[2] != 2:
                raise InvalidConfig("operators are lists of [re, im] pairs, row-major")
            mats.append(arr[..., 0] + 1j * arr[..., 1])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfig):
            raise
        raise InvalidConfig(f"malformed operator entries: {exc}") from None
    return validate_instrument(mats)


def instrument_to_dict(inst: KrausInstrument) -> dict:
    return {
        "operators": [
            [[float(z.real), float(z.imag)] for z in op.reshape(-1)] for op in inst.operators
        ]
    }


def load_instrument(path: str | FsPath) -> KrausInstrument:
    with open(path) as fh:
        return instrument_from_dict(json.load(fh))


def diagonal_instrument(weights: Sequence[Sequence[float]]) -> KrausInstrument:
    """Instrument with ``Omega_mu = diag(sqrt(w_mu))``; each column of weights sums to 1."""
    return validate_instrument([np.diag(np.sqrt(np.asarray(w, dtype=float))) for w in weights])

