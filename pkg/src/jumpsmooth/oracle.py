"""Discrete-time repeated-interaction model used as a brute-force reference.

Each step of length ``dt`` is a complete instrument: ``M_mn = L_mn sqrt(dt)``
registers a count in channel ``(m, n)`` and ``M_0`` (the principal square
root of ``1 - sum M_mn^dag M_mn``) registers nothing.  Joint probabilities of
outcome sequences and ancilla results are computed by exhaustive
enumeration of nested Kraus conjugations; nothing here shares code with the
continuous-time propagators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .ancilla import KrausInstrument
from .exceptions import EnumerationTooLarge, StepTooLarge, ZeroProbabilityRecord
from .model import Channel, LevelSystem, check_density_matrix, collapse_operator
from .records import CountRecord

MAX_STEP_RATE = 0.05
MAX_TABLE = 10**7

# one step outcome: None for "no count", else the channel that clicked
Outcome = Optional[Channel]


@dataclass(frozen=True)
class StepInstrument:
    no_count: np.ndarray
    counts: Mapping[Channel, np.ndarray]
    dt: float

    def operator(self, outcome: Outcome) -> np.ndarray:
        return self.no_count if outcome is None else self.counts[outcome]

    @property
    def outcomes(self) -> tuple[Outcome, ...]:
        return (None,) + tuple(self.counts)

    def completeness_error(self) -> float:
        total = self.no_count.conj().T @ self.no_count
        for m in self.counts.values():
            total = total + m.conj().T @ m
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def discrete_step(sys: LevelSystem, dt: float) -> StepInstrument:
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if dt * sys.max_total_rate > MAX_STEP_RATE:
        raise StepTooLarge(f"dt * max rate = {dt * sys.max_total_rate:g} exceeds {MAX_STEP_RATE}")
    counts = {ch: collapse_operator(sys, ch) * math.sqrt(dt) for ch in sys.channels}
    rest = np.eye(sys.dim, dtype=complex)
    for m in counts.values():
        rest = rest - m.conj().T @ m
    return StepInstrument(_psd_sqrt(rest), counts, dt)


def _check_table_size(n_outcomes: int, steps: int, n_mu: int) -> None:
    if n_outcomes**steps * n_mu > MAX_TABLE:
        raise EnumerationTooLarge(
            f"{n_outcomes}^{steps} x {n_mu} entries exceed the enumeration bound {MAX_TABLE}"
        )


def enumerate_joint(
    sys: LevelSystem,
    rho0: np.ndarray,
    steps: int,
    dt: float,
    sigma_step: int,
    inst: KrausInstrument,
) -> dict[tuple[tuple[Outcome, ...], int], float]:
    """Probability of every (outcome sequence, ancilla result) pair.

    The ancilla instrument acts on the state at the start of step
    ``sigma_step``, i.e. at time ``sigma_step * dt``.
    """
    rho = check_density_matrix(sys, rho0)
    if not 0 <= sigma_step < steps:
        raise ValueError("need 0 <= sigma_step < steps")
    step = discrete_step(sys, dt)
    outcomes = step.outcomes
    _check_table_size(len(outcomes), steps, len(inst))

    branches: list[tuple[tuple[Outcome, ...], int, np.ndarray]] = [((), -1, rho)]
    for k in range(steps):
        if k == sigma_step:
            branches = [
                (seq, mu, op @ r @ op.conj().T)
                for seq, _, r in branches
                for mu, op in enumerate(inst.operators)
            ]
        grown = []
        for seq, mu, r in branches:
            for o in outcomes:
                op = step.operator(o)
                grown.append((seq + (o,), mu, op @ r @ op.conj().T))
        branches = grown
    return {(seq, mu): float(np.trace(r).real) for seq, mu, r in branches}


def condition_joint(
    table: Mapping[tuple[tuple[Outcome, ...], int], float], pattern: Sequence[Outcome]
) -> np.ndarray:
    """Ancilla distribution given that the outcome sequence equals ``pattern``."""
    pattern = tuple(pattern)
    n_mu = 1 + max(mu for _, mu in table)
    q = np.zeros(n_mu)
    for (seq, mu), p in table.items():
        if seq == pattern:
            q[mu] += p
    total = q.sum()
    if not total > 0.0:
        raise ZeroProbabilityRecord("the conditioning pattern has zero probability")
    return q / total


def oracle_smoothed_probs(
    sys: LevelSystem,
    rho0: np.ndarray,
    pattern: Sequence[Outcome],
    steps: int,
    dt: float,
    sigma_step: int,
    inst: KrausInstrument,
) -> np.ndarray:
    """Ancilla outcome distribution conditioned on a full step pattern.

    Only the branch matching ``pattern`` contributes to the conditional
    distribution, so it is evaluated directly; for small instances this
    equals ``condition_joint(enumerate_joint(...), pattern)``.
    """
    rho = check_density_matrix(sys, rho0)
    pattern = tuple(pattern)
    if len(pattern) != steps:
        raise ValueError(f"pattern has {len(pattern)} entries, expected {steps}")
    if not 0 <= sigma_step < steps:
        raise ValueError("need 0 <= sigma_step < steps")
    step = discrete_step(sys, dt)
    for o in pattern:
        if o is not None and o not in step.counts:
            raise ZeroProbabilityRecord(f"pattern names unknown channel {o}")

    # the prefix weight is common to every mu, so only its direction matters
    before = rho
    for o in pattern[:sigma_step]:
        op = step.operator(o)
        before = op @ before @ op.conj().T
        s = np.trace(before).real
        if not s > 0.0:
            raise ZeroProbabilityRecord("the conditioning pattern has zero probability")
        before = before / s
    q = np.array(
        [_branch_weight(step, op @ before @ op.conj().T, pattern[sigma_step:]) for op in inst.operators]
    )
    total = q.sum()
    if not total > 0.0:
        raise ZeroProbabilityRecord("the conditioning pattern has zero probability")
    return q / total


def _branch_weight(step: StepInstrument, r: np.ndarray, outs: Sequence[Outcome]) -> float:
    # renormalize as we go and carry the scale in log form to avoid underflow
    log_scale = 0.0
    for o in outs:
        op = step.operator(o)
        r = op @ r @ op.conj().T
        s = np.trace(r).real
        if s <= 0.0:
            return 0.0
        log_scale += math.log(s)
        r = r / s
    return math.exp(log_scale) * float(np.trace(r).real)


def discrete_filter(sys: LevelSystem, rho0: np.ndarray, pattern: Sequence[Outcome], dt: float) -> np.ndarray:
    """Normalized states after each step of ``pattern`` (sequential Kraus updates)."""
    rho = check_density_matrix(sys, rho0)
    step = discrete_step(sys, dt)
    out = [rho]
    for o in pattern:
        op = step.operator(o)
        rho = op @ rho @ op.conj().T
        tr = np.trace(rho).real
        if not tr > 0.0:
            raise ZeroProbabilityRecord("pattern has zero probability")
        rho = rho / tr
        out.append(rho)
    return np.array(out)


def record_to_pattern(record: CountRecord, dt: float, steps: int) -> tuple[Outcome, ...]:
    """Map each count to the step ``[k dt, (k+1) dt)`` that contains it."""
    pattern: list[Outcome] = [None] * steps
    for ev in record.events:
        k = int(math.floor(ev.t / dt + 1e-9))
        if not 0 <= k < steps:
            raise ZeroProbabilityRecord(f"count at t={ev.t!r} falls outside the {steps} oracle steps")
        if pattern[k] is not None:
            raise ZeroProbabilityRecord(f"two counts fall in oracle step {k}")
        pattern[k] = ev.channel
    return tuple(pattern)
