"""N-level cascade model: validated level system and its Lindblad generators.

Levels are labelled ``0..N-1`` in order of increasing energy.  A photon
detected in channel ``(m, n)`` (``m < n``) signals the transition
``|n> -> |m>`` with Bohr frequency ``E_n - E_m``.  Natural units are used
throughout (hbar = 1).  The system Hamiltonian only fixes the Bohr
frequencies; the generators below describe the interaction-picture dynamics,
which carry no Hamiltonian term.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .exceptions import (
    DegenerateBohrFrequency,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidConfig,
    InvalidState,
    NegativeRate,
    NoChannels,
    NonIncreasingEnergies,
    UnknownChannel,
    UpwardRate,
)

BOHR_TOLERANCE = 1e-12
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
PSD_TOL = 1e-9


class Channel(NamedTuple):
    """Detection channel for the transition ``|n> -> |m>``."""

    m: int
    n: int

    def __str__(self) -> str:
        return f"({self.m},{self.n})"


@dataclass(frozen=True)
class LevelSystem:
    """Immutable N-level system with a table of downward decay rates.

    Use :func:`build_system` to construct a validated instance.
    """

    energies: tuple[float, ...]
    rates: Mapping[Channel, float] = field(repr=True)

    @property
    def dim(self) -> int:
        return len(self.energies)

    @cached_property
    def channels(self) -> tuple[Channel, ...]:
        """All channels in the rate table, in lexicographic ``(m, n)`` order."""
        return tuple(sorted(self.rates))

    @cached_property
    def bohr_frequencies(self) -> dict[Channel, float]:
        e = self.energies
        return {Channel(m, n): e[n] - e[m] for m, n in combinations(range(self.dim), 2)}

    @cached_property
    def rate_matrix(self) -> np.ndarray:
        """``G[m, n] = gamma_mn`` (zero where no channel is defined)."""
        g = np.zeros((self.dim, self.dim))
        for (m, n), gamma in self.rates.items():
            g[m, n] = gamma
        g.flags.writeable = False
        return g

    @cached_property
    def total_rates(self) -> np.ndarray:
        """``Gamma_r = sum_{m<r} gamma_mr`` for every level ``r``."""
        out = self.rate_matrix.sum(axis=0)
        out.flags.writeable = False
        return out

    @cached_property
    def damping_diagonal(self) -> np.ndarray:
        """Diagonal of the damping operator ``K``, i.e. ``-Gamma_r / 2``."""
        out = -0.5 * self.total_rates
        out.flags.writeable = False
        return out

    @cached_property
    def _pair_damping(self) -> np.ndarray:
        # (k_i + k_j); the anticommutator with K acts entrywise
        k = self.damping_diagonal
        out = k[:, None] + k[None, :]
        out.flags.writeable = False
        return out

    @property
    def max_total_rate(self) -> float:
        return float(self.total_rates.max())

    def default_step(self) -> float:
        """Default integration step ``1e-3 / max(max_r Gamma_r, 1)``."""
        return 1e-3 / max(self.max_total_rate, 1.0)

    def rate(self, ch: tuple[int, int]) -> float:
        ch = Channel(*ch)
        if ch not in self.rates:
            raise UnknownChannel(f"channel {ch} is not defined for this system")
        return self.rates[ch]

    def check_channel(self, ch: tuple[int, int], *, require_positive: bool = False) -> Channel:
        ch = Channel(int(ch[0]), int(ch[1]))
        if ch not in self.rates:
            raise UnknownChannel(f"channel {ch} is not defined for this system")
        if require_positive and self.rates[ch] <= 0.0:
            raise UnknownChannel(f"channel {ch} has zero rate and cannot register counts")
        return ch

    def check_level(self, r: int) -> int:
        if not 0 <= r < self.dim:
            raise IndexOutOfRange(f"level {r} outside 0..{self.dim - 1}")
        return int(r)

    def projector(self, r: int) -> np.ndarray:
        self.check_level(r)
        p = np.zeros((self.dim, self.dim), dtype=complex)
        p[r, r] = 1.0
        return p

    def to_dict(self) -> dict:
        return {
            "energies": list(self.energies),
            "rates": [{"m": m, "n": n, "gamma": g} for (m, n), g in sorted(self.rates.items())],
        }


def build_system(
    energies: Iterable[float], rates: Iterable[tuple[int, int, float]] | Mapping[tuple[int, int], float]
) -> LevelSystem:
    """Validate energies and rates and return a :class:`LevelSystem`.

    ``rates`` is either an iterable of ``(m, n, gamma)`` triples or a mapping
    ``{(m, n): gamma}``.
    """
    e = tuple(float(x) for x in energies)
    if len(e) < 2:
        raise InvalidConfig("need at least two levels")
    if not all(math.isfinite(x) for x in e):
        raise InvalidConfig("energies must be finite")
    for a, b in zip(e, e[1:]):
        if not a < b:
            raise NonIncreasingEnergies(f"energies must be strictly increasing, got {e}")

    omegas = sorted((e[n] - e[m], (m, n)) for m, n in combinations(range(len(e)), 2))
    for (w1, c1), (w2, c2) in zip(omegas, omegas[1:]):
        if abs(w2 - w1) <= BOHR_TOLERANCE:
            raise DegenerateBohrFrequency(
                f"Bohr frequencies of {Channel(*c1)} and {Channel(*c2)} coincide ({w1:g})"
            )

    items = rates.items() if isinstance(rates, Mapping) else (((r[0], r[1]), r[2]) for r in rates)
    table: dict[Channel, float] = {}
    for (m, n), gamma in items:
        m, n, gamma = int(m), int(n), float(gamma)
        if not (0 <= m < len(e) and 0 <= n < len(e)):
            raise IndexOutOfRange(f"rate entry ({m},{n}) references a level outside 0..{len(e) - 1}")
        if m >= n:
            raise UpwardRate(f"rate entry ({m},{n}) must satisfy m < n")
        if not math.isfinite(gamma) or gamma < 0.0:
            raise NegativeRate(f"rate for ({m},{n}) must be finite and >= 0, got {gamma}")
        ch = Channel(m, n)
        if ch in table:
            raise InvalidConfig(f"duplicate rate entry for {ch}")
        table[ch] = gamma
    if not any(g > 0.0 for g in table.values()):
        raise NoChannels("at least one rate must be positive")
    return LevelSystem(e, dict(sorted(table.items())))


def system_from_dict(cfg: Mapping) -> LevelSystem:
    """Build a system from the JSON config layout; unknown keys are rejected."""
    if not isinstance(cfg, Mapping):
        raise InvalidConfig("config must be a JSON object")
    extra = set(cfg) - {"energies", "rates"}
    if extra:
        raise InvalidConfig(f"unknown config keys: {sorted(extra)}")
    if "energies" not in cfg or "rates" not in cfg:
        raise InvalidConfig("config needs 'energies' and 'rates'")
    triples = []
    for entry in cfg["rates"]:
        if not isinstance(entry, Mapping):
            raise InvalidConfig("each rate entry must be an object")
        bad = set(entry) - {"m", "n", "gamma"}
        if bad or len(entry) != 3:
            raise InvalidConfig(f"rate entries need exactly m, n, gamma; got {sorted(entry)}")
        triples.append((entry["m"], entry["n"], entry["gamma"]))
    return build_system(cfg["energies"], triples)


def load_system(path: str | Path) -> LevelSystem:
    with open(path) as fh:
        cfg = json.load(fh)
    return system_from_dict(cfg)


def _check_square(sys: LevelSystem, x: np.ndarray, name: str = "matrix") -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape != (sys.dim, sys.dim):
        raise DimensionMismatch(f"{name} has shape {x.shape}, expected {(sys.dim, sys.dim)}")
    return x


def collapse_operator(sys: LevelSystem, ch: tuple[int, int]) -> np.ndarray:
    """``L_mn = sqrt(gamma_mn) |m><n|``."""
    ch = sys.check_channel(ch)
    out = np.zeros((sys.dim, sys.dim), dtype=complex)
    out[ch.m, ch.n] = math.sqrt(sys.rates[ch])
    return out


def damping_operator(sys: LevelSystem) -> np.ndarray:
    """``K = -1/2 sum_{m<n} gamma_mn |n><n|``, cross-checked against ``-1/2 sum L^dag L``."""
    k = np.diag(sys.damping_diagonal).astype(complex)
    check = np.zeros_like(k)
    for ch in sys.channels:
        lop = collapse_operator(sys, ch)
        check -= 0.5 * lop.conj().T @ lop
    if np.max(np.abs(k - check)) > 1e-12:
        raise AssertionError("damping operator disagrees with -1/2 sum L^dag L")
    return k


def total_rate(sys: LevelSystem, r: int) -> float:
    """``Gamma_r``, the total decay rate out of level ``r``."""
    return float(sys.total_rates[sys.check_level(r)])


def lindbladian(sys: LevelSystem, x: np.ndarray) -> np.ndarray:
    """Heisenberg-picture generator applied to an observable ``x``."""
    x = _check_square(sys, x)
    out = sys._pair_damping * x
    out[np.diag_indices(sys.dim)] += sys.rate_matrix.T @ np.diag(x)
    return out


def liouvillian(sys: LevelSystem, rho: np.ndarray) -> np.ndarray:
    """Schroedinger-picture generator (trace-pairing adjoint of :func:`lindbladian`)."""
    rho = _check_square(sys, rho)
    out = sys._pair_damping * rho
    out[np.diag_indices(sys.dim)] += sys.rate_matrix @ np.diag(rho)
    return out


def check_density_matrix(sys: LevelSystem, rho: np.ndarray, *, normalized: bool = True) -> np.ndarray:
    """Return ``rho`` as a complex array after the Hermitian/trace/PSD checks.

    With ``normalized=False`` only a positive trace is required (Zakai states).
    """
    rho = _check_square(sys, rho, "density matrix")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise InvalidState("density matrix is not Hermitian")
    tr = float(np.trace(rho).real)
    if normalized and abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"density matrix has trace {tr!r}, expected 1")
    if not normalized and tr <= 0.0:
        raise InvalidState("unnormalized state must have positive trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -PSD_TOL * max(tr, 1.0):
        raise InvalidState("density matrix has a negative eigenvalue")
    return rho


def check_effect_matrix(sys: LevelSystem, e: np.ndarray) -> np.ndarray:
    e = _check_square(sys, e, "effect matrix")
    if np.max(np.abs(e - e.conj().T)) > HERMITIAN_TOL:
        raise InvalidState("effect matrix is not Hermitian")
    w = np.linalg.eigvalsh(0.5 * (e + e.conj().T))
    if w.min() < -PSD_TOL * max(w.max(), 1.0):
        raise InvalidState("effect matrix has a negative eigenvalue")
    return e


def superoperator(sys: LevelSystem, fn) -> np.ndarray:
    """Matrix of a linear map on N x N matrices in row-major vec form."""
    n = sys.dim
    cols = []
    for k in range(n * n):
        basis = np.zeros(n * n, dtype=complex)
        basis[k] = 1.0
        cols.append(fn(basis.reshape(n, n)).reshape(-1))
    return np.array(cols).T
