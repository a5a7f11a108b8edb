"""Forward conditioned dynamics under continuous photon counting.

Between counts the conditioned state follows the deterministic no-count
equation; a count in channel ``(m, n)`` resets it to ``|m><m|``.  Records are
sampled with the waiting-time algorithm: integrate the total count intensity
until it exhausts an exponential threshold, then pick the channel in
proportion to the per-channel intensities.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import EventOutsideHorizon, InvalidRecord
from .integrate import SNAP_TOL, LinearStepper, TimeGrid, check_step, rk4_step
from .model import (
    Channel,
    LevelSystem,
    check_density_matrix,
    collapse_operator,
    liouvillian,
    superoperator,
)
from .paths import JumpLimits, Path
from .records import CountEvent, CountRecord
from .rng import open_unit, substream

BISECTION_TOL = 1e-9


# --------------------------------------------------------------------------
# single-state operations


def no_count_derivative(sys: LevelSystem, rho: np.ndarray) -> np.ndarray:
    """``L*(rho) - sum_{m<n} gamma_mn (|m><m| - rho) <n|rho|n>``."""
    pops = np.diag(rho)
    out = liouvillian(sys, rho)
    out[np.diag_indices(sys.dim)] -= sys.rate_matrix @ pops
    out += (sys.total_rates @ pops) * rho
    return out


def _no_count_step(sys: LevelSystem, rho: np.ndarray, dt: float) -> np.ndarray:
    # the jump terms of L* cancel the reset terms, leaving
    # d rho_ij / dt = (k_i + k_j + A(rho)) rho_ij with A = sum_r Gamma_r rho_rr
    pair, gam = sys._pair_damping, sys.total_rates

    def f(x: np.ndarray) -> np.ndarray:
        return (pair + gam @ x.diagonal().real) * x

    nxt = rk4_step(f, rho, dt)
    return nxt / nxt.trace().real


def no_count_evolve(sys: LevelSystem, rho: np.ndarray, dt: float, h: float) -> np.ndarray:
    """Propagate the conditioned state over ``dt`` given that nothing is counted.

    Uses ``ceil(dt / h)`` equal RK4 steps, renormalizing the trace after each.
    """
    rho = check_density_matrix(sys, rho)
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    check_step(h, sys.max_total_rate)
    if dt == 0.0:
        return rho.copy()
    n = max(1, math.ceil(dt / h - 1e-9))
    sub = dt / n
    for _ in range(n):
        rho = _no_count_step(sys, rho, sub)
    return rho


def apply_jump(sys: LevelSystem, rho: np.ndarray, ch: tuple[int, int]) -> np.ndarray:
    """Post-count state ``|m><m|``; it does not depend on the pre-count state."""
    ch = sys.check_channel(ch)
    return sys.projector(ch.m)


def jump_intensity(sys: LevelSystem, rho: np.ndarray) -> tuple[float, dict[Channel, float]]:
    """Total and per-channel count intensities ``gamma_mn <n|rho|n>``."""
    pops = np.diag(np.asarray(rho)).real
    per = {ch: sys.rates[ch] * float(pops[ch.n]) for ch in sys.channels}
    return float(sum(per.values())), per


def stability_exponents(sys: LevelSystem, k: int) -> dict[int, float]:
    """Growth rates ``Gamma_k - Gamma_r`` of the no-count populations near ``delta_k``."""
    k = sys.check_level(k)
    g = sys.total_rates
    return {r: float(g[k] - g[r]) for r in range(sys.dim) if r != k}


# --------------------------------------------------------------------------
# propagation along a given record


def _walk_forward(
    times: np.ndarray,
    events: Sequence[CountEvent],
    state: np.ndarray,
    propagate: Callable[[np.ndarray, float], np.ndarray],
    jump: Callable[[np.ndarray, Channel], np.ndarray],
) -> tuple[np.ndarray, list[JumpLimits]]:
    """Right-continuous forward sweep; events at or before ``times[0]`` are ignored."""
    vals = np.empty((len(times),) + state.shape, dtype=state.dtype)
    vals[0] = state
    pending = [e for e in events if e.t > times[0] + SNAP_TOL]
    jumps: list[JumpLimits] = []
    i = 0
    for k in range(len(times) - 1):
        t, t_next = float(times[k]), float(times[k + 1])
        while i < len(pending) and pending[i].t <= t_next + SNAP_TOL:
            ev = pending[i]
            tau = t_next if abs(ev.t - t_next) <= SNAP_TOL else ev.t
            if tau > t:
                state = propagate(state, tau - t)
            left = state
            state = jump(state, ev.channel)
            jumps.append(JumpLimits(ev.t, ev.channel, left, state))
            t = tau
            i += 1
        if t_next > t:
            state = propagate(state, t_next - t)
        vals[k + 1] = state
    return vals, jumps


def _walk_backward(
    times: np.ndarray,
    events: Sequence[CountEvent],
    state: np.ndarray,
    propagate: Callable[[np.ndarray, float], np.ndarray],
    jump: Callable[[np.ndarray, Channel], np.ndarray],
) -> tuple[np.ndarray, list[JumpLimits]]:
    """Left-continuous backward sweep from ``times[-1]``.

    The terminal grid value is the supplied ``state`` even when a count sits
    exactly at ``times[-1]``; that count's limits are still reported.
    """
    vals = np.empty((len(times),) + state.shape, dtype=state.dtype)
    vals[-1] = state
    pending = [e for e in events if e.t >= times[0] - SNAP_TOL]
    jumps: list[JumpLimits] = []
    i = len(pending) - 1
    if i >= 0 and abs(pending[i].t - times[-1]) <= SNAP_TOL:
        ev = pending[i]
        right = state
        state = jump(state, ev.channel)
        jumps.append(JumpLimits(ev.t, ev.channel, state, right))
        i -= 1
    for k in range(len(times) - 2, -1, -1):
        t, t_prev = float(times[k + 1]), float(times[k])
        while i >= 0 and pending[i].t >= t_prev - SNAP_TOL:
            ev = pending[i]
            tau = t_prev if abs(ev.t - t_prev) <= SNAP_TOL else ev.t
            if t > tau:
                state = propagate(state, t - tau)
            right = state
            state = jump(state, ev.channel)
            jumps.append(JumpLimits(ev.t, ev.channel, state, right))
            t = tau
            i -= 1
        if t > t_prev:
            state = propagate(state, t - t_prev)
        vals[k] = state
    jumps.reverse()
    return vals, jumps


def _check_record(sys: LevelSystem, record: CountRecord, grid: TimeGrid) -> None:
    record.validate_for(sys)
    if grid.t1 > record.horizon + SNAP_TOL:
        raise EventOutsideHorizon(
            f"grid ends at {grid.t1!r} beyond the record horizon {record.horizon!r}"
        )


def filter_along_record(sys: LevelSystem, rho0: np.ndarray, record: CountRecord, grid: TimeGrid) -> Path:
    """Conditioned state on ``grid`` given the observed counts.

    ``rho0`` is the state at ``grid.t0``.  The stored value at a count time is
    the post-count state; ``Path.left_limit`` gives the pre-count state.
    """
    rho = check_density_matrix(sys, rho0)
    _check_record(sys, record, grid)
    check_step(grid.h, sys.max_total_rate)
    vals, jumps = _walk_forward(
        grid.times,
        record.between(grid.t0, grid.t1 + SNAP_TOL),
        rho,
        lambda x, dt: _no_count_step(sys, x, dt),
        lambda x, ch: apply_jump(sys, x, ch),
    )
    return Path(grid.times, vals, "right", tuple(jumps))


def zakai_no_count_generator(sys: LevelSystem) -> np.ndarray:
    """Superoperator of ``L*(x) - sum_{m<n} (L_mn x L_mn^dag - x)``."""
    ops = [collapse_operator(sys, ch) for ch in sys.channels]

    def gen(x: np.ndarray) -> np.ndarray:
        out = liouvillian(sys, x)
        for lop in ops:
            out -= lop @ x @ lop.conj().T - x
        return out

    return superoperator(sys, gen)


def zakai_along_record(sys: LevelSystem, rho0: np.ndarray, record: CountRecord, grid: TimeGrid) -> Path:
    """Unnormalized (linear) conditioned state along ``record``.

    Between counts the linear no-count generator is integrated with RK4 on the
    same grid as :func:`filter_along_record`; a count in ``(m, n)`` maps
    ``x -> L_mn x L_mn^dag``.  Normalizing pointwise reproduces the filter.
    """
    rho = check_density_matrix(sys, rho0, normalized=False)
    _check_record(sys, record, grid)
    check_step(grid.h, sys.max_total_rate)
    n = sys.dim
    stepper = LinearStepper(zakai_no_count_generator(sys))
    ops = {ch: collapse_operator(sys, ch) for ch in sys.channels}
    vals, jumps = _walk_forward(
        grid.times,
        record.between(grid.t0, grid.t1 + SNAP_TOL),
        rho.reshape(-1),
        lambda v, dt: stepper.step(v, dt),
        lambda v, ch: (ops[ch] @ v.reshape(n, n) @ ops[ch].conj().T).reshape(-1),
    )
    jumps = [JumpLimits(j.time, j.channel, j.left.reshape(n, n), j.right.reshape(n, n)) for j in jumps]
    return Path(grid.times, vals.reshape(-1, n, n), "right", tuple(jumps))


# --------------------------------------------------------------------------
# waiting-time sampling


@dataclass(frozen=True)
class TrajectoryResult:
    record: CountRecord
    path: Path
    seed: int
    index: int = 0


@dataclass(frozen=True)
class TrajectoryBatch:
    """Records of a batch plus conditioned states at the observation times."""

    records: list[CountRecord]
    observe_times: np.ndarray
    observed: np.ndarray
    seed: int

    def populations(self) -> np.ndarray:
        """``(n_traj, n_times, N)`` array of conditioned level populations."""
        return np.diagonal(self.observed, axis1=-2, axis2=-1).real

    def summary_rows(self) -> list[tuple]:
        rows = []
        for i, rec in enumerate(self.records):
            if rec.events:
                first = rec.events[0]
                rows.append((i, len(rec), first.t, first.channel.m, first.channel.n))
            else:
                rows.append((i, 0, None, None, None))
        return rows


class _BatchEngine:
    """Vectorized waiting-time sampler over a set of trajectory indices.

    The state is stored as the real and imaginary parts of the matrix entries
    that can ever be nonzero (only the diagonal for a diagonal start, no
    imaginary part for a real start).  All arithmetic is elementwise with
    reductions written out in a fixed order, so a trajectory's output is
    bit-identical whichever batch it is simulated in.
    """

    def __init__(self, sys: LevelSystem, rho0: np.ndarray, grid: TimeGrid, seed: int) -> None:
        self.sys = sys
        self.grid = grid
        self.seed = seed
        self.n = n = sys.dim
        off_diag = np.any(rho0 - np.diag(np.diag(rho0)) != 0)
        if off_diag:
            self.entries = [(i, j) for i in range(n) for j in range(n)]
        else:
            self.entries = [(i, i) for i in range(n)]
        self.has_imag = bool(np.any(rho0.imag != 0))
        self.diag_pos = [self.entries.index((r, r)) for r in range(n)]
        pair = sys._pair_damping
        self.pair = np.array([pair[i, j] for i, j in self.entries])
        self.init_re = np.array([rho0[i, j].real for i, j in self.entries])
        self.init_im = np.array([rho0[i, j].imag for i, j in self.entries])
        self.gamma = [(self.diag_pos[r], float(g)) for r, g in enumerate(sys.total_rates) if g != 0.0]
        self.channels = [(ch, float(sys.rates[ch]), self.diag_pos[ch.n]) for ch in sys.channels]
        self.n_bisect = max(1, math.ceil(math.log2(grid.h / BISECTION_TOL)))

    def _intensity(self, re):
        a = np.zeros(re.shape[0])
        for pos, g in self.gamma:
            a = a + g * re[:, pos]
        return a

    def _rk4(self, re, im, lam, h):
        """One RK4 step of the normalized no-count equation plus the integrated intensity."""
        hm = h[:, None] if np.ndim(h) else h
        halfm = 0.5 * hm
        pair = self.pair[None, :]

        def coef(x):
            a = self._intensity(x)
            return pair + a[:, None], a

        c1, a1 = coef(re)
        r1 = c1 * re
        c2, a2 = coef(re + halfm * r1)
        r2 = c2 * (re + halfm * r1)
        c3, a3 = coef(re + halfm * r2)
        r3 = c3 * (re + halfm * r2)
        c4, a4 = coef(re + hm * r3)
        r4 = c4 * (re + hm * r3)
        sixthm = hm / 6.0
        nre = re + sixthm * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        nlam = lam + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        tr = re[:, self.diag_pos[0]] * 0.0
        for pos in self.diag_pos:
            tr = tr + nre[:, pos]
        tr = tr[:, None]
        if im is None:
            return nre / tr, None, nlam
        # the coefficient depends on populations only, so the imaginary part rides along
        j1 = c1 * im
        j2 = c2 * (im + halfm * j1)
        j3 = c3 * (im + halfm * j2)
        j4 = c4 * (im + hm * j3)
        nim = im + sixthm * (j1 + 2.0 * j2 + 2.0 * j3 + j4)
        return nre / tr, nim / tr, nlam

    def _to_matrices(self, re, im) -> np.ndarray:
        out = np.zeros(re.shape[:-1] + (self.n, self.n), dtype=complex)
        for k, (i, j) in enumerate(self.entries):
            out[..., i, j] = re[..., k] if im is None else re[..., k] + 1j * im[..., k]
        return out

    def run(self, indices: Sequence[int], observe: Sequence[int] | None, keep_limits: bool = False):
        grid = self.grid
        b = len(indices)
        k_ent = len(self.entries)
        times = grid.times
        re = np.broadcast_to(self.init_re, (b, k_ent)).copy()
        im = np.broadcast_to(self.init_im, (b, k_ent)).copy() if self.has_imag else None
        gens = [substream(self.seed, int(i)) for i in indices]
        thr = np.array([-math.log(open_unit(g)) for g in gens])
        events: list[list[CountEvent]] = [[] for _ in range(b)]
        limits: list[list[JumpLimits]] = [[] for _ in range(b)]

        observe = list(range(len(times))) if observe is None else list(observe)
        obs_pos = {k: j for j, k in enumerate(observe)}
        obs_re = np.empty((b, len(observe), k_ent))
        obs_im = np.empty((b, len(observe), k_ent)) if im is not None else None
        if 0 in obs_pos:
            obs_re[:, obs_pos[0]] = re
            if im is not None:
                obs_im[:, obs_pos[0]] = im

        # rows with zero intensity never count again and are frozen in place
        live = self._intensity(re) != 0.0
        act = np.nonzero(live)[0]
        a_re = re[act]
        a_im = im[act] if im is not None else None
        a_lam = np.zeros(act.size)
        a_thr = thr[act]

        h = grid.h
        for k in range(grid.n_steps):
            if act.size:
                n_re, n_im, n_lam = self._rk4(a_re, a_im, a_lam, h)
                cross = np.nonzero(n_lam > a_thr)[0]
                if cross.size:
                    c_re, c_im, c_lam, c_thr = self._resolve(
                        cross,
                        act,
                        a_re[cross],
                        a_im[cross] if a_im is not None else None,
                        a_lam[cross],
                        a_thr[cross],
                        float(times[k]),
                        gens,
                        events,
                        limits,
                        keep_limits,
                    )
                    n_re[cross], n_lam[cross] = c_re, c_lam
                    if n_im is not None:
                        n_im[cross] = c_im
                    a_thr = a_thr.copy()
                    a_thr[cross] = c_thr
                a_re, a_im, a_lam = n_re, n_im, n_lam
                live = self._intensity(a_re) != 0.0
                if not live.all():
                    dead = ~live
                    re[act[dead]] = a_re[dead]
                    if im is not None:
                        im[act[dead]] = a_im[dead]
                    act, a_re, a_lam, a_thr = act[live], a_re[live], a_lam[live], a_thr[live]
                    if a_im is not None:
                        a_im = a_im[live]
            j = obs_pos.get(k + 1)
            if j is not None:
                re[act] = a_re
                obs_re[:, j] = re
                if im is not None:
                    im[act] = a_im
                    obs_im[:, j] = im
        return events, limits, self._to_matrices(obs_re, obs_im)

    def _resolve(self, cross, act, s_re, s_im, s_lam, s_thr, t_k, gens, events, limits, keep_limits):
        """Locate and apply every count inside the current step for the ``cross`` rows."""
        remaining = np.full(cross.size, self.grid.h)
        t_start = np.full(cross.size, t_k)
        out_re = np.empty_like(s_re)
        out_im = np.empty_like(s_im) if s_im is not None else None
        out_lam = np.empty_like(s_lam)
        todo = np.arange(cross.size)
        while todo.size:
            y_re, y_lam, thr, rem = s_re[todo], s_lam[todo], s_thr[todo], remaining[todo]
            y_im = s_im[todo] if s_im is not None else None
            e_re, e_im, e_lam = self._rk4(y_re, y_im, y_lam, rem)
            fired = e_lam > thr
            quiet = ~fired
            done = todo[quiet]
            out_re[done], out_lam[done] = e_re[quiet], e_lam[quiet]
            if out_im is not None:
                out_im[done] = e_im[quiet]
            if not fired.any():
                break
            todo = todo[fired]
            y_re, y_lam, thr, rem = y_re[fired], y_lam[fired], thr[fired], rem[fired]
            if y_im is not None:
                y_im = y_im[fired]
            lo = np.zeros(todo.size)
            hi = rem.copy()
            for _ in range(self.n_bisect):
                mid = 0.5 * (lo + hi)
                _, _, m_lam = self._rk4(y_re, y_im, y_lam, mid)
                up = m_lam > thr
                hi = np.where(up, mid, hi)
                lo = np.where(up, lo, mid)
            p_re, p_im, _ = self._rk4(y_re, y_im, y_lam, hi)
            for row, loc in enumerate(todo):
                slot = int(act[cross[loc]])
                gen = gens[slot]
                tau = float(t_start[loc] + hi[row])
                rates = [g * float(p_re[row, pos]) for _, g, pos in self.channels]
                total = 0.0
                for r in rates:
                    total += r
                target = gen.random() * total
                cum = 0.0
                chosen = self.channels[-1][0]
                for (ch, _, _), r in zip(self.channels, rates):
                    cum += r
                    if cum > target:
                        chosen = ch
                        break
                events[slot].append(CountEvent(tau, chosen))
                new = np.zeros(len(self.entries))
                new[self.diag_pos[chosen.m]] = 1.0
                if keep_limits:
                    left = self._to_matrices(p_re[row], None if p_im is None else p_im[row])
                    limits[slot].append(JumpLimits(tau, chosen, left, self._to_matrices(new, None)))
                s_re[loc] = new
                if s_im is not None:
                    s_im[loc] = 0.0
                s_lam[loc] = 0.0
                s_thr[loc] = -math.log(open_unit(gen))
                t_start[loc] = tau
            remaining[todo] = rem - hi
        return out_re, out_im, out_lam, s_thr


def _run_chunk(engine: _BatchEngine, chunk: range, observe: list[int]):
    return engine.run(chunk, observe)


def _sampling_grid(sys: LevelSystem, t_max: float, h: float | None) -> TimeGrid:
    h = sys.default_step() if h is None else h
    check_step(h, sys.max_total_rate)
    return TimeGrid.covering(0.0, t_max, h)


def sample_trajectory(
    sys: LevelSystem,
    rho0: np.ndarray,
    t_max: float,
    seed: int,
    h: float | None = None,
    index: int = 0,
) -> TrajectoryResult:
    """Sample one count record and its conditioned path on ``[0, t_max]``.

    The randomness comes from substream ``index`` of ``seed``, so this
    reproduces trajectory ``index`` of :func:`sample_trajectories` exactly.
    """
    rho0 = check_density_matrix(sys, rho0)
    if not t_max > 0.0:
        raise ValueError("t_max must be positive")
    grid = _sampling_grid(sys, t_max, h)
    engine = _BatchEngine(sys, rho0, grid, seed)
    events, limits, obs = engine.run([index], None, keep_limits=True)
    record = CountRecord(tuple(events[0]), t_max)
    path = Path(grid.times, obs[0], "right", tuple(limits[0]))
    return TrajectoryResult(record, path, seed, index)


def sample_trajectories(
    sys: LevelSystem,
    rho0: np.ndarray,
    t_max: float,
    seed: int,
    n_traj: int,
    h: float | None = None,
    observe_times: Sequence[float] = (),
    workers: int = 1,
) -> TrajectoryBatch:
    """Sample ``n_traj`` independent trajectories (indices ``0..n_traj-1``).

    ``observe_times`` must be points of the sampling grid; the conditioned
    state of every trajectory is stored there.  Output does not depend on
    ``workers``.
    """
    rho0 = check_density_matrix(sys, rho0)
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if not t_max > 0.0:
        raise ValueError("t_max must be positive")
    grid = _sampling_grid(sys, t_max, h)
    observe = []
    for t in observe_times:
        k = grid.index_of(t, tol=1e-9)
        if k is None:
            raise InvalidRecord(f"observation time {t!r} is not on the sampling grid")
        observe.append(k)
    engine = _BatchEngine(sys, rho0, grid, seed)
    workers = max(1, min(int(workers), n_traj))
    bounds = np.linspace(0, n_traj, workers + 1).astype(int)
    chunks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        results = [engine.run(chunks[0], observe)]
    else:
        # the loop is interpreter-bound, so separate processes rather than threads
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, [engine] * workers, chunks, [observe] * workers))
    records: list[CountRecord] = []
    observed = []
    for events, _, obs in results:
        records.extend(CountRecord(tuple(ev), t_max) for ev in events)
        observed.append(obs)
    return TrajectoryBatch(records, grid.times[observe].copy(), np.concatenate(observed), seed)
