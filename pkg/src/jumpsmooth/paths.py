"""Time-indexed paths with explicit one-sided limits at count times."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .exceptions import GridMismatch
from .integrate import SNAP_TOL
from .model import Channel


class JumpLimits(NamedTuple):
    time: float
    channel: Channel
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class Path:
    """Values on a time grid.

    ``continuity`` documents which one-sided limit is stored at a grid point
    that coincides with a count: ``"right"`` for forward (filtered) states,
    ``"left"`` for backward effects.  Both limits of every count are kept in
    ``jumps`` whether or not the count falls on the grid.
    """

    times: np.ndarray
    values: np.ndarray
    continuity: str = "continuous"
    jumps: tuple[JumpLimits, ...] = ()

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[tuple[float, np.ndarray]]:
        return iter(zip(self.times.tolist(), self.values))

    def __getitem__(self, k: int) -> tuple[float, np.ndarray]:
        return float(self.times[k]), self.values[k]

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > SNAP_TOL:
            raise GridMismatch(f"time {t!r} is not a grid point of this path")
        return k

    def at(self, t: float) -> np.ndarray:
        """Stored grid value at ``t``."""
        return self.values[self.index_of(t)]

    def jump_at(self, t: float) -> JumpLimits | None:
        for j in self.jumps:
            if abs(j.time - t) <= SNAP_TOL:
                return j
        return None

    def left_limit(self, t: float) -> np.ndarray:
        j = self.jump_at(t)
        return j.left if j is not None else self.at(t)

    def right_limit(self, t: float) -> np.ndarray:
        j = self.jump_at(t)
        return j.right if j is not None else self.at(t)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]
