"""Photon-count records and their JSONL serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import IO, Iterable, NamedTuple

from .exceptions import InvalidRecord
from .model import Channel, LevelSystem


class CountEvent(NamedTuple):
    t: float
    channel: Channel


class RecordParseError(ValueError):
    """Malformed record file; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class CountRecord:
    """Time-ordered detections ``(t, (m, n))`` observed on ``(0, horizon]``."""

    events: tuple[CountEvent, ...]
    horizon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise InvalidRecord("horizon must be positive")
        prev = 0.0
        for ev in self.events:
            if not ev.t > prev:
                raise InvalidRecord(f"event times must be positive and strictly increasing (at t={ev.t!r})")
            prev = ev.t
        if prev > self.horizon:
            raise InvalidRecord(f"event at t={prev!r} lies beyond the horizon {self.horizon!r}")

    @classmethod
    def from_events(cls, events: Iterable[tuple[float, tuple[int, int]]], horizon: float) -> "CountRecord":
        evs = tuple(CountEvent(float(t), Channel(int(ch[0]), int(ch[1]))) for t, ch in events)
        return cls(evs, float(horizon))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def times(self) -> list[float]:
        return [e.t for e in self.events]

    def validate_for(self, sys: LevelSystem) -> "CountRecord":
        for ev in self.events:
            sys.check_channel(ev.channel, require_positive=True)
        return self

    def between(self, lo: float, hi: float) -> list[CountEvent]:
        """Events with ``lo < t <= hi``."""
        return [e for e in self.events if lo < e.t <= hi]


def _fmt(x: float) -> str:
    return format(x, ".17g")


def dump_record(record: CountRecord, fh: IO[str]) -> None:
    fh.write('{"horizon":%s}\n' % _fmt(record.horizon))
    for ev in record.events:
        fh.write('{"t":%s,"m":%d,"n":%d}\n' % (_fmt(ev.t), ev.channel.m, ev.channel.n))


def write_record(record: CountRecord, path: str | FsPath) -> None:
    with open(path, "w", newline="\n") as fh:
        dump_record(record, fh)


def parse_record(lines: Iterable[str]) -> CountRecord:
    horizon = None
    events = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise RecordParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise RecordParseError("expected a JSON object", lineno)
        if horizon is None:
            if set(obj) != {"horizon"}:
                raise RecordParseError('first line must be {"horizon": T}', lineno)
            horizon = obj["horizon"]
            if not isinstance(horizon, (int, float)) or isinstance(horizon, bool):
                raise RecordParseError("horizon must be a number", lineno)
            continue
        if set(obj) != {"t", "m", "n"}:
            raise RecordParseError('event lines need exactly "t", "m", "n"', lineno)
        t, m, n = obj["t"], obj["m"], obj["n"]
        if any(isinstance(v, bool) for v in (t, m, n)):
            raise RecordParseError("event fields must be numbers", lineno)
        if not isinstance(t, (int, float)) or not isinstance(m, int) or not isinstance(n, int):
            raise RecordParseError("event fields have the wrong type", lineno)
        events.append((float(t), (m, n)))
    if horizon is None:
        raise RecordParseError("missing horizon header", 1)
    return CountRecord.from_events(events, horizon)


def read_record(path: str | FsPath) -> CountRecord:
    with open(path) as fh:
        return parse_record(fh)
