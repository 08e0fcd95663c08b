"""Time-tag streams, channel codes and coincidence qualification rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHANNELS = ("H1", "H2", "D1", "D2")
CHANNEL_CODE = {name: i for i, name in enumerate(CHANNELS)}
BIT_H1, BIT_H2, BIT_D1, BIT_D2 = 1, 2, 4, 8
ALL_FOUR = BIT_H1 | BIT_H2 | BIT_D1 | BIT_D2
N_PATTERNS = 16

TIMESTAMP_MAX = np.iinfo(np.int64).max


def pattern_channels(pattern: int) -> tuple:
    return tuple(name for i, name in enumerate(CHANNELS) if pattern >> i & 1)


@dataclass
class TimeTagStream:
    """Detection records ordered by (timestamp, channel code)."""

    channels: np.ndarray
    timestamps: np.ndarray
    clock_period_ps: int
    metadata: dict = field(default_factory=dict)
    n_reordered: int = field(default=0, compare=False)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.channels.shape != self.timestamps.shape:
            raise ValueError("channels and timestamps must have the same length")
        if int(self.clock_period_ps) <= 0:
            raise ValueError("clock_period_ps must be positive")
        self.clock_period_ps = int(self.clock_period_ps)

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.clock_period_ps == other.clock_period_ps
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    @classmethod
    def empty(cls, clock_period_ps: int, metadata=None) -> "TimeTagStream":
        return cls(np.zeros(0, np.uint8), np.zeros(0, np.int64), clock_period_ps, metadata or {})

    def records(self):
        for c, t in zip(self.channels.tolist(), self.timestamps.tolist()):
            yield CHANNELS[c], t

    def pulse_indices(self) -> np.ndarray:
        """Nearest clock pulse of every record."""
        tau = self.clock_period_ps
        return np.floor_divide(self.timestamps + tau // 2, tau)

    def pulse_patterns(self):
        """Unique pulses carrying clicks and the channel bit pattern of each."""
        pulses = self.pulse_indices()
        if pulses.size == 0:
            return pulses, np.zeros(0, np.uint8)
        uniq, inv = np.unique(pulses, return_inverse=True)
        pats = np.zeros(uniq.size, np.uint8)
        np.bitwise_or.at(pats, inv, (1 << self.channels.astype(np.uint8)).astype(np.uint8))
        return uniq, pats


@dataclass(frozen=True)
class Qualification:
    """Which pulse patterns let a D1 click start, or a D2 click stop, the delay clock."""

    name: str
    start_mask: tuple
    stop_mask: tuple

    def start_array(self) -> np.ndarray:
        return np.array(self.start_mask, dtype=np.uint8)

    def stop_array(self) -> np.ndarray:
        return np.array(self.stop_mask, dtype=np.uint8)


def _qualification(name, start_rule, stop_rule) -> Qualification:
    start = tuple(int(bool(p & BIT_D1) and start_rule(p)) for p in range(N_PATTERNS))
    stop = tuple(int(bool(p & BIT_D2) and stop_rule(p)) for p in range(N_PATTERNS))
    return Qualification(name, start, stop)


def _any_herald(p):
    return bool(p & (BIT_H1 | BIT_H2))


QUALIFICATIONS = {
    q.name: q
    for q in (
        _qualification("none", lambda p: True, lambda p: True),
        _qualification("herald_same_pulse", _any_herald, _any_herald),
        # the D1 pulse must hold both heralds; D2 is free (ΔT=0 then needs all four)
        _qualification(
            "full_4fold", lambda p: (p & (BIT_H1 | BIT_H2)) == (BIT_H1 | BIT_H2), lambda p: True
        ),
        # stop photons attributable to source 1 alone: H1 fired, H2 did not
        _qualification(
            "single_source", _any_herald, lambda p: (p & (BIT_H1 | BIT_H2)) == BIT_H1
        ),
    )
}


def get_qualification(name) -> Qualification:
    if isinstance(name, Qualification):
        return name
    try:
        return QUALIFICATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown qualification {name!r}; choose from {sorted(QUALIFICATIONS)}"
        ) from None
