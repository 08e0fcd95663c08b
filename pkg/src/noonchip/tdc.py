"""Start/stop delay analysis of time-tag streams.

D1 clicks start the delay clock and D2 clicks stop it; both signs of the
delay are kept. Which clicks qualify is decided from the full click pattern
of the clock period each click falls in (see ``tags.QUALIFICATIONS``).
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .tags import (
    ALL_FOUR,
    CHANNEL_CODE,
    CHANNELS,
    TimeTagStream,
    get_qualification,
)

TARGET_BIN_PS = 100
DEFAULT_MAX_OFFSET = 8
TAG_HEADER = "channel,timestamp_ps"
HISTOGRAM_HEADER = "bin_center_ps,counts"
_PAIR_CHUNK = 1 << 18


class TagFormatError(ValueError):
    """Malformed tag records; the message names the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# ---------------------------------------------------------------- ingestion


def validate_stream(records, clock_period_ps: int, metadata=None, first_line: int = 1) -> TimeTagStream:
    """Check raw (channel, timestamp) records and return a sorted stream.

    ``records`` may hold (channel, timestamp) pairs or (line_number, channel,
    timestamp) triples; line numbers default to the record position counted
    from ``first_line``. Out-of-order records are sorted and counted in
    ``stream.n_reordered``; a warning is emitted when that count is nonzero.
    """
    chans = []
    stamps = []
    for pos, rec in enumerate(records):
        if len(rec) == 3:
            line, ch, ts = rec
        else:
            line = first_line + pos
            ch, ts = rec
        ch = ch.strip() if isinstance(ch, str) else ch
        if ch not in CHANNEL_CODE:
            raise TagFormatError(f"unknown channel {ch!r}; expected one of {CHANNELS}", line)
        chans.append(CHANNEL_CODE[ch])
        stamps.append(_parse_timestamp(ts, line))
    chans = np.array(chans, dtype=np.uint8)
    stamps = np.array(stamps, dtype=np.int64)
    return _sorted_stream(chans, stamps, clock_period_ps, metadata)


def _parse_timestamp(ts, line) -> int:
    if isinstance(ts, (int, np.integer)) and not isinstance(ts, bool):
        value = int(ts)
    elif isinstance(ts, str):
        text = ts.strip()
        try:
            value = int(text)
        except ValueError:
            raise TagFormatError(f"timestamp {text!r} is not an integer", line) from None
    else:
        raise TagFormatError(f"timestamp {ts!r} is not an integer", line)
    if value < 0 or value > np.iinfo(np.int64).max:
        raise TagFormatError(f"timestamp {value} outside the 64-bit non-negative range", line)
    return value


def _sorted_stream(chans, stamps, clock_period_ps, metadata) -> TimeTagStream:
    n_reordered = 0
    if stamps.size > 1:
        order = np.lexsort((chans, stamps))
        n_reordered = int(np.count_nonzero(order != np.arange(order.size)))
        chans, stamps = chans[order], stamps[order]
        same = (stamps[1:] == stamps[:-1]) & (chans[1:] == chans[:-1])
        if same.any():
            i = int(np.flatnonzero(same)[0])
            raise TagFormatError(
                f"duplicate record ({CHANNELS[chans[i]]}, {stamps[i]})"
            )
    stream = TimeTagStream(chans, stamps, clock_period_ps, dict(metadata or {}), n_reordered)
    if n_reordered:
        warnings.warn(f"{n_reordered} tag records were out of order and have been sorted", stacklevel=3)
    return stream


def read_tags(path) -> TimeTagStream:
    """Read a tag file (``# key=value`` metadata lines, then ``channel,timestamp_ps``)."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tags(fh)


def parse_tags(lines) -> TimeTagStream:
    if isinstance(lines, str):
        lines = io.StringIO(lines)
    metadata = {}
    records = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                continue
            key, value = body.split("=", 1)
            metadata[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line.replace(" ", "") != TAG_HEADER:
                raise TagFormatError(f"expected header {TAG_HEADER!r}, found {line!r}", lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TagFormatError(f"expected 2 fields, found {len(parts)}", lineno)
        records.append((lineno, parts[0], parts[1]))
    if "clock_period_ps" not in metadata:
        raise TagFormatError("missing '# clock_period_ps=...' metadata line")
    try:
        tau = int(metadata["clock_period_ps"])
    except ValueError:
        raise TagFormatError(f"clock_period_ps {metadata['clock_period_ps']!r} is not an integer") from None
    if tau <= 0:
        raise TagFormatError("clock_period_ps must be positive")
    return validate_stream(records, tau, metadata)


def write_tags(stream: TimeTagStream, path) -> None:
    """Write a stream in the tag file format; the result reads back identically."""
    meta = dict(stream.metadata)
    meta["clock_period_ps"] = str(stream.clock_period_ps)
    names = np.array(CHANNELS)[stream.channels] if len(stream) else np.zeros(0, str)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        fh.write(TAG_HEADER + "\n")
        step = 1 << 20
        for lo in range(0, len(stream), step):
            rows = zip(names[lo : lo + step].tolist(), stream.timestamps[lo : lo + step].tolist())
            fh.write("".join(f"{c},{t}\n" for c, t in rows))


# ---------------------------------------------------------------- histogram


def default_bin_width(clock_period_ps: int, target: int = TARGET_BIN_PS) -> int:
    """Divisor of the clock period closest to ``target`` ps (ties go to the smaller)."""
    tau = int(clock_period_ps)
    divisors = [d for d in range(1, int(math.isqrt(tau)) + 1) if tau % d == 0]
    divisors += [tau // d for d in divisors]
    return min(sorted(set(divisors)), key=lambda d: (abs(d - target), d))


def check_bin_width(bin_width: int, clock_period_ps: int) -> None:
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    rem = clock_period_ps % bin_width
    if min(rem, bin_width - rem) > 1:
        raise ValueError(
            f"bin width {bin_width} ps does not divide the clock period {clock_period_ps} ps "
            f"(try {default_bin_width(clock_period_ps, bin_width)} ps)"
        )


@dataclass
class DelayHistogram:
    """Binned D2-minus-D1 delays and the integrated count of every peak."""

    bin_width: int
    clock_period_ps: int
    max_offset_n: int
    qualification: str
    centers: np.ndarray
    counts: np.ndarray
    peaks: list = field(default_factory=list)

    @property
    def edges(self) -> np.ndarray:
        return np.append(self.centers - self.bin_width / 2.0, self.centers[-1] + self.bin_width / 2.0)

    def peak(self, n: int) -> int:
        for k, c in self.peaks:
            if k == n:
                return c
        raise KeyError(n)

    @property
    def zero_peak(self) -> int:
        return self.peak(0)

    @property
    def delayed_total(self) -> int:
        return int(sum(c for k, c in self.peaks if k != 0))


def _qualified_times(stream: TimeTagStream, qualification):
    q = get_qualification(qualification)
    pulses = stream.pulse_indices()
    if pulses.size == 0:
        empty = np.zeros(0, np.int64)
        return empty, empty
    uniq, inv = np.unique(pulses, return_inverse=True)
    pats = np.zeros(uniq.size, np.uint8)
    np.bitwise_or.at(pats, inv, (1 << stream.channels).astype(np.uint8))
    rec_pat = pats[inv]
    is_d1 = stream.channels == CHANNEL_CODE["D1"]
    is_d2 = stream.channels == CHANNEL_CODE["D2"]
    starts = stream.timestamps[is_d1 & (q.start_array()[rec_pat] != 0)]
    stops = stream.timestamps[is_d2 & (q.stop_array()[rec_pat] != 0)]
    return np.sort(starts), np.sort(stops)


def delay_histogram(
    stream: TimeTagStream,
    qualification="herald_same_pulse",
    bin_width: int | None = None,
    max_offset_n: int = DEFAULT_MAX_OFFSET,
) -> DelayHistogram:
    """Histogram of t(D2) - t(D1) over qualified pairs within +-max_offset_n clock periods."""
    tau = stream.clock_period_ps
    if bin_width is None:
        bin_width = default_bin_width(tau)
    bin_width = int(bin_width)
    check_bin_width(bin_width, tau)
    if max_offset_n < 0:
        raise ValueError("max_offset_n must be >= 0")
    q = get_qualification(qualification)
    half_bins = int(round(max_offset_n * tau / bin_width))
    centers = np.arange(-half_bins, half_bins + 1, dtype=np.int64) * bin_width
    counts = np.zeros(centers.size, np.int64)
    limit = (half_bins + 0.5) * bin_width
    starts, stops = _qualified_times(stream, q)
    if starts.size and stops.size:
        lo = np.searchsorted(stops, starts - limit, side="left")
        hi = np.searchsorted(stops, starts + limit, side="left")
        for a in range(0, starts.size, _PAIR_CHUNK):
            b = a + _PAIR_CHUNK
            n = hi[a:b] - lo[a:b]
            if not n.any():
                continue
            owner = np.repeat(np.arange(a, min(b, starts.size)), n)
            offs = np.arange(owner.size) - np.repeat(np.cumsum(n) - n, n)
            delays = stops[lo[owner] + offs] - starts[owner]
            idx = np.floor((delays + limit) / bin_width).astype(np.int64)
            idx = idx[(idx >= 0) & (idx < counts.size)]
            counts += np.bincount(idx, minlength=counts.size)
    peaks = []
    for n in range(-max_offset_n, max_offset_n + 1):
        inside = (centers > n * tau - tau / 2.0) & (centers <= n * tau + tau / 2.0)
        peaks.append((n, int(counts[inside].sum())))
    return DelayHistogram(bin_width, tau, max_offset_n, q.name, centers, counts, peaks)


def fourfold_counts(stream: TimeTagStream) -> int:
    """Number of clock periods with clicks on all of H1, H2, D1 and D2."""
    _, pats = stream.pulse_patterns()
    return int(np.count_nonzero(pats == ALL_FOUR))


def write_histogram(hist: DelayHistogram, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTOGRAM_HEADER + "\n")
        fh.write("".join(f"{c},{n}\n" for c, n in zip(hist.centers.tolist(), hist.counts.tolist())))


def read_histogram(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return data[:, 0], data[:, 1]
