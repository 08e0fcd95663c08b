"""Pure numpy implementations of the Monte Carlo kernels.

These define the reference semantics; the Cython module ``_kernels`` must
reproduce them bit for bit. Random numbers come from a counter-based
SplitMix64 construction: the uniform for (key, i) depends on nothing else,
so any chunking or ordering of the work gives the same draws.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
BLOCK_GAMMA = 0xD1B54A32D192ED03
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
BLOCK_SIZE = 1 << 24
INV_2_53 = 1.0 / 9007199254740992.0

_U64 = np.uint64


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, *path: int) -> int:
    """Stream key for ``seed`` refined by integer labels (point index, chunk, ...)."""
    key = mix64(int(seed) & MASK64)
    for label in path:
        key = mix64(key ^ mix64((int(label) + 1) * GAMMA))
    return key


def block_key(key: int, block: int) -> int:
    return mix64((key + (block + 1) * BLOCK_GAMMA) & MASK64)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _U64(MIX1)
        z = (z ^ (z >> _U64(27))) * _U64(MIX2)
    return z ^ (z >> _U64(31))


def counter_uniforms(key: int, start: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) for counters start .. start+count-1."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _U64(key) + idx * _U64(GAMMA)
    h = _mix64_array(z)
    return (h >> _U64(11)).astype(np.float64) * INV_2_53


def pulse_patterns(key: int, start: int, count: int, cdf: np.ndarray) -> np.ndarray:
    """Click pattern of each pulse: first index whose cumulative probability exceeds u."""
    u = counter_uniforms(key, start, count)
    return np.searchsorted(cdf, u, side="right").astype(np.uint8)


def _block_events(key: int, block: int, length: int, p_rel: float, rel_patterns, rel_cdf):
    """Positions (within the block) and patterns of the relevant pulses of one block."""
    if p_rel <= 0.0:
        return np.zeros(0, np.int64), np.zeros(0, np.uint8)
    bkey = block_key(key, block)
    log_q = math.log1p(-p_rel) if p_rel < 1.0 else -math.inf
    positions = []
    patterns = []
    pos = -1
    j = 0
    batch = int(length * p_rel + 6.0 * np.sqrt(length * p_rel) + 16)
    while True:
        u = counter_uniforms(bkey, 2 * j, 2 * batch)
        ug, up = u[0::2], u[1::2]
        gaps = np.floor(np.log1p(-ug) / log_q) if p_rel < 1.0 else np.zeros(batch)
        # stop at the first gap that leaves the block; cumulative sums stay exact in float64
        steps = gaps + 1.0
        ends = pos + np.cumsum(steps)
        inside = ends < length
        n_in = int(np.argmin(inside)) if not inside.all() else batch
        if n_in:
            positions.append(ends[:n_in].astype(np.int64))
            patterns.append(rel_patterns[np.searchsorted(rel_cdf, up[:n_in], side="right")])
        if n_in < batch:
            break
        pos = int(ends[-1])
        j += batch
    if not positions:
        return np.zeros(0, np.int64), np.zeros(0, np.uint8)
    return np.concatenate(positions), np.concatenate(patterns).astype(np.uint8)


def count_coincidences(pulses, patterns, start_mask, stop_mask, max_n: int):
    """Start/stop pair counts per pulse offset (stop pulse minus start pulse).

    Returns (fourfold, hist) with hist[max_n + d] the number of qualified
    (start, stop) pairs whose pulses differ by d, |d| <= max_n.
    """
    pulses = np.asarray(pulses, np.int64)
    patterns = np.asarray(patterns, np.uint8)
    start_mask = np.asarray(start_mask, np.uint8)
    stop_mask = np.asarray(stop_mask, np.uint8)
    hist = np.zeros(2 * max_n + 1, np.int64)
    fourfold = int(np.count_nonzero(patterns == 15))
    starts = pulses[start_mask[patterns] != 0]
    stops = pulses[stop_mask[patterns] != 0]
    if starts.size and stops.size:
        for d in range(-max_n, max_n + 1):
            hist[max_n + d] = np.count_nonzero(np.isin(starts + d, stops, assume_unique=True))
    return fourfold, hist


def sparse_coincidences(
    key: int,
    n_pulses: int,
    p_rel: float,
    rel_patterns,
    rel_cdf,
    start_mask,
    stop_mask,
    max_n: int,
):
    """Sample only the relevant pulses of an n_pulses run and count coincidences.

    Returns (fourfold, hist, n_events).
    """
    rel_patterns = np.asarray(rel_patterns, np.uint8)
    rel_cdf = np.asarray(rel_cdf, np.float64)
    hist = np.zeros(2 * max_n + 1, np.int64)
    fourfold = 0
    n_events = 0
    carry_p = np.zeros(0, np.int64)
    carry_t = np.zeros(0, np.uint8)
    n_blocks = (n_pulses + BLOCK_SIZE - 1) // BLOCK_SIZE
    for b in range(n_blocks):
        length = min(BLOCK_SIZE, n_pulses - b * BLOCK_SIZE)
        pos, pat = _block_events(key, b, length, p_rel, rel_patterns, rel_cdf)
        pos = pos + b * BLOCK_SIZE
        n_events += pos.size
        allp = np.concatenate([carry_p, pos])
        allt = np.concatenate([carry_t, pat])
        f, h = count_coincidences(allp, allt, start_mask, stop_mask, max_n)
        if carry_p.size:
            # remove pairs fully inside the carried tail (already counted)
            f0, h0 = count_coincidences(carry_p, carry_t, start_mask, stop_mask, max_n)
            f -= f0
            h = h - h0
        fourfold += f
        hist += h
        edge = (b + 1) * BLOCK_SIZE - max_n
        keep = allp >= edge
        carry_p, carry_t = allp[keep], allt[keep]
    return fourfold, hist, n_events
