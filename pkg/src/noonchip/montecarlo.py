"""Pulse-by-pulse Monte Carlo of the heralded experiment.

Every clock period is an independent trial. Its outcome is one of sixteen
click patterns over (H1, H2, D1, D2). ``click_probabilities`` enumerates the
physical process exactly (pair numbers, per-photon survival, interferometer
routing, dark counts, binary detectors) and the kernels sample patterns from
that table with counter-based random numbers keyed on (seed, pulse index).
``sample_pulse`` walks the same physical steps one draw at a time and serves
as an independent reference.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import backend, chip, fock
from .chip import FIXED, DeviceConfig
from .tags import (
    BIT_D1,
    BIT_D2,
    BIT_H1,
    BIT_H2,
    CHANNELS,
    N_PATTERNS,
    TIMESTAMP_MAX,
    TimeTagStream,
    get_qualification,
)

TAIL_TOL = 1e-17
MAX_PAIRS = 60
CHUNK_PULSES = 1 << 20


# ---------------------------------------------------------------- exact table


def _pair_probs(config: DeviceConfig, source: int) -> np.ndarray:
    if config.pair_statistics == FIXED:
        n = config.fixed_pairs[source]
        p = np.zeros(n + 1)
        p[n] = 1.0
        return p
    mean = config.source_mean_pairs[source]
    probs = chip.pair_distribution(mean, config.pair_statistics, MAX_PAIRS)
    for n, pn in enumerate(probs):
        if n > mean and pn < TAIL_TOL:
            return np.array(probs[: n + 1])
    return np.array(probs)


def _binomial(n: int, p: float) -> np.ndarray:
    k = np.arange(n + 1)
    comb = np.array([math.comb(n, int(i)) for i in k], dtype=float)
    return comb * p**k * (1.0 - p) ** (n - k)


@lru_cache(maxsize=4096)
def _quantum_routing(k1: int, k2: int, phase: float, convention: str) -> tuple:
    """(P none, P D1 only, P D2 only, P both) for indistinguishable photons |k1, k2>."""
    state = fock.basis_state((k1, k2))
    out = fock.apply_mzi(state, 0, 1, phase, convention)
    res = [0.0, 0.0, 0.0, 0.0]
    for (p, q), amp in out.amplitudes.items():
        res[(p > 0) + 2 * (q > 0)] += abs(amp) ** 2
    return tuple(res)


def _distinguishable_routing(k1: int, k2: int, s2: float, c2: float) -> tuple:
    # A1 photons reach D1 with sin^2(phi/2), A2 photons with cos^2(phi/2)
    if k1 + k2 == 0:
        return (1.0, 0.0, 0.0, 0.0)
    all_d1 = s2**k1 * c2**k2
    all_d2 = c2**k1 * s2**k2
    return (0.0, all_d1, all_d2, 1.0 - all_d1 - all_d2)


def signal_routing(k1: int, k2: int, phase: float, config: DeviceConfig) -> tuple:
    """Detector outcome distribution for k1 photons in A1 and k2 in A2."""
    s2 = math.sin(phase / 2.0) ** 2
    c2 = math.cos(phase / 2.0) ** 2
    dist = _distinguishable_routing(k1, k2, s2, c2)
    if k1 == 0 or k2 == 0:
        return dist
    interfering = (k1 == 1 and k2 == 1) or config.multiphoton_routing == "exact"
    if not interfering:
        return dist
    m = config.mode_overlap
    if k1 == 1 and k2 == 1:
        two = chip.analytic_two_photon_prob(phase)
        quantum = (0.0, two["P20"], two["P02"], two["P11"])
    else:
        quantum = _quantum_routing(k1, k2, float(phase), config.convention)
    return tuple(m * q + (1.0 - m) * d for q, d in zip(quantum, dist))


def _apply_dark_counts(table: np.ndarray, dark: float) -> np.ndarray:
    if dark == 0.0:
        return table
    t = table.reshape(2, 2, 2, 2)  # axes: D2, D1, H2, H1 (bit 3 .. bit 0)
    flip = np.array([[1.0 - dark, 0.0], [dark, 1.0]])
    for axis in range(4):
        t = np.moveaxis(np.tensordot(flip, t, axes=([1], [axis])), 0, axis)
    return t.reshape(16)


def click_probabilities(config: DeviceConfig, phase: float | None = None) -> np.ndarray:
    """Exact probability of each of the 16 click patterns in one clock period.

    Pattern bits: H1=1, H2=2, D1=4, D2=8.
    """
    if phase is None:
        phase = _config_phase(config)
    p1 = _pair_probs(config, 0)
    p2 = _pair_probs(config, 1)
    eh, es = config.herald_transmission, config.signal_transmission
    k_max = max(p1.size, p2.size)
    # surv[n, k]: probability that k of n signal photons survive
    surv = np.zeros((k_max, k_max))
    for n in range(k_max):
        surv[n, : n + 1] = _binomial(n, es)
    routing = np.array(
        [[signal_routing(k1, k2, phase, config) for k2 in range(p2.size)] for k1 in range(p1.size)]
    )
    # det[n1, n2, d]: detector outcome d = D1 + 2*D2 given the pair numbers
    det = np.einsum("ik,jl,klr->ijr", surv[: p1.size, : p1.size], surv[: p2.size, : p2.size], routing)
    h1 = 1.0 - (1.0 - eh) ** np.arange(p1.size)
    h2 = 1.0 - (1.0 - eh) ** np.arange(p2.size)
    her1 = np.stack([1.0 - h1, h1], axis=1) * p1[:, None]
    her2 = np.stack([1.0 - h2, h2], axis=1) * p2[:, None]
    # table index = D2*8 + D1*4 + H2*2 + H1, i.e. (detector d, herald2, herald1)
    table = np.einsum("ijr,ia,jb->rba", det, her1, her2).reshape(16)
    table = _apply_dark_counts(table, config.dark_count_prob)
    table = np.clip(table, 0.0, None)
    return table / table.sum()


def _cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.ascontiguousarray(cdf, dtype=np.float64)


def _config_phase(config: DeviceConfig) -> float:
    if config.phase_rad is None:
        raise ValueError("config has no phase_rad; resolve the voltage through a calibration first")
    return float(config.phase_rad)


# ---------------------------------------------------------------- reference sampler


def _draw_pairs(config: DeviceConfig, source: int, rng: np.random.Generator) -> int:
    if config.pair_statistics == FIXED:
        return config.fixed_pairs[source]
    mean = config.source_mean_pairs[source]
    if config.pair_statistics == chip.THERMAL:
        # geometric on {0, 1, ...} with mean n
        return int(rng.geometric(1.0 / (1.0 + mean)) - 1)
    return int(rng.poisson(mean))


def sample_pulse(config: DeviceConfig, rng: np.random.Generator, phase: float | None = None) -> frozenset:
    """Channels that click during one clock period, drawn step by step."""
    if phase is None:
        phase = _config_phase(config)
    n1 = _draw_pairs(config, 0, rng)
    n2 = _draw_pairs(config, 1, rng)
    eh, es = config.herald_transmission, config.signal_transmission
    clicks = set()
    if (rng.random(n1) < eh).any():
        clicks.add("H1")
    if (rng.random(n2) < eh).any():
        clicks.add("H2")
    k1 = int(np.count_nonzero(rng.random(n1) < es))
    k2 = int(np.count_nonzero(rng.random(n2) < es))
    s2 = math.sin(phase / 2.0) ** 2
    c2 = math.cos(phase / 2.0) ** 2
    ports = []
    if k1 == 1 and k2 == 1 and rng.random() < config.mode_overlap:
        two = chip.analytic_two_photon_prob(phase)
        u = rng.random()
        if u < two["P11"]:
            ports = [1, 2]
        elif u < two["P11"] + two["P20"]:
            ports = [1]
        else:
            ports = [2]
    elif config.multiphoton_routing == "exact" and k1 and k2 and k1 + k2 > 2 and (
        rng.random() < config.mode_overlap
    ):
        none, d1, d2, both = _quantum_routing(k1, k2, float(phase), config.convention)
        u = rng.random()
        ports = [1, 2] if u < both else [1] if u < both + d1 else [2]
    else:
        single = {"A1": s2, "A2": c2}  # probability of leaving through port 1
        for arm, k in (("A1", k1), ("A2", k2)):
            for _ in range(k):
                ports.append(1 if rng.random() < single[arm] else 2)
    if 1 in ports:
        clicks.add("D1")
    if 2 in ports:
        clicks.add("D2")
    for ch in CHANNELS:
        if rng.random() < config.dark_count_prob:
            clicks.add(ch)
    return frozenset(clicks)


def pattern_of(clicks) -> int:
    return sum(1 << CHANNELS.index(c) for c in clicks)


# ---------------------------------------------------------------- stream simulation


def _patterns_to_records(patterns: np.ndarray, first_pulse: int, tau_ps: int):
    hit = np.flatnonzero(patterns)
    pats = patterns[hit]
    chans = []
    pulses = []
    for code in range(4):
        sel = (pats >> code) & 1 == 1
        chans.append(np.full(int(sel.sum()), code, np.uint8))
        pulses.append(hit[sel])
    chans = np.concatenate(chans)
    pulses = np.concatenate(pulses).astype(np.int64) + first_pulse
    order = np.lexsort((chans, pulses))
    return chans[order], pulses[order] * tau_ps, pulses[order]


def _jitter(key: int, pulses: np.ndarray, chans: np.ndarray, sigma_ps: float) -> np.ndarray:
    """Gaussian timing offsets keyed on (pulse, channel) so they are chunking-independent."""
    from ._fallback import _mix64_array, GAMMA, INV_2_53

    idx = pulses.astype(np.uint64) * np.uint64(8) + chans.astype(np.uint64) * np.uint64(2)
    with np.errstate(over="ignore"):
        z1 = np.uint64(key) + (idx + np.uint64(1)) * np.uint64(GAMMA)
        z2 = np.uint64(key) + (idx + np.uint64(2)) * np.uint64(GAMMA)
    u1 = ((_mix64_array(z1) >> np.uint64(11)).astype(np.float64) + 0.5) * INV_2_53
    u2 = (_mix64_array(z2) >> np.uint64(11)).astype(np.float64) * INV_2_53
    return sigma_ps * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _apply_dead_time(chans, stamps, dead_ps):
    keep = np.ones(chans.size, bool)
    last = {}
    for i, (c, t) in enumerate(zip(chans.tolist(), stamps.tolist())):
        if c in last and t - last[c] <= dead_ps:
            keep[i] = False
        else:
            last[c] = t
    return keep


def simulate(
    config: DeviceConfig,
    n_pulses: int,
    seed: int | None = None,
    phase: float | None = None,
    workers: int = 1,
    kernel: str | None = None,
) -> TimeTagStream:
    """Simulate ``n_pulses`` clock periods and return the resulting time tags.

    The output depends only on (config, n_pulses, seed, phase); the number of
    worker threads changes nothing but the wall-clock time.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    if seed is None:
        seed = config.seed
    if phase is None:
        phase = _config_phase(config)
    tau = config.clock_period_ps
    if (n_pulses + 1) * tau > TIMESTAMP_MAX:
        raise OverflowError(f"{n_pulses} pulses of {tau} ps overflow 64-bit timestamps")
    cdf = _cdf(click_probabilities(config, phase))
    key = backend.derive_key(seed, 0)
    starts = list(range(0, n_pulses, CHUNK_PULSES))

    def run_chunk(start):
        count = min(CHUNK_PULSES, n_pulses - start)
        pats = backend.pulse_patterns(key, start, count, cdf, kernel)
        return _patterns_to_records(pats, start, tau)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run_chunk, starts))
    else:
        parts = [run_chunk(s) for s in starts]
    chans = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.uint8)
    stamps = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int64)
    pulses = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0, np.int64)
    if config.jitter_ps > 0 and stamps.size:
        jkey = backend.derive_key(seed, 1)
        offs = np.rint(_jitter(jkey, pulses, chans, config.jitter_ps)).astype(np.int64)
        stamps = np.maximum(stamps + offs, 0)
        order = np.lexsort((chans, stamps))
        chans, stamps = chans[order], stamps[order]
    if config.dead_time_pulses > 0 and stamps.size:
        keep = _apply_dead_time(chans, stamps, config.dead_time_pulses * tau)
        chans, stamps = chans[keep], stamps[keep]
    meta = {
        "clock_period_ps": str(tau),
        "n_pulses": str(n_pulses),
        "seed": str(seed),
        "phase_rad": repr(float(phase)),
    }
    return TimeTagStream(chans, stamps, tau, meta)


# ---------------------------------------------------------------- fast counting


@dataclass
class CoincidenceCounts:
    """Fourfold and start/stop coincidence counts from one simulated run."""

    phase: float
    n_pulses: int
    fourfold: int
    offsets: np.ndarray
    counts: np.ndarray
    n_events: int
    qualification: str
    expected: dict = field(default_factory=dict)

    @property
    def zero_peak(self) -> int:
        return int(self.counts[self.offsets == 0][0])

    @property
    def delayed(self) -> int:
        return int(self.counts[self.offsets != 0].sum())


def relevant_patterns(qualification) -> np.ndarray:
    """Patterns that can contribute to fourfold counts or to a qualified start/stop."""
    q = get_qualification(qualification)
    rel = [p for p in range(N_PATTERNS) if p == 15 or q.start_mask[p] or q.stop_mask[p]]
    return np.array(rel, dtype=np.uint8)


def expected_coincidences(probs: np.ndarray, qualification, n_pulses: int, max_n: int) -> dict:
    """Mean fourfold count and mean pair count per pulse offset for iid pulses."""
    q = get_qualification(qualification)
    p_start = float(probs[np.array(q.start_mask, bool)].sum())
    p_stop = float(probs[np.array(q.stop_mask, bool)].sum())
    p_both = float(probs[np.array(q.start_mask, bool) & np.array(q.stop_mask, bool)].sum())
    per_offset = {0: n_pulses * p_both}
    for d in range(1, max_n + 1):
        per_offset[d] = per_offset[-d] = (n_pulses - d) * p_start * p_stop
    return {"fourfold": n_pulses * float(probs[15]), "per_offset": per_offset}


def count_run(
    config: DeviceConfig,
    n_pulses: int,
    seed: int | None = None,
    phase: float | None = None,
    qualification="full_4fold",
    max_n: int = 8,
    kernel: str | None = None,
) -> CoincidenceCounts:
    """Fourfold and qualified start/stop counts of an ``n_pulses`` run.

    Only pulses able to contribute are drawn (geometric skipping over the
    rest), so runs of 1e12 pulses are cheap. The statistics are exactly those
    of ``simulate`` followed by the histogram analysis, though the individual
    draws differ.
    """
    if seed is None:
        seed = config.seed
    if phase is None:
        phase = _config_phase(config)
    q = get_qualification(qualification)
    probs = click_probabilities(config, phase)
    rel = relevant_patterns(q)
    p_rel = float(probs[rel].sum())
    rel_cdf = _cdf(probs[rel] / p_rel) if p_rel > 0 else np.ones(rel.size)
    key = backend.derive_key(seed, 2)
    fourfold, hist, n_events = backend.sparse_coincidences(
        key, int(n_pulses), p_rel, rel, rel_cdf, q.start_array(), q.stop_array(), max_n, kernel
    )
    return CoincidenceCounts(
        phase=float(phase),
        n_pulses=int(n_pulses),
        fourfold=int(fourfold),
        offsets=np.arange(-max_n, max_n + 1),
        counts=np.asarray(hist, np.int64),
        n_events=int(n_events),
        qualification=q.name,
        expected=expected_coincidences(probs, q, n_pulses, max_n),
    )


@dataclass
class SweepPoint:
    phase: float
    fourfold: int
    delayed: int
    n_pulses: int
    expected_fourfold: float
    expected_delayed: float


def sweep(
    config: DeviceConfig,
    phases,
    n_pulses: int,
    seed: int | None = None,
    delayed_qualification="single_source",
    max_n: int = 8,
    workers: int = 1,
    kernel: str | None = None,
) -> list[SweepPoint]:
    """Phase sweep: fourfold (ΔT=0) and delayed-peak counts at every phase.

    Point i draws from the substream (seed, i), so the result does not depend
    on ``workers``.
    """
    if seed is None:
        seed = config.seed
    phases = [float(p) for p in phases]

    def one(i):
        sub = backend.derive_key(seed, 100 + i)
        c = count_run(config, n_pulses, sub, phases[i], delayed_qualification, max_n, kernel)
        exp_delayed = sum(v for d, v in c.expected["per_offset"].items() if d != 0)
        return SweepPoint(
            phases[i], c.fourfold, c.delayed, n_pulses, c.expected["fourfold"], exp_delayed
        )

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(len(phases))))
    return [one(i) for i in range(len(phases))]


def click_rates(config: DeviceConfig, phase: float | None = None) -> dict:
    """Per-pulse click probability of each channel (exact)."""
    probs = click_probabilities(config, phase)
    return {
        ch: float(sum(p for pat, p in enumerate(probs) if pat >> i & 1))
        for i, ch in enumerate(CHANNELS)
    }


__all__ = [
    "BIT_D1",
    "BIT_D2",
    "BIT_H1",
    "BIT_H2",
    "click_probabilities",
    "click_rates",
    "count_run",
    "sample_pulse",
    "simulate",
    "sweep",
]
