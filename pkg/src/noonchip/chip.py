"""Device parameters and the composed chip pipeline.

Mode order on the chip is (H1, A1, A2, H2): heralding photons on the outer
waveguides, signal photons on the inner ones feeding the interferometer. The
interferometer phase sits on the A2 arm; output port 1 goes to detector D1 and
port 2 to D2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

from . import fock
from .fock import FockState

THERMAL = "thermal"
POISSONIAN = "poissonian"
FIXED = "fixed"
PAIR_STATISTICS = (THERMAL, POISSONIAN, FIXED)

HERALD_BAND = "1310"
SIGNAL_BAND = "1560"

MODE_LABELS = ("H1", "A1", "A2", "H2")
H1, A1, A2, H2 = range(4)


def db_to_transmission(db) -> float:
    """Transmission of one loss figure or of a chain of stages given in dB."""
    if isinstance(db, (tuple, list)):
        return math.prod(db_to_transmission(x) for x in db)
    return 10.0 ** (-float(db) / 10.0)


def _db_total(db) -> float:
    if isinstance(db, (tuple, list)):
        return float(sum(db))
    return float(db)


@dataclass(frozen=True)
class ChipLayout:
    labels: tuple = MODE_LABELS
    # source index -> (herald chip mode, signal chip mode)
    wiring: tuple = ((H1, A1), (H2, A2))

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("mode labels must be unique")
        targets = [m for pair in self.wiring for m in pair]
        if sorted(targets) != list(range(len(self.labels))):
            raise ValueError("wiring must map source outputs one-to-one onto chip modes")


@dataclass(frozen=True)
class DeviceConfig:
    """Physical parameters of sources, chip, detection and clock.

    Loss entries accept a single dB figure or a tuple of stage losses.
    ``phase_rad`` and ``voltage_v`` are alternative ways to set the
    interferometer; voltage needs a calibration curve to be resolved.
    """

    pump_rep_rate: float = 76e6
    mean_pairs: float = 0.1
    pair_statistics: str = THERMAL
    fixed_pairs: tuple = (1, 1)
    pump_asymmetry: float = 0.0
    wdm_extinction_db: float = 25.0
    loss_herald_db: float | tuple = 13.0
    loss_signal_db: float | tuple = 13.0
    dark_count_prob: float = 1e-5
    dead_time_pulses: int = 0
    jitter_ps: float = 0.0
    mode_overlap: float = 1.0
    phase_rad: float | None = 0.0
    voltage_v: float | None = None
    cutoff: int = 4
    convention: str = fock.SYMMETRIC
    multiphoton_routing: str = "distinguishable"
    seed: int = 0
    layout: ChipLayout = field(default_factory=ChipLayout)

    def __post_init__(self):
        for name in ("loss_herald_db", "loss_signal_db"):
            value = getattr(self, name)
            if isinstance(value, list):
                object.__setattr__(self, name, tuple(float(v) for v in value))
        object.__setattr__(self, "fixed_pairs", tuple(int(n) for n in self.fixed_pairs))
        problems = []
        if not self.pump_rep_rate > 0:
            problems.append("pump_rep_rate must be > 0")
        if self.pair_statistics not in PAIR_STATISTICS:
            problems.append(f"pair_statistics must be one of {PAIR_STATISTICS}")
        if self.pair_statistics != FIXED and not self.mean_pairs > 0:
            problems.append("mean_pairs must be > 0")
        if self.pair_statistics == FIXED and (
            len(self.fixed_pairs) != 2 or min(self.fixed_pairs) < 0
        ):
            problems.append("fixed_pairs must be two non-negative integers")
        if not -1.0 < self.pump_asymmetry < 1.0:
            problems.append("pump_asymmetry must lie in (-1, 1)")
        if not self.wdm_extinction_db >= 0:
            problems.append("wdm_extinction_db must be >= 0")
        for name in ("loss_herald_db", "loss_signal_db"):
            value = getattr(self, name)
            stages = value if isinstance(value, tuple) else (value,)
            if any(not s >= 0 for s in stages):
                problems.append(f"{name} must be >= 0 dB")
        if not 0.0 <= self.dark_count_prob <= 1.0:
            problems.append("dark_count_prob must lie in [0, 1]")
        if self.dead_time_pulses < 0:
            problems.append("dead_time_pulses must be >= 0")
        if not self.jitter_ps >= 0:
            problems.append("jitter_ps must be >= 0")
        if not 0.0 <= self.mode_overlap <= 1.0:
            problems.append("mode_overlap must lie in [0, 1]")
        if self.cutoff < 2:
            problems.append("cutoff must be >= 2")
        if self.convention not in fock.CONVENTIONS:
            problems.append(f"convention must be one of {fock.CONVENTIONS}")
        if self.multiphoton_routing not in ("distinguishable", "exact"):
            problems.append("multiphoton_routing must be 'distinguishable' or 'exact'")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def ideal(cls, **overrides) -> "DeviceConfig":
        """Lossless, noiseless device fed with exactly one pair per source."""
        base = dict(
            pair_statistics=FIXED,
            fixed_pairs=(1, 1),
            wdm_extinction_db=math.inf,
            loss_herald_db=0.0,
            loss_signal_db=0.0,
            dark_count_prob=0.0,
            mode_overlap=1.0,
        )
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "DeviceConfig":
        return replace(self, **changes)

    @property
    def clock_period_s(self) -> float:
        return 1.0 / self.pump_rep_rate

    @property
    def clock_period_ps(self) -> int:
        """Clock period rounded to whole picoseconds (the tag resolution)."""
        return int(round(1e12 / self.pump_rep_rate))

    @property
    def source_mean_pairs(self) -> tuple[float, float]:
        a = self.pump_asymmetry
        return (self.mean_pairs * (1.0 + a), self.mean_pairs * (1.0 - a))

    @property
    def wdm_transmission(self) -> float:
        if math.isinf(self.wdm_extinction_db):
            return 1.0
        return 1.0 - 10.0 ** (-self.wdm_extinction_db / 10.0)

    @property
    def herald_transmission(self) -> float:
        return self.wdm_transmission * db_to_transmission(self.loss_herald_db)

    @property
    def signal_transmission(self) -> float:
        return self.wdm_transmission * db_to_transmission(self.loss_signal_db)

    @property
    def total_loss_db(self) -> tuple[float, float]:
        return _db_total(self.loss_herald_db), _db_total(self.loss_signal_db)


CONFIG_FIELDS = tuple(f.name for f in fields(DeviceConfig) if f.name != "layout")


# ---------------------------------------------------------------- sources


def thermal_amplitude(mean_pairs: float) -> float:
    """Squeezing amplitude lambda of a single-mode source with mean pair number n."""
    return math.sqrt(mean_pairs / (1.0 + mean_pairs))


def pair_distribution(mean_pairs: float, statistics: str, n_max: int) -> list[float]:
    """P(n pairs) for n = 0..n_max (not renormalized)."""
    if statistics == THERMAL:
        q = mean_pairs / (1.0 + mean_pairs)
        return [(1.0 - q) * q**n for n in range(n_max + 1)]
    if statistics == POISSONIAN:
        return [
            math.exp(-mean_pairs + n * math.log(mean_pairs) - math.lgamma(n + 1))
            for n in range(n_max + 1)
        ]
    raise ValueError(f"no pair distribution for statistics {statistics!r}")


def spdc_pair_state(lam: float, cutoff: int = 4) -> FockState:
    """Normalized truncation of sum_n lam^n |n, n> on (signal, idler)."""
    if not 0.0 <= lam < 1.0:
        raise ValueError("squeezing amplitude must satisfy 0 <= lambda < 1")
    amps = {(n, n): lam**n for n in range(cutoff // 2 + 1)}
    return FockState(2, cutoff, amps).normalized()


def source_state(config: DeviceConfig, source: int) -> FockState:
    """Pair state (signal, idler) of one source following the configured statistics."""
    cutoff = config.cutoff
    if config.pair_statistics == FIXED:
        n = config.fixed_pairs[source]
        if 2 * n > cutoff:
            raise ValueError(f"fixed pair number {n} does not fit under cutoff {cutoff}")
        return FockState(2, cutoff, {(n, n): 1.0})
    mean = config.source_mean_pairs[source]
    if config.pair_statistics == THERMAL:
        return spdc_pair_state(thermal_amplitude(mean), cutoff)
    probs = pair_distribution(mean, POISSONIAN, cutoff // 2)
    return FockState(2, cutoff, {(n, n): math.sqrt(p) for n, p in enumerate(probs)}).normalized()


# ---------------------------------------------------------------- routing


def _route(state: FockState, wavelength_assignment: Sequence[str], transmissions) -> FockState:
    """Permute source modes onto (H1, A1, A2, H2) and attach one loss mode per chip mode.

    ``transmissions`` holds the survival probability of each chip mode; loss
    modes are only added when some transmission is below one.
    """
    tags = tuple(str(t) for t in wavelength_assignment)
    if len(tags) != state.mode_count:
        raise ValueError("one wavelength tag per input mode is required")
    heralds = [i for i, t in enumerate(tags) if t == HERALD_BAND]
    signals = [i for i, t in enumerate(tags) if t == SIGNAL_BAND]
    unknown = [t for t in tags if t not in (HERALD_BAND, SIGNAL_BAND)]
    if unknown:
        raise ValueError(f"unknown wavelength tag(s) {unknown}; use '1310' or '1560'")
    if len(heralds) != 2 or len(signals) != 2:
        raise ValueError("expected two herald-band and two signal-band modes")
    # source order is preserved: first herald -> H1, second -> H2, signals -> A1, A2
    order = [heralds[0], signals[0], signals[1], heralds[1]]
    amps = {tuple(occ[i] for i in order): a for occ, a in state.amplitudes.items()}
    routed = FockState(4, state.cutoff, amps)
    lossy = [m for m in range(4) if transmissions[m] < 1.0]
    if not lossy:
        return routed
    routed = routed.tensor(fock.vacuum(4, 0), cutoff=state.cutoff)
    for m in range(4):
        routed = fock.apply_beamsplitter(routed, m, 4 + m, transmissions[m])
    return routed


def apply_wdm(
    state: FockState, wavelength_assignment: Sequence[str], extinction_db: float
) -> FockState:
    """Split pair photons by wavelength band onto the chip modes (H1, A1, A2, H2).

    Finite extinction is treated as loss: each chip mode couples a fraction
    10^(-extinction/10) into its own discard mode (modes 4..7 of the result).
    With infinite extinction the result is the plain 4-mode permutation.
    """
    if not extinction_db >= 0:
        raise ValueError("extinction_db must be >= 0")
    t = 1.0 if math.isinf(extinction_db) else 1.0 - 10.0 ** (-extinction_db / 10.0)
    return _route(state, wavelength_assignment, (t,) * 4)


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class HeraldedState:
    """Conditional signal state on (A1, A2) after heralding (1, 1) on (H1, H2).

    With losses the true conditional state is mixed; ``state`` is the branch
    with every discard mode empty and ``branch_weight`` its conditional weight.
    """

    state: FockState
    herald_probability: float
    branch_weight: float = 1.0

    def probabilities(self) -> dict:
        return {k: fock.outcome_probability(self.state, k) for k in ((1, 1), (2, 0), (0, 2))}


def noon_state(cutoff: int = 2) -> FockState:
    s = 1.0 / math.sqrt(2.0)
    return FockState(2, cutoff, {(2, 0): s, (0, 2): -s})


def product_state(cutoff: int = 2) -> FockState:
    return FockState(2, cutoff, {(1, 1): 1.0})


def chip_state(config: DeviceConfig, phase: float) -> FockState:
    """Full device state on (H1, A1, A2, H2[, loss modes]) before detection."""
    s1 = source_state(config, 0)
    s2 = source_state(config, 1)
    both = s1.tensor(s2, cutoff=config.cutoff).normalized()
    th, ts = config.herald_transmission, config.signal_transmission
    routed = _route(both, (SIGNAL_BAND, HERALD_BAND, SIGNAL_BAND, HERALD_BAND), (th, ts, ts, th))
    return fock.apply_mzi(routed, A1, A2, phase, config.convention)


def heralded_output_state(phase: float, config: DeviceConfig | None = None) -> HeraldedState:
    """Signal state produced when both heralding detectors see exactly one photon."""
    if config is None:
        config = DeviceConfig.ideal()
    full = chip_state(config, phase)
    cond, p_herald = fock.herald_project(full, (H1, H2), (1, 1))
    if cond.mode_count == 2:
        return HeraldedState(cond.with_cutoff(2), p_herald, 1.0)
    # cond modes: A1, A2, then discard modes; keep the all-discards-empty branch
    n_loss = cond.mode_count - 2
    zero = (0,) * n_loss
    amps = {occ[:2]: a for occ, a in cond.amplitudes.items() if occ[2:] == zero}
    branch = FockState(2, cond.cutoff, amps)
    weight = branch.norm() ** 2
    if weight < fock.IMPOSSIBLE_HERALD_TOL:
        raise fock.ImpossibleHeralding(weight * p_herald)
    return HeraldedState(branch.normalized(), p_herald, weight)


def analytic_two_photon_prob(phase: float) -> dict:
    """Ideal outcome probabilities of |11> through the interferometer."""
    c = math.cos(2.0 * phase)
    return {"P11": (1.0 + c) / 2.0, "P20": (1.0 - c) / 4.0, "P02": (1.0 - c) / 4.0}


def analytic_single_photon_prob(phase: float, input_mode: str = "A1") -> dict:
    """Ideal single-photon outcome probabilities for one photon entering A1 or A2."""
    s2 = math.sin(phase / 2.0) ** 2
    c2 = math.cos(phase / 2.0) ** 2
    if input_mode == "A1":
        return {"P10": s2, "P01": c2}
    if input_mode == "A2":
        return {"P10": c2, "P01": s2}
    raise ValueError(f"input_mode must be 'A1' or 'A2', got {input_mode!r}")
