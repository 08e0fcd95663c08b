"""Exact multimode Fock-state engine for small photon numbers.

States are sparse maps from occupation tuples to complex amplitudes with a
cap on the total photon number. Every operation returns a new state; nothing
is mutated in place, so states can be shared freely between threads.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

PRUNE_TOL = 1e-15
NORM_TOL = 1e-10
IMPOSSIBLE_HERALD_TOL = 1e-14

SYMMETRIC = "symmetric"
REAL = "real"
CONVENTIONS = (SYMMETRIC, REAL)


class ImpossibleHeralding(ValueError):
    """The requested heralding pattern has (numerically) zero probability."""

    def __init__(self, probability: float):
        super().__init__(f"impossible heralding: pattern probability {probability:.3e}")
        self.probability = probability


@dataclass(frozen=True)
class FockState:
    """Sparse ket over the occupation basis of ``mode_count`` bosonic modes.

    Terms whose total photon number exceeds ``cutoff`` are never stored.
    """

    mode_count: int
    cutoff: int
    amplitudes: Mapping[tuple, complex] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        clean = {}
        for occ, amp in self.amplitudes.items():
            occ = tuple(int(n) for n in occ)
            if len(occ) != self.mode_count or min(occ) < 0:
                raise ValueError(f"bad occupation tuple {occ} for {self.mode_count} modes")
            if sum(occ) > self.cutoff:
                raise ValueError(f"occupation {occ} exceeds cutoff {self.cutoff}")
            amp = complex(amp)
            if abs(amp) >= PRUNE_TOL:
                clean[occ] = clean.get(occ, 0j) + amp
        object.__setattr__(self, "amplitudes", MappingProxyType(clean))

    def __len__(self):
        return len(self.amplitudes)

    def __iter__(self):
        return iter(self.amplitudes.items())

    def amplitude(self, occupation: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(occupation), 0j)

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm() ** 2 - 1.0) <= NORM_TOL

    def normalized(self) -> "FockState":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero state")
        return self.scaled(1.0 / n)

    def scaled(self, factor: complex) -> "FockState":
        return FockState(
            self.mode_count, self.cutoff, {k: v * factor for k, v in self.amplitudes.items()}
        )

    def probabilities(self) -> dict:
        return {k: abs(v) ** 2 for k, v in self.amplitudes.items()}

    def photon_numbers(self) -> set:
        return {sum(k) for k in self.amplitudes}

    def inner(self, other: "FockState") -> complex:
        """<self|other>."""
        _check_same_modes(self, other)
        return sum(v.conjugate() * other.amplitude(k) for k, v in self.amplitudes.items())

    def tensor(self, other: "FockState", cutoff: int | None = None) -> "FockState":
        """Product state self ⊗ other; terms above ``cutoff`` are dropped."""
        if cutoff is None:
            cutoff = self.cutoff + other.cutoff
        amps = {}
        for ka, va in self.amplitudes.items():
            for kb, vb in other.amplitudes.items():
                if sum(ka) + sum(kb) <= cutoff:
                    amps[ka + kb] = va * vb
        return FockState(self.mode_count + other.mode_count, cutoff, amps)

    def with_cutoff(self, cutoff: int) -> "FockState":
        amps = {k: v for k, v in self.amplitudes.items() if sum(k) <= cutoff}
        return FockState(self.mode_count, cutoff, amps)


def basis_state(occupation: Sequence[int], cutoff: int | None = None) -> FockState:
    occ = tuple(occupation)
    return FockState(len(occ), sum(occ) if cutoff is None else cutoff, {occ: 1.0})


def vacuum(mode_count: int, cutoff: int) -> FockState:
    if mode_count < 1:
        raise ValueError("mode_count must be >= 1")
    return FockState(mode_count, cutoff, {(0,) * mode_count: 1.0})


def _check_mode(state: FockState, mode: int):
    if not 0 <= mode < state.mode_count:
        raise IndexError(f"mode {mode} out of range for {state.mode_count} modes")


def _check_same_modes(a: FockState, b: FockState):
    if a.mode_count != b.mode_count:
        raise ValueError(f"mode count mismatch: {a.mode_count} vs {b.mode_count}")


def create(state: FockState, mode: int) -> FockState:
    """Apply a† on ``mode``. Terms pushed above the cutoff are dropped; no renormalization."""
    _check_mode(state, mode)
    amps = {}
    for occ, amp in state.amplitudes.items():
        if sum(occ) + 1 > state.cutoff:
            continue
        n = occ[mode]
        new = occ[:mode] + (n + 1,) + occ[mode + 1 :]
        amps[new] = amps.get(new, 0j) + amp * math.sqrt(n + 1)
    return FockState(state.mode_count, state.cutoff, amps)


def beamsplitter_matrix(transmissivity: float, convention: str = SYMMETRIC):
    """2x2 matrix U with a_in† -> sum_out U[out][in] a_out†."""
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError(f"transmissivity {transmissivity} outside [0, 1]")
    t = math.sqrt(transmissivity)
    r = math.sqrt(1.0 - transmissivity)
    if convention == SYMMETRIC:
        return ((t, 1j * r), (1j * r, t))
    if convention == REAL:
        return ((t, -r), (r, t))
    raise ValueError(f"unknown beamsplitter convention {convention!r}")


def apply_two_mode_unitary(state: FockState, mode_i: int, mode_j: int, u) -> FockState:
    """Apply the passive two-mode transform ``u`` (see beamsplitter_matrix) to modes i, j."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beamsplitter needs two distinct modes")
    (u00, u01), (u10, u11) = u
    amps: dict = {}
    for occ, amp in state.amplitudes.items():
        ni, nj = occ[mode_i], occ[mode_j]
        pref = amp / math.sqrt(math.factorial(ni) * math.factorial(nj))
        # (u00 a† + u10 b†)^ni (u01 a† + u11 b†)^nj |0>
        for r in range(ni + 1):
            cr = math.comb(ni, r) * u00**r * u10 ** (ni - r)
            if cr == 0:
                continue
            for s in range(nj + 1):
                cs = math.comb(nj, s) * u01**s * u11 ** (nj - s)
                if cs == 0:
                    continue
                p = r + s
                q = ni + nj - p
                coeff = pref * cr * cs * math.sqrt(math.factorial(p) * math.factorial(q))
                new = list(occ)
                new[mode_i], new[mode_j] = p, q
                key = tuple(new)
                amps[key] = amps.get(key, 0j) + coeff
    return FockState(state.mode_count, state.cutoff, amps)


def apply_beamsplitter(
    state: FockState,
    mode_i: int,
    mode_j: int,
    transmissivity: float = 0.5,
    convention: str = SYMMETRIC,
) -> FockState:
    return apply_two_mode_unitary(
        state, mode_i, mode_j, beamsplitter_matrix(transmissivity, convention)
    )


def apply_phase(state: FockState, mode: int, phi: float) -> FockState:
    """Multiply every term by exp(i n phi), n being the photon number in ``mode``."""
    _check_mode(state, mode)
    if phi == 0.0:
        return state
    return FockState(
        state.mode_count,
        state.cutoff,
        {occ: amp * cmath.exp(1j * occ[mode] * phi) for occ, amp in state.amplitudes.items()},
    )


def apply_mzi(
    state: FockState, mode_a: int, mode_b: int, phi: float, convention: str = SYMMETRIC
) -> FockState:
    """Balanced Mach-Zehnder: 50/50 coupler, phase ``phi`` on ``mode_b``, 50/50 coupler."""
    state = apply_beamsplitter(state, mode_a, mode_b, 0.5, convention)
    state = apply_phase(state, mode_b, phi)
    return apply_beamsplitter(state, mode_a, mode_b, 0.5, convention)


def outcome_probability(state: FockState, occupation_pattern: Sequence[int]) -> float:
    if len(occupation_pattern) != state.mode_count:
        raise ValueError(
            f"pattern has {len(occupation_pattern)} entries, state has {state.mode_count} modes"
        )
    return abs(state.amplitude(occupation_pattern)) ** 2


def marginal_probabilities(state: FockState, modes: Iterable[int]) -> dict:
    """Photon-number distribution on a subset of modes."""
    modes = tuple(modes)
    for m in modes:
        _check_mode(state, m)
    out: dict = {}
    for occ, amp in state.amplitudes.items():
        key = tuple(occ[m] for m in modes)
        out[key] = out.get(key, 0.0) + abs(amp) ** 2
    return out


def herald_project(
    state: FockState, herald_modes: Sequence[int], herald_pattern: Sequence[int]
) -> tuple[FockState, float]:
    """Project ``herald_modes`` onto ``herald_pattern``.

    Returns the renormalized state on the remaining modes (original order) and
    the probability of the heralding event. Raises ImpossibleHeralding when that
    probability is below 1e-14.
    """
    herald_modes = tuple(herald_modes)
    herald_pattern = tuple(herald_pattern)
    if len(herald_modes) != len(herald_pattern):
        raise ValueError("herald_modes and herald_pattern lengths differ")
    if len(set(herald_modes)) != len(herald_modes):
        raise ValueError("herald modes must be distinct")
    for m in herald_modes:
        _check_mode(state, m)
    keep = [m for m in range(state.mode_count) if m not in herald_modes]
    if not keep:
        raise ValueError("cannot herald on every mode")
    amps: dict = {}
    for occ, amp in state.amplitudes.items():
        if all(occ[m] == n for m, n in zip(herald_modes, herald_pattern)):
            amps[tuple(occ[m] for m in keep)] = amp
    prob = min(1.0, sum(abs(a) ** 2 for a in amps.values()) / state.norm() ** 2)
    if prob < IMPOSSIBLE_HERALD_TOL:
        raise ImpossibleHeralding(prob)
    cond = FockState(len(keep), state.cutoff, amps)
    return cond.normalized(), prob


def fidelity(state_a: FockState, state_b: FockState) -> float:
    """|<a|b>|^2 for normalized pure states."""
    _check_same_modes(state_a, state_b)
    return min(1.0, abs(state_a.inner(state_b)) ** 2)
