"""Interference fringe fitting, visibility and fidelity.

The fringe models are C = A (1 + V cos(k phi)) with k = 1 for single-photon
fringes and k = 2 for two-photon fringes. Phases are inputs, not fit
parameters. The model is linear in (A, A V), so the Poisson-weighted least
squares solution is closed form.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

SINGLE = "single"
DOUBLE = "double"
KINDS = {SINGLE: 1, DOUBLE: 2}
MIN_POINTS = 5
ROUNDOFF = 1e-9  # visibilities this close outside [0, 1] are clamped silently


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FringeFit:
    """Fitted fringe; all uncertainties are one standard deviation."""

    kind: str
    A: float
    V: float
    sigma_A: float
    sigma_V: float
    F: float
    sigma_F: float
    chi2_dof: float
    n_points: int

    @property
    def harmonic(self) -> int:
        return KINDS[self.kind]

    def model(self, phases) -> np.ndarray:
        phases = np.asarray(phases, dtype=float)
        return self.A * (1.0 + self.V * np.cos(self.harmonic * phases))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _span_ok(phases: np.ndarray, harmonic: int) -> bool:
    """True when the points cover at least half a fringe period."""
    needed = math.pi / harmonic
    wrapped = np.sort(np.mod(phases, 2.0 * math.pi / harmonic))
    period = 2.0 * math.pi / harmonic
    gaps = np.diff(np.concatenate([wrapped, [wrapped[0] + period]]))
    covered = period - gaps.max()
    return covered >= needed - 1e-9


def fit_fringe(phases, counts, kind: str = DOUBLE) -> FringeFit:
    """Weighted least squares fit of A and V with Poisson weights 1/max(c, 1)."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {sorted(KINDS)}, got {kind!r}")
    k = KINDS[kind]
    phi = np.asarray(phases, dtype=float)
    c = np.asarray(counts, dtype=float)
    if phi.shape != c.shape or phi.ndim != 1:
        raise FitError("phases and counts must be 1-D arrays of equal length")
    if phi.size < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} points, got {phi.size}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise FitError("counts must be finite and non-negative")
    if not np.any(c > 0):
        raise FitError("all counts are zero")
    if not _span_ok(phi, k):
        raise FitError(f"phases span less than half a {kind} fringe period")
    x = np.cos(k * phi)
    w = 1.0 / np.maximum(c, 1.0)
    design = np.stack([np.ones_like(x), x], axis=1)
    normal = design.T @ (design * w[:, None])
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError:
        raise FitError("phases do not constrain the fringe (singular normal matrix)") from None
    a, b = cov @ (design.T @ (w * c))
    if a <= 0:
        raise FitError("fitted amplitude is not positive")
    v = b / a
    var_v = (cov[1, 1] - 2.0 * v * cov[0, 1] + v * v * cov[0, 0]) / (a * a)
    resid = c - (a + b * x)
    dof = phi.size - 2
    chi2 = float(np.sum(w * resid**2) / dof)
    sigma_v = math.sqrt(max(var_v, 0.0))
    f, sigma_f = fidelity_from_visibility(v, sigma_v)
    return FringeFit(
        kind=kind,
        A=float(a),
        V=float(v),
        sigma_A=math.sqrt(max(cov[0, 0], 0.0)),
        sigma_V=sigma_v,
        F=f,
        sigma_F=sigma_f,
        chi2_dof=chi2,
        n_points=int(phi.size),
    )


def visibility_minmax(c_max: float, c_min: float) -> float:
    """Contrast (c_max - c_min) / (c_max + c_min)."""
    if c_min < 0 or c_max < c_min:
        raise ValueError("need c_max >= c_min >= 0")
    if c_max + c_min == 0:
        raise ValueError("visibility undefined when both counts are zero")
    return (c_max - c_min) / (c_max + c_min)


def fidelity_from_visibility(v: float, sigma_v: float = 0.0, warn: bool = True) -> tuple[float, float]:
    """Fidelity (1 + V) / 2 and its uncertainty sigma_V / 2; V is clamped to [0, 1]."""
    if not 0.0 <= v <= 1.0:
        if warn and not -ROUNDOFF <= v <= 1.0 + ROUNDOFF:
            warnings.warn(f"visibility {v:.6g} outside [0, 1]; clamped", stacklevel=2)
        v = min(max(v, 0.0), 1.0)
    return float((1.0 + v) / 2.0), float(sigma_v) / 2.0
