"""Voltage to phase calibration of the thermo-optic interferometer.

A calibration is a table of (voltage, phase) samples with monotone
piecewise-cubic interpolation between them. It is built from a classical
single-photon fringe scan C(V) = A (1 + vis cos phi(V)) by inverting the
fringe locally and unwrapping so that phi never decreases with voltage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, isotonic_regression, least_squares

CALIBRATION_HEADER = "voltage_v,phase_rad"
SCAN_HEADER = "voltage_v,counts"
MIN_SCAN_POINTS = 8
EDGE_TOL = 0.15  # rad; a working point this close outside the range snaps to the edge
MAX_MONOTONE_VIOLATION = 0.3  # rad
EXTREMUM_COS = 0.999
MAX_LOCAL_PHASE_NOISE = 0.02  # rad
CHI2_TARGET = 1.5
CHI2_GAIN = 25.0  # chi-square drop needed to accept two more phase coefficients
TWO_PI = 2.0 * math.pi


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationCurve:
    """Monotone voltage to phase map; evaluation outside the samples is an error."""

    voltages: tuple
    phases: tuple
    amplitude: float | None = None
    visibility: float | None = None
    label: str = ""
    _interp: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = tuple(float(x) for x in self.voltages)
        p = tuple(float(x) for x in self.phases)
        object.__setattr__(self, "voltages", v)
        object.__setattr__(self, "phases", p)
        if len(v) != len(p):
            raise CalibrationError("voltages and phases differ in length")
        if len(v) < 2:
            raise CalibrationError("a calibration needs at least 2 samples")
        if not all(np.isfinite(v)) or not all(np.isfinite(p)):
            raise CalibrationError("calibration samples must be finite")
        if np.any(np.diff(v) <= 0):
            raise CalibrationError("voltages must be strictly increasing")
        dp = np.diff(p)
        if not (np.all(dp >= 0) or np.all(dp <= 0)):
            raise CalibrationError("phases must be monotone in voltage")
        object.__setattr__(self, "_interp", PchipInterpolator(np.array(v), np.array(p)))

    @property
    def v_min(self) -> float:
        return self.voltages[0]

    @property
    def v_max(self) -> float:
        return self.voltages[-1]

    @property
    def phase_range(self) -> tuple[float, float]:
        return min(self.phases[0], self.phases[-1]), max(self.phases[0], self.phases[-1])

    def __call__(self, voltage):
        return phase_from_voltage(self, voltage)

    def voltage_for_phase(self, phase: float) -> float:
        """Lowest voltage at which the curve reaches ``phase``."""
        lo, hi = self.phase_range
        if not lo <= phase <= hi:
            raise CalibrationError(f"phase {phase:.6g} rad outside the calibrated span [{lo:.6g}, {hi:.6g}]")
        v = np.array(self.voltages)
        p = np.array(self.phases)
        sign = 1.0 if p[-1] >= p[0] else -1.0
        i = int(np.searchsorted(sign * p, sign * phase, side="left"))
        if i < len(p) and p[i] == phase:
            return float(v[i])
        a, b = v[i - 1], v[i]
        return float(brentq(lambda x: float(self._interp(x)) - phase, a, b, xtol=1e-13, rtol=1e-15))

    def predicted_counts(self, voltages) -> np.ndarray:
        if self.amplitude is None or self.visibility is None:
            raise CalibrationError("curve carries no fringe amplitude/visibility")
        return self.amplitude * (1.0 + self.visibility * np.cos(phase_from_voltage(self, voltages)))


def phase_from_voltage(curve: CalibrationCurve, voltage):
    """Interpolated phase (rad) at ``voltage`` (scalar or array)."""
    v = np.asarray(voltage, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v < curve.v_min) or np.any(v > curve.v_max):
        raise CalibrationError(
            f"voltage {voltage} outside the calibrated range [{curve.v_min}, {curve.v_max}] V"
        )
    out = curve._interp(v)
    # exact at the samples
    idx = np.searchsorted(curve.voltages, v)
    hit = (idx < len(curve.voltages)) & (np.take(curve.voltages, np.minimum(idx, len(curve.voltages) - 1)) == v)
    out = np.where(hit, np.take(curve.phases, np.minimum(idx, len(curve.phases) - 1)), out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- fitting


def _scaled(voltages):
    lo, hi = voltages[0], voltages[-1]
    return (voltages - lo) / (hi - lo) * 2.0 - 1.0


def _linear_starts(x, counts, n_best: int = 6):
    """Best increasing linear phase models phi = a + b x on a coarse grid."""
    c_max, c_min = counts.max(), counts.min()
    amp = (c_max + c_min) / 2.0
    vis = min((c_max - c_min) / (c_max + c_min), 0.999)
    offsets = np.linspace(0.0, TWO_PI, 96, endpoint=False)
    slopes = np.linspace(0.02, 8.0 * math.pi, 400)
    sigma2 = np.maximum(counts, 1.0)
    best = []
    for b in slopes:
        ph = offsets[:, None] + b * x[None, :]
        cost = np.sum((amp * (1.0 + vis * np.cos(ph)) - counts) ** 2 / sigma2, axis=1)
        i = int(np.argmin(cost))
        best.append((float(cost[i]), offsets[i], b))
    best.sort()
    return amp, vis, [(a, b) for _, a, b in best[:n_best]]


def _branch_nearest(theta, reference):
    k = np.round(reference / TWO_PI)
    cands = TWO_PI * (k[:, None] + np.array([-1, -1, 0, 0, 1, 1])) + theta[:, None] * np.array(
        [1.0, -1.0, 1.0, -1.0, 1.0, -1.0]
    )
    return cands[np.arange(theta.size), np.argmin(np.abs(cands - reference[:, None]), axis=1)]


def _local_inverse(counts, amp, vis, model_phase):
    """Per-sample phase consistent with the counts, on the branch nearest the model.

    Near fringe extrema a count fluctuation moves the inverted phase by far
    more than the smooth model is uncertain, so samples whose Poisson noise
    maps to more than ``MAX_LOCAL_PHASE_NOISE`` keep the model phase.
    """
    cos_val = (counts / amp - 1.0) / vis
    theta = np.arccos(np.clip(cos_val, -1.0, 1.0))
    local = _branch_nearest(theta, model_phase)
    slope = amp * vis * np.abs(np.sin(theta))
    noise = np.sqrt(np.maximum(counts, 1.0))
    ill = (np.abs(cos_val) > EXTREMUM_COS) | (noise > MAX_LOCAL_PHASE_NOISE * slope)
    return np.where(ill, model_phase, local)


def fit_calibration(voltages, counts, max_degree: int = 15, label: str = "") -> CalibrationCurve:
    """Build a calibration from a single-photon fringe scan.

    The fringe amplitude, visibility and a smooth Chebyshev-series phase are
    fitted jointly, raising the series degree until the misfit is at the
    Poisson level. Each sample's phase then comes from inverting the fringe at
    that sample on the branch nearest the smooth fit; samples at fringe
    extrema, where the inversion is ill-conditioned, keep the smooth value.
    """
    v = np.asarray(voltages, dtype=float)
    c = np.asarray(counts, dtype=float)
    if v.shape != c.shape or v.ndim != 1:
        raise CalibrationError("voltages and counts must be 1-D arrays of equal length")
    if v.size < MIN_SCAN_POINTS:
        raise CalibrationError(f"scan needs at least {MIN_SCAN_POINTS} points, got {v.size}")
    if np.any(c < 0) or not np.all(np.isfinite(c)) or not np.all(np.isfinite(v)):
        raise CalibrationError("scan values must be finite and counts non-negative")
    order = np.argsort(v, kind="stable")
    v, c = v[order], c[order]
    if np.any(np.diff(v) <= 0):
        raise CalibrationError("scan voltages must be distinct")
    spread = c.max() - c.min()
    if spread <= 0:
        raise CalibrationError("no modulation: the scan counts are flat")
    if spread < 5.0 * math.sqrt(max(c.mean(), 1.0)):
        raise CalibrationError(
            f"no modulation: count spread {spread:.3g} is within Poisson noise "
            f"({math.sqrt(max(c.mean(), 1.0)):.3g} per point)"
        )

    x = _scaled(v)
    sigma = np.sqrt(np.maximum(c, 1.0))
    max_degree = max(1, min(max_degree, v.size - 4))
    cheb = np.polynomial.chebyshev.chebval

    def resid(params):
        return (params[0] * (1.0 + params[1] * np.cos(cheb(x, params[2:]))) - c) / sigma

    def jac(params):
        ph = cheb(x, params[2:])
        cos_ph, sin_ph = np.cos(ph), np.sin(ph)
        basis = np.polynomial.chebyshev.chebvander(x, params.size - 3)
        d_phase = (-params[0] * params[1] * sin_ph)[:, None] * basis
        cols = [1.0 + params[1] * cos_ph, params[0] * cos_ph]
        return np.column_stack(cols + [d_phase]) / sigma[:, None]

    def solve(p0, tight=False):
        tol = dict(xtol=1e-14, ftol=1e-14, gtol=1e-14) if tight else {}
        return least_squares(resid, p0, jac=jac, method="lm", x_scale="jac", max_nfev=5000, **tol)

    amp0, vis0, starts = _linear_starts(x, c)
    deg = min(3, max_degree)
    fit = None
    for offset, slope in starts:
        trial = solve(np.r_[amp0, vis0, offset, slope, np.zeros(deg - 1)])
        if fit is None or trial.cost < fit.cost:
            fit = trial
    fit = solve(fit.x, tight=True)
    # raise the phase-model degree while the fringe misfit exceeds Poisson noise
    while deg < max_degree and 2.0 * fit.cost / (v.size - deg - 3) > CHI2_TARGET:
        trial = solve(np.r_[fit.x, np.zeros(2)], tight=True)
        if 2.0 * (fit.cost - trial.cost) < CHI2_GAIN:
            break
        fit, deg = trial, deg + 2
    amp, vis = float(fit.x[0]), float(fit.x[1])
    model_phase = cheb(x, fit.x[2:])
    if vis < 0:  # same fringe with the phase shifted by pi
        vis, model_phase = -vis, model_phase + math.pi
    if model_phase[-1] < model_phase[0]:  # cos is even: mirror onto an increasing phase
        model_phase = -model_phase
    if not 0 < vis <= 1.0 + 1e-9 or amp <= 0:
        raise CalibrationError(f"fringe fit failed (amplitude {amp:.4g}, visibility {vis:.4g})")

    local = _local_inverse(c, amp, vis, model_phase)
    mono = isotonic_regression(local).x
    worst = float(np.max(np.abs(local - mono)))
    if worst > MAX_MONOTONE_VIOLATION:
        i = int(np.argmax(np.abs(local - mono)))
        raise CalibrationError(
            f"phase unwrap is not monotone near {v[i]:.4g} V (off by {worst:.3f} rad); "
            "the scan is too sparse or too noisy to resolve the branch"
        )
    # anchor: lowest-voltage phase in [0, 2 pi)
    shift = TWO_PI * math.floor(mono[0] / TWO_PI)
    return CalibrationCurve(tuple(v), tuple(mono - shift), amp, min(vis, 1.0), label)


def residual_rms(curve: CalibrationCurve, voltages, counts) -> tuple[float, float]:
    """RMS of (counts - predicted) and the RMS Poisson noise expected at those counts."""
    c = np.asarray(counts, dtype=float)
    pred = curve.predicted_counts(np.asarray(voltages, dtype=float))
    return float(np.sqrt(np.mean((c - pred) ** 2))), float(np.sqrt(np.mean(np.maximum(pred, 1.0))))


# ---------------------------------------------------------------- working points


def working_points(curve: CalibrationCurve, edge_tol: float = EDGE_TOL) -> dict:
    """Voltages giving the product state (phase = 0 mod pi) and N00N state (pi/2 mod pi).

    Of several candidates the one nearest the middle of the voltage range wins.
    """
    lo, hi = curve.phase_range
    mid_v = 0.5 * (curve.v_min + curve.v_max)
    result = {}
    for name, offset in (("product", 0.0), ("noon", math.pi / 2.0)):
        k_lo = math.ceil((lo - edge_tol - offset) / math.pi)
        k_hi = math.floor((hi + edge_tol - offset) / math.pi)
        cands = []
        for k in range(k_lo, k_hi + 1):
            target = offset + k * math.pi
            if target < lo:
                cands.append(curve.v_min if curve.phases[0] <= curve.phases[-1] else curve.v_max)
            elif target > hi:
                cands.append(curve.v_max if curve.phases[0] <= curve.phases[-1] else curve.v_min)
            else:
                cands.append(curve.voltage_for_phase(target))
        if not cands:
            raise CalibrationError(
                f"calibrated span [{lo:.4g}, {hi:.4g}] rad reaches no {name} working point"
            )
        result[name] = float(min(cands, key=lambda x: (abs(x - mid_v), x)))
    return {"V_product": result["product"], "V_noon": result["noon"]}


# ---------------------------------------------------------------- files and demo


def write_calibration(curve: CalibrationCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if curve.label:
            fh.write(f"# label={curve.label}\n")
        if curve.amplitude is not None:
            fh.write(f"# amplitude={curve.amplitude!r}\n# visibility={curve.visibility!r}\n")
        fh.write(CALIBRATION_HEADER + "\n")
        for v, p in zip(curve.voltages, curve.phases):
            fh.write(f"{v!r},{p!r}\n")


def _read_two_columns(path, header):
    meta = {}
    rows = []
    seen_header = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            if not seen_header:
                if line.replace(" ", "") != header:
                    raise CalibrationError(f"{path}: line {lineno}: expected header {header!r}")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise CalibrationError(f"{path}: line {lineno}: expected 2 fields")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise CalibrationError(f"{path}: line {lineno}: non-numeric value") from None
    if not seen_header:
        raise CalibrationError(f"{path}: missing header {header!r}")
    return meta, rows


def read_calibration(path) -> CalibrationCurve:
    meta, rows = _read_two_columns(path, CALIBRATION_HEADER)
    if len(rows) < 2:
        raise CalibrationError(f"{path}: a calibration needs at least 2 samples")
    amp = float(meta["amplitude"]) if "amplitude" in meta else None
    vis = float(meta["visibility"]) if "visibility" in meta else None
    return CalibrationCurve(
        tuple(r[0] for r in rows), tuple(r[1] for r in rows), amp, vis, meta.get("label", "")
    )


def read_scan(path) -> tuple[np.ndarray, np.ndarray]:
    _, rows = _read_two_columns(path, SCAN_HEADER)
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def write_scan(voltages, counts, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SCAN_HEADER + "\n")
        for v, c in zip(np.asarray(voltages, float).tolist(), np.asarray(counts).tolist()):
            fh.write(f"{v!r},{c!r}\n")


DEMO_LABEL = "synthetic demo calibration (not measured data)"


def demo_phase(voltage):
    """Synthetic thermo-optic response: pi at 0 V, 3 pi / 2 at 10 V, quadratic in V."""
    v = np.asarray(voltage, dtype=float)
    return math.pi + 0.5 * math.pi * (v / 10.0) ** 2


def demo_scan(
    n_points: int = 27,
    v_max: float = 13.0,
    amplitude: float = 1e4,
    visibility: float = 0.99,
    seed: int | None = 0,
    phase_fn=demo_phase,
):
    """Single-photon fringe scan of a synthetic device; Poisson noise unless ``seed`` is None."""
    v = np.linspace(0.0, v_max, n_points)
    mean = amplitude * (1.0 + visibility * np.cos(phase_fn(v)))
    if seed is None:
        return v, mean
    return v, np.random.default_rng(seed).poisson(mean).astype(float)


def demo_calibration(n_points: int = 27, v_max: float = 13.0) -> CalibrationCurve:
    """Exact samples of ``demo_phase``, labelled as synthetic."""
    v = np.linspace(0.0, v_max, n_points)
    return CalibrationCurve(tuple(v), tuple(demo_phase(v)), label=DEMO_LABEL)
