"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed in
the terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from noonchip import calibration as cal
from noonchip import chip, fock, montecarlo, tdc
from noonchip.chip import DeviceConfig
from noonchip.cli import main as cli_main
from noonchip.fringe import fidelity_from_visibility, fit_fringe

RESULTS = []

# criterion 5 working point: low flux keeps the multiphoton floor below 1e-3
FIG3_CONFIG = DeviceConfig(mean_pairs=0.005, pair_statistics="poissonian", mode_overlap=0.90)
FIG3_PULSES = 6_400_000_000_000  # ~1000 fourfold counts at the fringe peak


def record(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    assert ok, line


def test_1_state_endpoints():
    t0 = time.perf_counter()
    noon = chip.heralded_output_state(math.pi / 2)
    prod = chip.heralded_output_state(0.0)
    elapsed = time.perf_counter() - t0
    f_noon = fock.fidelity(noon.state, chip.noon_state())
    f_prod = fock.fidelity(prod.state, chip.product_state())
    ok = abs(f_noon - 1) <= 1e-10 and abs(f_prod - 1) <= 1e-10 and elapsed < 1.0
    record(1, ok, f"F_noon={f_noon:.12f} F_product={f_prod:.12f} in {elapsed * 1e3:.1f} ms")


def test_2_fringe_laws():
    phases = np.linspace(0, 2 * math.pi, 100)
    worst2 = worst1 = 0.0
    for phi in phases:
        p11 = chip.heralded_output_state(phi).probabilities()[(1, 1)]
        worst2 = max(worst2, abs(p11 - (1 + math.cos(2 * phi)) / 2))
        out = fock.apply_mzi(fock.basis_state((1, 0)), 0, 1, phi)
        worst1 = max(worst1, abs(fock.outcome_probability(out, (0, 1)) - math.cos(phi / 2) ** 2))
    record(2, worst2 <= 1e-9 and worst1 <= 1e-9, f"max |dP11|={worst2:.2e} max |dP01|={worst1:.2e}")


def test_3_period_doubling():
    phases = np.linspace(0, 2 * math.pi, 100, endpoint=False)
    p11 = np.array([chip.heralded_output_state(p).probabilities()[(1, 1)] for p in phases])
    v_single = fit_fringe(phases, p11, "single").V
    v_double = fit_fringe(phases, p11, "double").V
    ok = abs(v_single) <= 0.01 and v_double >= 0.999
    record(3, ok, f"single-model V={v_single:.2e} double-model V={v_double:.6f}")


def test_4_coalescence():
    t0 = time.perf_counter()
    stream = montecarlo.simulate(DeviceConfig.ideal(), 1_000_000, seed=0, phase=1.5 * math.pi)
    hist = tdc.delay_histogram(stream, "full_4fold")
    elapsed = time.perf_counter() - t0
    zero = hist.zero_peak
    delayed = [hist.peak(n) for n in range(-8, 9) if n != 0]
    ok = zero <= 3 * math.sqrt(max(zero, 1)) and min(delayed) > 0 and elapsed < 120
    record(4, ok, f"zero peak={zero} delayed peaks min={min(delayed)} max={max(delayed)} in {elapsed:.1f} s")


@pytest.mark.slow
def test_5_figure_reproduction():
    phases = np.linspace(0, 2 * math.pi, 13)
    t0 = time.perf_counter()
    points = montecarlo.sweep(FIG3_CONFIG, phases, FIG3_PULSES, seed=2024, workers=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t0
    fourfold = np.array([p.fourfold for p in points])
    delayed = np.array([p.delayed for p in points])
    two = fit_fringe(phases, fourfold, "double")
    one = fit_fringe(phases, delayed, "single")
    ok = fourfold.max() >= 50 and abs(two.V - 0.90) <= 0.05 and one.V >= 0.98
    record(
        5,
        ok,
        f"V2={two.V:.3f}+-{two.sigma_V:.3f} V1={one.V:.4f}+-{one.sigma_V:.4f} "
        f"peak fourfold={fourfold.max()} in {elapsed:.0f} s",
    )


def test_6_fidelity_mapping():
    f1, _ = fidelity_from_visibility(0.90)
    f2, _ = fidelity_from_visibility(0.99)
    record(6, f1 == 0.95 and f2 == 0.995, f"F(0.90)={f1!r} F(0.99)={f2!r}")


def test_7_rate_sanity():
    cfg = DeviceConfig()
    n = 1_000_000
    stream = montecarlo.simulate(cfg, n, seed=17)
    target = cfg.mean_pairs * 10**-1.3
    se = math.sqrt(target * (1 - target) / n)
    rates = {ch: np.count_nonzero(stream.channels == code) / n for ch, code in (("D1", 2), ("D2", 3))}
    z = {ch: (r - target) / se for ch, r in rates.items()}
    ok = all(abs(v) <= 4 for v in z.values())
    record(7, ok, " ".join(f"{ch}={rates[ch]:.4e} ({z[ch]:+.2f} SE)" for ch in rates) + f" target={target:.4e}")


def test_8_calibration_round_trip():
    v, counts = cal.demo_scan(27, 13.0, seed=None)
    curve = cal.fit_calibration(v, counts)
    err = np.asarray(curve.phases) - cal.demo_phase(v)
    err = (err + math.pi) % (2 * math.pi) - math.pi
    rms = float(np.sqrt(np.mean(err**2)))
    wp = cal.working_points(curve)
    spacing = v[1] - v[0]
    ok = rms < 0.05 and abs(wp["V_product"]) <= spacing and abs(wp["V_noon"] - 10) <= spacing
    record(8, ok, f"rms={rms:.1e} rad V_product={wp['V_product']:.3f} V_noon={wp['V_noon']:.3f} (spacing {spacing} V)")


def test_9_determinism(tmp_path):
    def artifacts(tag, workers):
        d = tmp_path / tag
        d.mkdir()
        run = ["run", "--phase", "0.7", "--pulses", "2500000", "--seed", "5", "--workers", workers,
               "--out", str(d / "tags.csv")]
        sweep = ["sweep", "--points", "13", "--pulses", "100000000", "--seed", "5", "--workers", workers,
                 "--out", str(d / "sweep.csv")]
        assert cli_main(run) == 0 and cli_main(sweep) == 0
        return (d / "tags.csv").read_bytes(), (d / "sweep.csv").read_bytes()

    a = artifacts("w1", "1")
    b = artifacts("w1_again", "1")
    c = artifacts("w2", "2")
    ok = a == b == c
    record(9, ok, f"run and sweep outputs identical across repeats and worker counts ({len(a[0])} + {len(a[1])} bytes)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
