import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noonchip import montecarlo as mc
from noonchip.chip import DeviceConfig
from noonchip.fringe import fit_fringe
from noonchip.tags import BIT_D1, BIT_D2, BIT_H1, BIT_H2

SWEEP = np.linspace(0, 2 * math.pi, 13)


def fourfold_visibility(config):
    """Double-fringe visibility of the exact 4-fold probability over a 13-point sweep."""
    p = np.array([mc.click_probabilities(config, phi)[15] for phi in SWEEP])
    counts = p / p.max() * 1e6  # large scale: weights ~ Poisson, values ~ exact
    return fit_fringe(SWEEP, counts, "double").V


class TestExactTable:
    @given(
        st.floats(1e-3, 0.3),
        st.sampled_from(["thermal", "poissonian"]),
        st.floats(0, 20),
        st.floats(0, 1),
        st.floats(0, 2 * math.pi),
    )
    @settings(max_examples=40, deadline=None)
    def test_is_a_distribution(self, nbar, stats, loss, overlap, phi):
        cfg = DeviceConfig(
            mean_pairs=nbar, pair_statistics=stats, loss_signal_db=loss, mode_overlap=overlap
        )
        p = mc.click_probabilities(cfg, phi)
        assert p.shape == (16,)
        assert np.all(p >= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_dead_source_gives_no_fourfolds(self):
        cfg = DeviceConfig.ideal(fixed_pairs=(1, 0))
        for phi in SWEEP:
            assert mc.click_probabilities(cfg, phi)[15] == 0.0

    def test_noon_point_has_no_fourfolds(self):
        p = mc.click_probabilities(DeviceConfig.ideal(), math.pi / 2)
        assert p[15] == pytest.approx(0.0, abs=1e-15)
        assert p[BIT_H1 | BIT_H2 | BIT_D1] == pytest.approx(0.5)
        assert p[BIT_H1 | BIT_H2 | BIT_D2] == pytest.approx(0.5)

    def test_product_point_always_fourfold(self):
        assert mc.click_probabilities(DeviceConfig.ideal(), 0.0)[15] == pytest.approx(1.0)

    def test_single_pair_fixed_detector(self):
        # one photon in A1 at zero phase always leaves toward D2
        p = mc.click_probabilities(DeviceConfig.ideal(fixed_pairs=(1, 0)), 0.0)
        assert p[BIT_H1 | BIT_D2] == pytest.approx(1.0)
        p = mc.click_probabilities(DeviceConfig.ideal(fixed_pairs=(1, 0)), math.pi)
        assert p[BIT_H1 | BIT_D1] == pytest.approx(1.0)

    def test_dark_counts_alone(self):
        cfg = DeviceConfig.ideal(fixed_pairs=(0, 0), dark_count_prob=1e-5)
        rates = mc.click_rates(cfg, 0.0)
        for v in rates.values():
            assert v == pytest.approx(1e-5, rel=1e-12)

    def test_per_detector_rate(self):
        # D rate = n * 10^(-1.3) up to WDM and saturation corrections
        rates = mc.click_rates(DeviceConfig(), 0.0)
        assert rates["D1"] == pytest.approx(0.1 * 10**-1.3, rel=0.01)
        assert rates["D2"] == pytest.approx(rates["D1"], rel=1e-9)

    def test_loss_stages_compose(self):
        a = mc.click_probabilities(DeviceConfig(loss_signal_db=(3.0, 3.0)), 0.4)
        b = mc.click_probabilities(DeviceConfig(loss_signal_db=6.0), 0.4)
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_missing_phase(self):
        with pytest.raises(ValueError):
            mc.click_probabilities(DeviceConfig(phase_rad=None, voltage_v=3.0))

    @pytest.mark.parametrize("routing", ["distinguishable", "exact"])
    def test_table_matches_stepwise_sampler(self, routing):
        cfg = DeviceConfig(
            mean_pairs=0.3,
            loss_herald_db=1.0,
            loss_signal_db=1.0,
            dark_count_prob=1e-3,
            mode_overlap=0.8,
            multiphoton_routing=routing,
        )
        phi = 0.9
        n = 60_000
        rng = np.random.default_rng(7)
        counts = np.zeros(16)
        for _ in range(n):
            counts[mc.pattern_of(mc.sample_pulse(cfg, rng, phi))] += 1
        p = mc.click_probabilities(cfg, phi)
        sigma = np.sqrt(n * p * (1 - p)) + 1.0
        assert np.all(np.abs(counts - n * p) < 5 * sigma)


class TestVisibilityTrends:
    def test_falls_with_distinguishability(self):
        vs = [
            fourfold_visibility(
                DeviceConfig(mean_pairs=0.002, pair_statistics="poissonian", mode_overlap=m)
            )
            for m in (1.0, 0.95, 0.9, 0.8)
        ]
        assert all(a > b for a, b in zip(vs, vs[1:]))
        # at low flux the visibility approaches the mode overlap
        assert vs[2] == pytest.approx(0.9, abs=0.005)

    def test_falls_with_dark_counts(self):
        vs = [
            fourfold_visibility(DeviceConfig(mean_pairs=0.005, dark_count_prob=d))
            for d in (0.0, 1e-5, 1e-4, 1e-3)
        ]
        assert all(a > b for a, b in zip(vs, vs[1:]))

    @pytest.mark.parametrize("stats", ["thermal", "poissonian"])
    def test_multiphoton_routing_bias_small_at_low_flux(self, stats):
        base = DeviceConfig(mean_pairs=0.005, pair_statistics=stats, mode_overlap=0.9)
        dist = fourfold_visibility(base)
        exact = fourfold_visibility(base.replace(multiphoton_routing="exact"))
        assert abs(exact - dist) < 1e-3

    def test_multiphoton_routing_bias_visible_at_high_flux(self):
        # at n = 0.1 the two routings differ by about 0.01 in visibility
        base = DeviceConfig(mean_pairs=0.1, mode_overlap=0.9)
        dist = fourfold_visibility(base)
        exact = fourfold_visibility(base.replace(multiphoton_routing="exact"))
        assert 3e-3 < exact - dist < 3e-2


class TestSimulation:
    def test_deterministic(self):
        cfg = DeviceConfig(mean_pairs=0.1, loss_herald_db=3, loss_signal_db=3)
        a = mc.simulate(cfg, 50_000, seed=3, phase=0.5)
        b = mc.simulate(cfg, 50_000, seed=3, phase=0.5)
        c = mc.simulate(cfg, 50_000, seed=4, phase=0.5)
        assert a == b
        assert a != c

    def test_workers_do_not_change_output(self, monkeypatch):
        monkeypatch.setattr(mc, "CHUNK_PULSES", 4096)
        cfg = DeviceConfig(mean_pairs=0.1, loss_herald_db=3, loss_signal_db=3, jitter_ps=40)
        a = mc.simulate(cfg, 50_000, seed=1, phase=0.2, workers=1)
        b = mc.simulate(cfg, 50_000, seed=1, phase=0.2, workers=4)
        assert np.array_equal(a.channels, b.channels)
        assert np.array_equal(a.timestamps, b.timestamps)

    def test_chunking_does_not_change_output(self, monkeypatch):
        cfg = DeviceConfig(mean_pairs=0.1, loss_herald_db=3, loss_signal_db=3)
        a = mc.simulate(cfg, 30_000, seed=9, phase=1.0)
        monkeypatch.setattr(mc, "CHUNK_PULSES", 1000)
        b = mc.simulate(cfg, 30_000, seed=9, phase=1.0)
        assert a == b

    def test_timestamps_on_clock_grid(self):
        cfg = DeviceConfig(mean_pairs=0.1, loss_herald_db=3, loss_signal_db=3)
        s = mc.simulate(cfg, 20_000, seed=2)
        assert np.all(s.timestamps % cfg.clock_period_ps == 0)
        assert np.all(np.diff(s.timestamps) >= 0)
        assert s.metadata["n_pulses"] == "20000"

    def test_overflow_guard(self):
        with pytest.raises(OverflowError):
            mc.simulate(DeviceConfig(), 10**18, seed=0)

    def test_rejects_empty_run(self):
        with pytest.raises(ValueError):
            mc.simulate(DeviceConfig(), 0)

    def test_dead_time_removes_close_repeats(self):
        cfg = DeviceConfig.ideal(dead_time_pulses=2)
        s = mc.simulate(cfg, 100, seed=0, phase=0.0)
        # every channel fires each pulse; with dead time 2 only every third survives
        for code in range(4):
            t = s.timestamps[s.channels == code]
            assert np.all(np.diff(t) == 3 * cfg.clock_period_ps)

    def test_click_rate_matches_table(self):
        cfg = DeviceConfig()
        n = 1_000_000
        s = mc.simulate(cfg, n, seed=11, phase=0.0)
        p = mc.click_rates(cfg, 0.0)["D1"]
        got = np.count_nonzero(s.channels == 2) / n
        assert abs(got - p) < 4 * math.sqrt(p * (1 - p) / n)


class TestCounting:
    def test_count_run_matches_expectation(self):
        cfg = DeviceConfig(mean_pairs=0.1, loss_herald_db=3, loss_signal_db=3)
        n = 5_000_000
        c = mc.count_run(cfg, n, seed=5, phase=0.0, qualification="herald_same_pulse")
        exp = c.expected
        assert abs(c.fourfold - exp["fourfold"]) < 5 * math.sqrt(exp["fourfold"])
        for d, mean in exp["per_offset"].items():
            got = c.counts[c.offsets == d][0]
            assert abs(got - mean) < 5 * math.sqrt(mean) + 1

    def test_sweep_independent_of_workers(self):
        cfg = DeviceConfig(mean_pairs=0.1)
        a = mc.sweep(cfg, SWEEP[:4], 200_000, seed=1, workers=1)
        b = mc.sweep(cfg, SWEEP[:4], 200_000, seed=1, workers=3)
        assert a == b

    def test_relevant_patterns(self):
        # a pulse matters when it can start (D1 with both heralds) or stop (any D2)
        rel = set(mc.relevant_patterns("full_4fold").tolist())
        assert rel == {7, 15} | {p for p in range(16) if p & BIT_D2}
        rel = set(mc.relevant_patterns("single_source").tolist())
        assert rel == {5, 6, 7, 9, 13, 14, 15}
