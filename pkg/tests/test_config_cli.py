import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noonchip import __version__, calibration
from noonchip.chip import DeviceConfig
from noonchip.cli import CONFIG_ENV, RunManifest, main
from noonchip.config import ConfigError, config_from_mapping, dump_config, parse_config


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    monkeypatch.chdir(tmp_path)


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


configs = st.builds(
    DeviceConfig,
    pump_rep_rate=st.floats(1e6, 1e9),
    mean_pairs=st.floats(1e-4, 1.0),
    pair_statistics=st.sampled_from(["thermal", "poissonian", "fixed"]),
    fixed_pairs=st.tuples(st.integers(0, 2), st.integers(0, 2)),
    pump_asymmetry=st.floats(-0.9, 0.9),
    wdm_extinction_db=st.one_of(st.floats(0, 60), st.just(math.inf)),
    loss_herald_db=st.one_of(st.floats(0, 30), st.lists(st.floats(0, 10), min_size=1, max_size=3).map(tuple)),
    loss_signal_db=st.floats(0, 30),
    dark_count_prob=st.floats(0, 1e-2),
    dead_time_pulses=st.integers(0, 5),
    jitter_ps=st.floats(0, 500),
    mode_overlap=st.floats(0, 1),
    phase_rad=st.floats(-10, 10),
    cutoff=st.integers(2, 6),
    convention=st.sampled_from(["symmetric", "real"]),
    multiphoton_routing=st.sampled_from(["distinguishable", "exact"]),
    seed=st.integers(0, 2**62),
)


class TestConfig:
    @settings(max_examples=80, deadline=None)
    @given(configs)
    def test_round_trip(self, cfg):
        text = dump_config(cfg)
        back, extras = parse_config(text)
        assert back == cfg
        assert extras == {}
        assert dump_config(back) == text

    def test_voltage_and_calibration(self):
        cfg, extras = parse_config('chip.voltage_v = 10.0\nrun.calibration = "cal.csv"\n')
        assert cfg.voltage_v == 10.0 and cfg.phase_rad is None
        assert extras == {"run.calibration": "cal.csv"}
        again, extras2 = parse_config(dump_config(cfg, extras))
        assert again == cfg and extras2 == extras

    def test_sections_and_dotted_keys_agree(self):
        a, _ = parse_config("[loss]\nherald_db = 3.0\n[source]\nmean_pairs = 0.05\n")
        b, _ = parse_config("loss.herald_db = 3.0\nsource.mean_pairs = 0.05\n")
        assert a == b

    def test_unknown_keys_listed(self):
        with pytest.raises(ConfigError) as info:
            parse_config("chip.bogus = 1\nsource.mean_pair = 0.1\n")
        assert info.value.keys == ("chip.bogus", "source.mean_pair")
        assert "chip.bogus" in str(info.value)

    @pytest.mark.parametrize(
        "text,key",
        [
            ('source.mean_pairs = "a lot"', "source.mean_pairs"),
            ("chip.cutoff = 2.5", "chip.cutoff"),
            ("source.fixed_pairs = [1]", "source.fixed_pairs"),
            ("chip.mode_overlap = 1.5", "chip.mode_overlap"),
            ("run.calibration = 3", "run.calibration"),
        ],
    )
    def test_bad_values_name_key(self, text, key):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert key in info.value.keys

    def test_syntax_error(self):
        with pytest.raises(ConfigError, match="syntax"):
            parse_config("chip.cutoff = = 3")

    def test_base_is_kept(self):
        cfg, _ = config_from_mapping({"run.seed": 5}, DeviceConfig.ideal())
        assert cfg == DeviceConfig.ideal(seed=5)


class TestState:
    def test_noon_point(self, capsys):
        code, out, _ = cli(capsys, "state", "--phase", "1.5708")
        assert code == 0
        rep = json.loads(out)
        assert round(rep["fidelity_noon"], 3) == 1.0
        assert rep["P11"] < 1e-8

    def test_product_point(self, capsys):
        code, out, _ = cli(capsys, "state", "--phase", "0")
        rep = json.loads(out)
        assert code == 0 and rep["fidelity_product"] == pytest.approx(1.0)

    def test_voltage_with_calibration(self, capsys, tmp_path):
        calibration.write_calibration(calibration.demo_calibration(), tmp_path / "cal.csv")
        code, out, _ = cli(capsys, "state", "--voltage", "10", "--calibration", "cal.csv")
        assert code == 0
        assert json.loads(out)["fidelity_noon"] == pytest.approx(1.0, abs=1e-5)

    def test_voltage_without_calibration(self, capsys):
        code, _, err = cli(capsys, "state", "--voltage", "10")
        assert code == 1
        assert err.startswith("error: calibration:")
        assert err.count("\n") == 1

    def test_voltage_out_of_range(self, capsys, tmp_path):
        calibration.write_calibration(calibration.demo_calibration(), tmp_path / "cal.csv")
        code, _, err = cli(capsys, "state", "--voltage", "50", "--calibration", "cal.csv")
        assert code == 1 and "calibration" in err

    def test_config_from_environment(self, capsys, monkeypatch, tmp_path):
        (tmp_path / "c.toml").write_text("chip.bogus = 1\n")
        monkeypatch.setenv(CONFIG_ENV, str(tmp_path / "c.toml"))
        code, _, err = cli(capsys, "state", "--phase", "0")
        assert code == 1
        assert err == "error: config: unknown config key(s): chip.bogus\n"


class TestPipeline:
    def test_sweep_then_fit(self, capsys):
        code, _, _ = cli(capsys, "sweep", "--ideal", "--points", "13", "--pulses", "100000", "--out", "s.csv")
        assert code == 0
        code, out, _ = cli(capsys, "fit", "--input", "s.csv", "--kind", "double", "--out", "fit.json")
        assert code == 0
        assert json.loads(out)["V"] >= 0.99
        assert json.loads(open("fit.json").read())["kind"] == "double"

    def test_sweep_grid(self, capsys):
        cli(capsys, "sweep", "--ideal", "--points", "5", "--pulses", "10", "--out", "s.csv")
        lines = open("s.csv").read().splitlines()
        assert lines[0] == "phase_rad,fourfold,delayed"
        phases = [float(l.split(",")[0]) for l in lines[1:]]
        np.testing.assert_allclose(phases, np.linspace(0, 2 * math.pi, 5))

    def test_run_histogram(self, capsys):
        code, out, _ = cli(capsys, "run", "--ideal", "--phase", "4.712389", "--pulses", "20000", "--out", "t.csv")
        assert code == 0
        assert json.loads(out)["fourfold"] == 0
        code, out, _ = cli(capsys, "histogram", "--tags", "t.csv", "--out", "h.csv", "--qualification", "full_4fold")
        rep = json.loads(out)
        assert code == 0
        assert rep["bin_width_ps"] == 102
        assert rep["peaks"]["0"] == 0
        assert all(rep["peaks"][str(n)] > 0 for n in range(1, 9))

    def test_histogram_bad_bin(self, capsys):
        cli(capsys, "run", "--ideal", "--phase", "0", "--pulses", "10", "--out", "t.csv")
        code, _, err = cli(capsys, "histogram", "--tags", "t.csv", "--out", "h.csv", "--bin-width", "100")
        assert code == 1 and err.startswith("error: input:")

    def test_histogram_bad_tags(self, capsys, tmp_path):
        (tmp_path / "t.csv").write_text("# clock_period_ps=100\nchannel,timestamp_ps\nX9,1\n")
        code, _, err = cli(capsys, "histogram", "--tags", "t.csv", "--out", "h.csv")
        assert code == 1 and "line 3" in err

    def test_calibrate_demo(self, capsys):
        code, out, _ = cli(capsys, "calibrate", "--demo", "--out", "cal.csv")
        rep = json.loads(out)
        assert code == 0
        assert abs(rep["V_product"]) < 0.5 and abs(rep["V_noon"] - 10) < 0.5
        assert "synthetic" in rep["label"]
        assert calibration.read_calibration("cal.csv").label == calibration.DEMO_LABEL

    def test_calibrate_scan_file(self, capsys):
        v, c = calibration.demo_scan(41, 20.0, seed=1)
        calibration.write_scan(v, c, "scan.csv")
        code, out, _ = cli(capsys, "calibrate", "--scan", "scan.csv", "--out", "cal.csv")
        assert code == 0

    def test_calibrate_flat_scan(self, capsys):
        calibration.write_scan(np.arange(10.0), np.full(10, 100), "scan.csv")
        code, _, err = cli(capsys, "calibrate", "--scan", "scan.csv", "--out", "cal.csv")
        assert code == 1 and "no modulation" in err


class TestDeterminism:
    def test_manifest_and_rerun(self, capsys):
        cli(capsys, "run", "--phase", "0.3", "--pulses", "200000", "--seed", "7", "--out", "a.csv")
        m = RunManifest.read("a.csv.manifest.json")
        assert m.outputs == ["a.csv"] and m.seed == 7 and m.version == __version__
        first = open("a.csv", "rb").read()
        assert cli(capsys, "rerun", "a.csv.manifest.json")[0] == 0
        assert open("a.csv", "rb").read() == first

    @pytest.mark.parametrize("workers", ["2", "4"])
    def test_sweep_workers(self, capsys, workers):
        base = ["sweep", "--points", "6", "--pulses", "2000000", "--seed", "3"]
        cli(capsys, *base, "--out", "one.csv", "--workers", "1")
        cli(capsys, *base, "--out", "many.csv", "--workers", workers)
        assert open("one.csv", "rb").read() == open("many.csv", "rb").read()


class TestInterface:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert capsys.readouterr().out.strip() == f"noonchip {__version__}"

    def test_usage_error(self, capsys):
        code, _, err = cli(capsys, "sweep", "--points", "13")
        assert code == 2
        assert err.startswith("error: usage:")

    def test_no_command(self, capsys):
        assert cli(capsys)[0] == 2

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run(
            [sys.executable, "-m", "noonchip.cli", "state", "--phase", "0"],
            capture_output=True, text=True, cwd=tmp_path, timeout=60,
        )
        assert res.returncode == 0
        assert json.loads(res.stdout)["P11"] == pytest.approx(1.0)
