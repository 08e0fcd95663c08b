"""Command-line interface.

Every failure prints a single line ``error: <code>: <message>`` to stderr and
exits non-zero. Commands that write files also write a JSON run manifest.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, calibration, chip, fock, fringe, montecarlo, tdc
from .chip import DeviceConfig
from .config import ConfigError, load_config
from .tags import QUALIFICATIONS

CONFIG_ENV = "NOONCHIP_CONFIG"
SWEEP_HEADER = "phase_rad,fourfold,delayed"

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


@dataclass
class RunManifest:
    """What a command read, wrote and how to repeat it."""

    command: str
    argv: list
    config_path: str | None
    seed: int | None
    outputs: list = field(default_factory=list)
    version: str = __version__
    duration_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


# ---------------------------------------------------------------- helpers


def _load(args):
    """Device configuration and extras from --config / the environment / --ideal."""
    base = DeviceConfig.ideal() if getattr(args, "ideal", False) else DeviceConfig()
    path = args.config or os.environ.get(CONFIG_ENV) or None
    extras = {}
    config = base
    if path:
        try:
            config, extras = load_config(path, base)
        except ConfigError as exc:
            raise CliError("config", str(exc)) from None
    if getattr(args, "seed", None) is not None:
        config = config.replace(seed=args.seed)
    return config, extras, path


def _calibration_for(args, extras):
    path = getattr(args, "calibration", None) or extras.get("run.calibration")
    if not path:
        raise CliError("calibration", "voltage mode needs a calibration (--calibration or run.calibration)")
    try:
        return calibration.read_calibration(path)
    except (OSError, calibration.CalibrationError) as exc:
        raise CliError("calibration", f"cannot use calibration {path}: {exc}") from None


def _resolve_phase(args, config, extras) -> float:
    """Interferometer phase from --phase, --voltage, or the config."""
    phase = getattr(args, "phase", None)
    voltage = getattr(args, "voltage", None)
    if phase is not None:
        return float(phase)
    if voltage is None and config.phase_rad is not None and config.voltage_v is None:
        return float(config.phase_rad)
    if voltage is None:
        voltage = config.voltage_v
    if voltage is None:
        raise CliError("config", "no interferometer setting: give --phase or --voltage")
    curve = _calibration_for(args, extras)
    try:
        return float(calibration.phase_from_voltage(curve, voltage))
    except calibration.CalibrationError as exc:
        raise CliError("calibration", str(exc)) from None


def _write_manifest(args, manifest: RunManifest, start: float):
    manifest.duration_s = round(time.perf_counter() - start, 6)
    path = args.manifest
    if path is None and manifest.outputs:
        path = manifest.outputs[0] + ".manifest.json"
    if path:
        Path(path).write_text(manifest.to_json() + "\n", encoding="utf-8")


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_state(args, argv):
    config, extras, _ = _load(args)
    if not args.config and not os.environ.get(CONFIG_ENV):
        config = DeviceConfig.ideal()
    phase = _resolve_phase(args, config, extras)
    try:
        res = chip.heralded_output_state(phase, config)
    except fock.ImpossibleHeralding as exc:
        raise CliError("physics", str(exc)) from None
    probs = res.probabilities()
    report = {
        "phase_rad": phase,
        "P11": probs.get((1, 1), 0.0),
        "P20": probs.get((2, 0), 0.0),
        "P02": probs.get((0, 2), 0.0),
        "herald_probability": res.herald_probability,
        "fidelity_noon": fock.fidelity(res.state, chip.noon_state(res.state.cutoff)),
        "fidelity_product": fock.fidelity(res.state, chip.product_state(res.state.cutoff)),
    }
    if args.voltage is not None:
        report["voltage_v"] = args.voltage
    _emit(report)
    return None


def cmd_run(args, argv):
    config, extras, path = _load(args)
    phase = _resolve_phase(args, config, extras)
    stream = montecarlo.simulate(config, args.pulses, seed=config.seed, phase=phase, workers=args.workers)
    tdc.write_tags(stream, args.out)
    _emit({"records": len(stream), "fourfold": tdc.fourfold_counts(stream), "out": args.out})
    return RunManifest("run", argv, path, config.seed, [args.out])


def cmd_histogram(args, argv):
    try:
        stream = tdc.read_tags(args.tags)
    except OSError as exc:
        raise CliError("io", f"cannot read {args.tags}: {exc.strerror}") from None
    except tdc.TagFormatError as exc:
        raise CliError("input", f"{args.tags}: {exc}") from None
    try:
        hist = tdc.delay_histogram(stream, args.qualification, args.bin_width, args.max_offset)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    tdc.write_histogram(hist, args.out)
    _emit(
        {
            "bin_width_ps": hist.bin_width,
            "qualification": hist.qualification,
            "peaks": {str(n): c for n, c in hist.peaks},
            "fourfold": tdc.fourfold_counts(stream),
            "out": args.out,
        }
    )
    return RunManifest("histogram", argv, None, None, [args.out])


def cmd_sweep(args, argv):
    config, extras, path = _load(args)
    if args.points < 2:
        raise CliError("usage", "--points must be >= 2")
    phases = np.linspace(0.0, 2.0 * math.pi, args.points)
    points = montecarlo.sweep(
        config, phases, args.pulses, seed=config.seed,
        delayed_qualification=args.qualification, workers=args.workers,
    )
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for p in points:
            fh.write(f"{p.phase!r},{p.fourfold},{p.delayed}\n")
    _emit({"points": len(points), "max_fourfold": max(p.fourfold for p in points), "out": args.out})
    return RunManifest("sweep", argv, path, config.seed, [args.out])


def _read_sweep(path):
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            rows = [line.strip().split(",") for line in fh if line.strip() and not line.startswith("#")]
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from None
    if "phase_rad" not in header:
        raise CliError("input", f"{path}: needs a phase_rad column")
    try:
        cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    except (ValueError, IndexError):
        raise CliError("input", f"{path}: malformed numeric row") from None
    return cols


def cmd_fit(args, argv):
    cols = _read_sweep(args.input)
    column = args.column or ("fourfold" if args.kind == fringe.DOUBLE else "delayed")
    if column not in cols:
        raise CliError("input", f"{args.input}: no column {column!r}")
    try:
        res = fringe.fit_fringe(cols["phase_rad"], cols[column], args.kind)
    except fringe.FitError as exc:
        raise CliError("fit", str(exc)) from None
    text = res.to_json()
    sys.stdout.write(text + "\n")
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        return RunManifest("fit", argv, None, None, [args.out])
    return None


def cmd_calibrate(args, argv):
    if args.demo:
        v, c = calibration.demo_scan(seed=args.seed)
        label = calibration.DEMO_LABEL
    else:
        if not args.scan:
            raise CliError("usage", "calibrate needs --scan FILE or --demo")
        try:
            v, c = calibration.read_scan(args.scan)
        except OSError as exc:
            raise CliError("io", f"cannot read {args.scan}: {exc.strerror}") from None
        except calibration.CalibrationError as exc:
            raise CliError("input", str(exc)) from None
        label = ""
    try:
        curve = calibration.fit_calibration(v, c, label=label)
        points = calibration.working_points(curve)
    except calibration.CalibrationError as exc:
        raise CliError("calibration", str(exc)) from None
    calibration.write_calibration(curve, args.out)
    report = dict(points)
    report.update({"amplitude": curve.amplitude, "visibility": curve.visibility, "out": args.out})
    if label:
        report["label"] = label
    _emit(report)
    return RunManifest("calibrate", argv, None, args.seed if args.demo else None, [args.out])


def cmd_rerun(args, argv):
    try:
        manifest = RunManifest.read(args.manifest_file)
    except (OSError, ValueError, TypeError) as exc:
        raise CliError("input", f"cannot read manifest {args.manifest_file}: {exc}") from None
    return run(manifest.argv)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noonchip", description="Heralded two-photon chip simulator and analysis tools.")
    parser.add_argument("--version", action="version", version=f"noonchip {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--config", help=f"config file (default: ${CONFIG_ENV})")
        p.add_argument("--ideal", action="store_true", help="start from the lossless one-pair-per-source device")
        if seed:
            p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
        p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")

    def setting(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--phase", type=float, help="interferometer phase in rad")
        g.add_argument("--voltage", type=float, help="heater voltage; needs a calibration")
        p.add_argument("--calibration", help="calibration CSV (voltage_v,phase_rad)")

    p = sub.add_parser("state", help="heralded output state at one setting")
    common(p, seed=False)
    setting(p)
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("run", help="simulate a time-tag stream")
    common(p)
    setting(p)
    p.add_argument("--pulses", type=int, required=True)
    p.add_argument("--out", required=True, help="tag file to write")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("histogram", help="start/stop delay histogram of a tag file")
    p.add_argument("--tags", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--qualification", choices=sorted(QUALIFICATIONS), default="herald_same_pulse")
    p.add_argument("--bin-width", type=int, help="bin width in ps (default: divisor of the clock period near 100 ps)")
    p.add_argument("--max-offset", type=int, default=tdc.DEFAULT_MAX_OFFSET, help="clock periods each side")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("sweep", help="Monte Carlo phase sweep of fourfold and delayed-peak counts")
    common(p)
    p.add_argument("--points", type=int, default=13)
    p.add_argument("--pulses", type=int, required=True, help="pulses per phase point")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--qualification", choices=sorted(QUALIFICATIONS), default="single_source",
                   help="rule for the delayed-peak column")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit a fringe to a sweep CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=sorted(fringe.KINDS), required=True)
    p.add_argument("--column", help="count column (default: fourfold for double, delayed for single)")
    p.add_argument("--out", help="write the JSON report here as well")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="voltage-to-phase calibration from a fringe scan")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scan", help="CSV with header voltage_v,counts")
    src.add_argument("--demo", action="store_true", help="use a synthetic scan (labelled as such)")
    p.add_argument("--seed", type=int, default=0, help="noise seed for --demo")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_rerun)
    return parser


def run(argv) -> int:
    """Execute one command; raises CliError on failure."""
    argv = list(argv)
    args = build_parser().parse_args(argv)
    if not getattr(args, "func", None):
        raise CliError("usage", "no command given (try --help)")
    start = time.perf_counter()
    manifest = args.func(args, argv)
    if isinstance(manifest, RunManifest):
        _write_manifest(args, manifest, start)
    return 0


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except CliError as exc:
        sys.stderr.write(f"error: {exc.code}: {_one_line(exc)}\n")
        return EXIT_USAGE if exc.code == "usage" else EXIT_FAILURE
    except (ValueError, OverflowError) as exc:
        sys.stderr.write(f"error: invalid: {_one_line(exc)}\n")
        return EXIT_FAILURE
    except OSError as exc:
        sys.stderr.write(f"error: io: {_one_line(exc)}\n")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
