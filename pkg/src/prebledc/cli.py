"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 threshold not reached or
training diverged (partial outputs are still written), 1 file I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    fingerprint,
    load_config,
    parse_override,
)
from .experiment import obtain_h_bl, prepare, run_single, run_spectrum_report, run_sweep
from .fir import TrainingError
from .io import export_taps, export_waveform, sweep_csv_text, write_sweep_csv
from .rxdsp import SCHEMES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_REACHED = 3
EXIT_IO = 1


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    p.add_argument("--out-dir", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="master seed (non-negative)")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config key, repeatable; applied after --config",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prebledc", description="Pre-compensation experiments on a simulated IM/DD link."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    p = sub.add_parser("simulate", parents=[common], help="one BER point")
    p.add_argument("--point", type=float, help="value of the sweep variable for this point")
    sub.add_parser("sweep", parents=[common], help="BER over the configured ROP or baud sweep")
    sub.add_parser("spectrum", parents=[common], help="PSDs of both pre-distortion schemes")
    sub.add_parser("phase1-train", parents=[common], help="train and export h_BL taps")
    p = sub.add_parser("export-waveform", parents=[common], help="write the transmit waveform")
    p.add_argument("--format", choices=("csv", "raw"), default="csv")
    return parser


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    for text in args.override:
        k, v = parse_override(text)
        overrides[k] = v
    cfg = load_config(args.config, overrides)
    extra = {}
    if args.out_dir is not None:
        extra["out_dir"] = args.out_dir
    if args.seed is not None:
        extra["seed"] = str(args.seed)
    if args.scheme is not None:
        extra["scheme"] = args.scheme
    return apply_overrides(cfg, extra)


def _cmd_simulate(cfg: ExperimentConfig, args) -> int:
    rec = run_single(cfg, args.point)
    path = Path(cfg.out_dir) / f"simulate_{cfg.scheme}.csv"
    meta = {"tool": "prebledc", "config_fingerprint": fingerprint(cfg), "seed": str(cfg.seed)}
    write_sweep_csv([rec], path, meta)
    sys.stdout.write(sweep_csv_text([rec], {}))
    return EXIT_OK if rec.status == "ok" else EXIT_NOT_REACHED


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    res = run_sweep(cfg)
    print(f"wrote {res.csv_path}")
    failed = [r for r in res.records if r.status != "ok"]
    if res.variable == "rop_dbm":
        if res.sensitivity_dbm is None:
            print(f"BER does not cross {cfg.fec_threshold:g} over the sweep", file=sys.stderr)
            return EXIT_NOT_REACHED
        print(f"sensitivity at {cfg.fec_threshold:g}: {res.sensitivity_dbm:.3f} dBm")
    if failed:
        print(f"{len(failed)} point(s) failed: {sorted({r.status for r in failed})}", file=sys.stderr)
        return EXIT_NOT_REACHED
    return EXIT_OK


def _cmd_spectrum(cfg: ExperimentConfig, args) -> int:
    rep = run_spectrum_report(cfg)
    for s, v in rep.high_band_fraction.items():
        print(f"{s}: high-band fraction {v:.4f}, rx dB-PSD variance {rep.rx_flatness_db2[s]:.3f}")
    for p in rep.paths:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_phase1(cfg: ExperimentConfig, args) -> int:
    h = obtain_h_bl(cfg)
    path = export_taps(h, Path(cfg.out_dir) / "h_bl.csv", fingerprint(cfg))
    print(f"wrote {path} ({len(h)} taps, delay {h.delay})")
    return EXIT_OK


def _cmd_export(cfg: ExperimentConfig, args) -> int:
    prep = prepare(cfg)
    path = Path(cfg.out_dir) / f"a_tx_{cfg.scheme}.{args.format}"
    export_waveform(prep.tx, path, args.format, fingerprint(cfg))
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "spectrum": _cmd_spectrum,
    "phase1-train": _cmd_phase1,
    "export-waveform": _cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg, args)
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_NOT_REACHED
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
