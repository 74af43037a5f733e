"""Command-line entry point: ``rydberg-mixer <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import __version__, scenarios
from .config import parse_config
from .exceptions import ConfigurationError, NumericalError
from .linkbudget import far_field_distance
from .lockin import CONVENTIONS

log = logging.getLogger("rydberg_mixer")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = {
    "spectrum": "EIT/AT transmission spectra versus coupling detuning",
    "if-trace": "time-domain envelope and photodiode IF traces",
    "sweep-weakfield": "lock-in reading versus signal power with noise-floor flags",
    "isolation": "adjacent-channel leakage versus interferer ratio",
    "linkbudget": "field at the cell versus RF power",
    "calibrate": "fit the cell factor from calibration data",
    "calibrate-noise": "bisect the photodiode noise density to place the floor knee",
}


def _global_options(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", metavar="PATH", default=default(None),
                        help="flat 'section.key = value' config file")
    parser.add_argument("--seed", type=int, metavar="U64", default=default(None),
                        help="base seed for every noise stream")
    parser.add_argument("--out", metavar="DIR", default=default("out"),
                        help="directory for CSV outputs (default: ./out)")
    parser.add_argument("--reproducible", action="store_true", default=default(False),
                        help="omit the timestamp comment so reruns are byte-identical")
    parser.add_argument("--fc-convention", choices=CONVENTIONS, default=default(None),
                        help="label for the lock-in cutoff: 1/(2 pi tau) or 1/tau")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        default=default([]), help="override any config key (repeatable)")
    parser.add_argument("--transition", dest="transition", action="append", metavar="KEY=VALUE",
                        default=default([]), help="override a transition.* key (repeatable)")
    parser.add_argument("-v", "--verbose", action="count", default=default(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydberg-mixer",
        description="Rydberg-atom RF mixer simulator: regenerate detection-chain data as CSV.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subparsers = {}
    for name, text in COMMANDS.items():
        sp = sub.add_parser(name, help=text, description=text)
        _global_options(sp, suppress=True)
        subparsers[name] = sp
    subparsers["calibrate"].add_argument("--input", metavar="CSV",
                                         help="rows of p_rf_dbm,delta_f_hz or e_ff_vpm,e_cell_vpm")
    subparsers["calibrate-noise"].add_argument("--target", type=float, metavar="V_PER_M",
                                               help="field where the floor should sit")
    subparsers["sweep-weakfield"].add_argument("--jobs", type=int, metavar="N",
                                               help="worker processes for sweep points")
    subparsers["isolation"].add_argument("--jobs", type=int, metavar="N",
                                         help="worker processes for sweep points")
    return parser


def _resolve_config(args):
    overrides = list(args.overrides)
    for item in args.transition:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--transition expects KEY=VALUE, got {item!r}")
        key = key.strip()
        if not key.startswith("transition."):
            key = "transition." + key
        overrides.append(f"{key}={value}")
    extra = {"run.seed": args.seed, "lockin.fc_convention": args.fc_convention,
             "sim.jobs": getattr(args, "jobs", None)}
    return parse_config(args.config, overrides, extra)


def _fmt(x):
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.6g}"
    return str(x)


def _print_table(header, rows, stream=None):
    stream = stream or sys.stdout
    cells = [list(map(str, header))] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for row in cells:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)), file=stream)


def _run(args, cfg):
    out = Path(args.out)
    rep = args.reproducible
    cmd = args.command
    if cmd == "spectrum":
        res = scenarios.run_spectrum(cfg, out, rep)
        _print_table(("e_field_vpm", "n_peaks", "separation_hz"),
                     [(r["e_field_vpm"], len(r["peaks_hz"]), r["separation_hz"]) for r in res])
    elif cmd == "if-trace":
        res = scenarios.run_if_trace(cfg, out, rep)
        _print_table(("e_sig_vpm", "envelope_p2p_vpm", "fft_peak_hz"),
                     [(r["e_sig_vpm"], r["envelope_p2p_vpm"], r["fft_peak_hz"]) for r in res])
    elif cmd == "sweep-weakfield":
        res = scenarios.run_weak_field_sweep(cfg, out, rep)
        _print_table(res.columns[:4], [row[:4] for row in res.rows])
        print(f"knee E_cell = {_fmt(res.metadata['knee_e_vpm'])} V/m "
              f"(+/- {100 * res.metadata['knee_combined_rel_uncertainty']:.1f} %)")
    elif cmd == "isolation":
        res = scenarios.run_isolation_sweep(cfg, out, rep)
        _print_table(res.summary.columns, res.summary.rows)
    elif cmd == "linkbudget":
        res = scenarios.run_linkbudget(cfg, out, rep)
        _print_table(res.columns, res.rows)
        print(f"far-field distance 2a^2/lambda = {far_field_distance(cfg.link()):.4f} m")
    elif cmd == "calibrate":
        rec = scenarios.run_calibrate(cfg, args.input, out, rep)
        _print_table(tuple(rec), [tuple(rec.values())])
    elif cmd == "calibrate-noise":
        rec = scenarios.calibrate_noise(cfg, args.target, out=out, reproducible=rep)
        _print_table(tuple(rec), [tuple(rec.values())])
        print(f"set photodiode.noise_density = {rec['noise_density']!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        return _run(args, cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        # bad calibration input and similar user-supplied data problems
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
