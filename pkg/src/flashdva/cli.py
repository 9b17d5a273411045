"""Command-line interface.

Subcommands: run a config file, run a built-in preset, compute one-shot
mutual information for a mixture, fit a histogram CSV, or plot a records
CSV.  Failures print a single ``error: <message>`` line on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import parse_config
from .estimation import empirical_quantile_means, lm_fit
from .harness import emit_csv, read_csv, run_experiment
from .info import GaussianMixtureModel, hermite_rule, mutual_information_gh
from .plotting import PLOT_KINDS, emit_plot
from .presets import PRESET_HASHES, build_preset, preset_names

_PROG = "flashdva"


def _float_list(text: str, expect: int | None = None) -> np.ndarray:
    values = np.array([float(v) for v in text.split(",")], dtype=float)
    if expect is not None and values.size != expect:
        raise ValueError(f"expected {expect} comma-separated values")
    return values


def _progress_printer(verbose: bool):
    if not verbose:
        return None

    def show(rec):
        bits = []
        for parity in ("even", "odd"):
            r = rec.parities[parity]
            bits.append(f"{parity}: mi={r.mi_true:.4f} a={r.alpha:.4f} "
                        f"ber={r.ber:.3g}")
        print(f"cycle {rec.cycle:>6d}  " + "   ".join(bits))

    return show


def _emit_outputs(result, csv_path: str, plot_prefix: str) -> None:
    emit_csv(result.records, csv_path)
    print(f"records: {csv_path}")
    if plot_prefix:
        for kind in PLOT_KINDS:
            path = f"{plot_prefix}-{kind}.svg"
            emit_plot(result.records, kind, path,
                      title=result.config.name,
                      target_mi=result.config.target_mi,
                      margin_mi=result.config.margin_mi)
            print(f"plot: {path}")


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        cfg = parse_config(fh.read(), preset_lookup=build_preset)
    result = run_experiment(cfg, progress=_progress_printer(args.verbose))
    csv_path = cfg.csv_path or f"{cfg.name}-records.csv"
    _emit_outputs(result, csv_path, cfg.plot_path)
    print(json.dumps(result.summary))
    return 0


def _cmd_preset(args) -> int:
    if args.list:
        for name in preset_names():
            print(f"{name}  {PRESET_HASHES.get(name, '(hash unpinned)')}")
        return 0
    if not args.name:
        raise ValueError("preset name required (or use --list)")
    cfg = build_preset(args.name, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    result = run_experiment(cfg, progress=_progress_printer(args.verbose))
    base = os.path.join(args.out, cfg.name)
    _emit_outputs(result, f"{base}-records.csv", base)
    print(json.dumps(result.summary))
    return 0


def _cmd_mi(args) -> int:
    means = _float_list(args.means, 4)
    sigmas = _float_list(args.sigmas, 4)
    rule = hermite_rule(args.order)
    value = mutual_information_gh(GaussianMixtureModel(means, sigmas), rule)
    print("%.9g" % value)
    return 0


def _read_histogram_csv(path: str):
    rows = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, rest = line.partition(",")
            rows[key.strip()] = _float_list(rest)
    if "boundaries" not in rows or "counts" not in rows:
        raise ValueError("histogram CSV needs 'boundaries' and 'counts' rows")
    return rows


def _default_init(boundaries: np.ndarray,
                  counts: np.ndarray) -> GaussianMixtureModel:
    """Crude moment start: means at the empirical octile quantiles."""
    means = empirical_quantile_means(counts, boundaries)
    sigmas = np.maximum(np.diff(means, prepend=means[0] - 0.5) / 6.0, 0.02)
    return GaussianMixtureModel(means, sigmas)


def _cmd_fit(args) -> int:
    rows = _read_histogram_csv(args.histogram)
    boundaries = rows["boundaries"]
    counts = rows["counts"]
    if counts.size != boundaries.size + 1:
        raise ValueError("need one more count than boundaries")
    if "init_means" in rows and "init_sigmas" in rows:
        init = GaussianMixtureModel(rows["init_means"], rows["init_sigmas"])
    else:
        init = _default_init(boundaries, counts)
    model, report = lm_fit(counts, boundaries, init)
    print(json.dumps({
        "means": [float(m) for m in model.means],
        "sigmas": [float(s) for s in model.sigmas],
        "iterations": report.iterations,
        "residual": report.residual,
        "flag": report.flag,
        "swapped": report.swapped,
    }))
    return 0


def _cmd_plot(args) -> int:
    records = read_csv(args.records)
    out = args.out or f"{os.path.splitext(args.records)[0]}-{args.kind}.svg"
    emit_plot(records, args.kind, out)
    print(f"plot: {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=_PROG,
        description="Flash read-channel simulator with adaptive write "
                    "scaling and read thresholds")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config file")
    p_run.add_argument("config")
    p_run.add_argument("--verbose", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_pre = sub.add_parser("preset", help="run a built-in preset")
    p_pre.add_argument("name", nargs="?")
    p_pre.add_argument("--seed", type=int, default=None)
    p_pre.add_argument("--out", default=".")
    p_pre.add_argument("--list", action="store_true",
                       help="list preset names and hashes")
    p_pre.add_argument("--verbose", action="store_true")
    p_pre.set_defaults(fn=_cmd_preset)

    p_mi = sub.add_parser("mi", help="one-shot mixture mutual information")
    p_mi.add_argument("means", help="4 comma-separated means")
    p_mi.add_argument("sigmas", help="4 comma-separated sigmas")
    p_mi.add_argument("--order", type=int, default=32)
    p_mi.set_defaults(fn=_cmd_mi)

    p_fit = sub.add_parser("fit", help="fit a histogram CSV")
    p_fit.add_argument("histogram")
    p_fit.set_defaults(fn=_cmd_fit)

    p_plot = sub.add_parser("plot", help="plot a records CSV")
    p_plot.add_argument("records")
    p_plot.add_argument("kind", choices=PLOT_KINDS)
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(fn=_cmd_plot)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
