"""Command-line interface: ``tvsar {simulate,fit,spectrum,lps,diag}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from tvsar.archive import RUN_LOG, load_archive, save_archive
from tvsar.config import RunConfig, load_config
from tvsar.dataio import detrend_moving_average, read_series, write_series
from tvsar.dsp import OffsetPolicy
from tvsar.errors import InvalidArgument, NumericalFailure, StaleArchive
from tvsar.evaluation import (EXPERIMENTS, SpectralGrid, builtin_experiment, chain_ess,
                              grid_manifest, lps_one_step, mse_log_spectral, spectral_grid,
                              update_rate, write_grid_csv)
from tvsar.model import NoiseState, ParamPaths, log_spectral_density, simulate_tvsar
from tvsar.samplers import SamplerError, gibbs_run

log = logging.getLogger("tvsar")

DEFAULT_PROBE_TIMES = (100, 400, 800)
DEFAULT_PROBE_OMEGAS = (np.pi / 4, np.pi / 2, 3 * np.pi / 4)


def _omega_grid(cfg):
    return np.linspace(cfg["spectrum.omega_min"], np.pi, cfg["spectrum.n_omegas"])


def build_config(args):
    """Config file values, then command-line overrides."""
    values = load_config(args.config) if getattr(args, "config", None) else {}
    overrides = {
        "run.seed": getattr(args, "seed", None),
        "sampler.kind": getattr(args, "sampler", None),
        "sampler.particles": getattr(args, "particles", None),
        "sampler.draws": getattr(args, "draws", None),
        "sampler.burnin": getattr(args, "burnin", None),
        "sampler.thin": getattr(args, "thin", None),
        "data.detrend": getattr(args, "detrend", None),
    }
    if getattr(args, "offset", None) is not None:
        OffsetPolicy.parse(args.offset)
        overrides["dsp.offset"] = args.offset
    if getattr(args, "sv", False):
        overrides["noise.sv"] = True
    for key in ("seasons", "orders"):
        if getattr(args, key, None):
            overrides[f"model.{key}"] = tuple(int(v) for v in args.__dict__[key].split(","))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(values)


def _load_data(path, cfg):
    y, stamps = read_series(path)
    if cfg["data.detrend"]:
        y = detrend_moving_average(y, cfg["data.detrend"])
    return y, stamps


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    out = Path(args.out)
    if not out.is_dir():
        raise InvalidArgument(f"output directory {out} does not exist")
    spec = builtin_experiment(args.experiment, args.length)
    seeds = np.random.SeedSequence(args.seed).spawn(args.replicates)
    noise = NoiseState("static", spec.sigma)
    paths = ParamPaths(spec.theta, spec.structure)
    for i, ss in enumerate(seeds):
        y = simulate_tvsar(spec.structure, paths, noise, np.random.default_rng(ss))
        name = "y.csv" if args.replicates == 1 else f"y_{i + 1:03d}.csv"
        write_series(out / name, y)
    names = spec.structure.coefficient_names()
    with open(out / "truth_paths.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + names)
        for t, row in enumerate(spec.theta):
            w.writerow([t] + [f"{v:.17g}" for v in row])
    omegas = np.linspace(0.01, np.pi, args.n_omegas)
    lf = log_spectral_density(spec.structure, spec.theta[1:], spec.sigma, omegas)
    with open(out / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "omega", "log_f"])
        for t in range(spec.T):
            for j, om in enumerate(omegas):
                w.writerow([t + 1, f"{om:.17g}", f"{lf[t, j]:.17g}"])
    meta = {"experiment": spec.id, "T": spec.T, "seed": args.seed, "replicates": args.replicates,
            "structure": spec.structure.to_dict()}
    (out / "simulation.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.replicates} series of length {spec.T} to {out}")
    return 0


def cmd_fit(args):
    cfg = build_config(args)
    y, _ = _load_data(args.data, cfg)
    out = Path(args.out)

    def progress(i, total):
        if args.verbose and (i % 500 == 0 or i == total):
            print(f"iteration {i}/{total}", file=sys.stderr)

    draws = gibbs_run(y, cfg.structure, cfg.gibbs, progress)
    manifest = save_archive(draws, out, cfg)
    with open(out / RUN_LOG, "w") as fh:
        for rec in draws.run_log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": {k: round(v, 6) for k, v in draws.timings.items()}}) + "\n")
    print(f"stored {manifest['n_draws']} draws in {out}")
    return 0


def read_truth(path):
    """Long-format truth sidecar (t, omega, log_f) -> SpectralGrid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0]).astype(np.int64)
    omegas = np.unique(data[:, 1])
    if data.shape[0] != times.size * omegas.size:
        raise InvalidArgument(f"{path}: truth grid is not rectangular")
    order = np.lexsort((data[:, 1], data[:, 0]))
    vals = data[order, 2].reshape(times.size, omegas.size)
    return SpectralGrid(times, omegas, vals, vals, vals)


def cmd_spectrum(args):
    draws, manifest = load_archive(args.archive)
    cfg = RunConfig({k: tuple(v) if isinstance(v, list) else v for k, v in manifest["config"].items()})
    truth = read_truth(args.truth) if args.truth else None
    if truth is not None:
        common = np.intersect1d(truth.times, draws.times[1:])
        keep = np.isin(truth.times, common)
        truth = SpectralGrid(common, truth.omegas, truth.median[keep], truth.lower[keep],
                             truth.upper[keep])
        omegas, times = truth.omegas, common
    else:
        omegas, times = _omega_grid(cfg), None
    grid = spectral_grid(draws, times, omegas)
    write_grid_csv(grid, args.out)
    Path(str(args.out) + ".json").write_text(
        grid_manifest(grid, manifest["seed"], manifest["config_sha256"]) + "\n")
    if truth is not None:
        print(f"mse {mse_log_spectral(grid, truth):.10g}")
    else:
        print(f"wrote {grid.times.size} x {grid.omegas.size} grid to {args.out}")
    return 0


def parsimonious_choice(scores):
    """Best cell and the smallest model within 1 of it.

    ``scores`` maps (p, P) to LPS. Ties in size go to the higher score.
    """
    best = max(scores, key=scores.get)
    within = [k for k, v in scores.items() if v >= scores[best] - 1.0]
    pick = min(within, key=lambda k: (sum(k), -scores[k]))
    return best, pick


def cmd_lps(args):
    cfg = build_config(args)
    y, _ = _load_data(args.data, cfg)
    split = args.split if args.split is not None else cfg["lps.split"]
    if not split:
        split = y.size - 120
    seasons = cfg["model.seasons"]
    regular = cfg["lps.regular"] or (cfg["model.orders"][0],)
    seasonal = cfg["lps.seasonal"] or ((cfg["model.orders"][1],) if len(seasons) > 1 else (0,))
    if args.regular:
        regular = tuple(int(v) for v in args.regular.split(","))
    if args.seasonal:
        seasonal = tuple(int(v) for v in args.seasonal.split(","))
    if len(seasons) != 2:
        raise InvalidArgument("the LPS grid needs exactly one regular and one seasonal period")
    scores = {}
    for p in regular:
        for P in seasonal:
            sub = cfg.with_orders((p, P))
            scores[(p, P)] = lps_one_step(y, split, sub.structure, sub.gibbs,
                                          refit_every=cfg["lps.refit_every"])
    best, pick = parsimonious_choice(scores)
    if len(scores) == 1:
        print(f"{next(iter(scores.values())):.6f}")
    else:
        print("p\\P " + " ".join(f"{P:>12d}" for P in seasonal))
        for p in regular:
            cells = []
            for P in seasonal:
                mark = ("*" if (p, P) == best else "") + ("+" if (p, P) == pick else "")
                cells.append(f"{scores[(p, P)]:>10.2f}{mark:<2}")
            print(f"{p:<4}" + " ".join(cells))
        print("* highest LPS, + smallest model within 1 of the highest")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "P", "lps", "best", "parsimonious"])
            for (p, P), v in scores.items():
                w.writerow([p, P, f"{v:.17g}", int((p, P) == best), int((p, P) == pick)])
    return 0


def diag_report(archives, probe_times=DEFAULT_PROBE_TIMES, probe_omegas=DEFAULT_PROBE_OMEGAS):
    """Update rates, spectral ESS at probe points, and cross-run median spread."""
    reports = []
    medians = []
    for path in archives:
        draws, manifest = load_archive(path)
        names = draws.structure.coefficient_names()
        rates = {n: float(draws.update_rates[1:, k].mean()) for k, n in enumerate(names)}
        times = [t for t in probe_times if draws.times[1] <= t <= draws.times[-1]]
        ess = {}
        if times and draws.n_draws >= 10:
            grid = spectral_grid(draws, times, np.asarray(probe_omegas), keep_values=True)
            for i, t in enumerate(times):
                for j, om in enumerate(probe_omegas):
                    e = chain_ess(grid.values[:, i, j])
                    ess[f"t={t},omega={om:.4f}"] = {"ess": round(e.value, 3),
                                                    "zero_variance": e.zero_variance}
        stored_rates = {n: update_rate(draws.theta[:, 1:, k]) for k, n in enumerate(names)} \
            if draws.n_draws >= 2 else {}
        reports.append({
            "archive": str(path),
            "seed": manifest["seed"],
            "update_rate_mean": rates,
            "update_rate_flagged": [n for n, v in rates.items() if v == 0.0],
            "stored_update_rate": stored_rates,
            "spectral_ess": ess,
            "degenerate_events": manifest["degenerate_events"],
        })
        medians.append(np.median(draws.phi(), axis=0))
    out = {"runs": reports}
    if len(medians) > 1 and all(m.shape == medians[0].shape for m in medians):
        stack = np.stack(medians)
        spread = stack.max(axis=0) - stack.min(axis=0)
        out["median_spread_max"] = dict(zip(reports[0]["update_rate_mean"],
                                            map(float, spread.max(axis=0))))
    return out


def cmd_diag(args):
    times = tuple(int(v) for v in args.times.split(",")) if args.times else DEFAULT_PROBE_TIMES
    omegas = tuple(float(v) for v in args.omegas.split(",")) if args.omegas else DEFAULT_PROBE_OMEGAS
    report = diag_report(args.archive, times, omegas)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _add_model_flags(p):
    p.add_argument("--config", help="flat 'section.key = value' file")
    p.add_argument("--seed", type=int)
    p.add_argument("--seasons", help="comma-separated seasonal periods, e.g. 1,12")
    p.add_argument("--orders", help="comma-separated lag orders, e.g. 2,2")
    p.add_argument("--sampler", choices=("ffbsx", "pgas"))
    p.add_argument("--particles", type=int)
    p.add_argument("--offset", help="fixed:<x> or dsp")
    p.add_argument("--draws", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--sv", action="store_true", help="stochastic volatility noise")
    p.add_argument("--detrend", type=int, metavar="WINDOW")


def build_parser():
    parser = argparse.ArgumentParser(prog="tvsar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a built-in design")
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--n-omegas", type=int, default=314)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler and write a draws archive")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("spectrum", help="posterior log spectral density grid")
    p.add_argument("archive")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="truth sidecar written by 'simulate'")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("lps", help="log predictive scores over an order grid")
    p.add_argument("data")
    p.add_argument("--split", type=int)
    p.add_argument("--regular", help="comma-separated regular orders")
    p.add_argument("--seasonal", help="comma-separated seasonal orders")
    p.add_argument("--out")
    _add_model_flags(p)
    p.set_defaults(func=cmd_lps)

    p = sub.add_parser("diag", help="update rates, ESS and cross-run comparison")
    p.add_argument("archive", nargs="+")
    p.add_argument("--times", help="comma-separated probe times")
    p.add_argument("--omegas", help="comma-separated probe frequencies")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidArgument, StaleArchive, SamplerError, NumericalFailure, OSError) as exc:
        print(f"tvsar {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
