"""Command-line entry point: ``fdhap <experiment> [--config FILE] [--seed N] [--out DIR] [--trials N]``.

Each run writes one or more CSV tables plus ``report.json`` into the output
directory.  Exit status: 0 success, 2 configuration error, 3 infeasible
problem, 4 numerical failure.  ``FDHAP_THREADS`` sets the worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
import time
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (RateBoundInputs, downlink_rate_integral, downlink_rate_lower_bound,
                       uplink_rate_integral, uplink_rate_lower_bound, uplink_rate_lower_bound_icsi)
from .config import EXPERIMENTS, ExperimentConfig, validate_config
from .errors import ConfigurationError, FdhapError, InfeasibleError, NumericalError
from .montecarlo import (TrialPlan, default_workers, draw_batch, mc_link_rates, rate_region, scaling_experiment,
                         unbatch_estimate)
from .optimizer import optimize

__all__ = ["main", "run", "EXIT_OK", "EXIT_CONFIG", "EXIT_INFEASIBLE", "EXIT_NUMERICAL"]

log = logging.getLogger("fdhap")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4

# CSV schemas (column order is part of the interface)
BOUNDS_COLUMNS = ["link", "k", "mc_rate", "mc_se", "mc_large_n", "mc_large_n_se", "lower_bound", "integral",
                  "reference", "ok_flag", "seed"]
SCALING_COLUMNS = ["n_tx", "p_ap", "power_law", "e_ap", "mc_rate", "mc_se", "bound", "asymptote", "seed"]
REGION_COLUMNS = ["scheme", "r_ul_min", "ul_sum_rate", "dl_sum_rate", "n_feasible", "n_trials", "feasible",
                  "seed"]
REGION_TRIAL_COLUMNS = ["trial", "r_ul_min", "scheme", "alpha", "ul_sum_rate", "dl_sum_rate", "seed"]
OPTIMIZE_COLUMNS = ["alpha", "status", "sdr_dl_sum_rate", "sdr_ul_sum_rate", "dl_sum_rate", "ul_sum_rate",
                    "mrt_dl_sum_rate", "mrt_ul_sum_rate", "rank_one_gap", "iterations", "converged",
                    "r_ul_min", "seed"]


def _fmt(value):
    """Round-trip text for every cell so reruns give identical bytes."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: List[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _plan(cfg: ExperimentConfig, csi_mode: Optional[str] = None) -> TrialPlan:
    return TrialPlan(cfg.trials, cfg.seed, cfg.params, cfg.losses, csi_mode or cfg.csi_mode)


def _validate_bounds(cfg: ExperimentConfig, workers: int):
    p, seed = cfg.params, cfg.seed
    inputs = RateBoundInputs(p, cfg.losses)
    plan = _plan(cfg, "perfect")
    rows = []
    if p.k_ul:
        exact = mc_link_rates(plan, "uplink", "exact", workers)
        large = mc_link_rates(plan, "uplink", "large_n", workers)
        icsi = mc_link_rates(plan.replace(csi_mode="estimated"), "uplink", "exact", workers)
        for k in range(p.k_ul):
            lb = uplink_rate_lower_bound(inputs, k)
            ref = exact.per_node[k]
            rows.append(dict(link="uplink", k=k, mc_rate=ref.mean, mc_se=ref.std_error,
                             mc_large_n=large.per_node[k].mean, mc_large_n_se=large.per_node[k].std_error,
                             lower_bound=lb, integral=uplink_rate_integral(inputs, k), reference="exact",
                             ok_flag=bool(lb <= ref.mean + 3 * ref.std_error), seed=seed))
            lb = uplink_rate_lower_bound_icsi(inputs, k)
            ref = icsi.per_node[k]
            rows.append(dict(link="uplink_icsi", k=k, mc_rate=ref.mean, mc_se=ref.std_error,
                             mc_large_n=float("nan"), mc_large_n_se=float("nan"), lower_bound=lb,
                             integral=float("nan"), reference="exact",
                             ok_flag=bool(lb <= ref.mean + 3 * ref.std_error), seed=seed))
    if p.k_dl:
        exact = mc_link_rates(plan, "downlink", "exact", workers)
        large = mc_link_rates(plan, "downlink", "large_n", workers)
        for k in range(p.k_dl):
            lb = downlink_rate_lower_bound(inputs, k)
            ref = large.per_node[k]
            rows.append(dict(link="downlink", k=k, mc_rate=exact.per_node[k].mean,
                             mc_se=exact.per_node[k].std_error, mc_large_n=ref.mean, mc_large_n_se=ref.std_error,
                             lower_bound=lb, integral=downlink_rate_integral(inputs, k), reference="large_n",
                             ok_flag=bool(lb <= ref.mean + 3 * ref.std_error), seed=seed))
    diagnostics = {"all_ok": all(r["ok_flag"] for r in rows)}
    return {"bounds.csv": (BOUNDS_COLUMNS, rows)}, diagnostics, EXIT_OK


def _ul_rate_vs_antennas(cfg: ExperimentConfig, workers: int):
    table = scaling_experiment(_plan(cfg), cfg.n_tx_grid, cfg.e_ap, cfg.power_law, workers)
    rows = [dict(n_tx=r.n_tx, p_ap=r.p_ap, power_law=cfg.power_law, e_ap=cfg.e_ap, mc_rate=r.mc_rate,
                 mc_se=r.mc_std_error, bound=r.bound, asymptote=r.asymptote, seed=cfg.seed) for r in table]
    return {"scaling.csv": (SCALING_COLUMNS, rows)}, {}, EXIT_OK


def _rate_region(cfg: ExperimentConfig, workers: int):
    res = rate_region(_plan(cfg), cfg.r_ul_grid, cfg.alpha_grid, workers)

    def frontier(schemes):
        return [dict(scheme=pt.scheme, r_ul_min=pt.r_ul_min, ul_sum_rate=pt.ul_sum_rate,
                     dl_sum_rate=pt.dl_sum_rate, n_feasible=pt.n_feasible, n_trials=pt.n_trials,
                     feasible=pt.feasible, seed=cfg.seed) for pt in res.points if pt.scheme in schemes]

    per_trial = []
    for t in range(cfg.trials):
        for j, r in enumerate(res.r_ul_grid):
            for scheme in ("sdr", "recovered", "mrt_baseline"):
                per_trial.append(dict(trial=t, r_ul_min=float(r), scheme=scheme,
                                      alpha=res.alpha[scheme][t, j], ul_sum_rate=res.ul[scheme][t, j],
                                      dl_sum_rate=res.dl[scheme][t, j], seed=cfg.seed))
    statuses = [s for trial in res.statuses for s in trial]
    diagnostics = {"status_counts": {s: statuses.count(s) for s in sorted(set(statuses))}}
    tables = {
        "region_optimized.csv": (REGION_COLUMNS, frontier(("sdr", "recovered"))),
        "region_baseline.csv": (REGION_COLUMNS, frontier(("mrt_baseline",))),
        "region_trials.csv": (REGION_TRIAL_COLUMNS, per_trial),
    }
    return tables, diagnostics, EXIT_OK


def _optimize_once(cfg: ExperimentConfig, workers: int):
    plan = TrialPlan(1, cfg.seed, cfg.params, cfg.losses, cfg.csi_mode)
    channels, estimate = draw_batch(plan, [0])
    if estimate is not None:
        estimate = unbatch_estimate(estimate)
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(0, 1))))
    res = optimize(channels[0], cfg.params, cfg.alpha_grid, r_ul_min=cfg.r_ul_min, losses=cfg.losses,
                   estimate=estimate, rng=gen)
    rows = [dict(alpha=pt.alpha, status=pt.status, sdr_dl_sum_rate=pt.sdr_dl_sum_rate,
                 sdr_ul_sum_rate=pt.sdr_ul_sum_rate, dl_sum_rate=pt.dl_sum_rate, ul_sum_rate=pt.ul_sum_rate,
                 mrt_dl_sum_rate=pt.mrt_dl_sum_rate, mrt_ul_sum_rate=pt.mrt_ul_sum_rate,
                 rank_one_gap=pt.rank_one_gap, iterations=pt.iterations, converged=pt.converged,
                 r_ul_min=cfg.r_ul_min, seed=cfg.seed) for pt in res.points]
    diagnostics = {
        "status": res.status,
        "alpha_star": res.alpha_star,
        "dl_sum_rate": res.dl_sum_rate,
        "ul_sum_rate": res.ul_sum_rate,
        "sdr_dl_sum_rate": res.sdr_dl_sum_rate,
        "rank_one_gap": res.rank_one_gap,
        "sca_trace": list(res.sca_trace),
        "newton_iterations": int(sum(pt.newton_iterations for pt in res.points)),
        "w_e": None if res.w_e is None else {"real": np.real(res.w_e).tolist(), "imag": np.imag(res.w_e).tolist()},
    }
    code = EXIT_INFEASIBLE if res.status == "infeasible" else EXIT_OK
    return {"optimize_alpha.csv": (OPTIMIZE_COLUMNS, rows)}, diagnostics, code


RUNNERS = {
    "validate-bounds": _validate_bounds,
    "ul-rate-vs-antennas": _ul_rate_vs_antennas,
    "rate-region": _rate_region,
    "optimize-once": _optimize_once,
}


def artifact_version() -> str:
    """Package version, with the short commit hash when run from a checkout."""
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=os.path.dirname(__file__),
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> int:
    """Run one experiment, write its tables and report, return the exit code."""
    workers = default_workers() if workers is None else workers
    try:
        os.makedirs(cfg.output, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory: {exc}", "output") from None
    if not os.access(cfg.output, os.W_OK):
        raise ConfigurationError("output directory is not writable", "output")
    start = time.perf_counter()
    tables, diagnostics, code = RUNNERS[cfg.experiment](cfg, workers)
    elapsed = time.perf_counter() - start
    timings = {"total_s": elapsed}
    for name, (columns, rows) in tables.items():
        write_csv(os.path.join(cfg.output, name), columns, rows)
    report = {
        "experiment": cfg.experiment,
        "version": artifact_version(),
        "config": cfg.echo(),
        "workers": workers,
        "tables": {name: {"columns": cols, "rows": len(rows)} for name, (cols, rows) in tables.items()},
        "diagnostics": diagnostics,
        "timings": timings,
        "exit_code": code,
    }
    with open(os.path.join(cfg.output, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdhap", description="Full-duplex HAP rate experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--trials", type=int, help="number of Monte Carlo trials / realizations")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = validate_config(args.config, args.experiment, seed=args.seed, trials=args.trials, output=args.out)
        code = run(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FdhapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if code == EXIT_INFEASIBLE:
        print("infeasible: no alpha grid point meets the uplink constraint", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
