"""Command-line driver for the CPPI / VBPI experiment matrix.

Exit codes: 0 success, 1 configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, InfeasibleFloorError, NoInitialCushionError, NumericFailureError
from .harness import SimulationPlan, build_distributions, matched_pair, run
from .metrics import MetricsReport
from .retdist import write_distribution_csv

logger = logging.getLogger("regime_insurance")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _cl_label(cl: float) -> str:
    return f"{cl * 100:g}"


def cell_name(strategy: str, rebalance: str, cl: float) -> str:
    return f"{strategy.lower()}_{rebalance}_cl{_cl_label(cl)}"


def metrics_header(n_thresholds: int, kappa_orders) -> list[str]:
    cols = ["strategy", "rebalance", "CL", "mean", "std", "sharpe"]
    cols += [f"omega_{i + 1}" for i in range(n_thresholds)]
    for n in kappa_orders:
        cols += [f"kappa{n}_{i + 1}" for i in range(n_thresholds)]
    return cols + ["shortfall_prob", "expected_shortfall"]


def metrics_row(strategy: str, rebalance: str, cl: float, m: MetricsReport, kappa_orders) -> list[str]:
    row = [strategy, rebalance, _cl_label(cl), _fmt(m.mean), _fmt(m.std), _fmt(m.sharpe)]
    levels = list(m.omega)
    row += [_fmt(m.omega[L]) for L in levels]
    for n in kappa_orders:
        row += [_fmt(m.kappa[(n, L)]) for L in levels]
    return row + [_fmt(m.shortfall_prob), _fmt(m.expected_shortfall)]


def expand_matrix(cfg: ExperimentConfig) -> list[dict]:
    """One entry per (rebalance, CL) with the matched CPPI multiple."""
    cells = []
    for reb in cfg.rebalance:
        for cl in cfg.confidence_levels:
            pair = matched_pair(
                cfg.market, cfg.model, cfg.floor, cl, reb,
                monitoring=cfg.monitoring, exposure_cap=cfg.exposure_cap,
                base=cfg.vbpi_base, w0_horizon=cfg.w0_horizon,
            )
            cells.append({"rebalance": reb, "cl": cl, "pair": pair})
    return cells


class _Outputs:
    """Tracks written files so a failed run can be rolled back."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []
        self.created_dirs: list[Path] = []

    def mkdir(self, path: Path) -> None:
        missing = []
        p = path
        while not p.exists():
            missing.append(p)
            p = p.parent
        path.mkdir(parents=True, exist_ok=True)
        self.created_dirs.extend(reversed(missing))

    def path(self, name: str) -> Path:
        path = self.root / name
        self.mkdir(path.parent)
        self.written.append(path)
        return path

    def open(self, name: str):
        return open(self.path(name), "w", newline="")

    def rollback(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)
        for d in reversed(self.created_dirs):
            try:
                d.rmdir()
            except OSError:
                pass


def _write_cell(outputs: _Outputs, name: str, result) -> None:
    with outputs.open(f"terminal_values_{name}.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "terminal_value"])
        for j, v in enumerate(result.sample.values):
            w.writerow([j, repr(float(v))])
    with outputs.open(f"histogram_{name}.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        h = result.histogram
        for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def run_experiment(cfg: ExperimentConfig, dry_run: bool = False) -> int:
    """Run the (rebalance x CL x strategy) matrix and write CSV reports."""
    try:
        cells = expand_matrix(cfg)
    except (InfeasibleFloorError, NoInitialCushionError, ConfigError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (NumericFailureError, np.linalg.LinAlgError) as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC

    if dry_run:
        print(f"{'rebalance':<10}{'CL':>6}{'w0':>10}{'m':>10}")
        for c in cells:
            p = c["pair"]
            print(f"{c['rebalance']:<10}{_cl_label(c['cl']):>6}{p.w0:>10.4f}{p.multiple:>10.4f}")
        print(f"{len(cells) * 2} strategy cells, {cfg.paths} paths each, seed {cfg.seed}")
        return EXIT_OK

    outputs = _Outputs(cfg.out_dir)
    try:
        outputs.mkdir(cfg.out_dir)
        rows = []
        manifest = {"n_paths": cfg.paths, "seed": cfg.seed, "cells": []}
        for reb in cfg.rebalance:
            mine = [c for c in cells if c["rebalance"] == reb]
            strategies = {}
            for c in mine:
                strategies[("CPPI", c["cl"])] = c["pair"].cppi
                strategies[("VBPI", c["cl"])] = c["pair"].vbpi
            plan = SimulationPlan(
                market=cfg.market, model=cfg.model, strategies=strategies,
                n_paths=cfg.paths, master_seed=cfg.seed, rebalance=reb,
                monitoring=cfg.monitoring, workers=cfg.workers, block_size=cfg.block_size,
                n_bins=cfg.histogram_bins, thresholds=tuple(cfg.thresholds),
                kappa_orders=tuple(cfg.kappa_orders),
            )
            report = run(plan)
            logger.info("%s: %.0f paths/s", reb, report.metadata["paths_per_sec"])
            for c in mine:
                for strat in ("CPPI", "VBPI"):
                    res = report.results[(strat, c["cl"])]
                    name = cell_name(strat, reb, c["cl"])
                    rows.append(metrics_row(strat, reb, c["cl"], res.metrics, cfg.kappa_orders))
                    _write_cell(outputs, name, res)
                manifest["cells"].append({
                    "rebalance": reb, "cl": c["cl"],
                    "w0": c["pair"].w0, "cppi_multiple": c["pair"].multiple,
                })
            if cfg.dump_distributions:
                table = build_distributions(plan)
                for dist in table or ():
                    write_distribution_csv(dist, outputs.path(f"distributions/{reb}_t{dist.t:.6f}.csv"))

        with outputs.open("metrics.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(metrics_header(len(cfg.thresholds), cfg.kappa_orders))
            w.writerows(rows)
        with outputs.open("run.json") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    except (InfeasibleFloorError, NoInitialCushionError, ConfigError) as exc:
        outputs.rollback()
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (NumericFailureError, np.linalg.LinAlgError) as exc:
        outputs.rollback()
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except BaseException:
        outputs.rollback()
        raise
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="regime-insurance",
        description="Benchmark CPPI against VaR-based portfolio insurance under regime switching.",
    )
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--paths", type=int, help="Monte Carlo paths per cell")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int, help="worker threads")
    ap.add_argument("--dry-run", action="store_true", help="print the matrix and matched multiples only")
    ap.add_argument("--dump-distributions", action="store_true", help="write (s, pdf, cdf) grids")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigError("--paths: must be positive")
            overrides["paths"] = args.paths
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: must be a non-negative 64-bit integer")
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = Path(args.out)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers: must be positive")
            overrides["workers"] = args.workers
        if args.dump_distributions:
            overrides["dump_distributions"] = True
        cfg = dataclasses.replace(cfg, **overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg, dry_run=args.dry_run)


if __name__ == "__main__":
    sys.exit(main())
