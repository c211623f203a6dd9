"""Command-line front end.

    nonlocal-traffic simulate <config.json> [--jobs N] [--out DIR]
    nonlocal-traffic converge <config.json> [--jobs N] [--out DIR]
    nonlocal-traffic compare  <config.json> [--jobs N] [--out DIR]

Exit codes: 0 when every run completes and every enabled verdict passes,
1 on a solver failure or a failed verdict, 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .config import ConvergeConfig, ExperimentConfig, load_config
from .diagnostics import StepMonitor, build_report, strictly_decreasing, tv_series
from .errors import ConfigError, GridMismatch, NonlocalTrafficError
from .grid import CellField, GridSpec, l1_distance, monotonicity_defect
from .solver import simulate

log = logging.getLogger("nonlocal_traffic")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@contextmanager
def atomic_write(path: Path):
    """Yield a temporary path that replaces ``path`` only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _map(fn: Callable, items: Sequence, jobs: int) -> List:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# --- simulate -------------------------------------------------------------------


def _simulate_one(args) -> dict:
    spec, toggles, out_dir = args
    cfg = spec.solver_config()
    monitor = StepMonitor(track_tv=toggles.tv) if toggles.step_monitor else None
    t0 = time.perf_counter()
    try:
        traj = simulate(cfg, spec.datum.build(), monitor=monitor)
    except NonlocalTrafficError as exc:
        return {"label": spec.label, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
    runtime = time.perf_counter() - t0
    rep = build_report(
        traj,
        label=spec.label,
        max_principle=toggles.max_principle,
        tv=toggles.tv,
        monotonicity=toggles.monotonicity,
        oleinik=toggles.oleinik,
        entropy=toggles.entropy,
        monitor=monitor,
    )
    rep.notes.append(f"{traj.n_steps} steps in {runtime:.3f}s")
    run_dir = Path(out_dir) / spec.label
    with atomic_write(run_dir / "trajectory.csv") as p:
        traj.to_long_csv(p)
    with atomic_write(run_dir / "heatmap.csv") as p:
        traj.to_heatmap_csv(p)
    with atomic_write(run_dir / "report.json") as p:
        rep.to_json(p)
    with atomic_write(run_dir / "verdicts.csv") as p:
        rep.to_csv(p)
    failed = [k for k, v in rep.verdicts.items() if not v]
    return {"label": spec.label, "ok": not failed, "error": f"failed verdicts: {failed}" if failed else None}


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    if not cfg.runs:
        raise ConfigError("simulate needs at least one run")
    results = _map(_simulate_one, [(r, cfg.diagnostics, str(out_dir)) for r in cfg.runs], jobs)
    code = EXIT_OK
    for res in results:
        if res["ok"]:
            log.info("%s: ok", res["label"])
        else:
            log.error("%s: %s", res["label"], res["error"])
            code = EXIT_FAIL
    return code


# --- converge -------------------------------------------------------------------


def _converge_one(args) -> dict:
    spec, time_at = args
    t0 = time.perf_counter()
    traj = simulate(spec.solver_config((time_at,)), spec.datum.build())
    runtime = time.perf_counter() - t0
    tv_w = tv_series(traj, "w").values
    return {"q": traj.at(time_at).q, "tv_w_max": float(np.max(tv_w)), "runtime_s": runtime}


def _converge_specs(conv: ConvergeConfig):
    base = conv.base
    runs = []
    for eta in conv.etas:
        kernel = base.kernel.model_copy(update={"eta": eta})
        runs.append(base.model_copy(update={"kernel": kernel, "label": f"{base.label}_eta{eta:g}"}))
    ref = conv.reference
    grid = base.grid.model_copy(update={"n_cells": ref.n_cells})
    if ref.variant != "local" and ref.kernel is None:
        raise ConfigError("a nonlocal reference needs its own kernel")
    ref_spec = base.model_copy(
        update={"label": f"{base.label}_reference", "variant": ref.variant, "grid": grid, "kernel": ref.kernel}
    )
    if ref.n_cells % base.grid.n_cells:
        raise ConfigError(f"reference n_cells={ref.n_cells} is not a multiple of {base.grid.n_cells}")
    return runs, ref_spec


def cmd_converge(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    conv = cfg.converge
    if conv is None:
        raise ConfigError("converge needs a 'converge' section")
    runs, ref_spec = _converge_specs(conv)
    t_at = conv.time if conv.time is not None else conv.base.t_end
    results = _map(_converge_one, [(s, t_at) for s in [ref_spec, *runs]], jobs)
    ref_q: CellField = results[0]["q"]
    rows = []
    for eta, res in zip(conv.etas, results[1:]):
        q = res["q"]
        err = l1_distance(q, ref_q.coarsen(q.grid), conv.window)
        rows.append((eta, err, res["tv_w_max"], res["runtime_s"]))
    with atomic_write(Path(out_dir) / "convergence.csv") as p:
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eta", "l1_error", "tv_w_max", "runtime_s"])
            for row in rows:
                wr.writerow([repr(float(v)) for v in row])
    errors = [r[1] for r in rows]
    for eta, err, *_ in rows:
        log.info("eta=%g  l1_error=%.6g", eta, err)
    if not strictly_decreasing(errors):
        log.error("L1 errors do not strictly decrease down the eta ladder: %s", errors)
        return EXIT_FAIL
    return EXIT_OK


# --- compare --------------------------------------------------------------------


def _compare_one(args) -> dict:
    spec, slice_time, regions = args
    traj = simulate(spec.solver_config((slice_time,)), spec.datum.build())
    x = traj.grid.centers
    rows = []
    for snap in traj.snapshots:
        for name, lo, hi, direction in regions:
            vals = snap.q.values[(x >= lo) & (x <= hi)]
            rows.append((spec.label, snap.t, name, direction, monotonicity_defect(vals, direction)))
    return {"label": spec.label, "q": traj.at(slice_time).q, "mono": rows}


def _default_regions(grid: GridSpec):
    return [("all", grid.x_min, grid.x_max, "increasing"), ("all", grid.x_min, grid.x_max, "decreasing")]


def cmd_compare(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    comp = cfg.compare
    if comp is None:
        raise ConfigError("compare needs a 'compare' section")
    by_label = cfg.run_by_label()
    labels = comp.labels if comp.labels is not None else [r.label for r in cfg.runs]
    if not labels:
        raise ConfigError("compare needs at least one run")
    specs = [by_label[x] for x in labels]
    grid = specs[0].grid.build()
    if any(s.grid.build() != grid for s in specs):
        raise ConfigError("compared runs must share one grid")
    if any(comp.slice_time > s.t_end for s in specs):
        raise ConfigError("slice_time exceeds a run's t_end")
    if comp.regions is not None:
        regions = [(r.name, r.x_min, r.x_max, r.direction) for r in comp.regions]
    else:
        regions = _default_regions(grid)
    results = _map(_compare_one, [(s, comp.slice_time, regions) for s in specs], jobs)
    with atomic_write(Path(out_dir) / "slices.csv") as p:
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", *labels])
            cols = [res["q"].values for res in results]
            for j, xj in enumerate(grid.centers):
                wr.writerow([repr(float(xj)), *(repr(float(c[j])) for c in cols)])
    with atomic_write(Path(out_dir) / "monotonicity.csv") as p:
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["label", "t", "region", "direction", "defect"])
            for res in results:
                for label, t, name, direction, d in res["mono"]:
                    wr.writerow([label, repr(float(t)), name, direction, repr(float(d))])
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

COMMANDS = {"simulate": cmd_simulate, "converge": cmd_converge, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonlocal-traffic", description="Nonlocal conservation law experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="path to a JSON experiment config")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Iterable[str]] = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out if args.out is not None else cfg.output_dir)
        return COMMANDS[args.command](cfg, out_dir, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridMismatch as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonlocalTrafficError as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
