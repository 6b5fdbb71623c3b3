"""Command-line front end: solve, convergence and diagnose subcommands."""

import argparse
import contextlib
import os
import sys
import time

import numpy as np

from .kernel import KernelParams
from .mesh import load_mesh
from .assembly import MaterialField
from .analysis import (coercivity_check, continuity_check,
                       transform_consistency, append_report)
from .harness import (parse_config, run_solve, run_convergence, emit_report,
                      _level_grid, _cached_V_blocks)
from .discretization import SpaceTimeBasis


def parse_omega(text):
    """Complex frequency written as a+bi (e.g. '0.8+1.0i')."""
    try:
        return complex(text.replace("i", "j").replace(" ", ""))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"cannot parse omega {text!r}; expected a+bi") from exc


def build_parser():
    p = argparse.ArgumentParser(
        prog="hsbem",
        description="Time-domain boundary elements in an absorbing "
                    "half-space")
    p.add_argument("--threads", type=int, default=None,
                   help="limit linear-algebra thread pools")
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in [("solve", "single solve, writes observation signals"),
                      ("convergence", "refinement study, writes a CSV table"),
                      ("diagnose", "frequency-domain diagnostics")]:
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True)
        sp.add_argument("--cache-dir", default=None,
                        help="directory for assembled-block caches")
        if name == "diagnose":
            sp.add_argument("--omega", type=parse_omega, default=1.0 + 1.0j,
                            help="complex frequency a+bi (default 1+1i)")
    return p


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)
        return contextlib.nullcontext()


def _print_table(table, out):
    out.write(",".join(table.columns) + "\n")
    for row in table.rows:
        out.write(",".join("" if row.get(c) is None else str(row.get(c))
                           for c in table.columns) + "\n")


def cmd_solve(args, out):
    cfg = parse_config(args.config)
    if args.cache_dir:
        cfg.cache_dir = args.cache_dir
    t0 = time.perf_counter()
    table, signals = run_solve(cfg)
    timings = {"solve_seconds": time.perf_counter() - t0}
    emit_report({"solve": table}, cfg.output_dir, config=cfg,
                timings=timings, signals=signals)
    _print_table(table, out)
    out.write(f"wrote {len(signals)} signal files to {cfg.output_dir}\n")
    return 0


def cmd_convergence(args, out):
    cfg = parse_config(args.config)
    if args.cache_dir:
        cfg.cache_dir = args.cache_dir
    t0 = time.perf_counter()
    table, signals = run_convergence(cfg)
    timings = {"convergence_seconds": time.perf_counter() - t0}
    emit_report({"convergence": table}, cfg.output_dir, config=cfg,
                timings=timings, signals=signals)
    _print_table(table, out)
    return 0


def cmd_diagnose(args, out):
    cfg = parse_config(args.config)
    omega = args.omega
    if omega.imag <= 0:
        out.write("diagnose needs a damped frequency (Im omega > 0)\n")
        return 2
    mesh = load_mesh(cfg.mesh)
    # the frequency-domain checks hold for damping sigma <= Im omega
    sigma = cfg.sigma if cfg.sigma > 0 else 1.0
    params = KernelParams(alpha_inf=cfg.alpha_inf,
                          sigma=min(sigma, omega.imag))
    material = MaterialField.constant(mesh, cfg.alpha)
    os.makedirs(cfg.output_dir, exist_ok=True)
    log = os.path.join(cfg.output_dir, "runlog.jsonl")

    rep_c = coercivity_check(mesh, omega, params, material)
    append_report(rep_c, log)
    out.write(f"coercivity: min Re a = {rep_c['min_re_a']:.6g}, "
              f"min Re <-i w V p, p> = {rep_c['min_re_v']:.6g}, "
              f"all positive: {rep_c['all_positive']}\n")

    rep_b = continuity_check(mesh, omega, params, material)
    append_report(rep_b, log)
    out.write(f"continuity: max ratio = {rep_b['max_ratio']:.6g}\n")

    if omega.imag >= 0.5:
        grid = _level_grid(cfg, mesh.h, mesh.h)
        # long enough horizon for the truncated symbol at Im omega >= 0.5
        nt = max(grid.nt, int(np.ceil(22.0 / grid.dt / omega.imag)))
        from .discretization import TimeGrid
        grid = TimeGrid(grid.dt, nt, grid.sigma)
        trial = SpaceTimeBasis(mesh, grid, 0, 1)
        test = SpaceTimeBasis(mesh, grid, 0, 0)
        tb = _cached_V_blocks(cfg, mesh, grid, trial, test, params)
        dev = transform_consistency(tb, [omega])
        append_report(dict(operation="transform_consistency",
                           omega=[omega.real, omega.imag],
                           deviation=dev), log)
        out.write(f"transform consistency: relative deviation {dev:.3e}\n")
    else:
        out.write("transform consistency skipped (needs Im omega >= 0.5)\n")
    out.write(f"appended diagnostics to {log}\n")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = sys.stdout
    with _thread_limit(args.threads):
        if args.command == "solve":
            return cmd_solve(args, out)
        if args.command == "convergence":
            return cmd_convergence(args, out)
        return cmd_diagnose(args, out)


if __name__ == "__main__":
    sys.exit(main())
