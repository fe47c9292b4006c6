"""Command-line driver.

    lsnucleate run CONFIG [--out DIR] [--max-iter N]
    lsnucleate preset NAME [--scale K] [--out DIR] [--max-iter N]
    lsnucleate gradcheck CONFIG [--vars N] [--iters I,J,K]
    lsnucleate version

``CONFIG`` may also name a preset (``gradcheck ex1-tfc``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .config import (PRESETS, ConfigError, RunConfig, build_fixture, build_spec, load_config,
                     needs_stress_calibration, preset_config, to_dict)
from .opt.loop import OptimizationError, gradient_check_run, run_optimization
from .opt.problem import Problem
from .output import (OutputError, ensure_dir, nodal_fields, write_history, write_interface,
                     write_metadata, write_vtk)
from .solve import von_mises_and_smooth

log = logging.getLogger("lsnucleate")


def calibrate_sigma_max(cfg: RunConfig) -> float:
    """Stress bound as a fraction of the peak smoothed stress of the initial design."""
    fx = build_fixture(cfg)
    pb = Problem(fx, build_spec(cfg))
    ev = pb.evaluate(pb.initial_design(), 0)
    _, tau = von_mises_and_smooth(ev.solution, fx.grid, fx.material.nu)
    return float(cfg.constraints.sigma_factor * np.max(tau))


def build_problem(cfg: RunConfig) -> tuple[Problem, float | None]:
    sigma = calibrate_sigma_max(cfg) if needs_stress_calibration(cfg) else None
    return Problem(build_fixture(cfg), build_spec(cfg, sigma_max=sigma)), sigma


def execute(cfg: RunConfig, out_dir: str | None = None, max_iter: int | None = None,
            echo=None):
    """Run ``cfg`` and write every output file; returns the OptimizationResult."""
    out = ensure_dir(out_dir or cfg.output.directory)
    problem, sigma = build_problem(cfg)
    grid, nu = problem.grid, problem.fx.material.nu
    stride = cfg.output.stride
    D_max = problem.spec.D_max if max_iter is None else min(max_iter, problem.spec.D_max)

    def dump(it, ev):
        write_vtk(grid, nodal_fields(ev, grid, nu), os.path.join(out, f"fields_{it:05d}.vtk"))

    def callback(it, ev, rec):
        if it == 0 or (stride and it % stride == 0):
            dump(it, ev)
        if echo:
            bd = rec.breakdown
            echo(f"it {it:4d}  z {bd.z:.6f}  g_mass {bd.g_mass:+.5f}  voids {bd.void_components}"
                 f"  rho_sh {bd.rho_sh:.3f}")

    def flush(history):
        write_history([r.breakdown for r in history], os.path.join(out, "history.csv"))

    t0 = time.perf_counter()
    res = run_optimization(problem, D_max=D_max, callback=callback, on_failure=flush)
    flush(res.history)
    last = res.history[-1].breakdown.it
    dump(last, res.final)
    write_interface(res.final.poly, os.path.join(out, "final_interface.csv"))
    write_metadata({
        "version": __version__,
        "config": to_dict(cfg),
        "sigma_max": problem.spec.sigma_max,
        "sigma_max_calibrated": sigma is not None,
        "psi0": res.psi0,
        "iterations": last,
        "converged": res.converged,
        "n_vars": problem.n_vars,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }, os.path.join(out, "run.json"))
    return res


def _config_from_arg(arg: str) -> RunConfig:
    if arg in PRESETS and not os.path.exists(arg):
        return preset_config(arg)
    return load_config(arg)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lsnucleate",
                                 description="Level-set topology optimization with hole nucleation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a TOML config")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--max-iter", type=int)
    r.add_argument("--quiet", action="store_true")

    p = sub.add_parser("preset", help="run a built-in benchmark")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--quiet", action="store_true")

    g = sub.add_parser("gradcheck", help="compare adjoint gradients with finite differences")
    g.add_argument("config")
    g.add_argument("--vars", type=int, default=20)
    g.add_argument("--iters", default="0,3,6")

    sub.add_parser("version")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "version":
            print(f"lsnucleate {__version__}")
            return 0
        if args.command == "gradcheck":
            cfg = _config_from_arg(args.config)
            try:
                iters = [int(t) for t in args.iters.split(",") if t.strip()]
            except ValueError:
                ap.error(f"--iters: expected comma-separated integers, got {args.iters!r}")
            problem, _ = build_problem(cfg)
            report = gradient_check_run(problem, iters, n_vars=args.vars)
            worst = 0.0
            for it, errs in report.items():
                print(f"iteration {it}: " + "  ".join(f"{k} {v:.3e}" for k, v in errs.items()))
                worst = max(worst, *errs.values())
            print(f"max relative error {worst:.3e}")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
        else:
            cfg = preset_config(args.name, scale=args.scale)
        echo = None if args.quiet else print
        res = execute(cfg, args.out, args.max_iter, echo=echo)
        bd = res.history[-1].breakdown
        status = "converged" if res.converged else "stopped at iteration limit"
        print(f"{cfg.name}: {status} after {bd.it} iterations, z = {bd.z:.6f}, "
              f"g_mass = {bd.g_mass:+.2e}, void components = {bd.void_components}")
        return 0
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (ConfigError, OutputError, OptimizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
