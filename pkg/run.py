#!/usr/bin/env python3
"""
ERKLAB Launcher Script
Tabulates φ-functions and runs convergence, split-defect and solve
experiments from YAML config files.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""

import argparse
import math
import sys

import numpy as np

from utils import ErklabError, load_config, load_environment, logger

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def phi_rows(k, z_values, tol=1e-13, max_subdivisions=200):
    """
    Rows (z, φ_k(z), oracle, relative difference). The oracle is exp(z) for
    k = 0 and the quadrature of the defining integral otherwise.
    """
    from phi_core import OracleConvergenceError, phi_quadrature_oracle, phi_scalar

    rows = []
    for z in z_values:
        value = phi_scalar(k, z)
        if k == 0:
            oracle = math.exp(z)
        else:
            try:
                oracle = phi_quadrature_oracle(k, z, tol=tol, max_subdivisions=max_subdivisions)
            except OracleConvergenceError as e:
                logger.warning(str(e))
                oracle = math.nan
        rel = abs(value - oracle) / abs(oracle) if oracle != 0.0 else abs(value - oracle)
        if rel < np.finfo(float).eps:
            rel = 0.0
        rows.append((float(z), value, oracle, rel))
    return rows


def cmd_phi(args):
    """Print a φ_k table for a single z or a z range."""
    if args.z is not None:
        z_values = [args.z]
    elif args.z_min is not None and args.z_max is not None:
        if args.count < 1:
            raise argparse.ArgumentTypeError("--count must be >= 1")
        z_values = np.linspace(args.z_min, args.z_max, args.count)
    else:
        raise argparse.ArgumentTypeError("give --z or both --z-min and --z-max")

    phi_config = load_config().get('phi', {})
    rows = phi_rows(args.k, z_values,
                    tol=float(phi_config.get('quadrature_tol', 1e-13)),
                    max_subdivisions=int(phi_config.get('max_subdivisions', 200)))
    print("z, phi, oracle, rel_diff")
    for z, value, oracle, rel in rows:
        print(f"{z:.10g}, {value:.10g}, {oracle:.10g}, {rel:.10g}")
    return EXIT_OK


def _manager(args):
    from experiment_config import load_experiment_config
    from experiment_manager import ExperimentManager

    config = load_experiment_config(args.config, seed=args.seed)
    return ExperimentManager(config, out_dir=args.out, threads=args.threads)


def cmd_converge(args):
    """Run a convergence study and write report.csv / report.meta."""
    bundle = _manager(args).run_converge()
    for label, fit in bundle.report.fits.items():
        if fit is not None:
            print(f"order[{label}] = {fit.order:.4f} (r2={fit.r2:.4f})")
    if bundle.diverged:
        logger.error("At least one step size diverged; see report.meta")
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_defect(args):
    """Run a split-defect study and write defect.csv / defect.meta."""
    bundle = _manager(args).run_defect()
    report = bundle.report
    for t, d in zip(report.t_values, report.defect_norms):
        print(f"t={t:.6g} defect={d:.10g}")
    if report.slope is not None:
        print(f"slope = {report.slope:.4f}")
    return EXIT_OK


def cmd_solve(args):
    """Integrate once and write the final state and snapshots."""
    bundle = _manager(args).run_solve()
    logger.info(f"Solve finished after {bundle.report.steps} steps; {len(bundle.files)} files written")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="ERKLAB - exponential Runge-Kutta experiment harness")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")
    subparsers.required = True

    phi_parser = subparsers.add_parser("phi", help="Tabulate phi_k against its quadrature oracle")
    phi_parser.add_argument("--k", type=int, required=True, help="phi order")
    phi_parser.add_argument("--z", type=float, help="single argument")
    phi_parser.add_argument("--z-min", type=float, help="first argument of a range")
    phi_parser.add_argument("--z-max", type=float, help="last argument of a range")
    phi_parser.add_argument("--count", type=int, default=11, help="number of points in the range")
    phi_parser.set_defaults(handler=cmd_phi)

    for name, handler, help_text in (
            ("converge", cmd_converge, "Run a convergence study"),
            ("defect", cmd_defect, "Run a split-defect decay study"),
            ("solve", cmd_solve, "Integrate once and write state snapshots")):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="experiment config (YAML)")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--threads", type=int, help="worker threads for step-size sweeps")
        sub.add_argument("--seed", type=int, help="override problem.initial_data.seed")
        sub.set_defaults(handler=handler)
    return parser


def main(argv=None):
    """Main entry point for the script."""
    parser = build_parser()
    args = parser.parse_args(argv)
    load_environment()

    from integrators import DivergenceError

    try:
        return args.handler(args)
    except DivergenceError as e:
        logger.error(f"Divergence: {e}")
        return EXIT_DIVERGED
    except OSError as e:
        logger.error(f"I/O error: {e}", exc_info=True)
        return EXIT_IO
    except (ErklabError, ValueError, argparse.ArgumentTypeError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
