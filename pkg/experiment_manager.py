"""
Runs the converge, defect and solve commands for one experiment config and
writes their CSV tables, meta files and the resolved config echo.
"""

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd
import yaml

from analysis import NOISE_FLOOR, run_convergence_study, split_defect_study
from integrators import integrate, make_stepper, step_count
from operators import SplitOperator, diagonal_split, laplacian_1d_dirichlet, split_laplacian_2d
from problems import allen_cahn, burgers, heat, linear_forced_problem, make_initial_data
from utils import (
    VERSION, ConfigurationError, atomic_write_text, get_default_threads, get_output_dir,
    get_timestamp, load_config, logger
)

CSV_FLOAT_FORMAT = '%.16e'


@dataclass
class ResultBundle:
    """Everything a command produced: config echo, report, provenance and written files."""
    command: str
    config_echo: dict
    report: object
    wall_ms: float
    version: str
    config_hash: str
    files: List[Path] = field(default_factory=list)
    diverged: bool = False


def build_operator(problem_cfg):
    """
    Spatial operator for a problem block. 2D problems always get the split
    Laplacian; unsplit schemes use its Kronecker sum.
    """
    if problem_cfg.name == "scalar_split":
        return diagonal_split([problem_cfg.a1], [problem_cfg.a2])
    diffusivity = problem_cfg.epsilon ** 2 if problem_cfg.name == "allen_cahn" else problem_cfg.nu
    if problem_cfg.dims == 1:
        return laplacian_1d_dirichlet(problem_cfg.N, diffusivity)
    return split_laplacian_2d(problem_cfg.N, diffusivity)


def build_problem(problem_cfg, op=None):
    """Problem instance for a problem block."""
    op = op if op is not None else build_operator(problem_cfg)
    name = problem_cfg.name
    if name == "allen_cahn":
        return allen_cahn(op, problem_cfg.initial_data)
    if name == "burgers":
        return burgers(op, problem_cfg.initial_data)
    if name == "heat":
        return heat(op, problem_cfg.initial_data)
    if name == "linear_forced":
        return linear_forced_problem(op, problem_cfg.forcing, problem_cfg.initial_data)
    if name == "scalar_split":
        return linear_forced_problem(op, problem_cfg.forcing, np.ones(op.shape))
    raise ConfigurationError(f"unknown problem {name!r}")


class ExperimentManager:
    """
    Runs the converge, defect and solve commands for one experiment config
    and writes their result files.
    """

    def __init__(self, config, out_dir=None, threads=None):
        """
        Args:
            config (ExperimentConfig): validated experiment config
            out_dir (str): --out override of the output directory
            threads (int): worker count for step-size sweeps
        """
        self.config = config
        self.out_dir = get_output_dir(out_dir, config.output.directory)
        self.threads = threads if threads is not None else get_default_threads()
        if self.threads < 1:
            raise ConfigurationError(f"thread count must be >= 1, got {self.threads}")
        self.config_hash = config.config_hash
        self.noise_floor = float(load_config().get('norms', {}).get('noise_floor', NOISE_FLOOR))

    def _csv_header(self):
        return f"# config_hash={self.config_hash} version={VERSION}"

    def _write_csv(self, name, frame, header=None):
        body = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, na_rep='nan', lineterminator='\n')
        return atomic_write_text(self.out_dir / name, f"{header or self._csv_header()}\n{body}")

    def _write_meta(self, name, meta):
        return atomic_write_text(self.out_dir / name, yaml.safe_dump(meta, sort_keys=False))

    def _write_config_echo(self):
        text = f"# config_hash={self.config_hash}\n{self.config.dump_resolved()}"
        return atomic_write_text(self.out_dir / "config.resolved.yaml", text)

    def _bundle(self, command, report, start, files, diverged=False):
        return ResultBundle(command=command, config_echo=self.config.resolved, report=report,
                            wall_ms=(time.perf_counter() - start) * 1000.0, version=VERSION,
                            config_hash=self.config_hash, files=files, diverged=diverged)

    def run_converge(self):
        """
        Convergence study over the configured step sizes.

        Writes report.csv (tau, error_<norm>), timing.csv (tau, wall_ms),
        report.meta (fits and flags) and config.resolved.yaml.

        Returns:
            ResultBundle: diverged is set when any step size diverged
        """
        cfg = self.config
        if cfg.study.taus is None:
            raise ConfigurationError("converge needs study.taus or study.tau_max/levels")
        start = time.perf_counter()
        problem = build_problem(cfg.problem)
        logger.info(f"Convergence study: {problem.label}, scheme {cfg.scheme.name}, "
                    f"{len(cfg.study.taus)} step sizes, T={cfg.study.T}")
        report = run_convergence_study(problem, cfg.scheme.name, cfg.study.taus, cfg.study.T,
                                       cfg.study.norms, cfg.study.reference,
                                       threads=self.threads, c2=cfg.scheme.c2,
                                       noise_floor=self.noise_floor)

        fits = {label: (asdict(fit) if fit is not None else None) for label, fit in report.fits.items()}
        for label, fit in report.fits.items():
            if fit is not None:
                logger.info(f"Fitted order ({label}): {fit.order:.3f}, r2={fit.r2:.4f}")
        meta = {
            "version": VERSION,
            "config_hash": self.config_hash,
            "problem": problem.label,
            "scheme": cfg.scheme.name,
            "c2": cfg.scheme.c2,
            "T": cfg.study.T,
            "reference": report.reference,
            "tau_ref": report.tau_ref,
            "fits": fits,
            "flags": report.flags,
            "diverged_taus": [tau for tau, bad in zip(report.taus, report.diverged) if bad],
            "generated_at": get_timestamp(),
        }
        files = [
            self._write_csv("report.csv", report.to_frame()),
            self._write_csv("timing.csv", report.timing_frame()),
            self._write_meta("report.meta", meta),
            self._write_config_echo(),
        ]
        if report.any_diverged:
            logger.warning(f"{sum(report.diverged)} step sizes diverged")
        return self._bundle("converge", report, start, files, diverged=report.any_diverged)

    def run_defect(self):
        """
        Split-defect decay study. Writes defect.csv (t, defect_norm, k, beta1),
        defect.meta (fitted slope) and config.resolved.yaml.
        """
        cfg = self.config
        if cfg.defect.t_values is None:
            raise ConfigurationError("defect needs defect.t_values or defect.t_max/levels")
        start = time.perf_counter()
        op = build_operator(cfg.problem)
        if not isinstance(op, SplitOperator):
            raise ConfigurationError("defect study needs a split (2D or scalar_split) problem")
        if cfg.problem.name == "scalar_split":
            v = np.ones(op.shape)
        else:
            v = make_initial_data(cfg.problem.initial_data, op.grid)
        logger.info(f"Split defect study: k={cfg.defect.k}, {len(cfg.defect.t_values)} t values")
        report = split_defect_study(op, cfg.defect.k, v, cfg.defect.t_values, beta1=cfg.defect.beta1)
        if report.slope is not None:
            logger.info(f"Fitted defect slope: {report.slope:.3f}")

        meta = {
            "version": VERSION,
            "config_hash": self.config_hash,
            "k": report.k,
            "beta1": report.beta1,
            "slope": report.slope,
            "r2": report.r2,
            "flags": report.flags,
            "generated_at": get_timestamp(),
        }
        files = [
            self._write_csv("defect.csv", report.to_frame()),
            self._write_meta("defect.meta", meta),
            self._write_config_echo(),
        ]
        return self._bundle("defect", report, start, files)

    def _state_frame(self, state, grid):
        if grid is None:
            index = np.indices(state.shape)
            data = {f"i{axis}": index[axis].ravel() for axis in range(state.ndim)}
        else:
            names = ("x", "y")[:grid.dims]
            data = {name: coord.ravel() for name, coord in zip(names, grid.mesh())}
        data["u"] = state.ravel()
        return pd.DataFrame(data)

    def _write_state(self, name, state, t, grid):
        n_label = grid.N if grid is not None else "none"
        header = f"# t={t:.16g} N={n_label} config_hash={self.config_hash}"
        return self._write_csv(name, self._state_frame(state, grid), header=header)

    def run_solve(self):
        """
        Single integration to solve.T. Writes state_final.csv and, when
        solve.snapshots > 0, that many evenly spaced intermediate states.
        Divergence propagates as DivergenceError with the failing step index.
        """
        cfg = self.config
        if cfg.solve.tau is None:
            raise ConfigurationError("solve needs solve.tau")
        start = time.perf_counter()
        problem = build_problem(cfg.problem)
        tau, T = cfg.solve.tau, cfg.solve.T
        n_steps = step_count(tau, T)
        m = cfg.solve.snapshots
        marks = sorted({round(j * n_steps / (m + 1)) for j in range(1, m + 1)} - {0, n_steps})
        snapshots = []

        def observer(n, record):
            if n in marks:
                snapshots.append((n, record.u_n.copy()))

        stepper = make_stepper(cfg.scheme.name, cfg.scheme.c2)
        logger.info(f"Solving {problem.label} with {cfg.scheme.name}: {n_steps} steps of tau={tau:.3e}")
        result = integrate(stepper, problem, tau, T, observer=observer if marks else None)

        files = []
        for idx, (n, state) in enumerate(snapshots, start=1):
            files.append(self._write_state(f"snapshot_{idx:03d}.csv", state, n * tau, problem.grid))
        files.append(self._write_state("state_final.csv", result.state, T, problem.grid))

        meta = {
            "version": VERSION,
            "config_hash": self.config_hash,
            "problem": problem.label,
            "scheme": cfg.scheme.name,
            "tau": tau,
            "T": T,
            "steps": result.steps,
            "snapshots": len(snapshots),
            "generated_at": get_timestamp(),
        }
        if problem.exact is not None:
            error = float(np.max(np.abs(result.state - problem.exact(T))))
            meta["error_max_vs_exact"] = error
            logger.info(f"Max error against exact solution: {error:.3e}")
        files.append(self._write_meta("solve.meta", meta))
        files.append(self._write_config_echo())
        return self._bundle("solve", result, start, files)
