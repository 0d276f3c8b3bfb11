"""Energy minimization over grid densities and particle systems, and the
Euler-Lagrange diagnostics of a density.

Attributes:
    ELReport (NamedTuple): Constancy of ψ on the support and its lower bound
        off the support
"""
import argparse
import dataclasses
import json
import os
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple, Union

import numpy as np
import pytorch_lightning as pl
from pytorch_lightning.loggers import CSVLogger
from pytorch_lightning.utilities.rank_zero import rank_zero_info, rank_zero_warn

import rieszEL
from rieszEL.common.errors import ConfigError
from rieszEL.common.kernels import Kernel, strictly_convex
from rieszEL.common.measures import (GridDensity, ParticleSystem,
                                     particles_to_grid)
from rieszEL.common.potentials import energy, node_potential, potential_profile

METHOD_ALIASES = {
    'grid': 'GridProjectedGradient',
    'particles': 'ParticleFlow',
    'GridProjectedGradient': 'GridProjectedGradient',
    'ParticleFlow': 'ParticleFlow'
}
SUPPORT_THRESHOLD = 1e-3
BOUNDED_RTOL = 0.1
_OFF_PROBES = 16


def method_config_path(method: str) -> str:
    sub = 'grid' if METHOD_ALIASES[method] == 'GridProjectedGradient' \
        else 'particles'
    return os.path.join(os.path.dirname(rieszEL.__file__), sub,
                        'config_file.json')


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings.

    Attributes:
        method (str): 'GridProjectedGradient' or 'ParticleFlow'
        max_iters (int): Gradient steps (grid) or Euler steps (particles)
        step0 (float): Initial step size (grid) or step cap (particles)
        el_tol (float): EL residual target
        grid (Tuple[float, float, int]): Initial window (a0, b0) and nodes n
        seed (int): Seed of the particle initialization
        N (int): Number of particles
        inner_steps (int): Grid steps per Lightning training step
        substeps (int): Euler steps per Lightning training step
        bandwidth (float): KDE bandwidth of the particle EL report
        record_every (int): Snapshot period in training steps, 0 for none
    """
    method: str = 'GridProjectedGradient'
    max_iters: int = 5000
    step0: float = 1.0
    el_tol: float = 1e-2
    grid: Tuple[float, float, int] = (-2.0, 2.0, 401)
    seed: int = 42
    N: int = 200
    inner_steps: int = 10
    substeps: int = 100
    bandwidth: float = 0.05
    record_every: int = 0

    def validate(self) -> 'SolveConfig':
        """Checks the config and returns it with canonical names and types.

        Raises:
            ConfigError: Invalid setting
        """
        if self.method not in METHOD_ALIASES:
            raise ConfigError(f"unknown method {self.method!r}")
        method = METHOD_ALIASES[self.method]
        if len(self.grid) != 3:
            raise ConfigError("grid must be (a0, b0, n)")
        a0, b0, n = float(self.grid[0]), float(self.grid[1]), int(self.grid[2])
        if not a0 < b0:
            raise ConfigError(f"window needs a0 < b0, got [{a0}, {b0}]")
        if method == 'GridProjectedGradient' and n < 51:
            raise ConfigError(f"grid method needs n >= 51, got {n}")
        if not self.el_tol > 0:
            raise ConfigError(f"el_tol must be positive, got {self.el_tol}")
        if self.max_iters < 1 or not self.step0 > 0:
            raise ConfigError("max_iters and step0 must be positive")
        if method == 'ParticleFlow' and self.N < 2:
            raise ConfigError(f"particle flow needs N >= 2, got {self.N}")
        if min(self.inner_steps, self.substeps) < 1:
            raise ConfigError("inner_steps and substeps must be positive")
        return dataclasses.replace(self, method=method, grid=(a0, b0, n))

    @classmethod
    def from_dict(cls, d: dict) -> 'SolveConfig':
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown solver settings {sorted(unknown)}")
        if 'grid' in d:
            d = dict(d, grid=tuple(d['grid']))
        return cls(**d).validate()

    @classmethod
    def from_json(cls, path: str) -> 'SolveConfig':
        try:
            with open(path, 'rt') as f:
                d = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from None
        return cls.from_dict(d)

    @classmethod
    def defaults(cls, method: str = 'GridProjectedGradient') -> 'SolveConfig':
        """The method's config_file.json."""
        if method not in METHOD_ALIASES:
            raise ConfigError(f"unknown method {method!r}")
        return cls.from_json(method_config_path(method))

    def to_namespace(self) -> argparse.Namespace:
        return argparse.Namespace(**dataclasses.asdict(self))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d['grid'] = list(self.grid)
        return d


class ELReport(NamedTuple):
    energy: float
    psi_mean_on_support: float
    psi_max_dev_on_support: float
    psi_min_off_support: float
    el_residual: float
    support_interval: Tuple[float, float]
    linf_bound: float
    support_is_interval: bool
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return self._asdict()


def _support(f: GridDensity) -> Tuple[np.ndarray, int, int]:
    above = f.values > SUPPORT_THRESHOLD * f.M
    idx = np.flatnonzero(above)
    return above, int(idx[0]), int(idx[-1])


def _largest_gap(above: np.ndarray, lo: int, hi: int) -> int:
    """Longest run of sub-threshold nodes strictly between lo and hi."""
    run, best = 0, 0
    for flag in above[lo:hi + 1]:
        run = 0 if flag else run + 1
        best = max(best, run)
    return best


def verify_el(k: Kernel, f: GridDensity, tol: float) -> ELReport:
    """Checks that ψ_f is constant on the support of f and not below that
    constant off it.

    The support is the smallest interval containing {f > 1e-3·M}. Off-support
    values are taken at the grid nodes outside it and at probe points on
    [a − D/2, a) and (b, b + D/2]. The report passes when the residual
    max_dev/|mean| is at most tol and min ψ_off ≥ mean − tol.

    Args:
        k (Kernel): Kernel
        f (GridDensity): Density
        tol (float): Tolerance, +inf always passes

    Returns:
        ELReport: Report
    """
    if f.M == 0:
        return ELReport(0.0, np.nan, np.nan, np.nan, np.inf, (f.a, f.b), 0.0,
                        False, tol, bool(np.isinf(tol)))
    x = f.x
    above, lo, hi = _support(f)
    psi = node_potential(k, f)
    on = psi[lo:hi + 1]
    mean = float(np.mean(on))
    dev = float(np.max(np.abs(on - mean)))
    residual = dev / max(abs(mean), 1e-300)
    probes = np.concatenate([
        f.a - f.D / 2 * np.linspace(1, 1 / _OFF_PROBES, _OFF_PROBES),
        f.b + f.D / 2 * np.linspace(1 / _OFF_PROBES, 1, _OFF_PROBES)
    ])
    off = potential_profile(k, f, probes).values
    off = np.concatenate([off, psi[:lo], psi[hi + 1:]])
    off_min = float(np.min(off))
    gap = _largest_gap(above, lo, hi)
    passed = bool(np.isinf(tol)
                  or (residual <= tol and off_min >= mean - tol))
    return ELReport(energy(k, f), mean, dev, off_min, residual,
                    (float(x[lo]), float(x[hi])), f.M, gap <= 3, tol, passed)


def _trainer(out_dir: str = None, logger=None) -> pl.Trainer:
    if logger is None:
        logger = CSVLogger(out_dir, name='metrics') if out_dir else False
    return pl.Trainer(max_epochs=1,
                      logger=logger,
                      enable_checkpointing=False,
                      enable_progress_bar=False,
                      enable_model_summary=False,
                      accelerator='cpu',
                      devices=1)


def run_solver(k: Kernel, cfg: SolveConfig, out_dir: str = None,
               logger=None):
    """Fits the solver module of cfg.method and returns it.

    Metrics go to logger, or to a CSVLogger under out_dir when it is None.
    """
    cfg = cfg.validate()
    if not strictly_convex(k):
        rank_zero_warn(f"{k!r} is not strictly convex on (0, inf); "
                       "minimizers need not be unique")
    pl.seed_everything(cfg.seed, workers=True)
    module = rieszEL.reg_solvers[cfg.method](k, cfg.to_namespace())
    _trainer(out_dir, logger).fit(module)
    rank_zero_info(f"{cfg.method} stopped after {module.iterations} "
                   f"iterations, converged={module.converged}")
    return module


def minimize(
    k: Kernel,
    cfg: SolveConfig,
    out_dir: str = None,
    logger=None
) -> Tuple[Union[GridDensity, ParticleSystem], ELReport]:
    """Minimizes E over densities (grid) or particle systems.

    Args:
        k (Kernel): Kernel
        cfg (SolveConfig): Solver settings
        out_dir (str, optional): Directory for CSV metrics
        logger (optional): Lightning logger used instead of the CSV one

    Returns:
        Tuple: The minimizer and its ELReport (for particles, of the KDE
        on the configured grid)

    Raises:
        ConfigError: Invalid config
        DivergenceError: Energy kept increasing or the step underflowed
    """
    module = run_solver(k, cfg, out_dir, logger)
    return summarize(k, cfg, module)


def summarize(
        k: Kernel, cfg: SolveConfig,
        module) -> Tuple[Union[GridDensity, ParticleSystem], ELReport]:
    """The minimizer held by a fitted solver module and its ELReport."""
    cfg = cfg.validate()
    result = module.result()
    if cfg.method == 'ParticleFlow':
        a0, b0, n = cfg.grid
        lo = min(a0, result.positions[0] - cfg.bandwidth)
        hi = max(b0, result.positions[-1] + cfg.bandwidth)
        density = particles_to_grid(result, cfg.bandwidth, n, lo, hi)
    else:
        density = result
    return result, verify_el(k, density, cfg.el_tol)


def boundedness_summary(k: Kernel, densities: List[GridDensity],
                        el_tol: float) -> dict:
    """sup f and the support shape of minimizers at successive resolutions.

    Returns:
        dict: Per-level n, M, support shape and EL residual, whether each M
        is within 10% of the previous one, and whether every support is an
        interval
    """
    levels = []
    for f in densities:
        report = verify_el(k, f, el_tol)
        levels.append({'n': f.n, 'M': f.M,
                       'support_is_interval': report.support_is_interval,
                       'el_residual': report.el_residual})
    ms = [lv['M'] for lv in levels]
    return {
        'levels': levels,
        'bounded': bool(all(abs(m1 - m0) <= BOUNDED_RTOL * m0
                            for m0, m1 in zip(ms, ms[1:]))),
        'interval': bool(all(lv['support_is_interval'] for lv in levels))
    }


def boundedness_check(k: Kernel, cfg: SolveConfig) -> dict:
    """Solves on the grid method at n and 2n − 1 nodes and compares sup f
    and the support shape."""
    cfg = cfg.validate()
    a0, b0, n = cfg.grid
    densities = []
    for nodes in (n, 2 * n - 1):
        run = dataclasses.replace(cfg, method='GridProjectedGradient',
                                  grid=(a0, b0, nodes))
        densities.append(minimize(k, run)[0])
    out = boundedness_summary(k, densities, cfg.el_tol)
    rank_zero_info(f"sup f at n={n}, {2 * n - 1}: "
                   f"{[lv['M'] for lv in out['levels']]}, "
                   f"bounded={out['bounded']}, interval={out['interval']}")
    return out
