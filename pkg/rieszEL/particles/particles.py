"""Explicit Euler particle flow dX_i/dt = −(1/N) Σ_{j≠i} g′(X_i − X_j).
"""
import argparse
from collections import OrderedDict

import numpy as np
import pytorch_lightning as pl
import torch
from pytorch_lightning.utilities.rank_zero import rank_zero_debug, rank_zero_warn
from torch.utils.data import DataLoader

from rieszEL.common.data_stream import (IterationStream, Snapshot,
                                        TrajectoryBuffer)
from rieszEL.common.errors import DivergenceError
from rieszEL.common.kernels import Kernel
from rieszEL.common.measures import ParticleSystem
from rieszEL.common.utils import make_generator

MIN_SEPARATION = 1e-8


def initial_positions(a0: float, b0: float, N: int, seed: int) -> np.ndarray:
    """Equispaced quantiles of the window with seeded jitter of a quarter
    spacing."""
    spacing = (b0 - a0) / N
    rng = make_generator(seed)
    base = a0 + spacing * (np.arange(N) + 0.5)
    return np.sort(base + rng.uniform(-0.25, 0.25, N) * spacing)


class ParticleFlow(pl.LightningModule):
    """Gradient flow of the discrete energy (1/N²) Σ_{i≠j} g(X_i − X_j).

    The step is dt = min(step0, cap/max|v|, 1/stiffness) with
    cap = min(window/N, min gap)/4 and stiffness = max_i (1/N) Σ_j g″(X_i − X_j)
    when g″ is available. Pairs closer than MIN_SEPARATION are pushed apart
    symmetrically, which keeps the mean position fixed.

    Attributes:
        positions (torch.Tensor): Sorted particle positions
        time (float): Flow time
        collisions (int): Number of separation corrections
        trajectory (TrajectoryBuffer): Recorded snapshots
    """
    def __init__(self, kernel: Kernel, hparams: argparse.Namespace) -> None:
        super(ParticleFlow, self).__init__()
        self.save_hyperparameters(hparams)
        self.automatic_optimization = False
        self.kernel = kernel
        a0, b0, _ = self.hparams.grid
        self.window = b0 - a0
        self.positions = torch.from_numpy(
            initial_positions(a0, b0, self.hparams.N, self.hparams.seed))
        self.time = 0.0
        self.iterations = 0
        self.collisions = 0
        self.max_velocity = np.inf
        self.converged = False
        self.trajectory = TrajectoryBuffer(self.hparams.record_every)

    @staticmethod
    def add_model_specific_args(
            parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
        """Adds particle flow args to parser

        Args:
            parser (argparse.ArgumentParser): Argument parser

        Returns:
            argparse.ArgumentParser: Updated argument parser
        """
        parser.add_argument("--N",
                            type=int,
                            default=200,
                            help="number of particles")
        parser.add_argument("--substeps",
                            type=int,
                            default=100,
                            help="Euler steps per training step")
        parser.add_argument("--bandwidth",
                            type=float,
                            default=0.05,
                            help="KDE bandwidth for the EL report")
        return parser

    def _pairwise(self, fn) -> torch.Tensor:
        X = self.positions
        diff = (X[:, None] - X[None, :]).numpy()
        np.fill_diagonal(diff, np.nan)
        vals = torch.from_numpy(np.asarray(fn(diff), dtype=float))
        return torch.nan_to_num(vals, nan=0.0)

    def velocity(self) -> torch.Tensor:
        return -self._pairwise(self.kernel.gprime).sum(1) / self.hparams.N

    def stiffness(self) -> float:
        if not self.kernel.has_gsecond:
            return 0.0
        s = self._pairwise(self.kernel.gsecond).sum(1) / self.hparams.N
        return float(torch.max(s))

    def energy(self) -> float:
        N = self.hparams.N
        return float(self._pairwise(self.kernel.g).sum()) / N**2

    def _separate(self) -> None:
        X = torch.sort(self.positions).values
        gaps = X[1:] - X[:-1]
        close = torch.nonzero(gaps < MIN_SEPARATION).flatten()
        for i in close.tolist():
            push = (MIN_SEPARATION - float(X[i + 1] - X[i])) / 2
            X[i] -= push
            X[i + 1] += push
        self.collisions += close.numel()
        self.positions = X

    def euler_step(self) -> None:
        v = self.velocity()
        vmax = float(torch.max(torch.abs(v)))
        if not np.isfinite(vmax):
            raise DivergenceError(
                f"non-finite velocity at step {self.iterations}")
        self.max_velocity = vmax
        gaps = self.positions[1:] - self.positions[:-1]
        min_gap = float(torch.min(gaps)) if gaps.numel() else self.window
        cap = min(self.window / self.hparams.N, min_gap) / 4
        dt = self.hparams.step0
        if vmax > 0:
            dt = min(dt, cap / vmax)
        stiff = self.stiffness()
        if stiff > 0:
            dt = min(dt, 1.0 / stiff)
        self.positions = self.positions + dt * v
        self._separate()
        self.time += dt
        self.iterations += 1

    def training_step(self, batch, nb_batch) -> None:
        """Runs substeps Euler steps

        Args:
            batch (torch.Tensor): Index of the training step
            nb_batch (int): Index of the training step
        """
        tol = 1e-3 * self.hparams.el_tol
        for _ in range(self.hparams.substeps):
            if self.iterations >= self.hparams.max_iters:
                break
            self.euler_step()
            if self.max_velocity <= tol:
                self.converged = True
                break
        if self.trajectory.wants(int(nb_batch)):
            self.trajectory.append(
                Snapshot(self.iterations, self.time, self.energy(),
                         self.positions.numpy().copy()))
        self.log_dict(OrderedDict([('max_velocity', self.max_velocity),
                                   ('time', self.time),
                                   ('collisions', float(self.collisions))]),
                      on_step=True,
                      on_epoch=False,
                      prog_bar=False,
                      logger=True)
        rank_zero_debug(f"particle step {self.iterations}: "
                        f"max|v|={self.max_velocity:.3e}")
        return None

    def on_train_batch_start(self, batch, batch_idx):
        if self.converged or self.iterations >= self.hparams.max_iters:
            return -1
        return None

    def on_train_end(self) -> None:
        if self.collisions:
            rank_zero_warn(
                f"{self.collisions} particle pairs came closer than "
                f"{MIN_SEPARATION:g}; the minimizer may not be absolutely "
                f"continuous for {self.kernel!r}")

    def configure_optimizers(self):
        return None

    def train_dataloader(self) -> DataLoader:
        steps = -(-self.hparams.max_iters // self.hparams.substeps)
        return DataLoader(dataset=IterationStream(steps), batch_size=None)

    def result(self) -> ParticleSystem:
        return ParticleSystem(self.positions.numpy().copy())
