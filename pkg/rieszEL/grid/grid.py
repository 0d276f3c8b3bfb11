"""Projected gradient descent of the interaction energy over grid densities.
"""
import argparse
from collections import OrderedDict

import numpy as np
import pytorch_lightning as pl
import torch
from pytorch_lightning.utilities.rank_zero import rank_zero_debug
from torch.utils.data import DataLoader

from rieszEL.common.data_stream import (IterationStream, Snapshot,
                                        TrajectoryBuffer)
from rieszEL.common.errors import DivergenceError
from rieszEL.common.kernels import Kernel
from rieszEL.common.measures import GridDensity
from rieszEL.common.potentials import node_matrix
from rieszEL.common.utils import project_weighted_simplex

_MONOTONE_TOL = 1e-12
_MAX_INCREASES = 10
_MIN_STEP = 1e-14


class GridProjectedGradient(pl.LightningModule):
    """Minimizes E_h(f) = fᵀSf over {f ≥ 0, Σ w_i f_i = 1}.

    A is the node potential matrix, W the trapezoid weights and
    S = (WA + AᵀW)/2, so that fᵀSf is the trapezoid rule for ∫ψ_f f.
    Each step moves along the W-metric gradient W⁻¹·2Sf ≈ 2ψ_f, projects
    back onto the weighted simplex and backtracks on the step size until
    the quadratic sufficient-decrease test holds.

    Attributes:
        density (torch.Tensor): Current iterate at the grid nodes
        step_size (float): Current step size
        trajectory (TrajectoryBuffer): Recorded snapshots
    """
    def __init__(self, kernel: Kernel, hparams: argparse.Namespace) -> None:
        super(GridProjectedGradient, self).__init__()
        self.save_hyperparameters(hparams)
        self.automatic_optimization = False
        self.kernel = kernel
        a0, b0, n = self.hparams.grid
        self.x = np.linspace(a0, b0, int(n))
        h = (b0 - a0) / (n - 1)
        A = torch.from_numpy(node_matrix(kernel.antiderivatives, h, int(n)))
        w = torch.full((int(n), ), h, dtype=torch.float64)
        w[0] = w[-1] = h / 2
        self.weights = w
        self.A = A
        self.S = (w[:, None] * A + A.T * w[None, :]) / 2
        self.density = torch.full((int(n), ), 1.0 / (b0 - a0),
                                  dtype=torch.float64)
        self.step_size = float(self.hparams.step0)
        self.trajectory = TrajectoryBuffer(self.hparams.record_every)
        self.iterations = 0
        self.increases = 0
        self.el_residual = np.inf
        self.converged = False

    @staticmethod
    def add_model_specific_args(
            parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
        """Adds grid solver args to parser

        Args:
            parser (argparse.ArgumentParser): Argument parser

        Returns:
            argparse.ArgumentParser: Updated argument parser
        """
        parser.add_argument("--n",
                            type=int,
                            default=401,
                            help="number of grid nodes")
        parser.add_argument("--inner_steps",
                            type=int,
                            default=10,
                            help="gradient steps per training step")
        return parser

    def energy_h(self, f: torch.Tensor) -> float:
        return float(f @ (self.S @ f))

    def psi(self, f: torch.Tensor) -> torch.Tensor:
        return self.A @ f

    def residual(self, f: torch.Tensor) -> float:
        """max|ψ − mean|/|mean| over the nodes where f > 1e-3·max f."""
        psi = self.psi(f)
        on = f > 1e-3 * torch.max(f)
        vals = psi[on]
        mean = torch.mean(vals)
        dev = torch.max(torch.abs(vals - mean))
        return float(dev / max(abs(float(mean)), 1e-300))

    def projected_step(self) -> float:
        """One accepted projected gradient step; returns the new energy."""
        f, w = self.density, self.weights
        Sf = self.S @ f
        e0 = float(f @ Sf)
        grad = 2 * Sf
        while True:
            s = self.step_size
            cand = project_weighted_simplex(f - s * grad / w, w)
            d = cand - f
            e1 = self.energy_h(cand)
            bound = e0 + float(grad @ d) + float(w @ (d * d)) / (2 * s)
            if e1 <= bound + _MONOTONE_TOL * max(1.0, abs(e0)):
                break
            self.step_size = s / 2
            if self.step_size < _MIN_STEP:
                raise DivergenceError(
                    f"step size underflow at iteration {self.iterations}, "
                    f"energy {e0:.12g}")
        if e1 > e0 + _MONOTONE_TOL * max(1.0, abs(e0)):
            self.increases += 1
            if self.increases >= _MAX_INCREASES:
                raise DivergenceError(
                    f"energy increased over {_MAX_INCREASES} consecutive "
                    f"steps, last {e0:.12g} -> {e1:.12g}")
        else:
            self.increases = 0
        self.density = cand
        self.step_size = s * 1.5
        self.iterations += 1
        return e1

    def training_step(self, batch, nb_batch) -> None:
        """Runs inner_steps projected gradient steps

        Args:
            batch (torch.Tensor): Index of the training step
            nb_batch (int): Index of the training step
        """
        e = None
        for _ in range(self.hparams.inner_steps):
            if self.iterations >= self.hparams.max_iters:
                break
            e = self.projected_step()
        if e is None:
            return None
        self.el_residual = self.residual(self.density)
        self.converged = self.el_residual <= self.hparams.el_tol
        mass = float(self.weights @ self.density)
        if self.trajectory.wants(int(nb_batch)):
            self.trajectory.append(
                Snapshot(self.iterations, float(self.iterations), e,
                         self.density.numpy().copy()))
        self.log_dict(OrderedDict([('energy', e),
                                   ('el_residual', self.el_residual),
                                   ('step_size', self.step_size),
                                   ('mass', mass)]),
                      on_step=True,
                      on_epoch=False,
                      prog_bar=False,
                      logger=True)
        rank_zero_debug(f"grid step {self.iterations}: energy={e:.12g} "
                        f"residual={self.el_residual:.3e}")
        return None

    def on_train_batch_start(self, batch, batch_idx):
        if self.converged or self.iterations >= self.hparams.max_iters:
            return -1
        return None

    def configure_optimizers(self):
        return None

    def train_dataloader(self) -> DataLoader:
        steps = -(-self.hparams.max_iters // self.hparams.inner_steps)
        return DataLoader(dataset=IterationStream(steps), batch_size=None)

    def result(self) -> GridDensity:
        a0, b0, _ = self.hparams.grid
        values = np.maximum(self.density.numpy(), 0.0)
        return GridDensity(a0, b0, values)
