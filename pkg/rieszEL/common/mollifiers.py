"""Friedrichs mollifier ρ(t) = Z⁻¹ exp(−1/(1 − t²)) and the regularization
f_δ = f ∗ ρ_δ of grid densities.

f_δ is the exact convolution of the linear interpolant of f with ρ_δ, so its
values and derivatives at any point come from the cell integrals of
``rieszEL.common.potentials`` with the antiderivatives of ρ_δ, ρ_δ' and ρ_δ''.
On the output grid these are FFT convolutions with fixed stencils.
"""
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from pytorch_lightning.utilities.rank_zero import rank_zero_debug
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline
from scipy.signal import fftconvolve

from rieszEL.common.errors import (BoundViolation, ConfigError,
                                   ResolutionError, RieszError)
from rieszEL.common.kernels import Kernel
from rieszEL.common.measures import GridDensity
from rieszEL.common.potentials import _cell_pq, potential_at

_CHUNK = 2_000_000


class Mollifier:
    """The standard bump and its cumulative moment tables.

    T0(s) = ∫_0^s ρ and T1(s) = ∫_0^s ρ(t) t dt are tabulated on [0, 1] by
    Gauss-Legendre pieces and interpolated with cubic Hermite splines.

    Args:
        table_nodes (int): Number of table nodes on [0, 1]

    Raises:
        RieszError: The bump fails one of its required properties
    """
    def __init__(self, table_nodes: int = 2049) -> None:
        z, _ = integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)), -1, 1,
                              epsabs=1e-15, epsrel=1e-14, limit=200)
        self.Z = z
        s = np.linspace(0.0, 1.0, table_nodes)
        t, w = np.polynomial.legendre.leggauss(12)
        lo, hi = s[:-1, None], s[1:, None]
        pts = (lo + hi) / 2 + (hi - lo) / 2 * t[None, :]
        wts = (hi - lo) / 2 * w[None, :]
        r = self.rho(pts)
        t0 = np.concatenate([[0.0], np.cumsum((r * wts).sum(1))])
        t1 = np.concatenate([[0.0], np.cumsum((r * pts * wts).sum(1))])
        rs = self.rho(s)
        self._t0 = CubicHermiteSpline(s, t0, rs)
        self._t1 = CubicHermiteSpline(s, t1, rs * s)
        probe = np.linspace(-1, 1, 20001)
        self.max_abs_rho_second = float(np.max(np.abs(self.rho_second(probe))))
        self._check()

    def _check(self) -> None:
        mass = 2 * float(self.T0(1.0))
        if abs(mass - 1) > 1e-10:
            raise RieszError(f"mollifier mass {mass!r} is not 1")
        if self.rho(0.0) > 1:
            raise RieszError(f"mollifier sup {self.rho(0.0)!r} exceeds 1")
        probes = np.linspace(0, 1, 1001)[1:-1]
        if np.any(self.rho_prime(probes) >= 0):
            raise RieszError("mollifier is not decreasing on (0, 1)")
        rank_zero_debug(f"mollifier Z={self.Z:.12g}, rho(0)={self.rho(0.0):.6g}")

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) < 1
        q = np.where(inside, 1 - t * t, 1.0)
        return np.where(inside, np.exp(-1.0 / q) / self.Z, 0.0)[()]

    def rho_prime(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) < 1
        q = np.where(inside, 1 - t * t, 1.0)
        return np.where(inside, self.rho(t) * (-2 * t / q**2), 0.0)[()]

    def rho_second(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) < 1
        q = np.where(inside, 1 - t * t, 1.0)
        return np.where(inside, self.rho(t) * (6 * t**4 - 2) / q**4, 0.0)[()]

    def rho_delta(self, t, delta: float):
        return self.rho(np.asarray(t) / delta) / delta

    def T0(self, s):
        return self._t0(np.clip(s, 0.0, 1.0))

    def T1(self, s):
        return self._t1(np.clip(s, 0.0, 1.0))

    def tail_mass(self, s: float) -> float:
        """∫_s^1 ρ for s in [0, 1]."""
        return float(0.5 - self.T0(s))

    def antiderivatives(self, delta: float, order: int = 0):
        """(Φ0, Φ1) of ρ_δ^(order), up to additive constants."""
        if order == 0:
            def anti(u):
                s = np.abs(u) / delta
                return np.sign(u) * self.T0(s), delta * self.T1(s)
        elif order == 1:
            def anti(u):
                r = self.rho_delta(u, delta)
                s = np.abs(u) / delta
                return r, u * r - np.sign(u) * self.T0(s)
        elif order == 2:
            def anti(u):
                rp = self.rho_prime(np.asarray(u) / delta) / delta**2
                return rp, u * rp - self.rho_delta(u, delta)
        else:
            raise ConfigError(f"order must be 0, 1 or 2, got {order}")
        return anti


@lru_cache(maxsize=1)
def standard_mollifier() -> Mollifier:
    return Mollifier()


def _stencil(rho: Mollifier, delta: float, order: int, h: float, refine: int,
             half: int) -> Tuple[np.ndarray, np.ndarray]:
    m = np.arange(-half, half + 1, dtype=float)
    u1 = m * (h / refine)
    return _cell_pq(rho.antiderivatives(delta, order), u1 - h, u1, h)


class MollifiedDensity(GridDensity):
    """f_δ sampled on a grid extending the support of f by δ on each side.

    Keeps its source density so that f_δ, f_δ' and f_δ'' can be evaluated
    exactly anywhere.

    Args:
        source (GridDensity): Density that was mollified
        delta (float): Mollifier scale
        refine (int): Output nodes per input cell
    """
    def __init__(self, source: GridDensity, delta: float,
                 refine: int = 1) -> None:
        self.source = source
        self.delta = float(delta)
        self.refine = int(refine)
        self._ext = int(math.ceil(delta / source.h - 1e-9))
        a = source.a - self._ext * source.h
        b = source.b + self._ext * source.h
        values = self._grid_samples(0)
        if not source.signed:
            values = np.maximum(values, 0.0)
        super().__init__(a, b, values, signed=source.signed)
        self._derivatives = {0: self.values}

    def _grid_samples(self, order: int) -> np.ndarray:
        src, r = self.source, self.refine
        half = (self._ext + 1) * r + 1
        p, q = _stencil(standard_mollifier(), self.delta, order, src.h, r,
                        half)
        up0 = np.zeros((src.n - 2) * r + 1)
        up1 = np.zeros_like(up0)
        up0[::r] = src.values[:-1]
        up1[::r] = src.values[1:]
        full = fftconvolve(up0, p) + fftconvolve(up1, q)
        n_out = (src.n - 1 + 2 * self._ext) * r + 1
        return full[r + 1:r + 1 + n_out]

    def derivative_samples(self, order: int) -> np.ndarray:
        """Exact f_δ^(order) at the grid nodes."""
        if order not in self._derivatives:
            self._derivatives[order] = self._grid_samples(order)
        return self._derivatives[order]

    def derivative_density(self, order: int) -> GridDensity:
        return GridDensity(self.a, self.b, self.derivative_samples(order),
                           signed=True)

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Exact f_δ^(order)(t) at arbitrary points."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        src = self.source
        anti = standard_mollifier().antiderivatives(self.delta, order)
        reach = self._ext + 2
        offsets = np.arange(-reach, reach + 1)
        out = np.empty(t.size)
        step = max(1, _CHUNK // offsets.size)
        for s in range(0, t.size, step):
            ts = t[s:s + step, None]
            cells = np.floor((ts - src.a) / src.h).astype(np.int64) + offsets
            valid = (cells >= 0) & (cells <= src.n - 2)
            c = np.clip(cells, 0, src.n - 2)
            u1 = ts - (src.a + src.h * c)
            p, q = _cell_pq(anti, u1 - src.h, u1, src.h)
            vals = p * src.values[c] + q * src.values[c + 1]
            out[s:s + step] = np.where(valid, vals, 0.0).sum(1)
        return out


def mollify(f: GridDensity, delta: float, refine: int = 1) -> MollifiedDensity:
    """f_δ = f ∗ ρ_δ on [a − δ', b + δ'], δ' = δ rounded up to whole cells.

    Args:
        f (GridDensity): Density
        delta (float): Scale, at least 4 grid spacings
        refine (int): Output nodes per input cell

    Raises:
        ResolutionError: delta below 4 grid spacings
    """
    if not delta >= 4 * f.h * (1 - 1e-12):
        raise ResolutionError(
            f"grid cannot resolve mollifier: delta={delta:g} < 4h={4 * f.h:g}",
            condition='delta')
    return MollifiedDensity(f, delta, refine)


def derivative_bound_check(f: GridDensity, delta: float,
                           refine: int = 2) -> float:
    """max|f_δ'| over a refined output grid, checked against 2M/δ.

    Raises:
        BoundViolation: max|f_δ'| > 2M/δ
    """
    fd = mollify(f, delta, refine)
    top = float(np.max(np.abs(fd.derivative_samples(1))))
    bound = 2 * f.M / delta
    if top > bound * (1 + 1e-12):
        raise BoundViolation(
            f"max|f_delta'| = {top:.9g} exceeds 2M/delta = {bound:.9g}")
    return top


def potential_commutation_check(k: Kernel, f: GridDensity, delta: float,
                                xs) -> Tuple[float, float]:
    """max over xs of |ψ_{f_δ}(x) − (ψ_f ∗ ρ_δ)(x)|.

    The left side integrates g(x − y) f_δ(y) over y, the right side
    ψ_f(x − δs) ρ(s) over s; both by adaptive quadrature.

    Returns:
        Tuple[float, float]: Largest discrepancy and the summed quadrature
        error estimates at that point
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs <= f.a + delta) or np.any(xs >= f.b - delta):
        raise ResolutionError("query points must lie in (a + delta, b - delta)",
                              condition='commutation')
    fd = mollify(f, delta)
    rho = standard_mollifier()
    worst, worst_err = 0.0, 0.0
    for x in xs:
        pts = [p for p in (fd.a, x, fd.b) if fd.a < p < fd.b]
        lhs, e1 = integrate.quad(
            lambda y: float(k.g(x - y)) * float(fd.evaluate(y)[0]), fd.a,
            fd.b, points=pts, limit=1000, epsabs=1e-12, epsrel=1e-12)
        rhs, e2 = integrate.quad(
            lambda s: potential_at(k, f, x - delta * s)[0] * float(rho.rho(s)),
            -1, 1, limit=200, epsabs=1e-12, epsrel=1e-12)
        if abs(lhs - rhs) >= worst:
            worst, worst_err = abs(lhs - rhs), e1 + e2
    return worst, worst_err
