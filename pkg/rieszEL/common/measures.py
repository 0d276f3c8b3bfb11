"""Densities on uniform grids, particle measures and essential-limit
diagnostics.

Attributes:
    JumpDiagnostics (NamedTuple): One-sided essential limits at a point
"""
from typing import List, NamedTuple, Tuple

import numpy as np
from pytorch_lightning.utilities.rank_zero import rank_zero_warn
from scipy import integrate

from rieszEL.common.errors import (ConfigError, PreconditionError,
                                   ResolutionError)
from rieszEL.common.utils import read_csv_columns, write_csv_columns


class GridDensity:
    """Density sampled on a uniform grid over its support [a, b].

    The density is the piecewise-linear interpolant of the samples, extended
    by zero outside [a, b].

    Args:
        a (float): Left end of the support
        b (float): Right end of the support
        values (array_like): n >= 2 samples f(x_i)
        signed (bool): Allow negative samples (odd parts, derivatives)

    Attributes:
        values (np.ndarray): Read-only samples
        signed (bool): Whether negative samples are allowed
    """
    def __init__(self, a: float, b: float, values, signed: bool = False):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ConfigError("a grid density needs at least 2 samples")
        if not a < b:
            raise ConfigError(f"support needs a < b, got [{a}, {b}]")
        if not np.all(np.isfinite(values)):
            raise ConfigError("density samples must be finite")
        if not signed and np.any(values < 0):
            raise ConfigError("density samples must be nonnegative")
        values.setflags(write=False)
        self.a = float(a)
        self.b = float(b)
        self.values = values
        self.signed = signed

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n)

    @property
    def mass(self) -> float:
        return float(integrate.trapezoid(self.values, dx=self.h))

    @property
    def M(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def D(self) -> float:
        return self.b - self.a

    def __call__(self, t):
        return np.interp(t, self.x, self.values, left=0.0, right=0.0)

    def __repr__(self) -> str:
        return (f"GridDensity(a={self.a:g}, b={self.b:g}, n={self.n}, "
                f"mass={self.mass:.6g})")

    @classmethod
    def from_function(cls,
                      func,
                      a: float,
                      b: float,
                      n: int,
                      signed: bool = False) -> 'GridDensity':
        x = np.linspace(a, b, n)
        return cls(a, b, np.asarray(func(x), dtype=float), signed=signed)

    @classmethod
    def from_csv(cls, path: str, signed: bool = None) -> 'GridDensity':
        """Loads a two-column (x, f) CSV with uniformly spaced x.

        Raises:
            ConfigError: Unreadable file or non-uniform spacing
        """
        cols = read_csv_columns(path)
        if 'x' not in cols or 'f' not in cols:
            raise ConfigError(f"{path}: density CSV needs header x,f")
        x, f = cols['x'], cols['f']
        if x.size < 2 or np.any(np.diff(x) <= 0):
            raise ConfigError(f"{path}: x must be strictly increasing")
        h = (x[-1] - x[0]) / (x.size - 1)
        if np.max(np.abs(np.diff(x) - h)) > 1e-9 * max(1.0, abs(h)):
            raise ConfigError(f"{path}: x must be uniformly spaced")
        if signed is None:
            signed = bool(np.any(f < 0))
        return cls(x[0], x[-1], f, signed=signed)

    def to_csv(self, path: str) -> None:
        write_csv_columns(path, {'x': self.x, 'f': self.values})

    def shifted(self, c: float) -> 'GridDensity':
        return GridDensity(self.a + c, self.b + c, self.values, self.signed)

    def scaled(self, c: float) -> 'GridDensity':
        return GridDensity(self.a, self.b, c * self.values,
                           self.signed or c < 0)

    def normalized(self) -> 'GridDensity':
        return self.scaled(1.0 / self.mass)


class ParticleSystem:
    """N equal-weight particles, kept sorted.

    Args:
        positions (array_like): Particle positions
    """
    def __init__(self, positions) -> None:
        positions = np.sort(np.asarray(positions, dtype=float))
        if positions.ndim != 1 or positions.size == 0:
            raise ConfigError("a particle system needs at least one particle")
        self.positions = positions

    @property
    def N(self) -> int:
        return self.positions.size

    @property
    def weight(self) -> float:
        return 1.0 / self.N

    def quantiles(self) -> np.ndarray:
        """Mid-rank quantile levels (i + 1/2)/N of the sorted positions."""
        return (np.arange(self.N) + 0.5) / self.N

    @classmethod
    def from_csv(cls, path: str) -> 'ParticleSystem':
        return cls(read_csv_columns(path)['x'])

    def to_csv(self, path: str) -> None:
        write_csv_columns(path, {'x': self.positions})


class JumpDiagnostics(NamedTuple):
    point: float
    l_L_minus: float
    l_L_plus: float
    l_R_minus: float
    l_R_plus: float
    h_L: float
    h_R: float
    eta_used: float
    stabilized: bool
    discard: float
    history: List[dict]

    @property
    def two_sided_gap(self) -> float:
        """max(l_L+, l_R+) - min(l_L-, l_R-), zero iff f is continuous at x̄."""
        return (max(self.l_L_plus, self.l_R_plus) -
                min(self.l_L_minus, self.l_R_minus))

    def to_dict(self) -> dict:
        out = self._asdict()
        out['two_sided_gap'] = self.two_sided_gap
        return out


def _trimmed_limits(samples: np.ndarray, discard: float) -> Tuple[float, float]:
    lo, hi = np.quantile(samples, [discard, 1.0 - discard])
    return float(lo), float(hi)


def essential_limits(f: GridDensity,
                     xbar: float,
                     windows,
                     discard: float = 0.01) -> JumpDiagnostics:
    """Essential liminf/limsup of f from the left and the right of xbar.

    In each window (xbar - η, xbar) the smallest and largest discard fraction
    of samples is ignored before taking inf and sup; same on the right. The
    estimates are accepted at the first pair of successive windows agreeing
    within 2·h·L, with L the median |Δf|/h over the largest window; otherwise
    the finest window is reported as not stabilized.

    Args:
        f (GridDensity): Density
        xbar (float): Interior point
        windows (array_like): Strictly decreasing window half-widths
        discard (float): Discarded fraction τ on each tail

    Returns:
        JumpDiagnostics: Limits, jumps and the per-window history

    Raises:
        PreconditionError: xbar not interior or bad windows
        ResolutionError: Fewer than 8 samples in a window
    """
    windows = np.asarray(windows, dtype=float)
    if not f.a < xbar < f.b:
        raise PreconditionError(f"xbar={xbar} is not inside ({f.a}, {f.b})")
    if windows.size == 0 or np.any(windows <= 0) or np.any(
            np.diff(windows) >= 0):
        raise PreconditionError("windows must be positive, strictly decreasing")
    room = min(xbar - f.a, f.b - xbar)
    if windows[0] >= room:
        raise PreconditionError(
            f"window {windows[0]:g} leaves the support (room {room:g})")
    x, v = f.x, f.values
    history = []
    for eta in windows:
        left = v[(x > xbar - eta) & (x < xbar)]
        right = v[(x > xbar) & (x < xbar + eta)]
        if min(left.size, right.size) < 8:
            raise ResolutionError(
                f"grid too coarse for window {eta:g}: "
                f"{min(left.size, right.size)} samples", condition='window')
        lLm, lLp = _trimmed_limits(left, discard)
        lRm, lRp = _trimmed_limits(right, discard)
        history.append({
            'eta': float(eta),
            'l_L_minus': lLm,
            'l_L_plus': lLp,
            'l_R_minus': lRm,
            'l_R_plus': lRp
        })

    big = (x > xbar - windows[0]) & (x < xbar + windows[0])
    lip = float(np.median(np.abs(np.diff(v[big])))) / f.h
    tol = 2 * f.h * lip + 1e-12 * (f.M + 1)
    keys = ('l_L_minus', 'l_L_plus', 'l_R_minus', 'l_R_plus')
    chosen, stabilized = history[-1], False
    for prev, cur in zip(history[:-1], history[1:]):
        if all(abs(prev[k] - cur[k]) <= tol for k in keys):
            chosen, stabilized = cur, True
            break
    if not stabilized:
        rank_zero_warn(f"essential limits at {xbar:g} not stabilized; "
                       f"reporting window {chosen['eta']:g}")
    lLm, lLp, lRm, lRp = (chosen[k] for k in keys)
    return JumpDiagnostics(float(xbar), lLm, lLp, lRm, lRp, lLp - lLm,
                           lRp - lRm, chosen['eta'], stabilized, discard,
                           history)


def symmetrize(f: GridDensity,
               xbar: float,
               full_support: bool = False) -> Tuple[GridDensity, GridDensity]:
    """Even and odd parts f_S(t) = f(x̄+t) + f(x̄−t), f_A(t) = f(x̄+t) − f(x̄−t).

    Args:
        f (GridDensity): Density
        xbar (float): Center, inside (a, b)
        full_support (bool): Use [−S, S] with S = max(x̄−a, b−x̄) so that both
            parts carry all of f, instead of [−s, s] with s = min(...)

    Returns:
        Tuple[GridDensity, GridDensity]: f_S (nonnegative) and f_A (signed)
    """
    if not f.a < xbar < f.b:
        raise PreconditionError(f"xbar={xbar} is not inside ({f.a}, {f.b})")
    span = (max if full_support else min)(xbar - f.a, f.b - xbar)
    m = max(1, int(round(span / f.h)))
    t = np.linspace(-span, span, 2 * m + 1)
    plus, minus = f(xbar + t), f(xbar - t)
    f_s = GridDensity(-span, span, plus + minus, signed=f.signed)
    f_a = GridDensity(-span, span, plus - minus, signed=True)
    return f_s, f_a


def particles_to_grid(p: ParticleSystem,
                      bandwidth: float,
                      n: int,
                      a: float = None,
                      b: float = None) -> GridDensity:
    """Kernel density estimate with the mollifier bump at scale bandwidth.

    The grid spans [min X − bandwidth, max X + bandwidth] unless given, and
    the estimate is renormalized to unit trapezoid mass.

    Args:
        p (ParticleSystem): Particles
        bandwidth (float): Bump half-width, > 0
        n (int): Number of grid nodes
        a (float, optional): Left end of the grid
        b (float, optional): Right end of the grid

    Returns:
        GridDensity: Unit-mass density
    """
    from rieszEL.common.mollifiers import standard_mollifier
    if not bandwidth > 0:
        raise ConfigError(f"bandwidth must be positive, got {bandwidth}")
    a = p.positions[0] - bandwidth if a is None else a
    b = p.positions[-1] + bandwidth if b is None else b
    x = np.linspace(a, b, n)
    rho = standard_mollifier()
    values = np.zeros(n)
    for chunk in np.array_split(p.positions, max(1, p.N * n // 2_000_000)):
        values += rho.rho_delta(x[:, None] - chunk[None, :], bandwidth).sum(1)
    values /= p.N
    f = GridDensity(a, b, values)
    if f.mass <= 0:
        raise ResolutionError(
            f"bandwidth {bandwidth:g} is not resolved by {n} nodes",
            condition='bandwidth')
    return f.normalized()
