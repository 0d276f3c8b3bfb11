"""C² functions with exact first and second derivatives.

A function is either a sum of analytic terms described by a JSON spec, a
cubic spline through samples, or a mollified density. ``TestFunction`` adds
the interval [α, β] of the cancellation inequalities and scans the endpoint
hypotheses those inequalities need.

Term kinds of a spec (all parameters are reals unless noted):

    const       c
    bump        a·B((t − m)/w), B(s) = exp(−1/(1 − s²)) on |s| < 1
    smoothstep  height·S((t − lo)/(hi − lo)), S cubic (order 3) or quintic
                (order 5) smoothstep, constant outside [lo, hi]
    poly        a·(t − lo)^p·(hi − t)^q on [lo, hi], zero outside; p, q ints
    sin2        a·sin²(ω(t − phase))
    cos         a·cos(ω(t − phase))
"""
import json
import os
from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from rieszEL.common.errors import ConfigError, PreconditionError
from rieszEL.common.measures import GridDensity
from rieszEL.common.mollifiers import MollifiedDensity
from rieszEL.common.utils import read_csv_columns

Evaluator = Callable[[np.ndarray], np.ndarray]

CRITICAL_TOL = 1e-10
SCAN_POINTS = 4001


def _bump(t, a, m, w):
    s = (t - m) / w
    inside = np.abs(s) < 1
    q = np.where(inside, 1 - s * s, 1.0)
    b = np.where(inside, np.exp(-1.0 / q), 0.0)
    d1 = np.where(inside, b * (-2 * s / q**2), 0.0)
    d2 = np.where(inside, b * (6 * s**4 - 2) / q**4, 0.0)
    return a * b, a * d1 / w, a * d2 / w**2


def _smoothstep(t, height, lo, hi, order=5):
    width = hi - lo
    s = np.clip((t - lo) / width, 0.0, 1.0)
    inside = (t > lo) & (t < hi)
    if order == 3:
        v, d1, d2 = 3 * s**2 - 2 * s**3, 6 * s - 6 * s**2, 6 - 12 * s
    elif order == 5:
        v = 10 * s**3 - 15 * s**4 + 6 * s**5
        d1 = 30 * s**2 - 60 * s**3 + 30 * s**4
        d2 = 60 * s - 180 * s**2 + 120 * s**3
    else:
        raise ConfigError(f"smoothstep order must be 3 or 5, got {order}")
    return (height * v, np.where(inside, height * d1 / width, 0.0),
            np.where(inside, height * d2 / width**2, 0.0))


def _power(u, e):
    return u**e if e >= 0 else np.zeros_like(u)


def _poly(t, a, lo, hi, p, q):
    p, q = int(p), int(q)
    inside = (t >= lo) & (t <= hi)
    u = np.where(inside, t - lo, 0.0)
    v = np.where(inside, hi - t, 0.0)
    val = _power(u, p) * _power(v, q)
    d1 = p * _power(u, p - 1) * _power(v, q) - q * _power(u, p) * _power(
        v, q - 1)
    d2 = (p * (p - 1) * _power(u, p - 2) * _power(v, q) -
          2 * p * q * _power(u, p - 1) * _power(v, q - 1) +
          q * (q - 1) * _power(u, p) * _power(v, q - 2))
    return tuple(np.where(inside, a * z, 0.0) for z in (val, d1, d2))


def _sin2(t, a, omega, phase=0.0):
    z = omega * (t - phase)
    return (a * np.sin(z)**2, a * omega * np.sin(2 * z),
            2 * a * omega**2 * np.cos(2 * z))


def _cos(t, a, omega, phase=0.0):
    z = omega * (t - phase)
    return (a * np.cos(z), -a * omega * np.sin(z),
            -a * omega**2 * np.cos(z))


def _const(t, c):
    zero = np.zeros_like(t)
    return c + zero, zero, zero


TERMS = {
    'const': _const,
    'bump': _bump,
    'smoothstep': _smoothstep,
    'poly': _poly,
    'sin2': _sin2,
    'cos': _cos
}


def _term_sum(terms: List[dict]) -> Tuple[Evaluator, Evaluator, Evaluator]:
    parsed = []
    for term in terms:
        term = dict(term)
        kind = term.pop('kind', None)
        if kind not in TERMS:
            raise ConfigError(f"unknown term kind {kind!r}")
        parsed.append((TERMS[kind], term))

    def order(i):
        def fn(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            for f, params in parsed:
                out = out + f(t, **params)[i]
            return out
        return fn

    try:
        order(0)(np.zeros(1))
    except TypeError as e:
        raise ConfigError(f"bad term parameters: {e}") from None
    return order(0), order(1), order(2)


class SmoothFunction:
    """C² function F on [lo, hi], extended by zero.

    Args:
        value (Callable): t -> F(t)
        d1 (Callable): t -> F'(t)
        d2 (Callable): t -> F''(t)
        lo (float): Left end of the support
        hi (float): Right end of the support
        spec (dict, optional): JSON description that rebuilds the function

    Attributes:
        spec (dict): Replayable description, None for mollified densities
    """
    def __init__(self,
                 value: Evaluator,
                 d1: Evaluator,
                 d2: Evaluator,
                 lo: float,
                 hi: float,
                 spec: dict = None) -> None:
        if not lo < hi:
            raise ConfigError(f"empty support [{lo}, {hi}]")
        self._fns = (value, d1, d2)
        self.lo, self.hi = float(lo), float(hi)
        self.spec = spec

    def derivative(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t >= self.lo) & (t <= self.hi)
        tt = np.where(inside, t, self.lo)
        return np.where(inside, self._fns[order](tt), 0.0)[()]

    def __call__(self, t):
        return self.derivative(t, 0)

    def d1(self, t):
        return self.derivative(t, 1)

    def d2(self, t):
        return self.derivative(t, 2)

    @property
    def support(self) -> Tuple[float, float]:
        return self.lo, self.hi

    def scan_grid(self, points: int = SCAN_POINTS) -> np.ndarray:
        return np.linspace(self.lo, self.hi, points)

    def max_abs_derivative(self, order: int = 1,
                           points: int = SCAN_POINTS) -> float:
        return float(np.max(np.abs(self.derivative(self.scan_grid(points),
                                                   order))))

    def check_compact(self) -> None:
        """Raises PreconditionError unless F and F' vanish at both ends."""
        ends = np.array([self.lo, self.hi])
        scale = 1 + self.max_abs_derivative(0)
        if np.any(np.abs(self._fns[0](ends)) > 1e-9 * scale) or np.any(
                np.abs(self._fns[1](ends)) > 1e-9 * scale):
            raise PreconditionError(
                "F is not compactly supported in "
                f"[{self.lo:g}, {self.hi:g}]: F or F' is nonzero at an end")

    @classmethod
    def from_terms(cls, terms: List[dict], lo: float,
                   hi: float) -> 'SmoothFunction':
        value, d1, d2 = _term_sum(terms)
        return cls(value, d1, d2, lo, hi,
                   spec={'lo': lo, 'hi': hi, 'terms': list(terms)})

    @classmethod
    def from_samples(cls, t, y, bc_type='clamped') -> 'SmoothFunction':
        """C² cubic spline through (t, y)."""
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.size < 4 or np.any(np.diff(t) <= 0):
            raise ConfigError("need at least 4 strictly increasing samples")
        spline = CubicSpline(t, y, bc_type=bc_type)
        return cls(spline, spline.derivative(1), spline.derivative(2), t[0],
                   t[-1], spec={'samples': {'t': t.tolist(), 'F': y.tolist()}})

    @classmethod
    def from_density(cls, f: GridDensity) -> 'SmoothFunction':
        """Exact derivatives for mollified densities, a clamped spline
        through the nodes otherwise."""
        if isinstance(f, MollifiedDensity):
            def order(i):
                return lambda t: f.evaluate(t, i).reshape(np.shape(t))
            return cls(order(0), order(1), order(2), f.a, f.b)
        return cls.from_samples(f.x, f.values)

    @classmethod
    def from_csv(cls, path: str) -> 'SmoothFunction':
        cols = read_csv_columns(path)
        if 't' not in cols or 'F' not in cols:
            raise ConfigError(f"{path}: expected columns t,F")
        return cls.from_samples(cols['t'], cols['F'])

    @classmethod
    def load(cls, path: str) -> 'SmoothFunction':
        """Reads a CSV with columns t,F or a JSON {"lo", "hi", "terms"}."""
        if os.path.splitext(path)[1].lower() == '.csv':
            return cls.from_csv(path)
        try:
            with open(path, 'rt') as f:
                spec = json.load(f)
            return cls.from_terms(spec['terms'], float(spec['lo']),
                                  float(spec['hi']))
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from None


class TestFunction(SmoothFunction):
    """C² function on [α, β] with its endpoint hypotheses.

    The flags are computed on construction by a scan of F on a uniform grid;
    endpoints listed in ``critical`` are verified to have |F'| ≤ 1e-10.

    Args:
        value (Callable): t -> F(t)
        d1 (Callable): t -> F'(t)
        d2 (Callable): t -> F''(t)
        alpha (float): Left end
        beta (float): Right end
        spec (dict, optional): Replayable description
        critical (Iterable[str]): Endpoints ('alpha', 'beta') claimed critical

    Attributes:
        flags (Dict[str, bool]): equal_endpoints, alpha_min, alpha_max,
            beta_min, beta_max, alpha_critical, beta_critical

    Raises:
        PreconditionError: A claimed critical endpoint is not critical
    """
    __test__ = False

    def __init__(self,
                 value: Evaluator,
                 d1: Evaluator,
                 d2: Evaluator,
                 alpha: float,
                 beta: float,
                 spec: dict = None,
                 critical: Iterable[str] = ()) -> None:
        super(TestFunction, self).__init__(value, d1, d2, alpha, beta, spec)
        self.flags = self.scan()
        for end in critical:
            if end not in ('alpha', 'beta'):
                raise ConfigError(f"unknown endpoint {end!r}")
            if not self.flags[f'{end}_critical']:
                raise PreconditionError(
                    f"claimed critical endpoint {end} has "
                    f"|F'| = {abs(float(self.d1(getattr(self, end)))):.3g}")

    @property
    def alpha(self) -> float:
        return self.lo

    @property
    def beta(self) -> float:
        return self.hi

    @property
    def gamma(self) -> float:
        return self.hi - self.lo

    def scan(self, points: int = SCAN_POINTS) -> Dict[str, bool]:
        t = self.scan_grid(points)
        v = self(t)
        fa, fb = float(v[0]), float(v[-1])
        tol = 1e-10 * (1 + float(np.max(np.abs(v))))
        return {
            'equal_endpoints': abs(fa - fb) <= tol,
            'alpha_min': bool(np.all(v >= fa - tol)),
            'alpha_max': bool(np.all(v <= fa + tol)),
            'beta_min': bool(np.all(v >= fb - tol)),
            'beta_max': bool(np.all(v <= fb + tol)),
            'alpha_critical': abs(float(self.d1(self.lo))) <= CRITICAL_TOL,
            'beta_critical': abs(float(self.d1(self.hi))) <= CRITICAL_TOL
        }

    def require(self, *clauses: str) -> None:
        """Raises PreconditionError naming the first clause that fails."""
        for clause in clauses:
            if not self.flags[clause]:
                raise PreconditionError(f"hypothesis {clause} fails for F on "
                                        f"[{self.lo:g}, {self.hi:g}]")

    def to_spec(self) -> dict:
        return dict(self.spec or {}, alpha=self.lo, beta=self.hi)

    @classmethod
    def from_spec(cls, spec: dict) -> 'TestFunction':
        """Builds from {"alpha", "beta", "terms" | "samples", "critical"}."""
        try:
            alpha, beta = float(spec['alpha']), float(spec['beta'])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("test function spec needs alpha and beta") \
                from None
        critical = tuple(spec.get('critical', ()))
        if 'terms' in spec:
            value, d1, d2 = _term_sum(spec['terms'])
            return cls(value, d1, d2, alpha, beta,
                       spec={'terms': list(spec['terms']),
                             'critical': list(critical)},
                       critical=critical)
        if 'samples' in spec:
            s = spec['samples']
            return cls.from_samples_on(s['t'], s['F'], critical)
        raise ConfigError("test function spec needs terms or samples")

    @classmethod
    def from_samples_on(cls, t, y, critical: Iterable[str] = ()) \
            -> 'TestFunction':
        """Spline through samples, clamped to zero slope at critical ends."""
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.size < 4 or np.any(np.diff(t) <= 0):
            raise ConfigError("need at least 4 strictly increasing samples")
        critical = tuple(critical)
        bc = tuple((1, 0.0) if end in critical else 'not-a-knot'
                   for end in ('alpha', 'beta'))
        spline = CubicSpline(t, y, bc_type=bc)
        return cls(spline, spline.derivative(1), spline.derivative(2), t[0],
                   t[-1], spec={'samples': {'t': t.tolist(), 'F': y.tolist()},
                                'critical': list(critical)},
                   critical=critical)

    @classmethod
    def load(cls, path: str, critical: Iterable[str] = ()) -> 'TestFunction':
        """Reads a spec JSON or a CSV with columns t,F."""
        if os.path.splitext(path)[1].lower() == '.csv':
            cols = read_csv_columns(path)
            if 't' not in cols or 'F' not in cols:
                raise ConfigError(f"{path}: expected columns t,F")
            return cls.from_samples_on(cols['t'], cols['F'], critical)
        try:
            with open(path, 'rt') as f:
                spec = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from None
        if critical:
            spec = dict(spec, critical=list(critical))
        return cls.from_spec(spec)
