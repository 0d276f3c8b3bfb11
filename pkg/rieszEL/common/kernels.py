"""Interaction kernels and the certification of their hypotheses.

A kernel is an even function g, singular (or at least not smooth) at the
origin, decreasing and convex on a window (0, r) where its derivative is also
concave. Two families are provided: the attractive-repulsive power law and a
tabulated kernel given by callables or by a CSV table.

Attributes:
    ClauseResult (NamedTuple): Outcome of one certification clause
    CertificateReport (NamedTuple): Outcome of certify_hypotheses
    LambdaEstimate (NamedTuple): Outcome of estimate_lambda
    ConvergenceReport (NamedTuple): Outcome of check_tail_integrability
"""
import json
import os
from functools import cached_property
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pytorch_lightning.utilities.rank_zero import rank_zero_debug, rank_zero_warn
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline
from scipy.special import xlogy

from rieszEL.common.errors import (ConfigError, DomainError,
                                   OscillatoryRatioError, PreconditionError,
                                   ResolutionError)


class ClauseResult(NamedTuple):
    status: str
    first_violation: Optional[float]
    detail: str


class CertificateReport(NamedTuple):
    kernel: dict
    r: float
    gprime_root: float
    Lambda: float
    LambdaBar: float
    clauses: Dict[str, ClauseResult]
    passed: bool

    def to_dict(self) -> dict:
        out = self._asdict()
        out['clauses'] = {k: v._asdict() for k, v in self.clauses.items()}
        return out


class LambdaEstimate(NamedTuple):
    value: float
    analytic: Optional[float]
    ratios: List[float]
    running_min: float


class ConvergenceReport(NamedTuple):
    r: float
    values: List[float]
    differences: List[float]
    ratios: List[float]
    cauchy: bool
    limit: float
    closed_form: Optional[float]


class Kernel:
    """Even interaction kernel with derivatives and singularity constants.

    Subclasses implement ``_g``, ``_gprime`` and optionally ``_gsecond`` and
    ``_gthird`` on |x| > 0, plus the antiderivatives used by the potential
    quadrature.

    Attributes:
        name (str): Human readable kernel name
    """
    name = 'kernel'

    def g(self, x):
        """g(x), +inf at the origin when the kernel is singular there."""
        x = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide='ignore', invalid='ignore'):
            return self._g(x)[()]

    def gprime(self, x):
        """g'(x) for x != 0 (odd)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            return (np.sign(x) * self._gprime(np.abs(x)))[()]

    def gsecond(self, x):
        if not self.has_gsecond:
            return None
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            return self._gsecond(np.abs(x))[()]

    def gthird(self, x):
        if not self.has_gthird:
            return None
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            return (np.sign(x) * self._gthird(np.abs(x)))[()]

    @property
    def has_gsecond(self) -> bool:
        return True

    @property
    def has_gthird(self) -> bool:
        return True

    @property
    def r(self) -> float:
        raise NotImplementedError

    @property
    def gprime_root(self) -> float:
        raise NotImplementedError

    @property
    def Lambda(self) -> float:
        raise NotImplementedError

    @property
    def LambdaBar(self) -> float:
        """Λ̄ = min{2, (1 + Λ)/2}, exactly 2 when Λ is infinite."""
        lam = self.Lambda
        if np.isinf(lam):
            return 2.0
        return min(2.0, (1.0 + lam) / 2.0)

    def antiderivatives(self, u) -> Tuple[np.ndarray, np.ndarray]:
        """Returns Φ0(u) = ∫_0^u g and Φ1(u) = ∫_0^u g(t) t dt.

        Φ0 is odd and Φ1 is even; both vanish at 0.
        """
        raise NotImplementedError

    def abs_antiderivative(self, u) -> np.ndarray:
        """Odd antiderivative of an upper bound of |g|, used in error bounds."""
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return self.name


class PowerLaw(Kernel):
    """Prototypical kernel g(x) = |x|^α/α − |x|^λ/λ (−log|x| when λ = 0).

    Args:
        alpha (float): Attractive exponent, > 0
        lam (float): Repulsive exponent, in (−1, min(1, alpha))

    Raises:
        ConfigError: Parameters outside the admissible range
    """
    def __init__(self, alpha: float, lam: float) -> None:
        alpha, lam = float(alpha), float(lam)
        if not alpha > 0:
            raise ConfigError(f"alpha must be positive, got {alpha}")
        if not -1.0 < lam < min(1.0, alpha):
            raise ConfigError(
                f"lambda must lie in (-1, min(1, alpha)) = (-1, "
                f"{min(1.0, alpha)}), got {lam}")
        self.alpha = alpha
        self.lam = lam
        self.name = f"PowerLaw(alpha={alpha:g}, lambda={lam:g})"

    @classmethod
    def from_spec(cls, spec: dict, base_dir: str = None) -> 'PowerLaw':
        try:
            return cls(spec['alpha'], spec['lambda'])
        except KeyError as e:
            raise ConfigError(f"power_law spec is missing {e}") from None

    def spec(self) -> dict:
        return {'form': 'power_law', 'alpha': self.alpha, 'lambda': self.lam}

    def _g(self, x):
        attr = x**self.alpha / self.alpha
        if self.lam == 0.0:
            return attr - np.log(x)
        return attr - x**self.lam / self.lam

    def _gprime(self, x):
        return x**(self.alpha - 1) - x**(self.lam - 1)

    def _gsecond(self, x):
        a, l = self.alpha, self.lam
        return (a - 1) * x**(a - 2) - (l - 1) * x**(l - 2)

    def _gthird(self, x):
        a, l = self.alpha, self.lam
        return (a - 1) * (a - 2) * x**(a - 3) - (l - 1) * (l - 2) * x**(l - 3)

    @property
    def gprime_root(self) -> float:
        return 1.0

    @property
    def concavity_root(self) -> float:
        """First zero of g''' on (0, inf), or inf when g' is concave throughout."""
        a, l = self.alpha, self.lam
        c = (a - 1) * (a - 2)
        if c <= 0:
            return np.inf
        return ((1 - l) * (2 - l) / c)**(1.0 / (a - l))

    @property
    def convexity_root(self) -> float:
        """Zero of g'' on (0, inf), or inf when g is convex throughout."""
        a, l = self.alpha, self.lam
        if a >= 1:
            return np.inf
        return ((1 - l) / (1 - a))**(1.0 / (a - l))

    @property
    def r(self) -> float:
        return min(self.gprime_root, self.concavity_root)

    @property
    def Lambda(self) -> float:
        return 2.0**(1.0 - self.lam)

    def antiderivatives(self, u):
        u = np.asarray(u, dtype=float)
        a, l = self.alpha, self.lam
        s = np.abs(u)
        phi0 = s**(a + 1) / (a * (a + 1))
        phi1 = s**(a + 2) / (a * (a + 2))
        if l == 0.0:
            phi0 = phi0 - (xlogy(s, s) - s)
            phi1 = phi1 - (xlogy(s * s, s) / 2 - s * s / 4)
        else:
            phi0 = phi0 - s**(l + 1) / (l * (l + 1))
            phi1 = phi1 - s**(l + 2) / (l * (l + 2))
        return np.sign(u) * phi0, phi1

    def abs_antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        a, l = self.alpha, self.lam
        s = np.abs(u)
        out = s**(a + 1) / (a * (a + 1))
        if l == 0.0:
            out = out + np.where(s <= 1.0, s - xlogy(s, s),
                                 xlogy(s, s) - s + 2.0)
        else:
            out = out + s**(l + 1) / (abs(l) * (l + 1))
        return np.sign(u) * out


class Tabulated(Kernel):
    """Kernel given by callables for g and its derivatives on (0, inf).

    The antiderivatives needed by the potential quadrature are tabulated once,
    by cumulative adaptive quadrature on a geometric grid of (0, x_max], and
    interpolated with cubic Hermite splines. Below the first table node g is
    continued logarithmically with matching slope, above x_max linearly.

    Args:
        g (Callable): g on (0, inf), vectorized
        gprime (Callable): g' on (0, inf), vectorized
        gsecond (Callable, optional): g'' on (0, inf)
        gthird (Callable, optional): g''' on (0, inf)
        x_max (float): Largest abscissa of the antiderivative tables
        name (str): Kernel name used in reports
        source (str, optional): CSV file the kernel was read from
    """
    _table_nodes = 600

    def __init__(self,
                 g: Callable,
                 gprime: Callable,
                 gsecond: Callable = None,
                 gthird: Callable = None,
                 x_max: float = 10.0,
                 name: str = 'Tabulated',
                 source: str = None) -> None:
        self._gf = g
        self._gpf = gprime
        self._gsf = gsecond
        self._gtf = gthird
        self.x_max = float(x_max)
        self.name = name
        self.source = source
        self._x_min = 1e-8 * self.x_max

    @classmethod
    def from_csv(cls, path: str) -> 'Tabulated':
        """Reads a kernel table with columns x,g,gprime[,gsecond].

        Args:
            path (str): CSV file with a header line

        Returns:
            Tabulated: Kernel interpolating the table

        Raises:
            ConfigError: Malformed table
        """
        try:
            data = np.genfromtxt(path, delimiter=',', names=True)
        except OSError as e:
            raise ConfigError(f"cannot read kernel table {path}: {e}") from None
        names = data.dtype.names or ()
        if not {'x', 'g', 'gprime'} <= set(names):
            raise ConfigError(
                f"kernel table {path} needs columns x,g,gprime[,gsecond]")
        x = np.asarray(data['x'], dtype=float)
        keep = x > 0
        x = x[keep]
        if x.size < 4 or np.any(np.diff(x) <= 0):
            raise ConfigError(
                f"kernel table {path} needs >= 4 increasing positive x")
        gv = np.asarray(data['g'], dtype=float)[keep]
        gpv = np.asarray(data['gprime'], dtype=float)[keep]
        gsv = (np.asarray(data['gsecond'], dtype=float)[keep]
               if 'gsecond' in names else None)
        x0, x1 = x[0], x[-1]
        # decreasing tables continue logarithmically below x0, others linearly
        singular = gpv[0] < 0

        def g(t):
            t = np.asarray(t, dtype=float)
            if singular:
                below = gv[0] + gpv[0] * x0 * np.log(t / x0)
            else:
                below = gv[0] + gpv[0] * (t - x0)
            above = gv[-1] + gpv[-1] * (t - x1)
            return np.where(t < x0, below,
                            np.where(t > x1, above, np.interp(t, x, gv)))

        def gprime(t):
            t = np.asarray(t, dtype=float)
            below = gpv[0] * x0 / t if singular else np.full_like(t, gpv[0])
            return np.where(t < x0, below,
                            np.interp(t, x, gpv, right=gpv[-1]))

        gsecond = None
        if gsv is not None:
            def gsecond(t):
                t = np.asarray(t, dtype=float)
                below = (-gpv[0] * x0 / t**2
                         if singular else np.full_like(t, gsv[0]))
                return np.where(t < x0, below, np.interp(t, x, gsv, right=0.0))

        name = f"Tabulated({os.path.basename(path)})"
        return cls(g, gprime, gsecond, None, x_max=x1, name=name,
                   source=os.path.abspath(path))

    @classmethod
    def from_spec(cls, spec: dict, base_dir: str = None) -> 'Tabulated':
        if 'file' not in spec:
            raise ConfigError("tabulated spec is missing 'file'")
        path = spec['file']
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return cls.from_csv(path)

    def spec(self) -> dict:
        return {'form': 'tabulated', 'file': self.source}

    @property
    def has_gsecond(self) -> bool:
        return self._gsf is not None

    @property
    def has_gthird(self) -> bool:
        return self._gtf is not None

    def _g(self, x):
        return np.asarray(self._gf(x), dtype=float)

    def _gprime(self, x):
        return np.asarray(self._gpf(x), dtype=float)

    def _gsecond(self, x):
        return np.asarray(self._gsf(x), dtype=float)

    def _gthird(self, x):
        return np.asarray(self._gtf(x), dtype=float)

    @cached_property
    def gprime_root(self) -> float:
        """First sign change of g' from negative, bisected; x_max if none."""
        probes = np.geomspace(self._x_min, self.x_max, 2000)
        gp = self._gprime(probes)
        nonneg = np.flatnonzero(gp >= 0)
        if nonneg.size == 0 or nonneg[0] == 0:
            return self.x_max
        i = nonneg[0]
        return optimize.brentq(lambda t: float(self._gprime(np.array(t))),
                               probes[i - 1], probes[i], xtol=1e-14)

    @property
    def r(self) -> float:
        return self.gprime_root

    @cached_property
    def Lambda(self) -> float:
        try:
            return estimate_lambda(self, self.r / 2, 40).value
        except OscillatoryRatioError as e:
            rank_zero_warn(f"{self.name}: oscillatory singularity ratio, "
                           f"using running minimum {e.running_min:.6g}")
            return e.running_min

    @cached_property
    def _tables(self):
        t = np.concatenate([[0.0],
                            np.geomspace(self._x_min, self.x_max,
                                         self._table_nodes)])
        integrands = (lambda s: self._g(s), lambda s: self._g(s) * s,
                      lambda s: np.abs(self._g(s)))
        tables = []
        for f in integrands:
            pieces = [
                integrate.quad(f, lo, hi, limit=200, epsabs=1e-14,
                               epsrel=1e-12)[0]
                for lo, hi in zip(t[:-1], t[1:])
            ]
            cum = np.concatenate([[0.0], np.cumsum(pieces)])
            slope = f(t[1:])
            tables.append((cum, slope))
        splines = [
            CubicHermiteSpline(t[1:], cum[1:], slope)
            for cum, slope in tables
        ]
        return splines

    def _local_log_model(self):
        x0 = self._x_min
        b = float(self._gprime(np.array(x0))) * x0
        a = float(self._g(np.array(x0))) - b * np.log(x0)
        return a, b

    def _table_eval(self, which: int, s: np.ndarray) -> np.ndarray:
        spline = self._tables[which]
        x0, x1 = self._x_min, self.x_max
        a, b = self._local_log_model()
        small = np.minimum(s, x0)
        if which == 0:
            low = a * small + b * (xlogy(small, small) - small)
        elif which == 1:
            low = a * small**2 / 2 + b * (xlogy(small**2, small) / 2 -
                                           small**2 / 4)
        else:
            low = np.abs(a) * small + np.abs(b) * np.abs(
                xlogy(small, small) - small)
        mid = spline(np.clip(s, x0, x1))
        g1 = float(self._g(np.array(x1)))
        gp1 = float(self._gprime(np.array(x1)))
        d = np.maximum(s - x1, 0.0)
        if which == 0:
            tail = g1 * d + gp1 * d**2 / 2
        elif which == 1:
            tail = g1 * (x1 * d + d**2 / 2) + gp1 * (x1 * d**2 / 2 + d**3 / 3)
        else:
            tail = abs(g1) * d + abs(gp1) * d**2 / 2
        return np.where(s < x0, low, mid + tail)

    def antiderivatives(self, u):
        u = np.asarray(u, dtype=float)
        s = np.abs(u)
        return np.sign(u) * self._table_eval(0, s), self._table_eval(1, s)

    def abs_antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        return np.sign(u) * self._table_eval(2, np.abs(u))


def kernel_from_spec(spec: dict, base_dir: str = None) -> Kernel:
    """Builds a kernel from its JSON description.

    Args:
        spec (dict): {"form": "power_law", "alpha": .., "lambda": ..} or
            {"form": "tabulated", "file": ..}
        base_dir (str, optional): Directory relative table paths refer to

    Returns:
        Kernel: The described kernel

    Raises:
        ConfigError: Unknown form or invalid parameters
    """
    from rieszEL.common import reg_kernels
    form = spec.get('form')
    if form not in reg_kernels:
        raise ConfigError(f"unknown kernel form {form!r}, expected one of "
                          f"{sorted(reg_kernels)}")
    return reg_kernels[form].from_spec(spec, base_dir)


def load_kernel_spec(path: str) -> Kernel:
    try:
        with open(path, 'rt') as f:
            spec = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read kernel spec {path}: {e}") from None
    return kernel_from_spec(spec, os.path.dirname(os.path.abspath(path)))


def eval_g(k: Kernel, x):
    """Evaluates g(x); +inf at x = 0 for singular kernels."""
    return k.g(x)


def eval_gprime(k: Kernel, x):
    """Evaluates g'(x).

    Raises:
        DomainError: Some x equals 0
    """
    if np.any(np.asarray(x) == 0):
        raise DomainError("g' is not defined at the origin")
    return k.gprime(x)


def estimate_lambda(k: Kernel, x0: float, levels: int) -> LambdaEstimate:
    """Estimates Λ = liminf |g'(x/2)|/|g'(x)| as x -> 0.

    The ratio is sampled on x_k = x0·2^-k and the monotone tail is extrapolated
    with Aitken's delta-squared process.

    Args:
        k (Kernel): Kernel
        x0 (float): Largest probe, in (0, r)
        levels (int): Number of dyadic levels, >= 10

    Returns:
        LambdaEstimate: Extrapolated value (inf for unbounded ratios) and, for
        power laws, the analytic value

    Raises:
        PreconditionError: x0 outside (0, r) or fewer than 10 levels
        OscillatoryRatioError: Bounded, non-monotone ratio tail
    """
    if not 0 < x0 < k.r:
        raise PreconditionError(f"x0 must lie in (0, r={k.r:.6g}), got {x0}")
    if levels < 10:
        raise PreconditionError(f"levels must be >= 10, got {levels}")
    xs = x0 * 2.0**-np.arange(levels)
    ratios = np.abs(k.gprime(xs / 2)) / np.abs(k.gprime(xs))
    analytic = k.Lambda if isinstance(k, PowerLaw) else None
    ratios = ratios[np.isfinite(ratios)]
    if ratios.size < 3:
        raise PreconditionError("too few finite ratios to estimate Lambda")
    tail = ratios[ratios.size // 2:]
    running_min = float(np.min(tail))
    if tail[-1] > 1e6 and tail[-1] > tail[-2]:
        return LambdaEstimate(np.inf, analytic, ratios.tolist(), running_min)
    d = np.diff(tail)
    tol = 1e-12 * np.abs(tail[1:])
    d = np.where(np.abs(d) <= tol, 0.0, d)
    if not (np.all(d <= 0) or np.all(d >= 0)):
        raise OscillatoryRatioError(
            "oscillatory ratio; Λ is a liminf, report the running minimum",
            running_min)
    value = float(tail[-1])
    d1, d2 = tail[-2] - tail[-3], tail[-1] - tail[-2]
    if d1 != 0 and d2 != d1 and abs(d2) < abs(d1):
        value = float(tail[-1] - d2 * d2 / (d2 - d1))
    rank_zero_debug(f"{k.name}: Lambda estimate {value:.9g}")
    return LambdaEstimate(value, analytic, ratios.tolist(), running_min)


def gprime_total_variation(k: Kernel,
                           lo: float,
                           hi: float,
                           method: str = None) -> float:
    """Total variation of g' on [lo, hi].

    Power laws are split at the zeros of g'' and summed exactly; other kernels
    integrate |g''| adaptively, or sum |Δg'| on a fine grid when g'' is absent.

    Args:
        k (Kernel): Kernel
        lo (float): Left end, > 0
        hi (float): Right end, >= lo
        method (str, optional): Force "quad" or "sampled"

    Returns:
        float: TV(g', [lo, hi])

    Raises:
        DomainError: lo <= 0 or hi < lo
    """
    if not lo > 0:
        raise DomainError(f"TV of g' needs lo > 0, got {lo}")
    if hi < lo:
        raise DomainError(f"empty interval [{lo}, {hi}]")
    if hi == lo:
        return 0.0
    if method is None and isinstance(k, PowerLaw):
        cuts = [lo]
        root = k.convexity_root
        if lo < root < hi:
            cuts.append(root)
        cuts.append(hi)
        vals = k.gprime(np.array(cuts))
        return float(np.sum(np.abs(np.diff(vals))))
    if (method in (None, 'quad')) and k.has_gsecond:
        val, _ = integrate.quad(lambda t: abs(float(k.gsecond(t))), lo, hi,
                                limit=500, epsabs=1e-13, epsrel=1e-12)
        return float(val)
    xs = np.geomspace(lo, hi, 20001)
    return float(np.sum(np.abs(np.diff(k.gprime(xs)))))


def check_tail_integrability(k: Kernel,
                                r: float,
                                refinements: int = 40) -> ConvergenceReport:
    """Tail integrals I_n = −∫_{r/2^n}^r g'(t) t dt and their Cauchy test.

    Args:
        k (Kernel): Kernel
        r (float): Upper limit, within the certified window
        refinements (int): Number of dyadic levels

    Returns:
        ConvergenceReport: Sequence, differences, ratios, verdict and the
        geometrically extrapolated limit

    Raises:
        DomainError: r outside (0, k.r]
    """
    if not 0 < r <= k.r * (1 + 1e-12):
        raise DomainError(f"r must lie in (0, {k.r:.6g}], got {r}")
    if refinements < 3:
        raise DomainError("need at least 3 refinements")

    def integrand(t):
        return -float(k.gprime(t)) * t

    pieces = []
    for n in range(1, refinements + 1):
        lo, hi = r / 2**n, r / 2**(n - 1)
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-15, epsrel=1e-13)
        pieces.append(val)
    pieces = np.asarray(pieces)
    values = np.cumsum(pieces)
    diffs = pieces[1:]
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = diffs[1:] / diffs[:-1]
    tail = ratios[len(ratios) // 2:]
    cauchy = bool(np.all(np.isfinite(tail)) and np.all(tail > 0)
                  and np.all(tail < 1))
    limit = float(values[-1])
    if cauchy:
        q = float(tail[-1])
        limit = float(values[-1] + diffs[-1] * q / (1 - q))
    closed = None
    if isinstance(k, PowerLaw):
        l, a = k.lam, k.alpha
        closed = r**(l + 1) / (l + 1) - r**(a + 1) / (a + 1)
    return ConvergenceReport(r, values.tolist(), diffs.tolist(),
                             ratios.tolist(), cauchy, limit, closed)


def _first_violation(xs: np.ndarray, bad: np.ndarray) -> Optional[float]:
    idx = np.flatnonzero(bad)
    return float(xs[idx[0]]) if idx.size else None


def _clause(xs: np.ndarray, bad: np.ndarray, detail: str) -> ClauseResult:
    first = _first_violation(xs, bad)
    return ClauseResult('fail' if first is not None else 'pass', first, detail)


def certify_hypotheses(k: Kernel, probe_count: int = 400) -> CertificateReport:
    """Checks symmetry, integrability, monotonicity, convexity, concavity of g',
    local bounded variation of g' and Λ > 1 on probe grids.

    Args:
        k (Kernel): Kernel to certify
        probe_count (int): Number of probes, >= 100; half are geometric in
            (0, r), half uniform on [r, 10r]

    Returns:
        CertificateReport: Per-clause status with the first violating probe
    """
    if probe_count < 100:
        raise PreconditionError(
            f"probe_count must be >= 100, got {probe_count}")
    r = k.r
    inner = np.geomspace(r * 1e-6, r * (1 - 1e-9), probe_count // 2)
    outer = np.linspace(r, 10 * r, probe_count - probe_count // 2)
    allp = np.concatenate([inner, outer])
    clauses = {}

    gp, gm = k.g(allp), k.g(-allp)
    asym = np.abs(gp - gm) > 1e-12 * (1 + np.abs(gp))
    asym |= np.abs(k.gprime(allp) + k.gprime(-allp)) > 1e-12 * (
        1 + np.abs(k.gprime(allp)))
    clauses['symmetry'] = _clause(allp, asym, 'g(x) = g(-x) on probes')

    conv = check_tail_integrability(k, r)
    absint = float(k.abs_antiderivative(r))
    ok = conv.cauchy and np.isfinite(conv.limit) and np.isfinite(absint)
    clauses['integrability'] = ClauseResult(
        'pass' if ok else 'fail', None if ok else float(r * 2.0**-40),
        f"-int_0^r g'(t)t dt = {conv.limit:.9g}, int_0^r |g| <= {absint:.6g}")

    clauses['decreasing'] = _clause(inner, ~(k.gprime(inner) < 0),
                                    "g' < 0 on (0, r)")

    if k.has_gsecond:
        bad = ~(k.gsecond(inner) >= 0)
        detail = "g'' >= 0 on (0, r)"
    else:
        bad = np.concatenate([[False], np.diff(k.gprime(inner)) < 0])
        detail = "g' nondecreasing on (0, r) (sampled)"
    clauses['convex'] = _clause(inner, bad, detail)

    if k.has_gthird:
        clauses['gprime_concave'] = _clause(inner, ~(k.gthird(inner) <= 0),
                                            "g''' <= 0 on (0, r)")
    elif k.has_gsecond:
        bad = np.concatenate([[False], np.diff(k.gsecond(inner)) > 0])
        clauses['gprime_concave'] = _clause(
            inner, bad, "g'' nonincreasing on (0, r) (sampled)")
    else:
        clauses['gprime_concave'] = ClauseResult(
            'unchecked', None, "no g'' metadata; concavity of g' unchecked")

    tv = gprime_total_variation(k, inner[0], outer[-1])
    clauses['gprime_bv'] = ClauseResult(
        'pass' if np.isfinite(tv) else 'fail', None,
        f"TV(g', [{inner[0]:.3g}, {outer[-1]:.3g}]) = {tv:.9g}")

    try:
        est = estimate_lambda(k, r / 2, 40)
        lam, flag = est.value, ''
    except OscillatoryRatioError as e:
        lam, flag = e.running_min, ' (oscillatory, running minimum)'
    clauses['singularity_ratio'] = ClauseResult(
        'pass' if lam > 1 else 'fail', None if lam > 1 else 0.0,
        f"Lambda = {lam:.9g}{flag}")

    if isinstance(k, PowerLaw):
        # g' = x^(a-1) - x^(l-1) < 0 on (0, 1) since a > l; r sits below the
        # zeros of g'' and g'''
        analytic = (k.alpha > k.lam and r <= k.concavity_root
                    and r <= k.convexity_root)
        for name in ('decreasing', 'convex', 'gprime_concave'):
            c = clauses[name]
            status = c.status if analytic else 'fail'
            clauses[name] = c._replace(
                status=status,
                detail=c.detail + (', analytic: yes' if analytic else
                                   ', analytic: no'))

    lam_bar = 2.0 if np.isinf(lam) else min(2.0, (1 + lam) / 2)
    passed = all(c.status == 'pass' for c in clauses.values())
    return CertificateReport(k.spec(), float(r), float(k.gprime_root),
                             float(lam), float(lam_bar), clauses, passed)


def find_good_lambda_eta(k: Kernel,
                         eta0: float = None,
                         min_eta: float = 1e-12) -> float:
    """Largest η, halving from eta0, with |g'(x/2)| > Λ̄|g'(x)| on (0, 2η).

    Args:
        k (Kernel): Kernel
        eta0 (float, optional): First candidate, defaults to r/8
        min_eta (float): Smallest candidate before giving up

    Returns:
        float: A witness η

    Raises:
        ResolutionError: No witness above min_eta
    """
    eta = k.r / 8 if eta0 is None else float(eta0)
    lam_bar = k.LambdaBar
    while eta >= min_eta:
        xs = np.geomspace(2 * eta * 1e-6, 2 * eta * (1 - 1e-9), 400)
        if np.all(np.abs(k.gprime(xs / 2)) > lam_bar * np.abs(k.gprime(xs))):
            return eta
        eta /= 2
    raise ResolutionError(
        f"no eta >= {min_eta:g} realizes |g'(x/2)| > {lam_bar:.6g}|g'(x)|",
        condition='goodLambda')


def strictly_convex(k: Kernel, probes: int = 400) -> bool:
    """Probes strict convexity of g on (0, inf)."""
    xs = np.geomspace(k.r * 1e-6, k.r * 100, probes)
    if k.has_gsecond:
        return bool(np.all(k.gsecond(xs) > 0))
    return bool(np.all(np.diff(k.gprime(xs)) > 0))
