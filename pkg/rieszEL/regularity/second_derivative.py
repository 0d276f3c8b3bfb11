"""ψ_F'' at a critical point x of a smooth compactly supported F.

Three expressions are available once F'(x) = 0:

    ∫ F''(t) g(x − t) dt
    −∫ F'(t) (d/dt) g(t − x) dt
    ∫ sign(x − t) F'(t) g'(|x − t|) dt

The last two move a derivative onto the kernel, which is only legitimate
because |F'(t)| ≤ C|t − x| near x. Each is integrated exactly against the
linear interpolant of F'' or F' on a grid through x, with g or g' as the
cell kernel, at spacings h and 2h; the difference of the two is the error
estimate.

Attributes:
    SecondDerivative (NamedTuple): The three values and their errors
"""
from typing import NamedTuple, Tuple

import numpy as np
from pytorch_lightning.utilities.rank_zero import rank_zero_debug
from scipy import optimize

from rieszEL.common.errors import PreconditionError
from rieszEL.common.kernels import Kernel
from rieszEL.common.potentials import cell_weights
from rieszEL.regularity.smooth_functions import SmoothFunction

DEFAULT_CELLS = 4000
ERROR_CAP = 1e-3


class SecondDerivative(NamedTuple):
    x: float
    forms: Tuple[float, float, float]
    errors: Tuple[float, float, float]
    fprime_at_x: float
    tol_crit: float
    agree: bool

    @property
    def value(self) -> float:
        return self.forms[0]

    def to_dict(self) -> dict:
        return self._asdict()


def gprime_antiderivatives(k: Kernel):
    """(Φ0, Φ1) of g' for cell integration: Φ0(u) = g(u), Φ1(u) = u·g(u) −
    ∫_0^u g.

    Both are set to 0 at u = 0. Only the weight of a node sitting at the
    singularity depends on that choice, and callers drop it.
    """
    def anti(u):
        u = np.asarray(u, dtype=float)
        zero = u == 0
        safe = np.where(zero, 1.0, u)
        g = np.where(zero, 0.0, k.g(safe))
        phi0_g = k.antiderivatives(safe)[0]
        return g, np.where(zero, 0.0, safe * g - phi0_g)
    return anti


def tol_crit(F: SmoothFunction) -> float:
    """max(1e-10, 1e-6·max|F'|)."""
    return max(1e-10, 1e-6 * F.max_abs_derivative(1))


def _nodes(lo: float, hi: float, h: float, x: float) -> np.ndarray:
    m = max(2, int(np.ceil((hi - lo) / h)))
    return np.union1d(np.linspace(lo, hi, m + 1), [x])


def _forms_at(k: Kernel, F: SmoothFunction, x: float,
              h: float) -> np.ndarray:
    lo, hi = min(F.lo, x), max(F.hi, x)
    nodes = _nodes(lo, hi, h, x)
    at_x = nodes == x
    first = cell_weights(k.antiderivatives, nodes, [x])[0] @ F.d2(nodes)

    anti = gprime_antiderivatives(k)
    w = cell_weights(anti, nodes, [x])[0]
    w[at_x] = 0.0
    second = w @ F.d1(nodes)

    reach = max(x - lo, hi - x)
    s = _nodes(0.0, reach, h, 0.0)
    diff = F.d1(x - s) - F.d1(x + s)
    w = cell_weights(anti, s, [0.0])[0]
    w[0] = 0.0
    third = -(w @ diff)
    return np.array([first, second, third])


def psi_second_derivative_at_critical(k: Kernel,
                                      F: SmoothFunction,
                                      x: float,
                                      h: float = None) -> SecondDerivative:
    """The three expressions of ψ_F''(x) and whether they agree.

    Args:
        k (Kernel): Kernel
        F (SmoothFunction): C² function, F and F' zero at its support ends
        x (float): Critical point of F
        h (float, optional): Grid spacing, defaults to support length / 4000

    Returns:
        SecondDerivative: Values at spacing h, errors |value(h) − value(2h)|,
        and agreement: every err_i ≤ 1e-3·(1 + |F_i|) and
        |F_i − F_j| ≤ err_i + err_j + 1e-9·(1 + max|F_i|)

    Raises:
        PreconditionError: |F'(x)| > max(1e-10, 1e-6·max|F'|)
    """
    x = float(x)
    F.check_compact()
    tol = tol_crit(F)
    fp = float(F.d1(x))
    if abs(fp) > tol:
        raise PreconditionError(
            "not a critical point; integration by parts invalid "
            f"(|F'({x:g})| = {abs(fp):.3g} > {tol:.3g})")
    if h is None:
        h = (F.hi - F.lo) / DEFAULT_CELLS
    fine = _forms_at(k, F, x, h)
    coarse = _forms_at(k, F, x, 2 * h)
    err = np.abs(fine - coarse)
    floor = 1e-9 * (1 + float(np.max(np.abs(fine))))
    converged = bool(np.all(err <= ERROR_CAP * (1 + np.abs(fine))))
    agree = converged and all(
        abs(fine[i] - fine[j]) <= err[i] + err[j] + floor
        for i, j in ((0, 1), (0, 2), (1, 2)))
    rank_zero_debug(f"psi''({x:g}) forms {fine.tolist()} errors {err.tolist()}")
    return SecondDerivative(x, tuple(float(v) for v in fine),
                            tuple(float(v) for v in err), fp, tol, agree)


def find_critical_points(F: SmoothFunction,
                         samples: int = 20001) -> np.ndarray:
    """Interior zeros of F', from sign changes refined by Brent's method.

    Samples where F' and F'' both vanish (flat stretches) are skipped.
    """
    t = np.linspace(F.lo, F.hi, samples)[1:-1]
    d = F.d1(t)
    out = list(t[(d == 0) & (F.d2(t) != 0)])
    idx = np.flatnonzero(d[:-1] * d[1:] < 0)
    for i in idx:
        out.append(optimize.brentq(lambda s: float(F.d1(s)), t[i], t[i + 1],
                                   xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return np.unique(np.asarray(out, dtype=float))
