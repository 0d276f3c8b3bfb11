"""Cancellation inequalities between two critical points and their
randomized verification.

Given F ∈ C²([α, β]) with γ = β − α below the kernel window r:

* convex cancellation: with F(α) = F(β) both absolute minima and
  F'(β) = 0, ∫_α^β F'(t) g'(x − t) dt ≥ 0 for β ≤ x < α + r (mirrored
  when F'(α) = 0 and β − r < x ≤ α);
* concave cancellation: with α an absolute minimum and F'(α) = 0,
  ∫_α^β F'(t) (g'(t − x) − g'(t − y)) dt ≥ 0 for β − r < x ≤ y ≤ α;
* rearrangement: with F'(α) = F'(β) = 0, α the minimum and β the maximum,
  ∫ F'(|g'(t − α)| + |g'(β − t)|) ≥ (F(β) − F(α))(|g'(γ)| + |g'(γ/2)|).
  It passes through the monotone rearrangement F*, LHS(F) ≥ LHS(F*) ≥ RHS,
  and both links are checked.

Every integral is an adaptive quadrature split at the midpoint, and a
result is a violation only when it misses its bound by more than
1e-8 plus the quadrature error estimate.
"""
import warnings
from typing import Dict, List, NamedTuple, Tuple

import numpy as np
from pytorch_lightning.utilities.rank_zero import rank_zero_info, rank_zero_warn
from scipy import integrate, optimize

from rieszEL.common.errors import ConfigError, PreconditionError
from rieszEL.common.kernels import Kernel, kernel_from_spec
from rieszEL.regularity.second_derivative import find_critical_points
from rieszEL.regularity.smooth_functions import TestFunction

LEMMAS = ('convex', 'concave', 'rearrangement')
VIOLATION_FLOOR = 1e-8
QUAD_EPSABS = 1e-12
QUAD_LIMIT = 400
MAX_DRAWS_PER_TRIAL = 20


class CheckResult(NamedTuple):
    value: float
    abserr: float
    margin: float
    violated: bool
    pieces: tuple = ()

    def to_dict(self) -> dict:
        out = self._asdict()
        out['pieces'] = list(self.pieces)
        return out


class RearrangementResult(NamedTuple):
    lhs: float
    rhs: float
    abserr: float
    margin: float
    violated: bool
    orientation: str
    p: float
    sign: int
    basecase_value: float
    basecase_rhs: float
    basecase_ok: bool
    lhs_star: float
    chain_ok: bool

    def to_dict(self) -> dict:
        return self._asdict()


class HalfBounds(NamedTuple):
    first: float
    first_bound: float
    second: float
    second_bound: float
    abserr: float
    holds: bool


class ChainResult(NamedTuple):
    lhs: float
    lhs_star: float
    rhs: float
    abserr: float
    holds: bool


class ChangeOfVariables(NamedTuple):
    lhs: float
    rhs: float
    abserr: float
    agree: bool


class SweepReport(NamedTuple):
    lemma: str
    kernel: dict
    trials: int
    accepted: int
    rejected: int
    violations: List[dict]
    worst_margin: float

    @property
    def passed(self) -> bool:
        return not self.violations and self.accepted == self.trials

    def to_dict(self) -> dict:
        out = self._asdict()
        out['passed'] = self.passed
        return out


def _quad(fn, lo: float, hi: float) -> Tuple[float, float]:
    mid = (lo + hi) / 2
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        for a, b in ((lo, mid), (mid, hi)):
            v, e = integrate.quad(fn, a, b, epsabs=QUAD_EPSABS, epsrel=1e-12,
                                  limit=QUAD_LIMIT)
            total, err = total + v, err + e
    return total, err


def _result(value: float, err: float) -> CheckResult:
    return CheckResult(value, err, value,
                       bool(value < -(VIOLATION_FLOOR + err)))


def _window(k: Kernel, span: float, what: str) -> None:
    if not span < k.r:
        raise PreconditionError(f"window: {what} = {span:.6g} is not below "
                                f"r = {k.r:.6g}")


def check_convex_cancellation(k: Kernel, F: TestFunction, x: float,
                              decompose: bool = False) -> CheckResult:
    """∫_α^β F'(t) g'(x − t) dt for x ≥ β, or ∫_α^β −F'(t) g'(t − x) dt
    for x ≤ α.

    With decompose, [α, β] is also cut at the interior zeros of F' and every
    non-constant piece carries the change of variables z = F(t) of its part
    of the integral. A piece whose two sides disagree counts as a violation.

    Raises:
        PreconditionError: A hypothesis of the chosen side fails
    """
    x = float(x)
    F.require('equal_endpoints', 'alpha_min', 'beta_min')
    a, b = F.alpha, F.beta
    if x >= b:
        F.require('beta_critical')
        _window(k, x - a, 'x - alpha')
        value, err = _quad(lambda t: float(F.d1(t)) * float(k.gprime(x - t)),
                           a, b)
    elif x <= a:
        F.require('alpha_critical')
        _window(k, b - x, 'beta - x')
        value, err = _quad(lambda t: -float(F.d1(t)) * float(k.gprime(t - x)),
                           a, b)
    else:
        raise PreconditionError(f"x = {x:g} lies inside (alpha, beta)")
    result = _result(value, err)
    if not decompose:
        return result
    pieces = []
    for piece in monotone_pieces(F):
        if piece[2] == 'constant':
            continue
        cov = change_of_variables_check(k, F, x, piece)
        pieces.append({'lo': piece[0], 'hi': piece[1], 'kind': piece[2],
                       'lhs': cov.lhs, 'rhs': cov.rhs, 'abserr': cov.abserr,
                       'agree': cov.agree})
    return result._replace(pieces=tuple(pieces))


def check_concave_cancellation(k: Kernel, F: TestFunction, x: float,
                               y: float) -> CheckResult:
    """∫_α^β F'(t) (g'(t − x) − g'(t − y)) dt.

    Raises:
        PreconditionError: A hypothesis fails
    """
    x, y = float(x), float(y)
    F.require('alpha_min', 'alpha_critical')
    if not x <= y <= F.alpha:
        raise PreconditionError(
            f"need x <= y <= alpha, got x={x:g}, y={y:g}, alpha={F.alpha:g}")
    _window(k, F.beta - x, 'beta - x')
    if x == y:
        return _result(0.0, 0.0)
    value, err = _quad(
        lambda t: float(F.d1(t)) * (float(k.gprime(t - x)) -
                                    float(k.gprime(t - y))), F.alpha, F.beta)
    return _result(value, err)


def _orientation(F: TestFunction) -> int:
    if F.flags['alpha_min'] and F.flags['beta_max']:
        return 1
    if F.flags['alpha_max'] and F.flags['beta_min']:
        return -1
    raise PreconditionError("hypothesis alpha_min/beta_max fails in both "
                            "orientations")


def _end_terms(k: Kernel, F: TestFunction) -> Tuple[float, float, float]:
    a, b = F.alpha, F.beta
    left, e1 = _quad(lambda t: float(F.d1(t)) * abs(float(k.gprime(t - a))),
                     a, b)
    right, e2 = _quad(lambda t: float(F.d1(t)) * abs(float(k.gprime(b - t))),
                      a, b)
    return left, right, e1 + e2


def _weight(k: Kernel, gamma: float) -> float:
    return abs(float(k.gprime(gamma))) + abs(float(k.gprime(gamma / 2)))


def check_rearrangement_inequality(k: Kernel,
                                   F: TestFunction) -> RearrangementResult:
    """LHS = ∫F'(|g'(t − α)| + |g'(β − t)|) against
    RHS = (F(β) − F(α))(|g'(γ)| + |g'(γ/2)|).

    With α the minimum the inequality is LHS ≥ RHS; with α the maximum it
    reverses. The result also names the endpoint p whose half of LHS, signed
    +1 when p is the maximum point and −1 otherwise, is at least RHS/2.

    Returns:
        RearrangementResult: lhs and rhs first, then margin, orientation,
        the endpoint p, its sign and the half-integral against RHS/2,
        then LHS of the monotone rearrangement and whether the chain
        LHS ≥ LHS(F*) ≥ RHS holds

    Raises:
        PreconditionError: A hypothesis fails
    """
    F.require('alpha_critical', 'beta_critical')
    _window(k, F.gamma, 'gamma')
    o = _orientation(F)
    left, right, err = _end_terms(k, F)
    fa, fb = float(F(F.alpha)), float(F(F.beta))
    lhs = left + right
    rhs = (fb - fa) * _weight(k, F.gamma)
    margin = o * (lhs - rhs)
    # g' < 0 on (0, r): the half at α is s_α·∫F'·g'(t − α) = −s_α·left
    s_alpha, s_beta = (-1, 1) if o == 1 else (1, -1)
    halves = {F.alpha: (-s_alpha * left, s_alpha),
              F.beta: (s_beta * right, s_beta)}
    p = max(halves, key=lambda q: halves[q][0])
    value, sign = halves[p]
    half_rhs = abs(fb - fa) / 2 * _weight(k, F.gamma)
    tol = VIOLATION_FLOOR + err
    chain = rearrangement_chain(k, F)
    return RearrangementResult(lhs, rhs, err, margin, bool(margin < -tol),
                               'increasing' if o == 1 else 'decreasing',
                               float(p), sign, value, half_rhs,
                               bool(value >= half_rhs - tol), chain.lhs_star,
                               chain.holds)


def monotone_half_bounds(k: Kernel, F: TestFunction) -> HalfBounds:
    """The two half-interval lower bounds for increasing F:
    ∫F'|g'(t − α)| ≥ |g'(γ/2)|(F(m) − F(α)) + |g'(γ)|(F(β) − F(m)) and
    the same with |g'(β − t)| and the roles of the halves swapped.

    Raises:
        PreconditionError: F is not increasing, or γ ≥ r
    """
    _window(k, F.gamma, 'gamma')
    slope = F.d1(F.scan_grid())
    if np.min(slope) < -1e-12 * (1 + np.max(np.abs(slope))):
        raise PreconditionError("F is not monotone increasing")
    left, right, err = _end_terms(k, F)
    m = (F.alpha + F.beta) / 2
    fa, fm, fb = (float(F(t)) for t in (F.alpha, m, F.beta))
    near, far = abs(float(k.gprime(F.gamma / 2))), abs(float(k.gprime(F.gamma)))
    first_bound = near * (fm - fa) + far * (fb - fm)
    second_bound = far * (fm - fa) + near * (fb - fm)
    tol = VIOLATION_FLOOR + err
    return HalfBounds(left, first_bound, right, second_bound, err,
                      bool(left >= first_bound - tol
                           and right >= second_bound - tol))


def monotone_rearrangement(F: TestFunction, t: np.ndarray) -> np.ndarray:
    """F* on increasing nodes t spanning [α, β]: the running minimum of F
    towards the midpoint on the left half, the running maximum from the
    midpoint on the right half."""
    m = (F.alpha + F.beta) / 2
    v = F(t)
    fm = float(F(m))
    out = np.empty_like(v)
    left = t <= m
    out[left] = np.minimum.accumulate(np.minimum(v[left], fm)[::-1])[::-1]
    right = ~left
    out[right] = np.maximum.accumulate(np.maximum(v[right], fm))
    return out


def _lhs_piecewise_linear(k: Kernel, F: TestFunction, t: np.ndarray,
                          v: np.ndarray) -> float:
    a, b = F.alpha, F.beta
    slope = np.diff(v) / np.diff(t)
    with np.errstate(invalid='ignore'):
        w_left = k.g(t[:-1] - a) - k.g(t[1:] - a)
        w_right = k.g(b - t[1:]) - k.g(b - t[:-1])
    mid = (t[:-1] + t[1:]) / 2
    width = np.diff(t)
    w_left = np.where(np.isfinite(w_left), w_left,
                      width * np.abs(k.gprime(mid - a)))
    w_right = np.where(np.isfinite(w_right), w_right,
                       width * np.abs(k.gprime(b - mid)))
    return float(np.sum(slope * (w_left + w_right)))


def rearrangement_chain(k: Kernel, F: TestFunction,
                        cells: int = 20000) -> ChainResult:
    """LHS(F) ≥ LHS(F*) ≥ RHS for the monotone rearrangement F*.

    LHS(F*) integrates the exact cell integrals of the weight against the
    slopes of the linear interpolant of F*; its error estimate is the change
    from 'cells' to 'cells/2'. Decreasing F is handled through −F.
    """
    F.require('alpha_critical', 'beta_critical')
    _window(k, F.gamma, 'gamma')
    o = _orientation(F)
    oriented = TestFunction(lambda s: o * F(s), lambda s: o * F.d1(s),
                            lambda s: o * F.d2(s), F.alpha, F.beta)
    left, right, err = _end_terms(k, oriented)
    lhs = left + right
    values = []
    for n in (cells, cells // 2):
        t = np.linspace(F.alpha, F.beta, n + 1)
        values.append(_lhs_piecewise_linear(
            k, oriented, t, monotone_rearrangement(oriented, t)))
    star, star_err = values[0], abs(values[0] - values[1])
    rhs = (float(oriented(F.beta)) - float(oriented(F.alpha))) * _weight(
        k, F.gamma)
    tol = VIOLATION_FLOOR + err + star_err
    return ChainResult(lhs, star, rhs, err + star_err,
                       bool(lhs >= star - tol and star >= rhs - tol))


def monotone_pieces(F: TestFunction,
                    samples: int = 20001) -> List[Tuple[float, float, str]]:
    """Splits [α, β] at the interior zeros of F' (the ξ points)."""
    cuts = np.concatenate([[F.alpha], find_critical_points(F, samples),
                           [F.beta]])
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        d = float(F.d1((lo + hi) / 2))
        kind = 'increasing' if d > 0 else 'decreasing' if d < 0 else 'constant'
        pieces.append((float(lo), float(hi), kind))
    return pieces


def change_of_variables_check(k: Kernel, F: TestFunction, x: float,
                              piece: Tuple[float, float, str]) \
        -> ChangeOfVariables:
    """∫_{t0}^{t1} F'(t) g'(x − t) dt against ∫_{F(t0)}^{F(t1)}
    g'(x − F⁻¹(z)) dz on a strictly monotone piece.

    Raises:
        PreconditionError: x inside the piece, or the piece is constant
    """
    t0, t1, kind = piece
    x = float(x)
    if t0 < x < t1:
        raise PreconditionError(f"x = {x:g} lies inside the piece")
    if kind == 'constant':
        raise PreconditionError("piece is constant")
    f0, f1 = float(F(t0)), float(F(t1))

    def inverse(z):
        if z <= min(f0, f1):
            return t0 if f0 <= f1 else t1
        if z >= max(f0, f1):
            return t1 if f0 <= f1 else t0
        return optimize.brentq(lambda s: float(F(s)) - z, t0, t1, xtol=1e-15)

    lhs, e1 = _quad(lambda t: float(F.d1(t)) * float(k.gprime(x - t)), t0, t1)
    rhs, e2 = _quad(lambda z: float(k.gprime(x - inverse(z))), f0, f1)
    tol = VIOLATION_FLOOR * (1 + abs(lhs)) + e1 + e2
    return ChangeOfVariables(lhs, rhs, e1 + e2, bool(abs(lhs - rhs) <= tol))


def _bumps(rng: np.random.Generator, lo: float, hi: float, amp: Tuple[float,
                                                                      float],
           count: int) -> List[dict]:
    out = []
    for _ in range(count):
        w = rng.uniform(0.05, 0.5) * (hi - lo) / 2
        out.append({'kind': 'bump', 'a': float(rng.uniform(*amp)),
                    'm': float(rng.uniform(lo + w, hi - w)), 'w': float(w)})
    return out


def random_instance(lemma: str, k: Kernel, rng: np.random.Generator) -> dict:
    """Draws a candidate instance; admissibility is decided by the checker.

    Functions are a constant plus 3 to 8 bumps, with a polynomial or a
    smoothstep term that sets the endpoint behaviour the lemma needs.
    """
    r = k.r
    alpha = float(rng.uniform(-0.5, 0.5))
    gamma = float(rng.uniform(0.05, 0.8) * r)
    beta = alpha + gamma
    c = float(rng.uniform(-1, 1))
    terms = [{'kind': 'const', 'c': c}]
    count = int(rng.integers(3, 9))
    inst = {'lemma': lemma, 'kernel': k.spec()}
    if lemma == 'convex':
        side = 'right' if rng.random() < 0.5 else 'left'
        terms += _bumps(rng, alpha, beta, (-0.5, 1.0), count)
        if rng.random() < 0.5:
            p, q = (1, 2) if side == 'right' else (2, 1)
            terms.append({'kind': 'poly', 'a': float(rng.uniform(0, 5)) /
                          gamma**3, 'lo': alpha, 'hi': beta, 'p': p, 'q': q})
        if side == 'right':
            inst['x'] = beta + float(rng.random()) * (r - gamma) * 0.999
            critical = ['beta']
        else:
            inst['x'] = alpha - float(rng.random()) * (r - gamma) * 0.999
            critical = ['alpha']
    elif lemma == 'concave':
        terms += _bumps(rng, alpha, beta + gamma / 2, (-0.5, 1.0), count)
        if rng.random() < 0.5:
            terms.append({'kind': 'poly', 'a': float(rng.uniform(0, 3)) /
                          gamma**2, 'lo': alpha, 'hi': beta, 'p': 2, 'q': 0})
        x = alpha - float(rng.random()) * (r - gamma) * 0.999
        inst['x'] = x
        inst['y'] = float(rng.uniform(x, alpha))
        critical = ['alpha']
    elif lemma == 'rearrangement':
        height = float(rng.uniform(0.1, 2.0))
        if rng.random() < 0.5:
            height = -height
        order = 3 if rng.random() < 0.25 else 5
        terms.append({'kind': 'smoothstep', 'height': height, 'lo': alpha,
                      'hi': beta, 'order': order})
        if rng.random() >= 0.25:
            terms += _bumps(rng, alpha, beta, (-0.4 * abs(height),
                                               0.4 * abs(height)), count)
        critical = ['alpha', 'beta']
    else:
        raise ConfigError(f"unknown lemma {lemma!r}, expected one of {LEMMAS}")
    inst['function'] = {'alpha': alpha, 'beta': beta, 'terms': terms,
                        'critical': critical}
    return inst


def run_instance(k: Kernel, instance: dict):
    """Runs the checker of instance['lemma'] on its function and points.

    A convex instance with a true 'decompose' entry also checks the
    change of variables on every monotone piece.

    Raises:
        PreconditionError: The instance is not admissible
    """
    lemma = instance.get('lemma')
    F = TestFunction.from_spec(instance['function'])
    if lemma == 'convex':
        return check_convex_cancellation(k, F, instance['x'],
                                         bool(instance.get('decompose')))
    if lemma == 'concave':
        return check_concave_cancellation(k, F, instance['x'], instance['y'])
    if lemma == 'rearrangement':
        return check_rearrangement_inequality(k, F)
    raise ConfigError(f"unknown lemma {lemma!r}, expected one of {LEMMAS}")


def replay_instance(instance: dict):
    """Rebuilds kernel and function of a dumped instance and reruns it."""
    if 'kernel' not in instance or 'function' not in instance:
        raise ConfigError("instance needs kernel and function entries")
    return run_instance(kernel_from_spec(instance['kernel']), instance)


def is_violation(result) -> bool:
    """Whether a checker result breaks its inequality or base case."""
    if isinstance(result, RearrangementResult):
        return (result.violated or not result.basecase_ok
                or not result.chain_ok)
    return result.violated or not all(p['agree'] for p in result.pieces)


def sweep(lemma: str, k: Kernel, trials: int, rng: np.random.Generator,
          decompose: bool = False) -> SweepReport:
    """Checks a lemma on 'trials' admissible random instances.

    Inadmissible draws are rejected and redrawn, up to 20 draws per trial.
    With decompose, convex instances also check the change of variables on
    their monotone pieces.

    Returns:
        SweepReport: Counts, violating instances (replayable) and the
        smallest margin seen
    """
    if trials < 1:
        raise ConfigError(f"trials must be positive, got {trials}")
    accepted, rejected = 0, 0
    violations: List[Dict] = []
    worst = np.inf
    while accepted < trials and accepted + rejected < MAX_DRAWS_PER_TRIAL * \
            trials:
        inst = random_instance(lemma, k, rng)
        if decompose and lemma == 'convex':
            inst['decompose'] = True
        try:
            result = run_instance(k, inst)
        except PreconditionError:
            rejected += 1
            continue
        accepted += 1
        worst = min(worst, result.margin)
        if is_violation(result):
            violations.append(dict(inst, result=result.to_dict()))
    draws = accepted + rejected
    if rejected:
        rank_zero_warn(f"{lemma}: rejected {rejected}/{draws} draws "
                       f"({rejected / draws:.1%}) as inadmissible")
    if accepted < trials:
        rank_zero_warn(f"{lemma}: only {accepted}/{trials} admissible "
                       f"instances after {draws} draws")
    rank_zero_info(f"{lemma} on {k.name}: {accepted} instances, "
                   f"{len(violations)} violations, worst margin {worst:.3g}")
    return SweepReport(lemma, k.spec(), trials, accepted, rejected, violations,
                       float(worst))
