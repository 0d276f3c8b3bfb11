"""Continuity diagnostics of a critical density at interior points.

A density whose potential is constant on its support cannot jump inside it.
The report measures one-sided essential limits across refinements, and at any
point that still looks discontinuous it builds the critical-point ladder of
the even or odd part of f and evaluates the quantities whose signs would
contradict a constant potential.

Attributes:
    ContinuityReport (NamedTuple): Verdict, EL precondition and per-point data
"""
import dataclasses
from typing import List, NamedTuple, Optional

import numpy as np
from pytorch_lightning.utilities.rank_zero import (rank_zero_info,
                                                   rank_zero_warn)
from scipy import optimize

from rieszEL.common.errors import ConfigError, NotCriticalError, RieszError
from rieszEL.common.kernels import Kernel
from rieszEL.common.measures import GridDensity, essential_limits, symmetrize
from rieszEL.common.potentials import cell_weights
from rieszEL.regularity.ladder import (JUMP_FLOOR, WINDOW_FRACTIONS,
                                       CriticalPointLadder, build_ladder,
                                       running_min_left, running_min_right)
from rieszEL.regularity.second_derivative import (
    gprime_antiderivatives, psi_second_derivative_at_critical)
from rieszEL.regularity.smooth_functions import SmoothFunction
from rieszEL.solver import (SolveConfig, boundedness_summary, minimize,
                            verify_el)

SCAN_POINTS = 9
EXIT_CONTINUOUS = 0
EXIT_JUMP = 3


class ContinuityReport(NamedTuple):
    verdict: str
    el: dict
    points: List[dict]
    levels: List[dict]
    boundedness: Optional[dict] = None

    @property
    def exit_code(self) -> int:
        return EXIT_JUMP if self.verdict == 'jump' else EXIT_CONTINUOUS

    def to_dict(self) -> dict:
        out = self._asdict()
        out['exit_code'] = self.exit_code
        return out


def interior_points(lo: float, hi: float, count: int = SCAN_POINTS):
    return np.linspace(lo, hi, count + 2)[1:-1]


def lipschitz_proxy(f: GridDensity, xbar: float, eta: float) -> float:
    """Median |Δf|/h over (x̄ − η, x̄ + η)."""
    x = f.x
    v = f.values[(x > xbar - eta) & (x < xbar + eta)]
    if v.size < 2:
        return 0.0
    return float(np.median(np.abs(np.diff(v)))) / f.h


def jump_tolerance(f: GridDensity, xbar: float, eta_used: float,
                   widest: float) -> float:
    """2·η·L + 1e-3·M, the largest oscillation a continuous f shows."""
    return 2 * eta_used * lipschitz_proxy(f, xbar, widest) + JUMP_FLOOR * f.M


def _mirror(f: GridDensity) -> GridDensity:
    return GridDensity(-f.b, -f.a, f.values[::-1], signed=f.signed)


def refine_critical(F: SmoothFunction, x: float, h: float) -> float:
    """Zero of F' nearest to x within a few spacings, x if F' keeps its sign."""
    t = x + h * np.arange(-4, 5)
    d = F.d1(t)
    flips = np.flatnonzero(d[:-1] * d[1:] <= 0)
    if flips.size == 0:
        return float(x)
    i = flips[np.argmin(np.abs(flips - 4))]
    if d[i] == 0:
        return float(t[i])
    if d[i + 1] == 0:
        return float(t[i + 1])
    return float(
        optimize.brentq(lambda s: float(F.d1(s)), t[i], t[i + 1],
                        xtol=1e-15))


def with_nodes(nodes: np.ndarray, pts) -> np.ndarray:
    """nodes with pts added; a node closer than 1e-9 spacings is replaced."""
    nodes = np.array(nodes, dtype=float)
    tiny = 1e-9 * float(np.min(np.diff(nodes)))
    extra = []
    for p in np.atleast_1d(pts):
        i = min(int(np.searchsorted(nodes, p)), nodes.size - 1)
        near = i if abs(nodes[i] - p) <= abs(nodes[i - 1] - p) else i - 1
        if abs(nodes[near] - p) <= tiny:
            nodes[near] = p
        else:
            extra.append(p)
    return np.union1d(nodes, extra)


def _tail_integral(anti, nodes: np.ndarray, fprime: np.ndarray, base: float,
                   lo: float, hi: float) -> float:
    """∫_lo^hi f'(t) g'(base − t) dt on the linear interpolant of f'."""
    keep = (nodes >= lo) & (nodes <= hi)
    sub, vals = nodes[keep], fprime[keep]
    if sub.size < 2:
        return 0.0
    w = cell_weights(anti, sub, [base])[0]
    w[sub == base] = 0.0
    return float(w @ vals)


def ijk_decomposition(k: Kernel, ladder: CriticalPointLadder,
                      base: float, other: float) -> dict:
    """I, J, K of ψ_{f_δ}'' at base with the couple's other end as cut.

    I integrates left of base, J between base and other, K beyond other; the
    sum is the third form of ψ'' at base.
    """
    fd = ladder.f_delta
    anti = gprime_antiderivatives(k)
    b, c = ladder.xbar + base, ladder.xbar + other
    nodes = with_nodes(fd.x, [b, c])
    fprime = fd.evaluate(nodes, 1)
    lo, hi = min(b, c), max(b, c)
    left = _tail_integral(anti, nodes, fprime, b, fd.a, lo)
    middle = _tail_integral(anti, nodes, fprime, b, lo, hi)
    right = _tail_integral(anti, nodes, fprime, b, hi, fd.b)
    if c < b:
        left, right = right, left
    return {'base': base, 'I': left, 'J': middle, 'K': right,
            'sum': left + middle + right}


def contradiction_bounds(k: Kernel, ladder: CriticalPointLadder) -> dict:
    """The lower bounds of I, J, K and the margin they leave."""
    eps, h_L, gamma = ladder.epsilon, ladder.jumps.h_L, ladder.gamma
    g1 = abs(float(k.gprime(gamma)))
    g2 = abs(float(k.gprime(gamma / 2)))
    return {
        'I_bound': -3 * eps * g2,
        'J_bound': (h_L - 2 * eps) / 2 * (g1 + g2),
        'K_bound': -(h_L + 2 * eps) * g1 - eps * g2,
        'margin': (h_L - 10 * eps) / 2 * g2 - (h_L + 6 * eps) / 2 * g1
    }


def _case_two_tails(k: Kernel, ladder: CriticalPointLadder, F: SmoothFunction,
                    base: float) -> dict:
    fd = ladder.f_delta
    anti = gprime_antiderivatives(k)
    p1 = refine_critical(F, ladder.xbar + ladder.p_points[0], fd.source.h)
    base = ladder.xbar + base
    nodes = with_nodes(fd.x, [p1, base])
    fprime = fd.evaluate(nodes, 1)
    end = ladder.xbar + ladder.eta
    threshold = -4 * ladder.epsilon * abs(float(k.gprime(ladder.gamma / 2)))
    out = {'threshold': threshold}
    for key, x in (('at_couple', base), ('at_p1', p1)):
        # g'(t − x) = −g'(x − t)
        out[key] = -_tail_integral(anti, nodes, fprime, x, p1, end)
    out['at_couple_above'] = bool(out['at_couple'] >= threshold)
    out['at_p1_below'] = bool(out['at_p1'] < threshold)
    return out


def ladder_diagnostics(k: Kernel, ladder: CriticalPointLadder) -> dict:
    """Second derivative forms, I/J/K at both ends of the good couple, their
    bounds and the running-minimum sets next to the couple."""
    fd = ladder.f_delta
    F = SmoothFunction.from_density(fd)
    spacing = fd.source.h
    out = {'ladder': ladder.to_dict(),
           'bounds': contradiction_bounds(k, ladder)}
    left, right = ladder.good_couple
    base = refine_critical(F, ladder.xbar + left, spacing) - ladder.xbar
    other = refine_critical(F, ladder.xbar + right, spacing) - ladder.xbar
    out['decomposition'] = ijk_decomposition(k, ladder, base, other)
    out['decomposition_other_end'] = ijk_decomposition(k, ladder, other, base)
    bounds = out['bounds']
    d = out['decomposition']
    out['bounds_hold'] = {
        'I': bool(d['I'] >= bounds['I_bound']),
        'J': bool(d['J'] >= bounds['J_bound']),
        'K': bool(d['K'] >= bounds['K_bound'])
    }
    try:
        h = min((F.hi - F.lo) / 4000, ladder.delta / 8)
        second = psi_second_derivative_at_critical(k, F, ladder.xbar + base,
                                                   h)
        out['second_derivative'] = second.to_dict()
    except RieszError as e:
        out['second_derivative'] = {'error': str(e)}
    zl, wr = running_min_left(ladder), running_min_right(ladder)
    out['running_min_left'] = {'count': int(zl.size),
                               'measure': float(zl.size * fd.h)}
    out['running_min_right'] = {'count': int(wr.size),
                                'measure': float(wr.size * fd.h)}
    if ladder.case == 'AntisymmetricII':
        out['tails'] = _case_two_tails(k, ladder, F, base)
    return out


def _attempt_ladders(k: Kernel, f: GridDensity, xbar: float,
                     case: str = 'auto') -> dict:
    f_s, f_a = symmetrize(f, xbar, full_support=True)
    attempts = [('even', f_s, 'SymmetricI'), ('odd', f_a, 'AntisymmetricII'),
                ('odd_mirrored', _mirror(f_a), 'AntisymmetricII')]
    if case != 'auto':
        attempts = [a for a in attempts if a[2] == case]
    tried = {}
    for name, part, which in attempts:
        try:
            ladder = build_ladder(k, part, 0.0, which)
        except RieszError as e:
            tried[name] = {'error': str(e),
                           'condition': getattr(e, 'condition', None)}
            continue
        out = ladder_diagnostics(k, ladder)
        out['part'] = name
        out['attempts'] = tried
        return out
    return {'part': None, 'attempts': tried}


def _levels(f: GridDensity, refinements: int,
            cfg: Optional[SolveConfig], k: Kernel) -> List[GridDensity]:
    levels = [f]
    if cfg is None:
        return levels * refinements
    a0, b0, _ = cfg.grid
    n = f.n
    for _ in range(refinements - 1):
        n = 2 * n - 1
        run = dataclasses.replace(cfg, method='GridProjectedGradient',
                                  grid=(a0, b0, n))
        levels.append(minimize(k, run)[0])
    return levels


def continuity_report(k: Kernel,
                      f: GridDensity,
                      points=None,
                      refinements: int = 3,
                      el_tol: float = 1e-2,
                      cfg: SolveConfig = None,
                      case: str = 'auto') -> ContinuityReport:
    """Essential-limit jump estimates at interior points of a critical f.

    With a SolveConfig each refinement re-solves at 2n − 1 nodes and the
    report carries the sup f and support shape of every level; without
    one, refinements halve the essential-limit windows on f itself. A point
    is flagged when, at the finest level, h_L, h_R or the two-sided gap
    exceeds 2·η·L + 1e-3·M. Flagged points get the ladder diagnostics of
    the even part of f about them, or of the odd part and its mirror.

    Args:
        k (Kernel): Kernel
        f (GridDensity): Density with constant potential on its support
        points (array_like, optional): Interior points, by default 9 evenly
            spaced inside the support
        refinements (int): Number of levels, >= 1
        el_tol (float): Tolerance of the Euler-Lagrange precondition
        cfg (SolveConfig, optional): Solver used for refined levels
        case (str): Ladder case tried at flagged points, 'auto' for both

    Returns:
        ContinuityReport: 'continuous' or 'jump'

    Raises:
        NotCriticalError: f fails verify_el
    """
    if refinements < 1:
        raise ConfigError(f"refinements must be >= 1, got {refinements}")
    el = verify_el(k, f, el_tol)
    if not el.passed:
        raise NotCriticalError(
            "density is not potential-constant "
            f"(EL residual {el.el_residual:.3g}, tol {el_tol:g})")
    lo, hi = el.support_interval
    pts = interior_points(lo, hi) if points is None else np.atleast_1d(
        np.asarray(points, dtype=float))
    levels = _levels(f, refinements, cfg, k)
    shrink = cfg is None

    reports = []
    for x in pts:
        room = min(x - lo, hi - x)
        entry = {'x': float(x), 'levels': []}
        if not room > 0:
            entry['error'] = f"{x:g} is not inside the support ({lo:g}, {hi:g})"
            reports.append(entry)
            continue
        for i, level in enumerate(levels):
            scale = 0.5**i if shrink else 1.0
            windows = [room * w * scale for w in WINDOW_FRACTIONS]
            try:
                jumps = essential_limits(level, x, windows)
            except RieszError as e:
                entry['levels'].append({'n': level.n, 'error': str(e)})
                continue
            tol = jump_tolerance(level, x, jumps.eta_used, windows[0])
            worst = max(jumps.h_L, jumps.h_R, jumps.two_sided_gap)
            entry['levels'].append({
                'n': level.n,
                'jumps': jumps.to_dict(),
                'tolerance': tol,
                'flagged': bool(worst > tol)
            })
        done = [lv for lv in entry['levels'] if 'jumps' in lv]
        if not done:
            entry['flagged'] = False
            entry['error'] = 'no level resolved the windows'
            reports.append(entry)
            continue
        sizes = [max(lv['jumps']['h_L'], lv['jumps']['h_R']) for lv in done]
        entry['jumps_nonincreasing'] = bool(
            all(b <= a + JUMP_FLOOR * f.M for a, b in zip(sizes, sizes[1:])))
        entry['flagged'] = done[-1]['flagged']
        if entry['flagged']:
            rank_zero_warn(f"possible jump at {x:g}: h_L = "
                           f"{done[-1]['jumps']['h_L']:.4g}, h_R = "
                           f"{done[-1]['jumps']['h_R']:.4g}")
            entry['ladder'] = _attempt_ladders(k, levels[-1], float(x), case)
        reports.append(entry)

    verdict = 'jump' if any(e.get('flagged') for e in reports) else \
        'continuous'
    rank_zero_info(f"continuity over {len(pts)} points: {verdict}")
    bounds = None if shrink else boundedness_summary(k, levels, el_tol)
    return ContinuityReport(verdict, el.to_dict(), reports,
                            [{'n': lv.n, 'h': lv.h} for lv in levels],
                            bounds)
