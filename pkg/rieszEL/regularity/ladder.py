"""Critical-point ladders of a mollified density next to a jump.

Around a point x̄ where f jumps from the left, f_δ = f ∗ ρ_δ keeps
oscillating between the essential liminf and limsup of f. The ladder walks
left from x̄ and picks alternating near-minima and near-maxima p_1 > p_2 > ...
of f_δ inside (x̄ − η, x̄), then selects a "good couple" of consecutive points
whose gap is at most twice each neighbouring gap.

All positions stored on a ladder are relative to x̄.

Attributes:
    CriticalPointLadder (dataclass): Points, parameters and diagnostics
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pytorch_lightning.utilities.rank_zero import (rank_zero_debug,
                                                   rank_zero_info)

from rieszEL.common.errors import PreconditionError, ResolutionError
from rieszEL.common.kernels import (Kernel, find_good_lambda_eta,
                                    gprime_total_variation)
from rieszEL.common.measures import (GridDensity, JumpDiagnostics,
                                     essential_limits)
from rieszEL.common.mollifiers import (MollifiedDensity, mollify,
                                       standard_mollifier)

CASES = ('SymmetricI', 'AntisymmetricII')
EPS_SAFETY = 0.9
MIN_POINTS = 10
MIN_DELTA_CELLS = 8
MIN_ETA_CELLS = 16
JUMP_FLOOR = 1e-3
PARITY_TOL = 1e-8
WINDOW_FRACTIONS = (1 / 4, 1 / 8, 1 / 16)


@dataclass
class CriticalPointLadder:
    """Alternating near-extremal points of f_δ left of x̄.

    Attributes:
        case (str): 'SymmetricI' (f even about x̄) or 'AntisymmetricII' (odd)
        xbar (float): Center; every position below is relative to it
        epsilon (float): Band width around the essential limits
        eta (float): Half-width of the search window
        delta (float): Mollifier scale
        C_points (np.ndarray): C_1 > C_2 > ... > C_N
        p_points (np.ndarray): p_1 > p_2 > ... > p_N
        p_values (np.ndarray): f_δ(p_i)
        q_points (np.ndarray): Mirrored points, −p_2 (case I) or −p_1, −p_2
        N (int): Number of ladder points
        j (int): Good-couple index, 1-based
        good_couple (Tuple[float, float]): Left and right end of the couple
        gamma (float): Length of the good couple
        gamma_bar (float): max(|p_1 − p_2|, |q_1 − p_1|)
        C_const (float): 20M(TV(g', [η/2, D]) + 2 sup_{[η/2, D]} |g'|)
        lo (float): l_L⁻ + ε, the level odd points reach
        hi (float): l_L⁺ − ε, the level even points reach
        M (float): max|f|
        D (float): Length of the support of f
        jumps (JumpDiagnostics): Essential limits of f at x̄
        f_delta (MollifiedDensity): f_δ in absolute coordinates
        diagnostics (dict): Case-specific side conditions
        violations (List[str]): Names of failed invariants, empty on success
    """
    case: str
    xbar: float
    epsilon: float
    eta: float
    delta: float
    C_points: np.ndarray
    p_points: np.ndarray
    p_values: np.ndarray
    q_points: np.ndarray
    N: int
    j: int
    good_couple: Tuple[float, float]
    gamma: float
    gamma_bar: float
    C_const: float
    lo: float
    hi: float
    M: float
    D: float
    jumps: JumpDiagnostics = field(repr=False)
    f_delta: MollifiedDensity = field(repr=False)
    diagnostics: dict = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)

    def points(self) -> np.ndarray:
        """p_N < ... < p_1 < q_1 [< q_2], the ordered chain of the ladder."""
        return np.concatenate([self.p_points[::-1], self.q_points])

    def to_dict(self) -> dict:
        return {
            'case': self.case,
            'xbar': self.xbar,
            'epsilon': self.epsilon,
            'eta': self.eta,
            'delta': self.delta,
            'C_points': self.C_points.tolist(),
            'p_points': self.p_points.tolist(),
            'p_values': self.p_values.tolist(),
            'q_points': self.q_points.tolist(),
            'N': self.N,
            'j': self.j,
            'good_couple': list(self.good_couple),
            'gamma': self.gamma,
            'gamma_bar': self.gamma_bar,
            'C_const': self.C_const,
            'lo': self.lo,
            'hi': self.hi,
            'M': self.M,
            'D': self.D,
            'jumps': self.jumps.to_dict(),
            'diagnostics': self.diagnostics,
            'violations': list(self.violations)
        }


def parity_defects(f: GridDensity, xbar: float) -> Tuple[float, float]:
    """max|f(x̄+t) − f(x̄−t)| and max|f(x̄+t) + f(x̄−t)| over the nodes
    right of x̄ that have a mirror inside the support."""
    room = min(xbar - f.a, f.b - xbar)
    x = f.x
    t = x[(x > xbar) & (x < xbar + room)] - xbar
    plus, minus = f(xbar + t), f(xbar - t)
    return (float(np.max(np.abs(plus - minus), initial=0.0)),
            float(np.max(np.abs(plus + minus), initial=0.0)))


def resolve_case(f: GridDensity, xbar: float, case: str = 'auto') -> str:
    """The ladder case of f at x̄, checking the parity it requires.

    Raises:
        PreconditionError: f lacks the parity of the requested case
    """
    even, odd = parity_defects(f, xbar)
    tol = PARITY_TOL * (1 + f.M)
    if case == 'auto':
        if even <= tol:
            return 'SymmetricI'
        if odd <= tol:
            return 'AntisymmetricII'
        raise PreconditionError(
            f"f is neither even nor odd about {xbar:g} (defects {even:.3g}, "
            f"{odd:.3g}); symmetrize it first")
    if case not in CASES:
        raise PreconditionError(f"unknown ladder case {case!r}")
    defect = even if case == 'SymmetricI' else odd
    if defect > tol:
        raise PreconditionError(
            f"case {case} needs f {'even' if case == 'SymmetricI' else 'odd'}"
            f" about {xbar:g}, defect {defect:.3g}")
    return case


def choose_epsilon(k: Kernel, jumps: JumpDiagnostics, M: float,
                   case: str) -> float:
    """ε strictly below the case's bound, with safety factor 0.9.

    Case I: (Λ̄−1)h_L/(10Λ̄+6). Case II additionally caps ε by
    (l_R⁻ − l_L⁻)/2 · ∫_{1−h_L/(4M)}^1 ρ.
    """
    lam_bar, h_L = k.LambdaBar, jumps.h_L
    if case == 'SymmetricI':
        return EPS_SAFETY * (lam_bar - 1) * h_L / (10 * lam_bar + 6)
    s = min(1.0, max(0.0, 1 - h_L / (4 * M)))
    tail = standard_mollifier().tail_mass(s)
    return EPS_SAFETY * min((lam_bar - 1) * h_L / (18 * lam_bar + 6),
                            (jumps.l_R_minus - jumps.l_L_minus) / 2 * tail)


def band_fraction(f: GridDensity, xbar: float, eta: float, lo: float,
                  hi: float) -> float:
    """Fraction of samples in (x̄ − 2η, x̄) with lo < f < hi."""
    x = f.x
    v = f.values[(x > xbar - 2 * eta) & (x < xbar)]
    if v.size == 0:
        return 0.0
    return float(np.mean((v > lo) & (v < hi)))


def choose_eta(k: Kernel,
               f: GridDensity,
               xbar: float,
               jumps: JumpDiagnostics,
               epsilon: float,
               eta0: float = None) -> float:
    """Largest η, halving from min(r/8, room/2), with the band clause and
    |g'(x/2)| > Λ̄|g'(x)| on (0, 2η).

    Raises:
        ResolutionError: No η above 16 grid spacings qualifies
    """
    room = min(xbar - f.a, f.b - xbar)
    if eta0 is None:
        eta0 = min(k.r / 8, 0.99 * room / 2)
    floor = MIN_ETA_CELLS * f.h
    eta = find_good_lambda_eta(k, eta0, min_eta=floor)
    lo, hi = jumps.l_L_minus - epsilon, jumps.l_L_plus + epsilon
    while eta >= floor:
        frac = band_fraction(f, xbar, eta, lo, hi)
        if frac >= 1 - jumps.discard:
            return eta
        rank_zero_debug(f"eta={eta:g}: band fraction {frac:.4f}")
        eta /= 2
    raise ResolutionError(
        "grid cannot resolve ladder; refine f (no eta keeps f in the band "
        f"({lo:.6g}, {hi:.6g}) on (xbar - 2 eta, xbar))", condition='eta')


def c_constant(k: Kernel, eta: float, D: float, M: float) -> float:
    """20M(TV(g', [η/2, D]) + 2 sup_{[η/2, D]} |g'|)."""
    lo, hi = eta / 2, max(D, eta / 2)
    tv = gprime_total_variation(k, lo, hi)
    probe = np.concatenate([np.geomspace(lo, hi, 2001), [lo, hi]])
    sup = float(np.max(np.abs(k.gprime(probe))))
    return 20 * M * (tv + 2 * sup)


def ladder_indices(v: np.ndarray, lo: float,
                   hi: float) -> Tuple[List[int], List[int]]:
    """Indices of C_i and p_i on a window whose last sample sits at x̄.

    C_1 is the rightmost sample with v ≥ hi that still has v ≤ lo somewhere to
    its right; p_1 is the leftmost argmin on [C_1, end]. After that C_{i+1}
    is the rightmost sample left of C_i reaching the opposite level, and
    p_{i+1} the leftmost argmax (i odd) or argmin (i even) on [C_{i+1}, p_i].
    """
    low, high = v <= lo, v >= hi
    suffix_min = np.minimum.accumulate(v[::-1])[::-1]
    start = np.flatnonzero(high & (suffix_min <= lo))
    if start.size == 0:
        return [], []
    c = int(start[-1])
    cs, ps = [c], [c + int(np.argmin(v[c:]))]
    while True:
        odd = len(ps) % 2 == 1
        cand = np.flatnonzero((low if odd else high)[:cs[-1] + 1])
        if cand.size == 0:
            break
        c = int(cand[-1])
        seg = v[c:ps[-1] + 1]
        ps.append(c + int(np.argmax(seg) if odd else np.argmin(seg)))
        cs.append(c)
    return cs, ps


def good_couple_index(p: np.ndarray) -> Optional[int]:
    """Smallest 1 ≤ j < N−1 with p_{j+1} − p_{j+2} ≥ (p_j − p_{j+1})/2 and,
    for j > 1, p_{j−1} − p_j ≥ (p_j − p_{j+1})/2. None if there is none."""
    seg = -np.diff(p)
    for j in range(1, p.size - 1):
        half = seg[j - 1] / 2
        if seg[j] >= half and (j == 1 or seg[j - 2] >= half):
            return j
    return None


def select_couple(p: np.ndarray, q: np.ndarray, j: int,
                  case: str) -> Tuple[float, float]:
    if case == 'AntisymmetricII' and j == 1:
        if p[0] - p[1] < q[0] - p[0]:
            return float(p[1]), float(p[0])
        return float(p[0]), float(q[0])
    return float(p[j]), float(p[j - 1])


def _attempt(k: Kernel, f: GridDensity, xbar: float, case: str,
             jumps: JumpDiagnostics, epsilon: float, eta: float,
             delta: float, C_const: float):
    fd = mollify(f, delta)
    t = fd.x - xbar
    window = np.flatnonzero((t >= -eta) & (t <= 0))
    tw, v = t[window], fd.values[window]
    lo, hi = jumps.l_L_minus + epsilon, jumps.l_L_plus - epsilon
    cs, ps = ladder_indices(v, lo, hi)
    if len(ps) < MIN_POINTS:
        return None, 'N'
    p = tw[ps]
    q = -p[1:2] if case == 'SymmetricI' else -p[:2]
    gamma_bar = max(abs(p[0] - p[1]), abs(q[0] - p[0]))
    if not epsilon * abs(float(k.gprime(gamma_bar / 2))) >= C_const:
        return None, 'delta-choice'
    if not -eta / 16 < p[0] < 0:
        return None, 'p1-window'
    if not -eta / 8 < p[1] < 0:
        return None, 'p2-window'
    j = good_couple_index(p)
    if j is None:
        return None, 'good-couple'
    couple = select_couple(p, q, j, case)
    ladder = CriticalPointLadder(
        case=case, xbar=float(xbar), epsilon=float(epsilon), eta=float(eta),
        delta=float(delta), C_points=tw[cs], p_points=p, p_values=v[ps],
        q_points=q, N=len(ps), j=j, good_couple=couple,
        gamma=couple[1] - couple[0], gamma_bar=float(gamma_bar),
        C_const=float(C_const), lo=float(lo), hi=float(hi), M=f.M, D=f.D,
        jumps=jumps, f_delta=fd)
    return ladder, None


def case_two_diagnostics(ladder: CriticalPointLadder) -> dict:
    """Side conditions used when f is odd about x̄."""
    fd, eps, jumps = ladder.f_delta, ladder.epsilon, ladder.jumps
    t = fd.x - ladder.xbar
    start = ladder.delta * (-1 + jumps.h_L / (4 * ladder.M))
    near = fd.values[(t > start) & (t < ladder.eta)]
    near_min = float(np.min(near)) if near.size else float('nan')
    return {
        'extremes_below_upper':
        bool(np.all(ladder.p_values < jumps.l_L_plus + eps)),
        'min_near_xbar': near_min,
        'above_lower_near_xbar': bool(near_min > jumps.l_L_minus + eps),
        'p2_left_of_delta': bool(ladder.p_points[1] < -ladder.delta)
    }


def check_invariants(k: Kernel, ladder: CriticalPointLadder) -> List[str]:
    """Names of the ladder invariants that fail, in a fixed order."""
    p, out = ladder.p_points, []
    if ladder.N < MIN_POINTS:
        out.append('N')
    if not np.all(np.diff(p) < 0):
        out.append('decreasing')
    if not (np.all(p > -ladder.eta) and np.all(p < 0)):
        out.append('window')
    if not -ladder.eta / 16 < p[0] < 0:
        out.append('p1-window')
    if not -ladder.eta / 8 < p[1] < 0:
        out.append('p2-window')
    odd = np.arange(ladder.N) % 2 == 0
    v = ladder.p_values
    if not (np.all(v[odd] <= ladder.lo) and np.all(v[~odd] >= ladder.hi)):
        out.append('alternation')
    seg = -np.diff(p)
    j = ladder.j
    if not seg[j] >= seg[j - 1] / 2:
        out.append('left-cond')
    if j > 1 and not seg[j - 2] >= seg[j - 1] / 2:
        out.append('right-cond')
    chain = ladder.points()
    lengths = np.diff(chain)
    i = int(np.argmin(np.abs(chain - ladder.good_couple[0])))
    neighbours = lengths[max(0, i - 1):i].tolist() + lengths[i + 1:i + 2].tolist()
    if any(ladder.gamma > 2 * n * (1 + 1e-12) for n in neighbours):
        out.append('good-segment')
    lhs = ladder.epsilon * abs(float(k.gprime(ladder.gamma_bar / 2)))
    if not lhs >= ladder.C_const:
        out.append('delta-choice')
    return out


def build_ladder(k: Kernel,
                 f: GridDensity,
                 xbar: float,
                 case: str = 'auto',
                 params_hint: dict = None) -> CriticalPointLadder:
    """Builds the critical-point ladder of f_δ left of x̄.

    ε follows the case's bound, η is halved from min(r/8, room/2) until the
    band clause and the good-Λ̄ clause hold, and δ is halved from
    min(η/4, ¼ min(x̄ − a, b − x̄)) until the ladder has at least 10 points,
    p_1 ∈ (−η/16, 0), p_2 ∈ (−η/8, 0) and ε|g'(γ̄/2)| ≥ C.

    Args:
        k (Kernel): Kernel
        f (GridDensity): Density, even (case I) or odd (case II) about x̄
        xbar (float): Interior point with a jump from the left
        case (str): 'SymmetricI', 'AntisymmetricII' or 'auto'
        params_hint (dict, optional): Fixed 'epsilon', 'eta', 'delta' or
            essential-limit 'windows'

    Returns:
        CriticalPointLadder: The ladder, with its invariant check

    Raises:
        PreconditionError: No jump, wrong parity, or case II limits out of
            order
        ResolutionError: The δ search reached 8 grid spacings; the condition
            that failed last is attached
    """
    hint = dict(params_hint or {})
    xbar = float(xbar)
    room = min(xbar - f.a, f.b - xbar)
    windows = hint.get('windows',
                       [room * w for w in WINDOW_FRACTIONS])
    jumps = essential_limits(f, xbar, windows)
    M = f.M
    if not jumps.h_L > JUMP_FLOOR * M:
        raise PreconditionError(
            f"no jump; ladder undefined (h_L = {jumps.h_L:.3g} at {xbar:g})")
    case = resolve_case(f, xbar, case)
    if case == 'AntisymmetricII' and not jumps.l_L_minus < min(
            0.0, jumps.l_R_minus):
        raise PreconditionError(
            "case AntisymmetricII needs l_L- < min(0, l_R-), got "
            f"l_L- = {jumps.l_L_minus:.6g}, l_R- = {jumps.l_R_minus:.6g}")

    epsilon = float(hint.get('epsilon', choose_epsilon(k, jumps, M, case)))
    if 'eta' in hint:
        eta = float(hint['eta'])
    else:
        eta = choose_eta(k, f, xbar, jumps, epsilon)
    C_const = c_constant(k, eta, f.D, M)
    floor = MIN_DELTA_CELLS * f.h
    if 'delta' in hint:
        deltas = [float(hint['delta'])]
        if deltas[0] < floor:
            raise ResolutionError(
                f"grid cannot resolve ladder; refine f (delta "
                f"{deltas[0]:g} < {floor:g})", condition='delta')
    else:
        delta = min(eta / 4, 0.99 * room / 4)
        deltas = []
        while delta >= floor:
            deltas.append(delta)
            delta /= 2

    failed = 'delta'
    for delta in deltas:
        ladder, failed = _attempt(k, f, xbar, case, jumps, epsilon, eta,
                                  delta, C_const)
        rank_zero_debug(f"ladder at delta={delta:g}: "
                        f"{'ok' if ladder else failed}")
        if ladder is not None:
            break
    else:
        raise ResolutionError(
            f"grid cannot resolve ladder; refine f (condition {failed!r} "
            f"still fails at delta={deltas[-1] if deltas else 0:g})",
            condition=failed)

    if case == 'AntisymmetricII':
        ladder.diagnostics = case_two_diagnostics(ladder)
    ladder.violations = check_invariants(k, ladder)
    rank_zero_info(
        f"ladder at {xbar:g} ({case}): N={ladder.N}, j={ladder.j}, "
        f"eps={epsilon:.4g}, eta={eta:.4g}, delta={ladder.delta:.4g}, "
        f"gamma={ladder.gamma:.4g}")
    return ladder


def running_min_left(ladder: CriticalPointLadder) -> np.ndarray:
    """Points t in [−η, b) with f_δ(t) < f_δ(s) for all s in (t, b], b the
    left end of the good couple."""
    fd = ladder.f_delta
    t = fd.x - ladder.xbar
    base = int(np.argmin(np.abs(t - ladder.good_couple[0])))
    first = int(np.searchsorted(t, -ladder.eta))
    seg = fd.values[first:base + 1][::-1]
    prior = np.minimum.accumulate(seg)
    keep = np.zeros(seg.size, dtype=bool)
    keep[1:] = seg[1:] < prior[:-1]
    return t[first:base + 1][::-1][keep][::-1]


def running_min_right(ladder: CriticalPointLadder) -> np.ndarray:
    """Points t in (c, η] with f_δ(t) < f_δ(s) for all s in (c, t), c the
    right end of the good couple."""
    fd = ladder.f_delta
    t = fd.x - ladder.xbar
    base = int(np.argmin(np.abs(t - ladder.good_couple[1])))
    last = int(np.searchsorted(t, ladder.eta, side='right'))
    seg = fd.values[base + 1:last]
    if seg.size == 0:
        return seg
    keep = np.ones(seg.size, dtype=bool)
    keep[1:] = seg[1:] < np.minimum.accumulate(seg)[:-1]
    return t[base + 1:last][keep]
