import numpy as np
import pytest

from rieszEL.common.errors import PreconditionError, ResolutionError
from rieszEL.common.kernels import PowerLaw
from rieszEL.common.measures import GridDensity
from rieszEL.regularity.ladder import (MIN_POINTS, build_ladder,
                                       good_couple_index, ladder_indices,
                                       resolve_case, running_min_left,
                                       running_min_right)

OMEGA = 2 * np.pi / np.log(2)


def log_oscillation(x):
    """sin(ω log|x|), one period per halving of |x|, zero at the origin."""
    with np.errstate(divide='ignore', invalid='ignore'):
        s = np.sin(OMEGA * np.log(np.abs(x)))
    return np.where(np.abs(x) < 1e-12, 0.0, s)


def even_oscillator(n=400001):
    return GridDensity.from_function(
        lambda x: 1.5 + 0.5 * log_oscillation(x), -0.3, 0.3, n)


def odd_oscillator(n=400001):
    def f(x):
        s = np.sign(x) * (0.25 - 0.75 * log_oscillation(x))
        return np.where(np.abs(x) < 1e-12, 0.0, s)
    return GridDensity.from_function(f, -0.3, 0.3, n, signed=True)


@pytest.fixture(scope='module')
def kernel():
    return PowerLaw(2, -0.9)


def test_ladder_indices_alternate():
    v = np.array([2.0, 1.0, 2.0, 2.0, 0.9, 2.1, 1.0, 1.5])
    cs, ps = ladder_indices(v, 1.0, 2.0)
    assert ps == [6, 5, 4, 2, 1], f"unexpected extremal indices {ps}"
    assert all(a > b for a, b in zip(cs, cs[1:]))


def test_good_couple_index():
    p = -np.array([1, 2, 4, 5, 9, 10], dtype=float)
    assert good_couple_index(p) == 1
    p = -np.array([1, 2, 2.2, 2.4])
    assert good_couple_index(p) == 2
    assert good_couple_index(-np.array([1.0, 2.0])) is None


def test_parity_detection():
    assert resolve_case(even_oscillator(4001), 0.0) == 'SymmetricI'
    assert resolve_case(odd_oscillator(4001), 0.0) == 'AntisymmetricII'
    skew = GridDensity.from_function(lambda x: 1 + x, -1, 1, 201)
    with pytest.raises(PreconditionError):
        resolve_case(skew, 0.0)


def test_even_oscillator_ladder(kernel):
    ladder = build_ladder(kernel, even_oscillator(), 0.0, 'SymmetricI')
    assert ladder.N >= MIN_POINTS
    assert ladder.violations == [], f"failed invariants {ladder.violations}"
    p = ladder.p_points
    assert np.all(np.diff(p) < 0) and np.all(p < 0)
    assert -ladder.eta / 16 < p[0] < 0
    assert ladder.epsilon * abs(float(kernel.gprime(
        ladder.gamma_bar / 2))) >= ladder.C_const
    assert np.all(np.diff(ladder.points()) > 0), "chain must be ordered"
    assert running_min_left(ladder).size > 0
    assert running_min_right(ladder).size > 0


def test_odd_oscillator_ladder(kernel):
    f = odd_oscillator()
    ladder = build_ladder(kernel, f, 0.0, 'auto')
    assert ladder.case == 'AntisymmetricII'
    assert ladder.N >= MIN_POINTS
    assert ladder.violations == [], f"failed invariants {ladder.violations}"
    assert ladder.jumps.l_L_minus < min(0.0, ladder.jumps.l_R_minus)
    assert ladder.q_points.size == 2
    assert 'extremes_below_upper' in ladder.diagnostics


def test_fast_oscillation_is_not_resolved():
    def f(x):
        with np.errstate(divide='ignore', invalid='ignore'):
            s = np.sin(1 / np.abs(x))
        return 1.5 + 0.5 * np.where(np.abs(x) < 1e-12, 0.0, s)
    dens = GridDensity.from_function(f, -0.5, 0.5, 200001)
    with pytest.raises(ResolutionError) as e:
        build_ladder(PowerLaw(2, 0), dens, 0.0, 'SymmetricI')
    assert e.value.condition == 'delta-choice'


def test_no_jump_no_ladder(kernel):
    f = GridDensity.from_function(lambda x: 1 + 0.1 * x**2, -1, 1, 20001)
    with pytest.raises(PreconditionError) as e:
        build_ladder(kernel, f, 0.0)
    assert 'no jump' in str(e.value)
