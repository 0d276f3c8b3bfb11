import mpmath
import numpy as np
import pytest
from scipy import integrate

from rieszEL.common.errors import BoundViolation, ResolutionError
from rieszEL.common.kernels import PowerLaw
from rieszEL.common.measures import GridDensity
from rieszEL.common.mollifiers import (MollifiedDensity, derivative_bound_check,
                                       mollify, potential_commutation_check,
                                       standard_mollifier)
from rieszEL.common.utils import make_generator


def test_bump_properties():
    rho = standard_mollifier()
    mass, _ = integrate.quad(rho.rho, -1, 1, epsabs=1e-14, epsrel=1e-13)
    assert abs(mass - 1) < 1e-10, f"bump mass {mass}"
    assert rho.rho(0.0) <= 1
    s = np.linspace(0, 1, 501)[1:-1]
    assert np.all(rho.rho_prime(s) < 0), "bump must decrease on (0, 1)"
    assert rho.tail_mass(0.0) == pytest.approx(0.5, abs=1e-10)
    assert rho.tail_mass(1.0) == pytest.approx(0.0, abs=1e-12)


def test_mollify_needs_four_cells():
    f = GridDensity(-1, 1, np.full(101, 0.5))
    with pytest.raises(ResolutionError) as e:
        mollify(f, 0.03)
    assert e.value.condition == 'delta'


def test_mollified_uniform_keeps_mass_and_plateau():
    f = GridDensity(-1, 1, np.full(201, 0.5))
    fd = mollify(f, 0.1)
    assert fd.a < f.a and fd.b > f.b, "the mollified support is wider"
    assert fd.mass == pytest.approx(1.0, abs=1e-4)
    assert float(fd.evaluate(0.0)[0]) == pytest.approx(0.5, abs=1e-9), \
        "f_delta equals f away from the jumps"
    assert float(fd.evaluate(0.0, order=1)[0]) == pytest.approx(0.0,
                                                                abs=1e-10)


def test_derivative_bound_on_random_densities():
    rng = make_generator(11)
    for _ in range(20):
        f = GridDensity(-1, 1, rng.uniform(0, 1, 201))
        delta = float(rng.uniform(0.04, 0.3))
        top = derivative_bound_check(f, delta)
        assert top <= 2 * f.M / delta * (1 + 1e-12)


def test_derivative_bound_violation_is_reported(monkeypatch):
    f = GridDensity(-1, 1, np.full(201, 0.5))
    monkeypatch.setattr(MollifiedDensity, 'derivative_samples',
                        lambda self, order: np.full(self.n, 100.0))
    with pytest.raises(BoundViolation):
        derivative_bound_check(f, 0.1)


def test_potential_commutes_with_mollification():
    k = PowerLaw(2, 0)
    f = GridDensity(-1, 1, np.full(201, 0.5))
    gap, err = potential_commutation_check(k, f, 0.2, [0.0, 0.3])
    assert gap < 1e-6, f"psi of f_delta differs from psi_f * rho by {gap}"


def test_commutation_points_must_be_interior():
    k = PowerLaw(2, 0)
    f = GridDensity(-1, 1, np.full(201, 0.5))
    with pytest.raises(ResolutionError):
        potential_commutation_check(k, f, 0.2, [0.9])


def test_normalizing_constant_matches_mpmath():
    rho = standard_mollifier()
    z = float(mpmath.quad(lambda t: mpmath.exp(-1 / (1 - t**2)), [-1, 0, 1]))
    assert rho.Z == pytest.approx(z, rel=1e-12)
    assert rho.Z == pytest.approx(0.4439938, abs=1e-7)


def test_tail_mass_decreases_from_one_half():
    rho = standard_mollifier()
    s = np.linspace(0, 1, 101)
    tails = np.array([rho.tail_mass(v) for v in s])
    assert tails[0] == pytest.approx(0.5, abs=1e-12)
    assert np.all(np.diff(tails) <= 1e-15), "tail mass must not increase"
    exact = float(mpmath.quad(lambda t: mpmath.exp(-1 / (1 - t**2)),
                              [0.5, 1])) / rho.Z
    assert rho.tail_mass(0.5) == pytest.approx(exact, rel=1e-8)


def test_mollification_keeps_parity():
    even = GridDensity.from_function(lambda x: 1 - x**2, -1, 1, 201)
    fd = mollify(even, 0.1)
    assert np.allclose(fd.values, fd.values[::-1], rtol=0, atol=1e-12), \
        "f_delta of an even f must be even"
    odd = GridDensity.from_function(lambda x: x * (1 - x**2), -1, 1, 201,
                                    signed=True)
    fd = mollify(odd, 0.1)
    assert np.allclose(fd.values, -fd.values[::-1], rtol=0, atol=1e-12), \
        "f_delta of an odd f must be odd"


def test_step_is_averaged_at_the_jump():
    # 199 cells: x = 0 is the midpoint of the cell carrying the step
    f = GridDensity.from_function(lambda x: np.where(x < 0, 1.0, 3.0), -1, 1,
                                  200)
    fd = mollify(f, 0.2)
    assert float(fd.evaluate(0.0)[0]) == pytest.approx(2.0, abs=1e-9)
    assert float(fd.evaluate(-0.5)[0]) == pytest.approx(1.0, abs=1e-9)
    assert float(fd.evaluate(0.5)[0]) == pytest.approx(3.0, abs=1e-9)
