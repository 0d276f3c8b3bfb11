import mpmath
import numpy as np
import pytest

from rieszEL.common.kernels import PowerLaw
from rieszEL.common.measures import GridDensity
from rieszEL.common.potentials import (energy, energy_double_quadrature,
                                       node_potential, potential_at,
                                       potential_profile)
from rieszEL.common.utils import make_generator


def uniform(n=201):
    return GridDensity(-1, 1, np.full(n, 0.5))


def test_uniform_potential_at_origin():
    k = PowerLaw(2, 0)
    psi, err = potential_at(k, uniform(), 0.0)
    assert abs(psi - 7 / 6) < 1e-6, f"psi(0) = {psi}, expected 7/6"
    assert err >= 0


def test_node_potential_agrees_with_pointwise():
    k = PowerLaw(2, -0.5)
    f = GridDensity.from_function(lambda x: 0.75 * (1 - x**2), -1, 1, 101)
    psi = node_potential(k, f)
    for i in (0, 17, 50, 100):
        assert psi[i] == pytest.approx(potential_at(k, f, f.x[i])[0],
                                       rel=1e-10)


def test_potential_of_odd_density_is_odd():
    k = PowerLaw(2, 0)
    f = GridDensity.from_function(lambda x: x * (1 - x**2), -1, 1, 201,
                                  signed=True)
    xs = np.array([0.1, 0.35, 0.8, 1.4])
    plus = potential_profile(k, f, xs).values
    minus = potential_profile(k, f, -xs).values
    assert np.allclose(plus, -minus, atol=1e-12), "psi of odd f must be odd"


def test_translated_grids_give_translated_potentials():
    k = PowerLaw(3, 0.5)
    f = GridDensity.from_function(lambda x: np.cos(np.pi * x / 2)**2, -1, 1,
                                  81)
    psi = node_potential(k, f)
    shifted = node_potential(k, f.shifted(0.5))
    assert np.allclose(psi, shifted, rtol=1e-13, atol=0)


@pytest.mark.parametrize("seed", range(10))
def test_energy_matches_double_quadrature(seed):
    k = PowerLaw(2, 0)
    values = make_generator(seed).uniform(0.1, 1.0, 11)
    f = GridDensity(-1, 1, values).normalized()
    assert abs(energy(k, f) - energy_double_quadrature(k, f)) < 1e-6, \
        "cell quadrature energy disagrees with nested quadrature"


def test_uniform_energy_closed_form():
    # ∬ ((x - y)^2/2 - log|x - y|)/4 over [-1, 1]^2 = 1/3 + 3/2 - log 2
    k = PowerLaw(2, 0)
    assert energy(k, uniform()) == pytest.approx(1 / 3 + 1.5 - np.log(2),
                                                 abs=1e-6)


def semicircle():
    return GridDensity.from_function(
        lambda x: np.sqrt(np.maximum(2 - x**2, 0)) / np.pi, -2, 2, 401)


def test_semicircle_potential_is_flat_on_its_support():
    k = PowerLaw(2, 0)
    prof = potential_profile(k, semicircle(), np.linspace(-1.3, 1.3, 53))
    stats = prof.constancy
    assert stats['stdev'] / abs(stats['mean']) <= 1e-2, \
        f"relative spread {stats['stdev'] / abs(stats['mean'])}"
    assert np.all(prof.error_estimates >= 0)


def test_uniform_potential_is_not_flat():
    k = PowerLaw(2, 0)
    prof = potential_profile(k, uniform(), np.linspace(-0.99, 0.99, 199))
    stats = prof.constancy
    assert stats['stdev'] / abs(stats['mean']) > 1e-2


def test_symmetric_density_has_symmetric_potential():
    k = PowerLaw(3, -0.5)
    xs = np.linspace(0.053, 1.903, 38)
    plus = potential_profile(k, semicircle(), xs).values
    minus = potential_profile(k, semicircle(), -xs).values
    assert np.allclose(plus, minus, rtol=0, atol=1e-11)


def test_potential_error_shrinks_with_the_grid():
    k = PowerLaw(2, 0)
    x0 = 0.3

    def density(y):
        return 0.75 * (1 - y**2)

    exact = float(mpmath.quad(
        lambda y: ((x0 - y)**2 / 2 - mpmath.log(abs(x0 - y))) * density(y),
        [-1, x0, 1]))
    errors = []
    for n in (21, 41, 81, 161):
        f = GridDensity.from_function(density, -1, 1, n)
        errors.append(abs(potential_at(k, f, x0)[0] - exact))
    for coarse, fine in zip(errors, errors[1:]):
        assert fine <= coarse / 2, f"errors {errors} do not halve"
