import numpy as np
import pytest

from rieszEL.common.errors import (ConfigError, PreconditionError,
                                   ResolutionError)
from rieszEL.common.measures import (GridDensity, ParticleSystem,
                                     essential_limits, particles_to_grid,
                                     symmetrize)


def step_density(n=2001):
    return GridDensity.from_function(lambda x: np.where(x < 0, 1.0, 2.0), -1,
                                     1, n)


def test_negative_samples_need_signed_flag():
    with pytest.raises(ConfigError):
        GridDensity(-1, 1, [0.5, -0.1, 0.5])
    f = GridDensity(-1, 1, [0.5, -0.1, 0.5], signed=True)
    assert f.signed


def test_uniform_mass_and_interpolant():
    f = GridDensity(-1, 1, np.full(101, 0.5))
    assert f.mass == pytest.approx(1.0), "trapezoid mass of the uniform law"
    assert f.M == pytest.approx(0.5)
    assert f.D == pytest.approx(2.0)
    assert float(f(1.5)) == 0.0, "zero extension outside the support"
    assert float(f(0.123)) == pytest.approx(0.5)


def test_csv_keeps_grid(tmp_path):
    f = GridDensity.from_function(lambda x: 1 - np.abs(x), -1, 1, 41)
    path = str(tmp_path / 'f.csv')
    f.to_csv(path)
    g = GridDensity.from_csv(path)
    assert g.n == f.n and g.a == f.a and g.b == f.b
    assert np.allclose(g.values, f.values, atol=1e-15)


def test_nonuniform_csv_rejected(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text("x,f\n0,1\n0.1,1\n0.3,1\n")
    with pytest.raises(ConfigError):
        GridDensity.from_csv(str(path))


def test_essential_limits_of_a_step():
    f = step_density()
    jd = essential_limits(f, 0.0, [0.2, 0.1, 0.05])
    assert jd.l_L_minus == pytest.approx(1.0)
    assert jd.l_L_plus == pytest.approx(1.0)
    assert jd.l_R_minus == pytest.approx(2.0)
    assert jd.l_R_plus == pytest.approx(2.0)
    assert jd.h_L == pytest.approx(0.0) and jd.h_R == pytest.approx(0.0)
    assert jd.two_sided_gap == pytest.approx(1.0), \
        "left and right limits differ by the step height"
    assert jd.stabilized


def test_essential_limits_preconditions():
    f = step_density()
    with pytest.raises(PreconditionError):
        essential_limits(f, 1.0, [0.1])
    with pytest.raises(PreconditionError):
        essential_limits(f, 0.0, [0.05, 0.1])
    coarse = step_density(21)
    with pytest.raises(ResolutionError):
        essential_limits(coarse, 0.0, [0.2])


def test_symmetrize_parity():
    f = GridDensity.from_function(lambda x: np.exp(x) * (1 - x**2), -1, 1,
                                  201)
    f_s, f_a = symmetrize(f, 0.2)
    assert np.allclose(f_s.values, f_s.values[::-1]), "f_S must be even"
    assert np.allclose(f_a.values, -f_a.values[::-1]), "f_A must be odd"
    assert f_a.signed and not f_s.signed


def test_particles_to_grid_has_unit_mass():
    p = ParticleSystem(np.linspace(-1, 1, 50))
    f = particles_to_grid(p, 0.1, 801)
    assert f.mass == pytest.approx(1.0, abs=1e-12)
    assert f.a == pytest.approx(-1.1) and f.b == pytest.approx(1.1)
    with pytest.raises(ConfigError):
        particles_to_grid(p, 0.0, 801)


def oscillating_density(n=200001):
    def f(x):
        safe = np.where(x == 0, 1.0, x)
        return 1.5 + 0.5 * np.sin(1 / safe)
    return GridDensity.from_function(f, -1, 1, n)


def test_essential_limits_of_dense_oscillation():
    jd = essential_limits(oscillating_density(), 0.0, [0.1, 0.05, 0.02])
    for side in ('L', 'R'):
        lo, hi = getattr(jd, f'l_{side}_minus'), getattr(jd, f'l_{side}_plus')
        assert abs(lo - 1.0) < 0.05, f"l_{side}^- = {lo}, expected 1"
        assert abs(hi - 2.0) < 0.05, f"l_{side}^+ = {hi}, expected 2"
    assert abs(jd.h_L - 1.0) < 0.05 and abs(jd.h_R - 1.0) < 0.05, \
        f"oscillation heights {jd.h_L}, {jd.h_R}, expected 1"


def test_shrinking_windows_never_widen_untrimmed_limits():
    jd = essential_limits(oscillating_density(), 0.0,
                          [0.2, 0.1, 0.05, 0.02, 0.01], discard=0.0)
    for prev, cur in zip(jd.history[:-1], jd.history[1:]):
        for side in ('L', 'R'):
            assert cur[f'l_{side}_minus'] >= prev[f'l_{side}_minus'], \
                f"l_{side}^- decreased from window {prev['eta']} to " \
                f"{cur['eta']}"
            assert cur[f'l_{side}_plus'] <= prev[f'l_{side}_plus'], \
                f"l_{side}^+ increased from window {prev['eta']} to " \
                f"{cur['eta']}"


def test_even_and_odd_parts_sum_to_shifted_density():
    f = GridDensity.from_function(lambda x: np.exp(x) * (1 - x**2), -1, 1,
                                  201)
    f_s, f_a = symmetrize(f, 0.2)
    t = f_s.x
    assert np.allclose(f_a.x, t)
    assert np.allclose(f_s.values + f_a.values, 2 * f(0.2 + t), atol=1e-12), \
        "f_S + f_A must equal 2 f(xbar + t)"


def test_symmetrize_linear_density():
    f = GridDensity.from_function(lambda x: x, 0, 2, 201)
    f_s, f_a = symmetrize(f, 1.0)
    assert f_s.a == pytest.approx(-1.0) and f_s.b == pytest.approx(1.0)
    assert np.allclose(f_s.values, 2.0, atol=1e-12), "f_S of x is constant"
    assert np.allclose(f_a.values, 2 * f_a.x, atol=1e-12), "f_A of x is 2t"
