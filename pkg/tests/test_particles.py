import dataclasses

import numpy as np
import pytest
from scipy import optimize

from rieszEL.cli import main
from rieszEL.common.kernels import PowerLaw
from rieszEL.common.measures import ParticleSystem, particles_to_grid
from rieszEL.common.utils import make_generator
from rieszEL.particles.particles import initial_positions
from rieszEL.solver import SolveConfig, minimize, run_solver


def semicircle_cdf(x):
    s = np.clip(x / np.sqrt(2), -1.0, 1.0)
    return 0.5 + (2 * s * np.sqrt(1 - s**2) + 2 * np.arcsin(s)) / (2 * np.pi)


def semicircle_quantile(q):
    return optimize.brentq(lambda x: semicircle_cdf(x) - q, -np.sqrt(2),
                           np.sqrt(2), xtol=1e-14)


@pytest.fixture(scope='module')
def kernel():
    return PowerLaw(2, 0)


@pytest.fixture(scope='module')
def particle_minimizer(kernel):
    cfg = SolveConfig.defaults('particles')
    return run_solver(kernel, cfg).result()


def test_initial_positions_are_jittered_quantiles():
    x = initial_positions(-2.0, 2.0, 100, 3)
    assert np.all(np.diff(x) > 0)
    spacing = 4.0 / 100
    base = -2.0 + spacing * (np.arange(100) + 0.5)
    assert np.max(np.abs(x - base)) <= spacing / 4
    assert np.array_equal(x, initial_positions(-2.0, 2.0, 100, 3))


def test_particle_quantiles_match_semicircle(particle_minimizer):
    p = particle_minimizer
    assert p.N == 200
    exact = np.array([semicircle_quantile(q) for q in p.quantiles()])
    gap = float(np.max(np.abs(p.positions - exact)))
    assert gap <= 0.05, f"particle quantiles are {gap} from the semicircle"


def test_particle_and_grid_minimizers_agree(kernel, particle_minimizer):
    f, _ = minimize(kernel, SolveConfig.defaults('grid'))
    kde = particles_to_grid(particle_minimizer, 0.05, f.n, f.a, f.b)
    l1 = float(np.sum(np.abs(kde.values - f.values)) * f.h)
    assert l1 <= 0.1, f"L1 distance between particles and grid is {l1}"


def test_kde_of_one_particle_is_the_bump():
    f = particles_to_grid(ParticleSystem([0.0]), 0.2, 801, -0.5, 0.5)
    assert np.allclose(f.values, f.values[::-1], atol=1e-12)
    assert float(f(0.3)) == 0.0, "the bump vanishes beyond its half-width"
    assert np.argmax(f.values) == 400


def test_kde_of_stratified_semicircle_sample():
    rng = make_generator(0)
    levels = (np.arange(400) + rng.uniform(0, 1, 400)) / 400
    sample = [semicircle_quantile(q) for q in levels]
    f = particles_to_grid(ParticleSystem(sample), 0.1, 801, -2, 2)
    exact = np.sqrt(np.maximum(2 - f.x**2, 0)) / np.pi
    l1 = float(np.sum(np.abs(f.values - exact)) * f.h)
    assert l1 <= 0.1, f"KDE of 400 draws is {l1} from the semicircle"


def test_same_seed_gives_identical_trajectory_files(tmp_path):
    codes, files = [], []
    for name in ('first', 'second'):
        out = tmp_path / name
        codes.append(main(['minimize', '--method', 'particles', '--seed',
                           '11', '--N', '40', '--max_iters', '400',
                           '--out', str(out)]))
        files.append((out / 'trajectory.csv').read_bytes())
    assert codes[0] == codes[1] and codes[0] in (0, 1)
    assert files[0] == files[1], "same seed, different trajectory.csv"
    assert len(files[0].splitlines()) > 1, "no snapshot recorded"


def test_different_seeds_start_apart(kernel):
    cfg = dataclasses.replace(SolveConfig.defaults('particles'), N=20,
                              max_iters=1, substeps=1)
    a = run_solver(kernel, dataclasses.replace(cfg, seed=1)).result()
    b = run_solver(kernel, dataclasses.replace(cfg, seed=2)).result()
    assert not np.array_equal(a.positions, b.positions)
