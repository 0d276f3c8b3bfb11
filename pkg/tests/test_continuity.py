import numpy as np
import pytest

from rieszEL.common.errors import ConfigError, NotCriticalError
from rieszEL.common.kernels import PowerLaw
from rieszEL.common.measures import GridDensity
from rieszEL.cli import main
from rieszEL.regularity.continuity import (EXIT_CONTINUOUS, EXIT_JUMP,
                                           continuity_report, interior_points)
from rieszEL.solver import SolveConfig, minimize


def semicircle(x):
    return np.sqrt(np.maximum(2 - x**2, 0)) / np.pi


@pytest.fixture(scope='module')
def kernel():
    return PowerLaw(2, 0)


def test_interior_points_exclude_the_ends():
    pts = interior_points(-1.0, 1.0)
    assert pts.size == 9
    assert pts[0] > -1.0 and pts[-1] < 1.0


def test_equilibrium_is_continuous(kernel):
    f = GridDensity.from_function(semicircle, -2, 2, 401)
    rep = continuity_report(kernel, f)
    assert rep.verdict == 'continuous', \
        f"flagged {[p['x'] for p in rep.points if p.get('flagged')]}"
    assert rep.exit_code == EXIT_CONTINUOUS
    assert rep.el['passed']
    assert len(rep.levels) == 3


def test_injected_step_is_reported_as_jump(kernel):
    f = GridDensity.from_function(
        lambda x: semicircle(x) + 0.2 * (x > 0), -2, 2, 401)
    rep = continuity_report(kernel, f, points=[0.0], el_tol=np.inf)
    assert rep.verdict == 'jump'
    assert rep.exit_code == EXIT_JUMP
    entry = rep.points[0]
    assert entry['flagged']
    assert entry['levels'][0]['jumps']['two_sided_gap'] > 0.15
    assert 'ladder' in entry, "flagged points carry ladder diagnostics"


def test_non_critical_density_rejected(kernel):
    f = GridDensity(-1, 1, np.full(201, 0.5))
    with pytest.raises(NotCriticalError):
        continuity_report(kernel, f)


def test_refinements_must_be_positive(kernel):
    f = GridDensity.from_function(semicircle, -2, 2, 401)
    with pytest.raises(ConfigError):
        continuity_report(kernel, f, refinements=0)


def test_resolved_minimizer_stays_continuous(kernel):
    cfg = SolveConfig(grid=(-2.0, 2.0, 201))
    f, _ = minimize(kernel, cfg)
    rep = continuity_report(kernel, f, points=[-0.5, 0.0, 0.5],
                            refinements=3, el_tol=5e-2, cfg=cfg)
    assert [lv['n'] for lv in rep.levels] == [201, 401, 801], \
        "each refinement re-solves at 2n - 1 nodes"
    assert rep.verdict == 'continuous', \
        f"flagged {[p['x'] for p in rep.points if p.get('flagged')]}"
    assert rep.boundedness is not None
    assert rep.boundedness['bounded'], \
        f"sup f per level {[lv['M'] for lv in rep.boundedness['levels']]}"


def test_cli_reports_injected_jump(tmp_path):
    path = tmp_path / 'jump.csv'
    GridDensity.from_function(lambda x: semicircle(x) + 0.2 * (x > 0), -2, 2,
                              401).to_csv(str(path))
    assert main(['regularity', '--density', str(path), '--points', '0',
                 '--el_tol', 'inf']) == EXIT_JUMP
