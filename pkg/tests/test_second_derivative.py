import numpy as np
import pytest

from rieszEL.common.errors import ConfigError, PreconditionError
from rieszEL.common.kernels import PowerLaw
from rieszEL.common.utils import make_generator
from rieszEL.regularity.second_derivative import (
    find_critical_points, psi_second_derivative_at_critical)
from rieszEL.regularity.smooth_functions import SmoothFunction, TestFunction


def bump(a=1.0, m=0.0, w=1.0):
    return {'kind': 'bump', 'a': a, 'm': m, 'w': w}


def test_bump_terms_and_derivatives():
    F = SmoothFunction.from_terms([bump()], -1, 1)
    assert float(F(0.0)) == pytest.approx(np.exp(-1))
    assert float(F.d1(0.0)) == 0.0
    assert float(F.d2(0.0)) == pytest.approx(-2 * np.exp(-1))
    assert float(F(1.5)) == 0.0, "zero outside the support"
    F.check_compact()


def test_unknown_term_rejected():
    with pytest.raises(ConfigError):
        SmoothFunction.from_terms([{'kind': 'spline'}], 0, 1)


def test_function_spec_file(tmp_path):
    path = tmp_path / 'F.json'
    path.write_text('{"lo": -1, "hi": 1, "terms": [{"kind": "bump", '
                    '"a": 2, "m": 0, "w": 1}]}')
    F = SmoothFunction.load(str(path))
    assert F.support == (-1.0, 1.0)
    assert float(F(0.0)) == pytest.approx(2 * np.exp(-1))


def test_endpoint_flags():
    F = TestFunction.from_spec({'alpha': -1, 'beta': 1, 'terms': [bump()],
                                'critical': ['alpha', 'beta']})
    assert F.flags['equal_endpoints']
    assert F.flags['alpha_min'] and F.flags['beta_min']
    assert not F.flags['alpha_max']
    with pytest.raises(PreconditionError):
        TestFunction.from_spec({
            'alpha': 0, 'beta': 1,
            'terms': [{'kind': 'cos', 'a': 1.0, 'omega': 1.0}],
            'critical': ['beta']
        })


@pytest.mark.parametrize("alpha,lam", [(2.0, 0.0), (3.0, -0.5), (2.0, 0.5)])
def test_three_forms_agree_at_a_symmetric_bump(alpha, lam):
    k = PowerLaw(alpha, lam)
    F = SmoothFunction.from_terms([bump()], -1, 1)
    res = psi_second_derivative_at_critical(k, F, 0.0)
    assert res.agree, f"forms {res.forms} errors {res.errors}"


def test_three_forms_agree_at_located_critical_points():
    k = PowerLaw(2, 0)
    F = SmoothFunction.from_terms(
        [bump(1.0, -0.35, 0.6), bump(0.6, 0.4, 0.5)], -1, 1)
    points = [x for x in find_critical_points(F) if F(x) > 0]
    assert len(points) >= 3, f"two bumps have a valley, got {points}"
    for x in points:
        res = psi_second_derivative_at_critical(k, F, x)
        assert res.agree, f"forms {res.forms} disagree at {x}"


def test_non_critical_point_rejected():
    k = PowerLaw(2, 0)
    F = SmoothFunction.from_terms([bump()], -1, 1)
    rng = make_generator(5)
    for x in rng.uniform(0.1, 0.9, 5):
        with pytest.raises(PreconditionError):
            psi_second_derivative_at_critical(k, F, x)


def test_non_compact_function_rejected():
    k = PowerLaw(2, 0)
    F = SmoothFunction.from_terms([{'kind': 'const', 'c': 1.0}], -1, 1)
    with pytest.raises(PreconditionError):
        psi_second_derivative_at_critical(k, F, 0.0)


def test_coarse_grid_is_not_reported_as_agreement():
    k = PowerLaw(2, 0)
    F = SmoothFunction.from_terms([bump()], -1, 1)
    res = psi_second_derivative_at_critical(k, F, 0.0, h=0.5)
    assert any(e > 1e-3 * (1 + abs(v))
               for v, e in zip(res.forms, res.errors)), \
        f"errors {res.errors} unexpectedly small on four cells"
    assert not res.agree, "unconverged forms must not count as agreeing"
