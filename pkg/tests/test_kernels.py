import mpmath
import numpy as np
import pytest

from rieszEL.cli import main
from rieszEL.common.errors import (ConfigError, DomainError,
                                   OscillatoryRatioError)
from rieszEL.common.kernels import (PowerLaw, Tabulated, certify_hypotheses,
                                    check_tail_integrability, eval_g,
                                    eval_gprime,
                                    estimate_lambda, find_good_lambda_eta,
                                    gprime_total_variation, kernel_from_spec)

SWEEP = [(a, l) for a in (2.0, 3.0) for l in (-0.5, 0.0, 0.5)]


@pytest.mark.parametrize("alpha,lam", SWEEP)
def test_certificate_passes(alpha, lam):
    k = PowerLaw(alpha, lam)
    cert = certify_hypotheses(k)
    failed = [n for n, c in cert.clauses.items() if c.status != 'pass']
    assert cert.passed, f"{k.name} failed clauses {failed}"


@pytest.mark.parametrize("alpha,lam", SWEEP)
def test_lambda_estimate_matches_power_of_two(alpha, lam):
    k = PowerLaw(alpha, lam)
    est = estimate_lambda(k, k.r / 2, 40)
    assert abs(est.value - 2**(1 - lam)) < 1e-3, \
        f"Lambda estimate {est.value} far from {2**(1 - lam)}"
    assert est.analytic == pytest.approx(2**(1 - lam))


@pytest.mark.parametrize("alpha,lam", SWEEP)
def test_tail_integrals_converge_to_closed_form(alpha, lam):
    k = PowerLaw(alpha, lam)
    r = k.r
    conv = check_tail_integrability(k, r)
    exact = float(
        mpmath.quad(lambda t: -(t**(alpha - 1) - t**(lam - 1)) * t, [0, r]))
    assert conv.cauchy, "tail integrals are not Cauchy"
    assert abs(conv.limit - exact) < 1e-6, \
        f"limit {conv.limit} differs from {exact}"
    assert abs(conv.closed_form - exact) < 1e-10


def test_prototypical_window_and_ratio():
    k = PowerLaw(2, 0)
    assert k.r == pytest.approx(1.0), "g' of (2, 0) vanishes at 1"
    assert k.Lambda == pytest.approx(2.0)
    assert k.LambdaBar == pytest.approx(1.5)


def test_window_shrinks_where_gprime_stops_being_concave():
    k = PowerLaw(3, 0.5)
    assert k.gprime_root == pytest.approx(1.0)
    assert 0.6 < k.r < 0.75, f"unexpected certified window {k.r}"


def test_total_variation_closed_form():
    k = PowerLaw(2, 0)
    tv = gprime_total_variation(k, 0.5, 2.0)
    assert abs(tv - 3.0) < 1e-8, f"TV(g', [0.5, 2]) = {tv}, expected 3"
    sampled = gprime_total_variation(k, 0.5, 2.0, method='quad')
    assert abs(sampled - 3.0) < 1e-8


def test_invalid_parameters_rejected():
    with pytest.raises(ConfigError):
        PowerLaw(2, 1.5)
    with pytest.raises(ConfigError):
        PowerLaw(0.5, 0.5)
    with pytest.raises(ConfigError):
        kernel_from_spec({'form': 'gaussian'})


def test_derivative_undefined_at_origin():
    k = PowerLaw(2, 0)
    assert float(eval_g(k, 1.0)) == pytest.approx(0.5)
    assert float(eval_g(k, -2.0)) == pytest.approx(float(eval_g(k, 2.0)))
    with pytest.raises(DomainError):
        eval_gprime(k, 0.0)
    with pytest.raises(DomainError):
        gprime_total_variation(k, 0.0, 1.0)


def test_power_law_antiderivatives_match_quadrature():
    k = PowerLaw(2, -0.5)
    u = 0.7
    phi0, phi1 = k.antiderivatives(u)
    g = lambda t: t**2 / 2 - t**-0.5 / -0.5
    assert float(phi0) == pytest.approx(float(mpmath.quad(g, [0, u])),
                                        rel=1e-12)
    assert float(phi1) == pytest.approx(
        float(mpmath.quad(lambda t: g(t) * t, [0, u])), rel=1e-12)


def test_good_eta_realizes_ratio():
    k = PowerLaw(2, 0)
    eta = find_good_lambda_eta(k)
    xs = np.geomspace(2 * eta * 1e-6, 2 * eta * 0.999, 200)
    assert np.all(np.abs(k.gprime(xs / 2)) > k.LambdaBar *
                  np.abs(k.gprime(xs))), "eta does not realize LambdaBar"


def test_tabulated_absolute_value_fails_certificate():
    k = Tabulated(lambda t: np.abs(t), lambda t: np.ones_like(t),
                  name='abs')
    cert = certify_hypotheses(k)
    assert not cert.passed, "|x| is not decreasing near the origin"
    assert cert.clauses['decreasing'].status == 'fail'


def test_tabulated_table_reproduces_power_law(tmp_path):
    k = PowerLaw(2, 0)
    x = np.geomspace(1e-3, 4.0, 400)
    path = tmp_path / 'kernel.csv'
    np.savetxt(path, np.column_stack([x, k.g(x), k.gprime(x)]),
               delimiter=',', header='x,g,gprime', comments='')
    tab = Tabulated.from_csv(str(path))
    assert tab.r == pytest.approx(1.0, abs=1e-3)
    assert float(tab.g(0.5)) == pytest.approx(float(k.g(0.5)), rel=1e-3)


def test_total_variation_of_monotone_derivative():
    k = PowerLaw(2, 0.5)
    tv = gprime_total_variation(k, 0.25, 1.0)
    assert abs(tv - 1.75) < 1e-12, f"TV(g', [0.25, 1]) = {tv}, expected 1.75"


@pytest.mark.parametrize("alpha,lam", [(2.0, 0.5), (0.5, -0.5), (3.0, -0.5)])
def test_total_variation_is_additive(alpha, lam):
    k = PowerLaw(alpha, lam)
    a, b, c = 0.2, 1.3, 4.0
    whole = gprime_total_variation(k, a, c)
    split = gprime_total_variation(k, a, b) + gprime_total_variation(k, b, c)
    assert whole == pytest.approx(split, rel=1e-12), \
        f"TV over [{a}, {c}] is not the sum over [{a}, {b}] and [{b}, {c}]"


def test_unbounded_ratio_gives_infinite_lambda():
    # |g'(x)| = exp(log(x)^2) grows faster than any power
    k = Tabulated(lambda t: np.zeros_like(t),
                  lambda t: -np.exp(np.log(t)**2), x_max=1.0, name='superpower')
    assert k.r == 1.0
    est = estimate_lambda(k, 0.5, 20)
    assert np.isinf(est.value), f"expected Lambda = inf, got {est.value}"
    assert est.analytic is None


def test_oscillatory_ratio_reports_running_minimum():
    # the ratio cycles through 3, 4/3, 1, 4 on dyadic probes
    k = Tabulated(lambda t: np.zeros_like(t),
                  lambda t: -(2 + np.sin(np.pi * np.log2(1 / t) / 2)) / t,
                  x_max=1.0, name='oscillating')
    with pytest.raises(OscillatoryRatioError) as e:
        estimate_lambda(k, 0.5, 40)
    assert e.value.running_min == pytest.approx(1.0, abs=1e-9), \
        "running minimum of the tail ratios"


@pytest.mark.parametrize("alpha,lam", SWEEP)
def test_g_is_even_and_gprime_matches_finite_differences(alpha, lam):
    k = PowerLaw(alpha, lam)
    rng = np.random.default_rng(3)
    x = rng.uniform(0.1, 3.0, 50)
    assert np.allclose(k.g(-x), k.g(x), rtol=1e-15, atol=0), "g is not even"
    assert np.allclose(k.gprime(-x), -k.gprime(x), rtol=1e-15, atol=0), \
        "g' is not odd"
    h = 1e-5 * x
    fd = (k.g(x + h) - k.g(x - h)) / (2 * h)
    assert np.allclose(fd, k.gprime(x), rtol=1e-6, atol=1e-6), \
        "g' disagrees with central differences of g"
    fd2 = (k.gprime(x + h) - k.gprime(x - h)) / (2 * h)
    assert np.allclose(fd2, k.gsecond(x), rtol=1e-6, atol=1e-6), \
        "g'' disagrees with central differences of g'"


def test_tabulated_without_second_derivative_leaves_concavity_unchecked():
    k = PowerLaw(2, 0)
    tab = Tabulated(k.g, k.gprime, x_max=4.0, name='no-gsecond')
    cert = certify_hypotheses(tab)
    assert tab.r == pytest.approx(1.0, abs=1e-12)
    assert cert.clauses['gprime_concave'].status == 'unchecked'
    assert cert.clauses['convex'].status == 'pass', \
        "g' of the prototypical kernel is increasing"
    assert not cert.passed, "an unchecked clause does not certify"


def test_check_kernel_rejects_tabulated_absolute_value(tmp_path):
    x = np.linspace(0.01, 2.0, 50)
    path = tmp_path / 'abs.csv'
    np.savetxt(path, np.column_stack([x, x, np.ones_like(x)]),
               delimiter=',', header='x,g,gprime', comments='')
    assert main(['check-kernel', '--tabulated', str(path)]) == 1, \
        "|x| is not decreasing near the origin"
