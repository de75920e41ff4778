import numpy as np
import pytest

from mixcausal.errors import SingularBreadError, UnreliableBootstrapError
from mixcausal.estimators import ipw_att, mipw_att, ow_ato
from mixcausal.inference import bootstrap_se, numeric_jacobian, sandwich, sandwich_se
from mixcausal.propensity import fit_logistic

from conftest import random_sample


def _mean(sample, rng):
    return float(sample.outcomes.mean())


def _flaky(sample, rng):
    if rng.random() < 0.5:
        raise ZeroDivisionError("boom")
    return float(sample.outcomes.mean())


def test_sandwich_mean_collapse():
    y = np.random.default_rng(0).normal(size=400)
    res = sandwich(lambda t: y - t[0], [y.mean()], [1.0])
    assert res.se == pytest.approx(y.std(ddof=0) / np.sqrt(y.size), rel=1e-10)


def test_sandwich_singular_bread():
    y = np.ones(10)
    with pytest.raises(SingularBreadError) as info:
        sandwich(lambda t: np.column_stack([y - t[0], y - t[0]]), [1.0, 1.0], [1.0, 0.0])
    assert info.value.condition_number > 1e14


@pytest.mark.parametrize("system", ["ipw", "mipw", "ow"])
def test_analytic_bread_matches_numeric(strong_sample, system):
    if system == "ipw":
        theta = _ipw_theta(strong_sample)
    elif system == "ow":
        theta = _ow_theta(strong_sample)
    else:
        theta = mipw_att(strong_sample, 0.4)[1]
    delta = 0.4 if system == "mipw" else None
    a = sandwich_se(strong_sample, theta, system, delta=delta)
    b = sandwich_se(strong_sample, theta, system, delta=delta, jacobian="numeric")
    np.testing.assert_allclose(a.bread, b.bread, rtol=1e-6, atol=1e-8)
    assert a.se == pytest.approx(b.se, rel=1e-6)


def _ipw_theta(sample):
    from mixcausal.estimators import _ipw_theta

    return _ipw_theta(sample, fit_logistic(sample))


def _ow_theta(sample):
    from mixcausal.estimators import ThetaHat

    fit = fit_logistic(sample)
    r = ow_ato(sample, fit, robust=False)
    e = fit.fitted_probs
    t, c = sample.treated_index, sample.control_index
    mu1 = float((1 - e[t]) @ sample.outcomes[t] / (1 - e[t]).sum())
    return ThetaHat(fit.beta, sample.pi_hat, mu1, mu1 - r.point)


def test_sandwich_order_invariant(strong_sample):
    perm = np.random.default_rng(1).permutation(strong_sample.n)
    shuffled = strong_sample.take(perm)
    a = ipw_att(strong_sample).robust_se
    b = ipw_att(shuffled).robust_se
    assert a == pytest.approx(b, rel=1e-9)


def test_ipw_and_small_delta_mipw_se_agree(strong_sample):
    a = ipw_att(strong_sample).robust_se
    b = mipw_att(strong_sample, 1e-10)[0].robust_se
    assert abs(a - b) < 1e-8


def test_numeric_jacobian_linear():
    A = np.array([[2.0, 1.0], [0.5, -3.0]])
    np.testing.assert_allclose(numeric_jacobian(lambda t: A @ t, np.array([0.3, 0.7])), A,
                               rtol=1e-8)


def test_bootstrap_mean_textbook():
    s = random_sample(500, 1, seed=5)
    res = bootstrap_se(s, _mean, B=400, seed=1)
    target = s.outcomes.std(ddof=1) / np.sqrt(s.n)
    assert abs(res.se - target) / target < 0.1
    assert res.failed_count == 0


def test_bootstrap_deterministic_and_parallel_equal():
    s = random_sample(200, 2, seed=6)
    a = bootstrap_se(s, _mean, B=20, seed=9, n_jobs=1)
    b = bootstrap_se(s, _mean, B=20, seed=9, n_jobs=1)
    c = bootstrap_se(s, _mean, B=20, seed=9, n_jobs=2)
    np.testing.assert_array_equal(a.replicate_estimates, b.replicate_estimates)
    np.testing.assert_array_equal(a.replicate_estimates, c.replicate_estimates)


def test_bootstrap_degenerate_constant():
    s = random_sample(30, 1, seed=7)
    res = bootstrap_se(s, lambda smp, rng: 3.0, B=2, seed=0)
    assert res.se == 0.0


def test_bootstrap_too_many_failures():
    s = random_sample(30, 1, seed=7)
    with pytest.raises(UnreliableBootstrapError):
        bootstrap_se(s, _flaky, B=40, seed=0)


def test_bootstrap_requires_two():
    with pytest.raises(ValueError):
        bootstrap_se(random_sample(30, 1, seed=7), _mean, B=1, seed=0)
